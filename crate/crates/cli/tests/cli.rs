use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use candle_core::Device;
use hyperstroke_cli::config::{resolve, RunConfig};
use hyperstroke_cli::exit_code;
use hyperstroke_core::synth::procedural_illustration;
use hyperstroke_core::{blend, AlphaImage, BBox, Canvas, Hyperstroke};
use hyperstroke_vq::{VqConfig, VqModel};
use proptest::prelude::*;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hyperstroke"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn tiny_vq(path: &Path) {
    let config = VqConfig {
        patch: (16, 16),
        downsample: 4,
        codebook_size: 16,
        embed_dim: 4,
        hidden: 8,
        mix_layers: 1,
        canvas: (64, 64),
        grid_c: 8,
        ..VqConfig::desk()
    };
    VqModel::new(config, &Device::Cpu).unwrap().save(path).unwrap();
}

fn square(x: u32, y: u32, side: u32, rgba: [f32; 4]) -> Hyperstroke {
    Hyperstroke::new(AlphaImage::filled(side as usize, side as usize, rgba), BBox::new(x, y, x + side, y + side).unwrap()).unwrap()
}

#[test]
fn config_layers_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "seed = 5\n[vq]\nsteps = 7\nbatch_size = 3\n[synth]\ncrop_size = 64\n").unwrap();

    let from_file = resolve(Some(&file), &[], None).unwrap();
    assert_eq!(from_file.seed, 5);
    assert_eq!(from_file.vq.steps, 7);
    assert_eq!(from_file.vq.batch_size, 3);
    assert_eq!(from_file.synth.crop_size, 64);
    assert_eq!(from_file.seq, RunConfig::default().seq);

    let layered = resolve(Some(&file), &["vq.steps=9".into(), "seq.prefix_mode=\"every-stroke\"".into()], Some(11)).unwrap();
    assert_eq!(layered.vq.steps, 9);
    assert_eq!(layered.vq.batch_size, 3);
    assert_eq!((layered.seed, layered.vq.seed, layered.seq.seed, layered.doodle.seed), (11, 11, 11, 11));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[vq]\nsteps = \"many\"\n").unwrap();
    let err = resolve(Some(&bad), &[], None).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "colour = 3\n").unwrap();
    assert_eq!(exit_code(&resolve(Some(&unknown), &[], None).unwrap_err()), 2);
    assert_eq!(exit_code(&resolve(None, &["vq.codebook_size=0".into()], None).unwrap_err()), 2);

    let out = dir.path().join("out");
    let status = run(&["--out", s(&out), "--set", "vq.nope=1", "synth-data"]).status;
    assert_eq!(status.code(), Some(2));
    let status = run(&["--out", s(&out), "--config", s(&bad), "synth-data"]).status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn data_and_checkpoint_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.jsonl");
    let status = run(&["--out", s(&out), "train-vq", "--manifest", s(&missing)]).status;
    assert_eq!(status.code(), Some(3));

    let frames = dir.path().join("frames");
    std::fs::create_dir_all(&frames).unwrap();
    let status = run(&["--out", s(&out), "reconstruct-timelapse", "--frames", s(&frames), "--vq-checkpoint", s(&missing)]).status;
    assert_eq!(status.code(), Some(4));

    let vq = dir.path().join("vq.safetensors");
    tiny_vq(&vq);
    let status = run(&["--out", s(&out), "reconstruct-timelapse", "--frames", s(&frames), "--vq-checkpoint", s(&vq)]).status;
    assert_eq!(status.code(), Some(3), "fewer than two frames");

    let not_a_model = dir.path().join("junk.safetensors");
    std::fs::write(&not_a_model, b"not a checkpoint").unwrap();
    let status = run(&["--out", s(&out), "eval-vq", "--manifest", s(&missing), "--vq-checkpoint", s(&not_a_model)]).status;
    assert_eq!(status.code(), Some(4));
}

#[test]
fn synth_data_is_seeded_and_echo_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c, d) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"), dir.path().join("d"));
    let args = |out: &Path, seed: &str| {
        ok(&["--out", s(out), "--seed", seed, "synth-data", "--samples", "5", "--crop-size", "48"]);
    };
    args(&a, "4");
    args(&b, "4");
    args(&c, "5");
    let ta = tree(&a);
    assert_eq!(ta.keys().filter(|p| p.starts_with("after")).count(), 5);
    assert_eq!(std::fs::read_to_string(a.join("manifest.jsonl")).unwrap().lines().count(), 5);
    assert_eq!(ta, tree(&b));
    assert_ne!(ta.get(Path::new("manifest.jsonl")), tree(&c).get(Path::new("manifest.jsonl")));

    let echoed = a.join("config.json");
    let config = RunConfig::from_file(&echoed).unwrap();
    assert_eq!((config.seed, config.synth.crop_size), (4, 48));
    ok(&["--out", s(&d), "--config", s(&echoed), "synth-data", "--samples", "5"]);
    assert_eq!(ta, tree(&d));
}

#[test]
fn timelapse_ingest_and_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let vq = dir.path().join("vq.safetensors");
    tiny_vq(&vq);

    let still = dir.path().join("still");
    std::fs::create_dir_all(&still).unwrap();
    let frame = procedural_illustration(2, 64, 64).quantized();
    frame.save_png(still.join("0000.png")).unwrap();
    frame.save_png(still.join("0001.png")).unwrap();
    let out = dir.path().join("still_out");
    ok(&["--out", s(&out), "reconstruct-timelapse", "--frames", s(&still), "--vq-checkpoint", s(&vq)]);
    assert_eq!(Canvas::load_png(out.join("composite.png")).unwrap(), frame);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["strokes"].as_array().unwrap().len(), 0);

    let video = dir.path().join("video");
    std::fs::create_dir_all(&video).unwrap();
    let mut canvas = Canvas::white(64, 64);
    canvas.save_png(video.join("0000.png")).unwrap();
    canvas.save_png(video.join("0001.png")).unwrap();
    for (i, (x, y)) in [(4, 4), (30, 20), (10, 40)].into_iter().enumerate() {
        canvas = blend(&canvas, &square(x, y, 12, [0.9, 0.2, 0.1 * i as f32, 1.0])).unwrap();
        canvas.save_png(video.join(format!("{:04}.png", i + 2))).unwrap();
    }
    let pairs = dir.path().join("pairs");
    ok(&["--out", s(&pairs), "--set", "timelapse.grid_c=8", "ingest-timelapse", "--frames", s(&video)]);
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(pairs.join("stats.json")).unwrap()).unwrap();
    assert_eq!((stats["pairs"].as_u64(), stats["duplicates"].as_u64()), (Some(3), Some(1)));
    assert_eq!(std::fs::read_to_string(pairs.join("manifest.jsonl")).unwrap().lines().count(), 3);

    let rec = dir.path().join("rec");
    ok(&["--out", s(&rec), "reconstruct-timelapse", "--frames", s(&video), "--vq-checkpoint", s(&vq)]);
    assert_eq!(std::fs::read_dir(rec.join("strokes")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "png").count(), 3);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(rec.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["frame_psnr"].as_array().unwrap().len(), 3);
}

#[test]
fn encode_decode_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let vq = dir.path().join("vq.safetensors");
    tiny_vq(&vq);
    let before = procedural_illustration(1, 64, 64).quantized();
    let after = blend(&before, &square(20, 10, 9, [0.1, 0.1, 0.8, 0.7])).unwrap().quantized();
    let (before_png, after_png) = (dir.path().join("before.png"), dir.path().join("after.png"));
    before.save_png(&before_png).unwrap();
    after.save_png(&after_png).unwrap();

    let enc = dir.path().join("enc");
    ok(&["--out", s(&enc), "encode", "--vq-checkpoint", s(&vq), "--before", s(&before_png), "--after", s(&after_png)]);
    let encoded: serde_json::Value = serde_json::from_slice(&std::fs::read(enc.join("tokens.json")).unwrap()).unwrap();
    assert_eq!(encoded["bbox_pixels"], serde_json::json!([20, 10, 29, 19]));
    assert_eq!(encoded["tokens"]["bbox"], serde_json::json!([2, 1, 4, 3]));
    assert_eq!(encoded["ids"].as_array().unwrap().len(), 4 + 16);

    let dec = dir.path().join("dec");
    ok(&["--out", s(&dec), "decode", "--vq-checkpoint", s(&vq), "--tokens", s(&enc.join("tokens.json")), "--canvas", s(&before_png)]);
    let stroke = AlphaImage::load_png(dec.join("stroke.png")).unwrap();
    assert!(stroke.width() >= 9 && stroke.height() >= 9);
    assert_eq!(Canvas::load_png(dec.join("composite.png")).unwrap().dims(), (64, 64));

    let data = dir.path().join("data");
    ok(&["--out", s(&data), "--set", "vq.grid_c=8", "synth-data", "--samples", "4", "--crop-size", "64"]);
    let manifest = data.join("manifest.jsonl");
    let (e1, e2) = (dir.path().join("e1"), dir.path().join("e2"));
    ok(&["--out", s(&e1), "eval-vq", "--manifest", s(&manifest), "--vq-checkpoint", s(&vq)]);
    ok(&["--out", s(&e2), "eval-vq", "--manifest", s(&manifest), "--vq-checkpoint", s(&vq)]);
    let m1 = std::fs::read(e1.join("metrics.json")).unwrap();
    assert_eq!(m1, std::fs::read(e2.join("metrics.json")).unwrap());
    let metrics: serde_json::Value = serde_json::from_slice(&m1).unwrap();
    let psnrs: Vec<f64> = metrics["items"].as_array().unwrap().iter().filter_map(|i| i["psnr"].as_f64()).collect();
    assert_eq!(psnrs.len(), 4);
    let mean = psnrs.iter().sum::<f64>() / 4.0;
    assert!((metrics["psnr_mean"].as_f64().unwrap() - mean).abs() < 1e-9);
    assert_eq!(metrics["code_histogram"].as_array().unwrap().len(), 16);

    // A manifest on another grid is rejected as data.
    let status = run(&["--out", s(&e1), "--set", "vq.grid_c=16", "--seed", "1", "synth-data", "--samples", "1", "--crop-size", "64"]).status;
    assert!(status.success());
    let status = run(&["--out", s(&e2), "eval-vq", "--manifest", s(&e1.join("manifest.jsonl")), "--vq-checkpoint", s(&vq)]).status;
    assert_eq!(status.code(), Some(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn echoed_config_round_trips(steps in 1usize..10_000, batch in 1usize..64, seed in 0u64..1 << 40, lr in 1e-6f64..1e-1) {
        let dir = tempfile::tempdir().unwrap();
        let overrides = vec![
            format!("vq.steps={steps}"),
            format!("seq.batch_size={batch}"),
            format!("seq.learning_rate={lr}"),
        ];
        let config = resolve(None, &overrides, Some(seed)).unwrap();
        config.echo(dir.path()).unwrap();
        let back = RunConfig::from_file(&dir.path().join("config.json")).unwrap();
        prop_assert_eq!(&back, &config);
        let toml_path = dir.path().join("again.toml");
        std::fs::write(&toml_path, toml::to_string(&config).unwrap()).unwrap();
        prop_assert_eq!(RunConfig::from_file(&toml_path).unwrap(), config);
    }
}
