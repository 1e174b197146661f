use candle_core::Device;
use hyperstroke_core::synth::procedural_illustration;
use hyperstroke_core::{blend, AlphaImage, BBox, Canvas, Hyperstroke};
use hyperstroke_vq::pipeline::{evaluate, item_metrics, reconstruct_timelapse};
use hyperstroke_vq::{VqConfig, VqModel};

fn tiny() -> VqModel {
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
    VqModel::new(config, &Device::Cpu).unwrap()
}

fn pairs() -> Vec<(Canvas, Canvas, BBox)> {
    (0..5u32)
        .map(|i| {
            let before = procedural_illustration(i as u64, 64, 64);
            let bbox = BBox::new(4 + i * 3, 6, 20 + i * 5, 30).unwrap();
            let paint = AlphaImage::filled(bbox.width(), bbox.height(), [0.1, 0.2 * i as f32, 0.9, 0.6]);
            let after = blend(&before, &Hyperstroke::new(paint, bbox).unwrap()).unwrap();
            (before, after, bbox)
        })
        .collect()
}

#[test]
fn identical_reconstruction_is_flagged_exact() {
    let c = procedural_illustration(9, 32, 32);
    let (item, mse) = item_metrics(&c, &c).unwrap();
    assert!(item.exact);
    assert_eq!(item.psnr, None);
    assert_eq!(mse, 0.0);
    assert!((item.ssim - 1.0).abs() < 1e-9);
}

#[test]
fn aggregates_are_means_of_items_and_deterministic() {
    let model = tiny();
    let pairs = pairs();
    let a = evaluate(&model, &pairs).unwrap();
    let b = evaluate(&model, &pairs).unwrap();
    assert_eq!(a.items, b.items);
    assert_eq!(a.code_histogram, b.code_histogram);
    assert_eq!(a.items.len(), pairs.len());
    let finite: Vec<f64> = a.items.iter().filter_map(|i| i.psnr).collect();
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    assert!((a.psnr_mean.unwrap() - mean).abs() < 1e-9);
    let ssim = a.items.iter().map(|i| i.ssim).sum::<f64>() / a.items.len() as f64;
    assert!((a.ssim_mean - ssim).abs() < 1e-9);
    let k = model.config().k() as u64;
    assert_eq!(a.code_histogram.iter().sum::<u64>(), k * pairs.len() as u64);
    assert_eq!(a.codes_used, a.code_histogram.iter().filter(|&&c| c > 0).count());
}

#[test]
fn identical_frames_reconstruct_to_nothing() {
    let model = tiny();
    let frame = procedural_illustration(4, 64, 64);
    let (composite, strokes, report) = reconstruct_timelapse(&model, vec![Ok(frame.clone()), Ok(frame.clone())], 0.01).unwrap();
    assert!(strokes.is_empty());
    assert_eq!(composite, frame);
    assert!(report.frame_psnr.is_empty());
    assert_eq!(report.stats.duplicates, 1);
}

#[test]
fn per_frame_psnr_follows_every_pair() {
    let model = tiny();
    let mut last = Canvas::white(64, 64);
    let mut frames = vec![Ok(last.clone())];
    for i in 0..3u32 {
        let bbox = BBox::new(8 * i, 8, 8 * i + 16, 40).unwrap();
        let paint = AlphaImage::filled(bbox.width(), bbox.height(), [0.3 * i as f32, 0.1, 0.5, 0.8]);
        last = blend(&last, &Hyperstroke::new(paint, bbox).unwrap()).unwrap();
        frames.push(Ok(last.clone()));
    }
    let (_, strokes, report) = reconstruct_timelapse(&model, frames, 0.01).unwrap();
    assert_eq!(strokes.len(), 3);
    assert_eq!(report.frame_psnr.len(), 3);
    assert_eq!(report.frames, vec![0, 1, 2]);
    assert_eq!(*report.frame_psnr.last().unwrap(), report.psnr);
}
