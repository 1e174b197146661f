use candle_core::{DType, Device, Tensor};
use hyperstroke_core::{blend, BBoxTokens, Canvas, HyperstrokeTokens, TokenKind, TokenVocab};
use hyperstroke_seq::loss::{seq_loss, target_weight};
use hyperstroke_seq::model::SeqModel;
use hyperstroke_seq::sample::{allowed_range, pick, render_suggestions, sample_tokens, SuggestionRequest};
use hyperstroke_seq::train::{learning_rate, train_seq, SeqTrainOptions};
use hyperstroke_seq::{EncoderBackend, SeqBatch, SeqConfig, SeqError, SeqExample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> SeqConfig {
    SeqConfig {
        grid_c: 4,
        codebook_size: 8,
        k: 4,
        canvas: (32, 32),
        n_max: 4,
        d_model: 32,
        heads: 4,
        decoder_layers: 2,
        ff_mult: 2,
        canvas_patch: 8,
        canvas_layers: 1,
        text_buckets: 64,
        text_max_tokens: 4,
        learning_rate: 3e-3,
        warmup_steps: 10,
        steps: 100,
        batch_size: 8,
        log_every: 0,
        ..SeqConfig::desk()
    }
}

fn random_stroke(vocab: &TokenVocab, rng: &mut ChaCha8Rng) -> HyperstrokeTokens {
    let c = vocab.grid_cells;
    let x1 = rng.gen_range(0..c);
    let y1 = rng.gen_range(0..c);
    let x2 = rng.gen_range(x1 + 1..=c);
    let y2 = rng.gen_range(y1 + 1..=c);
    HyperstrokeTokens {
        bbox: BBoxTokens::new(x1, y1, x2, y2, c).unwrap(),
        visual: (0..vocab.k).map(|_| rng.gen_range(0..vocab.codebook_size)).collect(),
    }
}

fn synthetic_examples(config: &SeqConfig, count: usize, seed: u64) -> Vec<SeqExample> {
    let vocab = config.vocab().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(1..=config.n_max);
            let strokes: Vec<_> = (0..n).map(|_| random_stroke(&vocab, &mut rng)).collect();
            let mut tokens = vocab.frame(&strokes).unwrap();
            tokens.push(vocab.end());
            let shade = (i % 4) as f32 / 4.0;
            SeqExample {
                tokens,
                canvas: Canvas::filled(config.canvas.0, config.canvas.1, [shade, 1.0 - shade, 0.5]),
                condition: Some(["cat", "car"][i % 2].to_string()),
            }
        })
        .collect()
}

fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[test]
fn hand_computed_two_token_loss() {
    // C = 2, |Z| = 3, k = 1: ids 0..=2 box, 3..=5 visual, 6 start, 7 end, 8 pad.
    let vocab = TokenVocab::new(2, 3, 1).unwrap();
    let rows = vec![
        vec![0.5, 2.0, -1.0, 0.0, 0.3, 0.1, -2.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0, -0.5, 0.25, 3.0, 0.0, 0.7, 0.0],
    ];
    let targets = vec![vec![1u32, 5]];
    let lambda = 2.5;
    // Box target weighted by lambda, visual target by 1, mean over 2 tokens.
    let nll0 = logsumexp(&rows[0]) - rows[0][1];
    let nll1 = logsumexp(&rows[1]) - rows[1][5];
    let expected = (lambda * nll0 + nll1) / 2.0;
    let logits = Tensor::new(rows, &Device::Cpu).unwrap().unsqueeze(0).unwrap();
    let out = seq_loss(&logits, &targets, &vocab, lambda).unwrap();
    let got = out.loss.to_scalar::<f64>().unwrap();
    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    assert!(!out.empty);
    assert_eq!(out.tokens, 2);
}

#[test]
fn bbox_weight_for_reference_k() {
    let c = SeqConfig::sketch_reference();
    assert_eq!(c.k, 64);
    assert_eq!(c.lambda(), 16.0);
    let vocab = c.vocab().unwrap();
    assert_eq!(target_weight(&vocab, 3, c.lambda()).unwrap(), 16.0);
    assert_eq!(target_weight(&vocab, vocab.visual_offset(), c.lambda()).unwrap(), 1.0);
    assert_eq!(target_weight(&vocab, vocab.pad(), c.lambda()).unwrap(), 0.0);
    assert_eq!(vocab.stroke_len(), 68);
    assert_eq!(c.context_len(), 817);
}

#[test]
fn all_pad_targets_flag_empty() {
    let vocab = TokenVocab::new(2, 3, 1).unwrap();
    let logits = Tensor::randn(0f64, 1.0, (2, 3, vocab.size()), &Device::Cpu).unwrap();
    let pads = vec![vec![vocab.pad(); 3]; 2];
    let out = seq_loss(&logits, &pads, &vocab, 4.0).unwrap();
    assert!(out.empty);
    assert_eq!(out.tokens, 0);
    assert_eq!(out.loss.to_scalar::<f64>().unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_lambda_is_plain_cross_entropy(
        seed in any::<u64>(),
        b in 1usize..3,
        t in 1usize..6,
    ) {
        let vocab = TokenVocab::new(4, 5, 2).unwrap();
        let v = vocab.size();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..b * t * v).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let targets: Vec<Vec<u32>> = (0..b)
            .map(|_| (0..t).map(|_| rng.gen_range(0..vocab.pad())).collect())
            .collect();
        let logits = Tensor::from_vec(values.clone(), (b, t, v), &Device::Cpu).unwrap();
        let got = seq_loss(&logits, &targets, &vocab, 1.0).unwrap().loss.to_scalar::<f64>().unwrap();
        let flat = Tensor::from_vec(values, (b * t, v), &Device::Cpu).unwrap();
        let ids = Tensor::from_vec(targets.concat(), b * t, &Device::Cpu).unwrap();
        let reference = candle_nn::loss::cross_entropy(&flat, &ids).unwrap().to_scalar::<f64>().unwrap();
        prop_assert!((got - reference).abs() < 1e-9, "{} vs {}", got, reference);
    }

    #[test]
    fn constrained_pick_never_leaves_kind(
        seed in any::<u64>(),
        scale in 0.1f32..1e4,
        temperature in -1.0f64..3.0,
        top_k in 0usize..20,
    ) {
        let vocab = TokenVocab::new(8, 16, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut emitted: Vec<u32> = Vec::new();
        for _ in 0..5 * vocab.stroke_len() {
            let slot = emitted.len() % vocab.stroke_len();
            let start = emitted.len() - slot;
            let logits: Vec<f32> = (0..vocab.size()).map(|_| rng.gen_range(-scale..scale)).collect();
            let allowed = allowed_range(&vocab, slot, &emitted[start..]);
            let id = pick(&logits, allowed.clone(), temperature, top_k, &mut rng).unwrap();
            prop_assert!(allowed.contains(&id));
            emitted.push(id);
        }
        prop_assert_eq!(vocab.parse_strokes(&emitted).unwrap().len(), 5);
    }
}

#[test]
fn context_shapes_and_determinism() {
    let config = tiny();
    let model = SeqModel::with_dtype(config.clone(), DType::F64, &Device::Cpu).unwrap();
    let blank = Canvas::white(32, 32);
    let ctx = model.encode_context(&[&blank], &[None]).unwrap();
    assert!(ctx.guidance.is_none());
    assert_eq!(ctx.canvas.dims(), &[1, config.canvas_tokens(), config.d_model]);
    assert_eq!(config.canvas_tokens(), 16);

    let a = model.encode_context(&[&blank], &[Some("cat")]).unwrap();
    let b = model.encode_context(&[&blank], &[Some("cat")]).unwrap();
    let c = model.encode_context(&[&blank], &[Some("car")]).unwrap();
    let ga = a.guidance.unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let gb = b.guidance.unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let gc = c.guidance.unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    assert_eq!(ga, gb);
    assert_ne!(ga, gc);

    let other = Canvas::filled(32, 32, [0.1, 0.2, 0.3]);
    let d = model.encode_context(&[&other], &[None]).unwrap();
    let ca = ctx.canvas.flatten_all().unwrap().to_vec1::<f64>().unwrap();
    let cd = d.canvas.flatten_all().unwrap().to_vec1::<f64>().unwrap();
    assert_ne!(ca, cd);

    let wrong = Canvas::white(16, 16);
    assert!(model.encode_context(&[&wrong], &[None]).is_err());
}

#[test]
fn logits_are_causal() {
    let config = tiny();
    let vocab = config.vocab().unwrap();
    let model = SeqModel::with_dtype(config.clone(), DType::F64, &Device::Cpu).unwrap();
    let example = &synthetic_examples(&config, 1, 3)[0];
    let ctx = model.encode_context(&[&example.canvas], &[Some("cat")]).unwrap();
    let base = example.tokens.clone();
    let t = base.len();
    let logits = |ids: &[u32]| {
        let x = Tensor::from_vec(ids.to_vec(), (1, ids.len()), &Device::Cpu).unwrap();
        model.forward(&x, &ctx).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap()
    };
    let reference = logits(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for p in 0..t - 1 {
        let mut mutated = base.clone();
        for id in mutated.iter_mut().skip(p + 1) {
            *id = rng.gen_range(0..vocab.size() as u32);
        }
        let changed = logits(&mutated);
        for q in 0..=p {
            for (a, b) in reference[q].iter().zip(&changed[q]) {
                assert!((a - b).abs() < 1e-9, "position {q} moved after mutating past {p}");
            }
        }
    }
}

#[test]
fn cached_decoding_matches_full_forward() {
    let config = tiny();
    let model = SeqModel::with_dtype(config.clone(), DType::F64, &Device::Cpu).unwrap();
    let example = &synthetic_examples(&config, 1, 5)[0];
    let ctx = model.encode_context(&[&example.canvas], &[Some("car")]).unwrap();
    let ids = &example.tokens[..example.tokens.len() - 1];
    let x = Tensor::from_vec(ids.to_vec(), (1, ids.len()), &Device::Cpu).unwrap();
    let full = model.forward(&x, &ctx).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap();
    let mut state = model.start_decoding(&ctx).unwrap();
    let split = 3.min(ids.len());
    let first = model.feed(&mut state, &ids[..split]).unwrap();
    let check = |got: &[f32], want: &[f64]| {
        for (a, b) in got.iter().zip(want) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    };
    check(&first, &full[split - 1]);
    for (i, id) in ids.iter().enumerate().skip(split) {
        let step = model.feed(&mut state, &[*id]).unwrap();
        check(&step, &full[i]);
    }
    assert_eq!(state.len(), ids.len());
}

fn check_structure(vocab: &TokenVocab, strokes: &[HyperstrokeTokens]) {
    for s in strokes {
        let [x1, y1, x2, y2] = s.bbox.as_array();
        assert!(x1 < x2 && y1 < y2 && x2 <= vocab.grid_cells && y2 <= vocab.grid_cells);
        assert_eq!(s.visual.len(), vocab.k);
        for id in vocab.stroke_ids(s).unwrap().iter().skip(4) {
            assert!(matches!(vocab.kind(*id).unwrap(), TokenKind::Visual(_)));
        }
    }
}

#[test]
fn ten_thousand_sampling_steps_stay_in_kind() {
    let config = SeqConfig {
        n_max: 12,
        ..tiny()
    };
    let vocab = config.vocab().unwrap();
    let model = SeqModel::new(config.clone(), &Device::Cpu).unwrap();
    let canvas = Canvas::white(32, 32);
    let mut steps = 0;
    let mut seed = 0;
    while steps < 10_000 {
        let request = SuggestionRequest {
            n: config.n_max,
            temperature: 1.5,
            top_k: 0,
            seed,
            condition: Some("fuzz".into()),
            ..Default::default()
        };
        let strokes = sample_tokens(&model, &canvas, &request).unwrap();
        assert_eq!(strokes.len(), config.n_max);
        check_structure(&vocab, &strokes);
        steps += strokes.len() * vocab.stroke_len();
        seed += 1;
    }
}

#[test]
fn sampling_modes_and_determinism() {
    let config = tiny();
    let vocab = config.vocab().unwrap();
    let model = SeqModel::new(config.clone(), &Device::Cpu).unwrap();
    let canvas = Canvas::white(64, 64);

    let greedy = SuggestionRequest {
        n: 2,
        temperature: 0.0,
        ..Default::default()
    };
    let a = sample_tokens(&model, &canvas, &SuggestionRequest { seed: 1, ..greedy.clone() }).unwrap();
    let b = sample_tokens(&model, &canvas, &SuggestionRequest { seed: 2, ..greedy.clone() }).unwrap();
    assert_eq!(a, b);

    let seeded = SuggestionRequest {
        n: 2,
        seed: 11,
        ..Default::default()
    };
    assert_eq!(
        sample_tokens(&model, &canvas, &seeded).unwrap(),
        sample_tokens(&model, &canvas, &seeded).unwrap()
    );

    let prompt = BBoxTokens::new(1, 0, 3, 2, 4).unwrap();
    let c = sample_tokens(
        &model,
        &canvas,
        &SuggestionRequest {
            prompt_bbox: Some(prompt),
            ..seeded.clone()
        },
    )
    .unwrap();
    assert_eq!(c[0].bbox, prompt);
    check_structure(&vocab, &c);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let strokes = vec![random_stroke(&vocab, &mut rng)];
    let prefixed = SuggestionRequest {
        prompt_strokes: strokes.clone(),
        n: 3,
        ..seeded.clone()
    };
    let out = sample_tokens(&model, &canvas, &prefixed).unwrap();
    assert_eq!(out.len(), 3);
    check_structure(&vocab, &out);

    let too_many = SuggestionRequest {
        prompt_strokes: strokes,
        n: config.n_max,
        ..seeded.clone()
    };
    assert!(matches!(
        sample_tokens(&model, &canvas, &too_many),
        Err(SeqError::Capacity { .. })
    ));
    let long_prompt = SuggestionRequest {
        prompt_strokes: (0..config.n_max + 1).map(|_| random_stroke(&vocab, &mut rng)).collect(),
        ..seeded.clone()
    };
    assert!(matches!(sample_tokens(&model, &canvas, &long_prompt), Err(SeqError::Prompt(_))));
    assert!(sample_tokens(&model, &canvas, &SuggestionRequest { n: 0, ..seeded }).is_err());
}

#[test]
fn previews_are_cumulative() {
    use hyperstroke_core::{AlphaImage, BBox, Hyperstroke};
    let canvas = Canvas::white(16, 16);
    let s1 = Hyperstroke::new(AlphaImage::filled(4, 4, [1.0, 0.0, 0.0, 0.5]), BBox::new(1, 1, 5, 5).unwrap()).unwrap();
    let s2 = Hyperstroke::new(AlphaImage::filled(6, 3, [0.0, 0.0, 1.0, 1.0]), BBox::new(3, 2, 9, 5).unwrap()).unwrap();
    let one = render_suggestions(&canvas, std::slice::from_ref(&s1)).unwrap();
    assert_eq!(one, vec![blend(&canvas, &s1).unwrap()]);
    let both = render_suggestions(&canvas, &[s1, s2.clone()]).unwrap();
    assert_eq!(both[1], blend(&both[0], &s2).unwrap());
}

#[test]
fn loss_falls_over_first_hundred_steps() {
    let config = SeqConfig {
        batch_size: 16,
        ..tiny()
    };
    let examples = synthetic_examples(&config, 16, 21);
    let (_, report) = train_seq(&config, &examples, None, &SeqTrainOptions::default(), |_| {}).unwrap();
    assert_eq!(report.history.len(), 100);
    let blocks: Vec<f64> = report
        .history
        .chunks(10)
        .map(|c| c.iter().map(|m| m.loss).sum::<f64>() / c.len() as f64)
        .collect();
    for w in blocks.windows(2) {
        assert!(w[1] < w[0], "smoothed loss rose: {blocks:?}");
    }
}

#[test]
fn schedule_warms_up_then_anneals() {
    let c = SeqConfig {
        learning_rate: 1.0,
        warmup_steps: 10,
        steps: 110,
        min_lr_ratio: 0.1,
        ..tiny()
    };
    assert!((learning_rate(&c, 0) - 0.1).abs() < 1e-12);
    assert!((learning_rate(&c, 9) - 1.0).abs() < 1e-12);
    assert!((learning_rate(&c, 10) - 1.0).abs() < 1e-12);
    assert!((learning_rate(&c, 60) - 0.55).abs() < 1e-12);
    assert!((learning_rate(&c, 110) - 0.1).abs() < 1e-12);
    assert!((learning_rate(&c, 500) - 0.1).abs() < 1e-12);
}

fn snapshot(model: &SeqModel, prefix: &str) -> Vec<Vec<f32>> {
    let p = model.params();
    p.names()
        .filter(|n| n.starts_with(prefix))
        .map(|n| p.get(n).unwrap().as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap())
        .collect()
}

#[test]
fn frozen_encoders_do_not_move() {
    let config = SeqConfig {
        freeze_canvas: true,
        freeze_text: true,
        steps: 5,
        ..tiny()
    };
    let examples = synthetic_examples(&config, 8, 2);
    let model = SeqModel::new(config.clone(), &Device::Cpu).unwrap();
    let (canvas0, text0, dec0) = (snapshot(&model, "canvas."), snapshot(&model, "text."), snapshot(&model, "decoder."));
    let (model, _) = train_seq(&config, &examples, Some(model), &SeqTrainOptions::default(), |_| {}).unwrap();
    assert_eq!(snapshot(&model, "canvas."), canvas0);
    assert_eq!(snapshot(&model, "text."), text0);
    assert_ne!(snapshot(&model, "decoder."), dec0);
}

#[test]
fn pretrained_backends_load_and_freeze() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("encoders.safetensors");
    let donor = SeqModel::new(SeqConfig { seed: 99, ..tiny() }, &Device::Cpu).unwrap();
    donor.save(&weights).unwrap();
    let config = SeqConfig {
        canvas_backend: EncoderBackend::PretrainedFrozen { weights: weights.clone() },
        text_backend: EncoderBackend::PretrainedFrozen { weights },
        steps: 3,
        ..tiny()
    };
    let model = SeqModel::new(config.clone(), &Device::Cpu).unwrap();
    assert_eq!(snapshot(&model, "canvas."), snapshot(&donor, "canvas."));
    assert_eq!(snapshot(&model, "text."), snapshot(&donor, "text."));
    assert_ne!(snapshot(&model, "decoder."), snapshot(&donor, "decoder."));
    assert!(model.canvas_frozen() && model.text_frozen());
    let before = snapshot(&model, "canvas.");
    let (model, _) = train_seq(&config, &synthetic_examples(&config, 4, 1), Some(model), &SeqTrainOptions::default(), |_| {}).unwrap();
    assert_eq!(snapshot(&model, "canvas."), before);

    let missing = SeqConfig {
        canvas_backend: EncoderBackend::PretrainedFrozen { weights: dir.path().join("absent") },
        ..tiny()
    };
    assert!(SeqModel::new(missing, &Device::Cpu).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seq.safetensors");
    let config = tiny();
    let examples = synthetic_examples(&config, 4, 8);
    let options = SeqTrainOptions {
        checkpoint: Some(path.clone()),
        metrics: Some(dir.path().join("metrics.jsonl")),
        ..Default::default()
    };
    let (model, report) = train_seq(&SeqConfig { steps: 3, log_every: 1, ..config.clone() }, &examples, None, &options, |_| {}).unwrap();
    assert_eq!(report.steps, 3);
    let lines = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    let loaded = SeqModel::load(&path, &Device::Cpu).unwrap();
    assert_eq!(loaded.step(), 3);
    assert_eq!(loaded.header(), model.header());
    let refs: Vec<&SeqExample> = examples.iter().collect();
    let batch = SeqBatch::new(&refs, &model.vocab(), &Device::Cpu, DType::F32).unwrap();
    let run = |m: &SeqModel| {
        let ctx = m.encode_context_tensor(&batch.canvases, &batch.condition_refs()).unwrap();
        m.forward(&batch.inputs, &ctx).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap()
    };
    assert_eq!(run(&model), run(&loaded));
    let header = serde_json::to_value(model.header()).unwrap();
    assert_eq!(header["C"], 4);
    assert_eq!(header["canvas_backend"], "tiny-trainable");
}

mod cache {
    use super::*;
    use hyperstroke_core::ingest::doodle::{ingest_doodles, procedural_corpus, DoodleConfig};
    use hyperstroke_seq::data::check_vocab;
    use hyperstroke_seq::{build_examples, PrefixMode};
    use hyperstroke_vq::pipeline::{token_cache_header, tokenize_record};
    use hyperstroke_vq::{VqConfig, VqModel};

    fn vq() -> VqModel {
        let config = VqConfig {
            patch: (16, 16),
            downsample: 8,
            codebook_size: 8,
            embed_dim: 4,
            hidden: 8,
            mix_layers: 1,
            canvas: (64, 64),
            grid_c: 4,
            ..VqConfig::desk()
        };
        VqModel::new(config, &Device::Cpu).unwrap()
    }

    #[test]
    fn windows_from_token_cache() {
        let vq = vq();
        let corpus = procedural_corpus(4, 3, &["cat", "car"]);
        let dc = DoodleConfig {
            canvas: 64,
            subsample: 1,
            val_percent: 0,
            ..DoodleConfig::default()
        };
        let records = ingest_doodles(corpus.as_bytes(), &dc).unwrap().0;
        let config = tiny();
        let entries: Vec<_> = records.iter().map(|r| tokenize_record(&vq, r, 3).unwrap()).collect();
        let header = token_cache_header(&vq, (64, 64));
        let vocab = config.vocab().unwrap();

        let blank = build_examples(&config, &header, &entries, &vq).unwrap();
        assert_eq!(blank.len(), records.len());
        for (e, (entry, record)) in blank.iter().zip(entries.iter().zip(&records)) {
            let n = record.strokes.len().min(3);
            let ended = record.strokes.len() <= 3;
            assert_eq!(entry.truncated, !ended);
            assert_eq!(e.tokens.len(), vocab.sequence_len(n) + usize::from(ended));
            assert_eq!(e.canvas, Canvas::white(32, 32));
            assert_eq!(e.condition.as_deref(), Some(record.category.as_str()));
        }

        let every = SeqConfig {
            prefix_mode: PrefixMode::EveryStroke,
            ..config.clone()
        };
        let windows = build_examples(&every, &header, &entries[..1], &vq).unwrap();
        let n = vocab.parse(&entries[0].tokens).unwrap().len();
        let expected = if entries[0].truncated { n } else { n + 1 };
        assert_eq!(windows.len(), expected);
        assert_eq!(windows[0].canvas, Canvas::white(32, 32));
        assert_ne!(windows[1].canvas, windows[0].canvas);
        assert_eq!(windows[1].tokens.len(), windows[0].tokens.len() - vocab.stroke_len());

        let other = SeqConfig { codebook_size: 9, ..config };
        assert!(matches!(check_vocab(&header, &vq, &other), Err(SeqError::VocabMismatch(_))));
        assert!(build_examples(&other, &header, &entries, &vq).is_err());
    }
}
