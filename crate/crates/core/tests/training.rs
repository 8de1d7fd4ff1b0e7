use tev_core::dataset::{build_corpus, split, EventClass, SplitRatio, DEFAULT_NOISE_MM};
use tev_core::eventnet::{ClassifierConfig, EventClassifier, Variant};
use tev_core::field::{DisplacementFrame, TactileSequence};
use tev_core::pixelmotion::{PixelMotionNet, PredictorConfig};
use tev_core::training::{
    evaluate_predictor, mean_loss, sweep_n_in, train, write_history_csv, write_table1_csv, ClassifierReport,
    ConfusionMatrix, Table1Row, TrainConfig, TrainStatus, Trainable,
};
use tev_numerics::{Bindings, Graph, Mode, ParamSet, SeededRng, Tensor, Var};

/// One scalar weight pulled towards each sample's target.
struct Scalar;

impl Trainable for Scalar {
    type Sample = f32;

    fn batch_loss(
        &self,
        g: &mut Graph,
        p: &Bindings,
        batch: &[&f32],
        _mode: Mode,
        _rng: &mut SeededRng,
    ) -> tev_core::Result<Var> {
        let w = p.get("w")?;
        let mut total = None;
        for &&t in batch {
            let target = g.constant(Tensor::vector(&[t]));
            let l = g.mse(w, target)?;
            total = Some(match total {
                None => l,
                Some(acc) => g.add(acc, l)?,
            });
        }
        Ok(g.scale(total.unwrap(), 1.0 / batch.len() as f32)?)
    }
}

fn scalar_init(w: f32) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert("w", Tensor::vector(&[w]));
    p
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        learning_rate: 0.05,
        weight_decay: 0.0,
        max_epochs: 20,
        ..TrainConfig::default()
    }
}

#[test]
fn patience_zero_stops_at_first_non_improving_epoch() {
    let train_set = [0.0f32; 4];
    let val_set = [1.0f32; 2];
    let tr: Vec<&f32> = train_set.iter().collect();
    let va: Vec<&f32> = val_set.iter().collect();
    let cfg = TrainConfig {
        patience: 0,
        ..quick_config()
    };
    let out = train(&Scalar, scalar_init(1.0), &tr, &va, &cfg, |_| {}).unwrap();
    assert_eq!(out.status, TrainStatus::EarlyStopped);
    assert_eq!(out.end_epoch, 1);
    assert_eq!(out.best_epoch, 0);
    assert_eq!(out.params, scalar_init(1.0));

    let cfg = TrainConfig {
        patience: 2,
        ..quick_config()
    };
    let out = train(&Scalar, scalar_init(1.0), &tr, &va, &cfg, |_| {}).unwrap();
    assert_eq!(out.end_epoch, 3);
}

#[test]
fn keeps_the_best_validation_checkpoint() {
    let train_set = [0.5f32, 0.7, 0.3, 0.5, 0.6, 0.4];
    let val_set = [0.5f32, 0.5];
    let tr: Vec<&f32> = train_set.iter().collect();
    let va: Vec<&f32> = val_set.iter().collect();
    let cfg = TrainConfig {
        learning_rate: 0.3,
        ..quick_config()
    };
    let out = train(&Scalar, scalar_init(-2.0), &tr, &va, &cfg, |_| {}).unwrap();
    for r in &out.history {
        assert!(out.best_val_loss <= r.val_loss);
    }
    assert_eq!(out.history[out.best_epoch - 1].val_loss, out.best_val_loss);
    assert_eq!(mean_loss(&Scalar, &out.params, &va, 1).unwrap(), out.best_val_loss);
    for pair in out.history.windows(2) {
        assert!(pair[1].lr <= pair[0].lr);
        assert!((pair[1].lr - pair[0].lr * 0.95).abs() < 1e-6);
    }
}

#[test]
fn non_finite_loss_reports_divergence() {
    let train_set = [0.0f32, f32::NAN];
    let val_set = [0.0f32];
    let tr: Vec<&f32> = train_set.iter().collect();
    let va: Vec<&f32> = val_set.iter().collect();
    let cfg = TrainConfig {
        batch_size: 1,
        ..quick_config()
    };
    let out = train(&Scalar, scalar_init(1.0), &tr, &va, &cfg, |_| {}).unwrap();
    assert_eq!(out.status, TrainStatus::Diverged);
    assert!(out.params.get("w").unwrap().all_finite());
}

#[test]
fn rejects_empty_sets_and_bad_configs() {
    let xs = [0.0f32];
    let some: Vec<&f32> = xs.iter().collect();
    assert!(train(&Scalar, scalar_init(0.0), &[], &some, &quick_config(), |_| {}).is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..quick_config()
    };
    assert!(train(&Scalar, scalar_init(0.0), &some, &some, &bad, |_| {}).is_err());
    let bad = TrainConfig {
        lr_decay: 1.5,
        ..quick_config()
    };
    assert!(bad.validate().is_err());
}

fn small_corpus() -> (Vec<TactileSequence>, Vec<TactileSequence>) {
    let corpus = build_corpus(6, 3, DEFAULT_NOISE_MM, 1).unwrap();
    let s = split(
        &corpus,
        SplitRatio {
            train: 2,
            validation: 1,
        },
        3,
    )
    .unwrap();
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus.sequences[i].clone()).collect();
    (pick(&s.train), pick(&s.validation))
}

fn tiny_classifier(n_in: usize) -> ClassifierConfig {
    let mut cfg = ClassifierConfig::new(Variant::Lstm).with_n_in(n_in);
    cfg.hidden = 16;
    cfg.fc_hidden = 8;
    cfg
}

#[test]
fn training_is_deterministic_across_runs_and_worker_counts() {
    let (tr, va) = small_corpus();
    let tr: Vec<&TactileSequence> = tr.iter().collect();
    let va: Vec<&TactileSequence> = va.iter().collect();
    let clf = EventClassifier::new(tiny_classifier(6)).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let a = train(&clf, clf.init(1), &tr, &va, &cfg, |_| {}).unwrap();
    let b = train(&clf, clf.init(1), &tr, &va, &cfg, |_| {}).unwrap();
    let c = train(
        &clf,
        clf.init(1),
        &tr,
        &va,
        &TrainConfig { jobs: 3, ..cfg.clone() },
        |_| {},
    )
    .unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.history, c.history);
    assert_eq!(a.params, c.params);
    let d = train(&clf, clf.init(1), &tr, &va, &TrainConfig { seed: 7, ..cfg }, |_| {}).unwrap();
    assert_ne!(a.history, d.history);
}

#[test]
fn hand_computed_three_class_metrics() {
    let pairs = [(0, 0), (0, 0), (0, 0), (0, 1), (1, 1), (1, 1), (1, 2), (2, 2), (2, 0)];
    let m = ConfusionMatrix::from_pairs(3, pairs);
    assert_eq!(m.total(), 9);
    assert_eq!((m.support(0), m.support(1), m.support(2)), (4, 3, 2));
    assert!((m.accuracy() - 6.0 / 9.0).abs() < 1e-12);
    assert!((m.f1(0) - 0.75).abs() < 1e-12);
    assert!((m.f1(1) - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.f1(2) - 0.5).abs() < 1e-12);
    assert!((m.macro_f1() - 23.0 / 36.0).abs() < 1e-12);
    for c in 0..3 {
        let row: u64 = (0..3).map(|p| m.get(c, p)).sum();
        assert_eq!(row, m.support(c));
    }
}

#[test]
fn classifier_csv_has_per_class_rows_and_matrix() {
    let m = ConfusionMatrix::from_pairs(7, (0..7).map(|c| (c, c)));
    let report = ClassifierReport::from_confusion(m, 12);
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "class,precision,recall,f1,support");
    assert!(lines[1].starts_with("TranslationalSlip,1.000000"));
    assert!(lines[8].starts_with("macro,"));
    assert!(lines[10].starts_with("true\\predicted,TranslationalSlip"));
    assert_eq!(lines.len(), 18);

    let mut table = Vec::new();
    write_table1_csv(&[Table1Row::new("LSTM", &report, 2.5, 31)], &mut table).unwrap();
    let table = String::from_utf8(table).unwrap();
    assert_eq!(
        table,
        "model,acc_pct,prec_pct,rec_pct,f1_pct,t_f_ms,n_in,end_epoch\nLSTM,100.00,100.00,100.00,100.00,2.500,12,31\n"
    );
}

#[test]
fn identity_predictor_on_static_sequences() {
    let net = PixelMotionNet::new(PredictorConfig::default()).unwrap();
    let mut params = net.init(0);
    net.zero_velocity_head(&mut params).unwrap();
    let seqs: Vec<TactileSequence> = (0..3)
        .map(|i| {
            let f = DisplacementFrame::from_fn(30, 30, |r, c| [(r + i) as f32 * 0.01, c as f32 * 0.02]);
            TactileSequence::new(vec![f; 15], Some(EventClass::Stable))
        })
        .collect();
    let refs: Vec<&TactileSequence> = seqs.iter().collect();
    let report = evaluate_predictor(&net, &params, &refs, 10, 5, 1.0, 1).unwrap();
    assert_eq!(report.frames.len(), 5);
    assert_eq!(report.sequences, 3);
    for (k, f) in report.frames.iter().enumerate() {
        assert_eq!(f.frame_index, k + 1);
        assert_eq!(f.mse_mean, 0.0);
        assert_eq!(f.ssim_mean, 1.0);
        assert_eq!(f.mse_std, 0.0);
    }
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("frame_index,mse_mean,mse_std,ssim_mean,ssim_std\n1,"));
    assert_eq!(text.lines().count(), 6);
    assert!(evaluate_predictor(&net, &params, &refs, 12, 5, 1.0, 1).is_err());
}

#[test]
fn history_csv() {
    let train_set = [0.0f32; 4];
    let tr: Vec<&f32> = train_set.iter().collect();
    let out = train(
        &Scalar,
        scalar_init(1.0),
        &tr,
        &tr,
        &TrainConfig {
            max_epochs: 2,
            ..quick_config()
        },
        |_| {},
    )
    .unwrap();
    let mut buf = Vec::new();
    write_history_csv(&out.history, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("1,"));
}

#[test]
fn longer_windows_classify_at_least_as_well() {
    let corpus = build_corpus(24, 11, DEFAULT_NOISE_MM, 1).unwrap();
    let s = split(
        &corpus,
        SplitRatio {
            train: 3,
            validation: 1,
        },
        11,
    )
    .unwrap();
    let tr: Vec<&TactileSequence> = s.train.iter().map(|&i| &corpus.sequences[i]).collect();
    let va: Vec<&TactileSequence> = s.validation.iter().map(|&i| &corpus.sequences[i]).collect();
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        weight_decay: 0.0,
        max_epochs: 15,
        ..TrainConfig::default()
    };
    let base = tiny_classifier(1);
    let (_, short) = sweep_n_in(&base, &tr, &va, &cfg, 1..=1, |_| {}).unwrap();
    let (best, long) = sweep_n_in(&base, &tr, &va, &cfg, 15..=15, |_| {}).unwrap();
    assert_eq!(best, 15);
    assert_eq!(long[0].report.n_in, 15);
    assert!(
        long[0].report.accuracy >= short[0].report.accuracy,
        "n_in 15: {} vs n_in 1: {}",
        long[0].report.accuracy,
        short[0].report.accuracy
    );
    assert!(sweep_n_in(&base, &tr, &va, &cfg, 0..=2, |_| {}).is_err());
}

#[test]
fn timing_excludes_warmup() {
    let mut calls = 0;
    let t = tev_core::training::measure_forward_time(
        || {
            calls += 1;
            std::thread::sleep(std::time::Duration::from_millis(if calls <= 2 { 30 } else { 2 }));
            Ok(())
        },
        2,
        10,
    )
    .unwrap();
    assert_eq!(calls, 12);
    assert_eq!(t.runs, 10);
    assert!(t.mean_ms >= 2.0 && t.mean_ms < 20.0, "{}", t.mean_ms);
    assert!(t.std_ms < t.mean_ms);
}
