//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.
//!
//! Training uses the desk profile: Adam at 1e-3 without weight decay.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use tev_core::dataset::{
    build_corpus, generate, generate_on, split, Corpus, EventClass, ScenarioConfig, SplitRatio, DEFAULT_NOISE_MM,
};
use tev_core::eventnet::{ClassifierConfig, EventClassifier, Variant};
use tev_core::field::{DisplacementFrame, GridSpec, TactileSequence};
use tev_core::graspsim::{
    object_presets, run_experiment_suite, run_slip_trial, slip_object, ContactConfig, GraspModels, Mode, Outcome,
    SlipConfig,
};
use tev_core::pixelmotion::{
    predict_event, ssim, PixelMotionNet, PredictorConfig, PredictorSession, PREDICTOR_CLASSES,
};
use tev_core::training::{
    copy_last_report, evaluate_classifier, evaluate_predictor, measure_forward_time, train, write_table1_csv,
    Table1Row, TrainConfig, TrainOutcome, TrainStatus,
};
use tev_core::TevError;
use tev_numerics::gradcheck::{check_gradients, check_gradients_piecewise};
use tev_numerics::rng::uniform;
use tev_numerics::{
    seeded, Bindings, CellState, Checkpoint, ConvLstmCell, Linear, LstmCell, NumericsError, Padding, ParamSet, Tensor,
    Var,
};

const SEED: u64 = 42;
/// Largest share of finite-difference elements that may straddle a kink.
const MAX_KINK_FRACTION: f64 = 0.05;
const FRAME_BUDGET_MS: f64 = 1000.0 / 30.0;

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

fn desk(base: TrainConfig, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        weight_decay: 0.0,
        max_epochs,
        seed: SEED,
        jobs: jobs(),
        ..base
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: usize, name: &str, check: impl FnOnce() -> Check) {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
}

// ---------------------------------------------------------------- gradients

fn random(shape: &[usize], seed: u64) -> Tensor {
    uniform(shape.to_vec(), -1.0, 1.0, &mut seeded(seed))
}

fn bindings(names: &[String], vars: &[Var]) -> Bindings {
    Bindings::from_vars(names.iter().cloned().zip(vars.iter().copied()))
}

fn with_params(mut inputs: Vec<Tensor>, params: &ParamSet) -> (Vec<Tensor>, Vec<String>) {
    let names = params.names().map(str::to_string).collect();
    inputs.extend(params.iter().map(|(_, t)| t.clone()));
    (inputs, names)
}

fn gradient_checks() -> Check {
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut note = |name: &'static str, err: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some((_, w)) => *w = w.max(err),
        None => worst.push((name, err)),
    };
    let (mut redraws, mut kinks, mut smooth) = (0u64, (0usize, 0usize), true);
    for seed in 1..=5u64 {
        let r = check_gradients(
            &[random(&[4, 3], seed), random(&[3, 5], seed + 50)],
            |g, v| g.matmul(v[0], v[1]),
            seed,
        )?;
        note("matmul", r.max_rel_error());

        for (stride, padding) in [(1, Padding::Same), (2, Padding::Same)] {
            let r = check_gradients(
                &[random(&[1, 2, 7, 7], seed), random(&[3, 2, 3, 3], seed + 50)],
                |g, v| g.conv2d(v[0], v[1], stride, padding),
                seed,
            )?;
            note("conv2d", r.max_rel_error());
        }

        let cell = LstmCell::new("lstm", 5, 4);
        let mut params = ParamSet::new();
        cell.init(&mut params, &mut seeded(seed));
        let (inputs, names) = with_params(
            vec![
                random(&[2, 5], seed + 1),
                random(&[2, 4], seed + 2),
                random(&[2, 4], seed + 3),
            ],
            &params,
        );
        let r = check_gradients(
            &inputs,
            |g, v| {
                let s = cell.step(g, &bindings(&names, &v[3..]), v[0], CellState { h: v[1], c: v[2] })?;
                g.add(s.h, s.c)
            },
            seed,
        )?;
        note("lstm_cell", r.max_rel_error());

        let cell = ConvLstmCell::new("cl", 2, 3, 3);
        let mut params = ParamSet::new();
        cell.init(&mut params, &mut seeded(seed));
        let (inputs, names) = with_params(
            vec![
                random(&[1, 2, 5, 5], seed + 1),
                random(&[1, 3, 5, 5], seed + 2),
                random(&[1, 3, 5, 5], seed + 3),
            ],
            &params,
        );
        let r = check_gradients(
            &inputs,
            |g, v| {
                let s = cell.step(g, &bindings(&names, &v[3..]), v[0], CellState { h: v[1], c: v[2] })?;
                g.add(s.h, s.c)
            },
            seed,
        )?;
        note("convlstm_cell", r.max_rel_error());

        let fc = Linear::new("fc", 6, 4);
        let mut params = ParamSet::new();
        fc.init(&mut params, &mut seeded(seed));
        params.insert("fc.b", random(&[4], seed + 7));
        let (inputs, names) = with_params(vec![random(&[3, 6], seed + 1)], &params);
        let r = check_gradients(&inputs, |g, v| fc.forward(g, &bindings(&names, &v[1..]), v[0]), seed)?;
        note("fc", r.max_rel_error());

        let labels = [0, 3, (seed % 7) as usize];
        let logits = random(&[3, 7], seed).map(|v| 2.0 * v);
        let r = check_gradients(&[logits], |g, v| g.softmax_cross_entropy(v[0], &labels), seed)?;
        note("softmax+ce", r.max_rel_error());

        // Two recurrent steps of the full predictor on a 2x6x6 field, from a
        // random state with random weights. A point whose ReLUs sit on a kink
        // leaves too few smooth elements and is redrawn.
        let net = PixelMotionNet::new(PredictorConfig {
            rows: 6,
            cols: 6,
            encoder_channels: [2, 3],
            recurrent_channels: 3,
            decoder_channels: 2,
            n_in: 1,
            n_p: 2,
            ..PredictorConfig::default()
        })?;
        let init = net.init(seed);
        let names: Vec<String> = init.names().map(str::to_string).collect();
        let mut attempt = 0u64;
        let r = loop {
            let point = seed + 1000 * attempt;
            let mut inputs = vec![
                random(&[1, 2, 6, 6], point + 9),
                random(&[1, 3, 3, 3], point + 10),
                random(&[1, 3, 3, 3], point + 11),
            ];
            inputs.extend(
                init.iter()
                    .enumerate()
                    .map(|(j, (_, t))| uniform(t.shape().to_vec(), -0.5, 0.5, &mut seeded(point * 100 + j as u64))),
            );
            let r = check_gradients_piecewise(
                &inputs,
                |g, v| {
                    let p = bindings(&names, &v[3..]);
                    let (f1, s) = net
                        .step(g, &p, v[0], CellState { h: v[1], c: v[2] })
                        .map_err(numerics)?;
                    let (f2, _) = net.step(g, &p, f1, s).map_err(numerics)?;
                    Ok(f2)
                },
                seed,
            )?;
            if r.skipped_fraction() <= MAX_KINK_FRACTION || attempt == 4 {
                break r;
            }
            attempt += 1;
        };
        redraws += attempt;
        kinks.0 += r.skipped;
        kinks.1 += r.skipped + r.checked;
        smooth &= r.skipped_fraction() <= MAX_KINK_FRACTION;
        note("pixelmotion", r.max_rel_error());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        max < 1e-3 && smooth && elapsed < 60.0,
        format!(
            "max relative error over 5 seeds: {detail}; pixelmotion kinks skipped {}/{}, points redrawn {redraws}; {elapsed:.1} s",
            kinks.0, kinks.1
        ),
    ))
}

fn numerics(e: TevError) -> NumericsError {
    match e {
        TevError::Numerics(n) => n,
        other => NumericsError::Dimension {
            op: "pixelmotion step",
            msg: other.to_string(),
        },
    }
}

// --------------------------------------------------------------- classifiers

struct Classifiers {
    corpus: Corpus,
    validation: Vec<usize>,
    trained: Vec<(EventClassifier, TrainOutcome)>,
}

impl Classifiers {
    fn validation(&self) -> Vec<&TactileSequence> {
        self.corpus.select(&self.validation)
    }

    fn lstm(&self) -> Option<(&EventClassifier, &ParamSet)> {
        self.trained
            .iter()
            .find(|(c, _)| c.config().variant == Variant::Lstm)
            .map(|(c, o)| (c, &o.params))
    }
}

fn train_classifier(data: &mut Classifiers, variant: Variant, max_epochs: usize) -> Result<(), TevError> {
    let s = split(&data.corpus, SplitRatio::default(), SEED)?;
    data.validation = s.validation.clone();
    let train_set = data.corpus.select(&s.train);
    let val_set = data.corpus.select(&s.validation);
    let clf = EventClassifier::new(ClassifierConfig::new(variant))?;
    let outcome = train(
        &clf,
        clf.init(SEED),
        &train_set,
        &val_set,
        &desk(TrainConfig::classifier(), max_epochs),
        |r| {
            eprintln!(
                "  {} epoch {} train {:.4} val {:.4}",
                variant.name(),
                r.epoch,
                r.train_loss,
                r.val_loss
            );
        },
    )?;
    data.trained.push((clf, outcome));
    Ok(())
}

fn classifier_capability(data: &mut Classifiers) -> Check {
    let start = Instant::now();
    train_classifier(data, Variant::Lstm, 100)?;
    let (clf, outcome) = data.trained.last().unwrap();
    let report = evaluate_classifier(clf, &outcome.params, &data.validation(), jobs())?;
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let pass = report.accuracy >= 0.95
        && report.macro_f1 >= 0.95
        && outcome.end_epoch <= 100
        && outcome.status != TrainStatus::Diverged
        && minutes < 30.0;
    Ok((
        pass,
        format!(
            "LSTM accuracy {:.2}%, macro F1 {:.4}, best epoch {}, stopped after {} ({:?}), {minutes:.1} min",
            100.0 * report.accuracy,
            report.macro_f1,
            outcome.best_epoch,
            outcome.end_epoch,
            outcome.status
        ),
    ))
}

fn baseline_ordering(data: &mut Classifiers) -> Check {
    for v in [Variant::ConvLstm, Variant::CnnLstm] {
        train_classifier(data, v, 12)?;
    }
    let val = data.validation();
    let probe = val
        .iter()
        .find(|q| q.label == Some(EventClass::TranslationalSlip))
        .copied()
        .ok_or("no slip sequence in validation")?;
    let mut rows = Vec::new();
    for (clf, outcome) in &data.trained {
        let report = evaluate_classifier(clf, &outcome.params, &val, jobs())?;
        let timing = measure_forward_time(|| clf.classify_sequence(&outcome.params, probe).map(|_| ()), 10, 50)?;
        rows.push(Table1Row::new(
            clf.config().variant.name(),
            &report,
            timing.mean_ms,
            outcome.end_epoch,
        ));
    }
    let mut csv = Vec::new();
    write_table1_csv(&rows, &mut csv)?;
    let text = String::from_utf8(csv)?;
    for line in text.lines() {
        println!("    {line}");
    }
    let shape_ok = text.lines().next() == Some("model,acc_pct,prec_pct,rec_pct,f1_pct,t_f_ms,n_in,end_epoch")
        && text.lines().skip(1).all(|l| l.split(',').count() == 8)
        && rows.len() == 3;
    let all_above = rows.iter().all(|r| r.accuracy > 0.8);
    let accs: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.2}%", r.model, 100.0 * r.accuracy))
        .collect();
    Ok((
        all_above && shape_ok,
        format!(
            "{}; table shape {}",
            accs.join(", "),
            if shape_ok { "ok" } else { "wrong" }
        ),
    ))
}

// ----------------------------------------------------------------- predictor

struct Predictor {
    net: PixelMotionNet,
    params: ParamSet,
}

fn predictor_vs_copy_last(slot: &mut Option<Predictor>) -> Check {
    let corpus = build_corpus(60, SEED, DEFAULT_NOISE_MM, jobs())?.filter_classes(&PREDICTOR_CLASSES);
    let s = split(&corpus, SplitRatio::default(), SEED)?;
    let net = PixelMotionNet::new(PredictorConfig::default())?;
    let mut init = net.init(SEED);
    net.zero_velocity_head(&mut init)?;
    let outcome = train(
        &net,
        init,
        &corpus.select(&s.train),
        &corpus.select(&s.validation),
        &desk(TrainConfig::predictor(), 15),
        |r| {
            eprintln!(
                "  predictor epoch {} train {:.6} val {:.6}",
                r.epoch, r.train_loss, r.val_loss
            )
        },
    )?;
    let slips: Vec<&TactileSequence> = corpus
        .select(&s.validation)
        .into_iter()
        .filter(|q| {
            matches!(
                q.label,
                Some(EventClass::TranslationalSlip | EventClass::RotationalSlip)
            )
        })
        .collect();
    let (n_in, range) = (net.config().n_in, corpus.header.data_range);
    let model = evaluate_predictor(&net, &outcome.params, &slips, n_in, 5, range, jobs())?;
    let base = copy_last_report(&slips, n_in, 5, range)?;
    println!("    frame,mse_predictor,ssim_predictor,mse_copy_last,ssim_copy_last");
    for (m, b) in model.frames.iter().zip(&base.frames) {
        println!(
            "    {},{:.6},{:.4},{:.6},{:.4}",
            m.frame_index, m.mse_mean, m.ssim_mean, b.mse_mean, b.ssim_mean
        );
    }
    let ratio = model.frames[0].mse_mean / base.frames[0].mse_mean;
    let growth_ok = model.frames.windows(2).all(|w| w[1].mse_mean >= 0.8 * w[0].mse_mean);
    *slot = Some(Predictor {
        net,
        params: outcome.params,
    });
    Ok((
        ratio <= 0.7 && growth_ok,
        format!(
            "1-step MSE ratio to copy-last {ratio:.3} on {} slip sequences; error growth {}",
            slips.len(),
            if growth_ok { "non-collapsing" } else { "collapses" }
        ),
    ))
}

fn cascade_anticipation(data: &Classifiers, pred: Option<&Predictor>) -> Check {
    let (clf, cp) = data.lstm().ok_or("LSTM not trained")?;
    let pred = pred.ok_or("predictor not trained")?;
    let window = clf.config().n_in;
    let (mut plain, mut cascade, mut higher) = (0.0, 0.0, 0);
    for i in 0..100 {
        // The window ends on the first frame of the contact transition.
        let mut cfg = ScenarioConfig::random(EventClass::MakingContact, DEFAULT_NOISE_MM, 7000 + i);
        cfg.onset_frame = window + 2;
        let seq = generate_on(&cfg, &GridSpec::default(), cfg.onset_frame + 1)?;
        let end = cfg.onset_frame + 1;
        let a = clf
            .classify(cp, &seq.frames[end - window..end])?
            .probability(EventClass::MakingContact);
        let b = predict_event(&pred.net, &pred.params, clf, cp, &seq.frames[end + 3 - window..end], 3)?
            .probability(EventClass::MakingContact);
        plain += a as f64 / 100.0;
        cascade += b as f64 / 100.0;
        higher += usize::from(b > a);
    }
    Ok((
        cascade > plain,
        format!("mean P(MakingContact) plain {plain:.3}, cascaded {cascade:.3}; cascade higher on {higher}/100"),
    ))
}

fn residual_identity() -> Check {
    let net = PixelMotionNet::new(PredictorConfig::default())?;
    let mut params = net.init(SEED);
    net.zero_velocity_head(&mut params)?;
    let mut compared = 0;
    for (i, class) in PREDICTOR_CLASSES.iter().enumerate() {
        let seq = generate(&ScenarioConfig::random(*class, DEFAULT_NOISE_MM, 300 + i as u64))?;
        let mut session = PredictorSession::new(&net, &params);
        for f in &seq.frames {
            if session.predict_next(f)? != *f {
                return Ok((
                    false,
                    format!("session output differs from its input on {}", class.name()),
                ));
            }
            compared += 1;
        }
        let rolled = net.rollout(&params, &seq.frames[..10], 5)?;
        if rolled.iter().any(|f| f != &seq.frames[9]) {
            return Ok((false, format!("rollout drifted on {}", class.name())));
        }
        compared += rolled.len();
    }
    Ok((
        true,
        format!("{compared} predicted frames bit-equal to the current frame"),
    ))
}

// ---------------------------------------------------------------------- SSIM

/// Direct double loop over window positions with two-pass moments.
fn ssim_reference(a: &DisplacementFrame, b: &DisplacementFrame, range: f64) -> f64 {
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let (rows, cols) = (a.rows(), a.cols());
    let mut total = 0.0;
    for ch in 0..2 {
        let (x, y) = (a.channel(ch), b.channel(ch));
        let (mut sum, mut count) = (0.0, 0);
        for r0 in 0..=rows - 7 {
            for c0 in 0..=cols - 7 {
                let mut xs = Vec::with_capacity(49);
                let mut ys = Vec::with_capacity(49);
                for r in r0..r0 + 7 {
                    for c in c0..c0 + 7 {
                        xs.push(x[r * cols + c] as f64);
                        ys.push(y[r * cols + c] as f64);
                    }
                }
                let mx = xs.iter().sum::<f64>() / 49.0;
                let my = ys.iter().sum::<f64>() / 49.0;
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for (p, q) in xs.iter().zip(&ys) {
                    vx += (p - mx) * (p - mx);
                    vy += (q - my) * (q - my);
                    cxy += (p - mx) * (q - my);
                }
                let (vx, vy, cxy) = (vx / 48.0, vy / 48.0, cxy / 48.0);
                sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    total / 2.0
}

fn ssim_oracle() -> Check {
    let mut rng = seeded(SEED);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let a = DisplacementFrame::from_fn(30, 30, |_, _| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let spread = (i % 4) as f32 * 0.3;
        let mut b = a.clone();
        for v in b.as_mut_slice() {
            *v += rng.gen_range(-1.0..1.0) * spread;
        }
        worst = worst.max((ssim(&a, &b, 2.0)? - ssim_reference(&a, &b, 2.0)).abs());
        if ssim(&a, &a, 2.0)? != 1.0 {
            return Ok((false, format!("SSIM of pair {i} with itself is not exactly 1")));
        }
    }
    Ok((
        worst < 1e-6,
        format!("largest deviation from the reference {worst:.1e} over 100 pairs; SSIM(x, x) = 1"),
    ))
}

// --------------------------------------------------------------------- grasp

fn grasp_gap(data: &Classifiers) -> Check {
    let start = Instant::now();
    let (clf, params) = data.lstm().ok_or("LSTM not trained")?;
    let models = GraspModels {
        classifier: clf,
        classifier_params: params,
        predictor: None,
    };
    let cfg = ContactConfig::default();
    let suite = run_experiment_suite(
        &object_presets(),
        10,
        &[Mode::Open, Mode::Closed],
        &cfg,
        Some(models),
        SEED,
        jobs(),
    )?;
    let open = suite.success_rate(Mode::Open).unwrap_or(0.0);
    let closed = suite.success_rate(Mode::Closed).unwrap_or(0.0);
    let (open_trials, closed_trials) = suite.trials.split_at(suite.trials.len() / 2);
    let paired = open_trials.iter().zip(closed_trials).all(|(a, b)| a.seed == b.seed);
    let closed_lags: Vec<Option<i64>> = closed_trials
        .iter()
        .map(|t| Some(t.detection_tick? as i64 - t.first_contact_tick? as i64))
        .collect();
    let prompt = closed_lags.iter().filter(|l| matches!(l, Some(0..=2))).count();
    let mut csv = Vec::new();
    tev_core::graspsim::write_suite_csv(&suite, &mut csv)?;
    for line in String::from_utf8(csv)?.lines() {
        println!("    {line}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok((
        closed >= 0.95 && open <= 0.60 && closed >= open && paired && prompt == closed_trials.len() && elapsed < 300.0,
        format!(
            "open-loop {:.0}%, closed-loop {:.0}% over {} paired trials each; closing halted within 2 ticks of contact in {prompt}/{}",
            100.0 * open,
            100.0 * closed,
            closed_trials.len(),
            closed_trials.len()
        ),
    ))
}

fn slip_narrative(data: &Classifiers, pred: Option<&Predictor>) -> Check {
    let (clf, params) = data.lstm().ok_or("LSTM not trained")?;
    let pred = pred.ok_or("predictor not trained")?;
    let models = GraspModels {
        classifier: clf,
        classifier_params: params,
        predictor: Some((&pred.net, &pred.params)),
    };
    let cfg = SlipConfig::default();
    let object = slip_object();
    let open = run_slip_trial(&object, Mode::Open, &cfg, None, SEED)?;
    let closed = run_slip_trial(&object, Mode::Closed, &cfg, Some(models), SEED)?;
    let again = run_slip_trial(&object, Mode::Closed, &cfg, Some(models), SEED)?;
    let pass = open.outcome == Outcome::Drop
        && open.weights_at_drop == Some(3)
        && closed.outcome == Outcome::Success
        && closed.weights_loaded == cfg.weights
        && closed == again;
    Ok((
        pass,
        format!(
            "open loop {:?} with {:?} weights; cascaded closed loop {:?} with {}/{} weights, squeeze {:.2} mm; rerun identical: {}",
            open.outcome,
            open.weights_at_drop,
            closed.outcome,
            closed.weights_loaded,
            cfg.weights,
            closed.final_squeeze_mm,
            closed == again
        ),
    ))
}

// -------------------------------------------------------------------- timing

fn realtime_budget(data: &Classifiers, pred: Option<&Predictor>) -> Check {
    let (clf, params) = data.lstm().ok_or("LSTM not trained")?;
    let pred = pred.ok_or("predictor not trained")?;
    let seq = generate(&ScenarioConfig::random(
        EventClass::TranslationalSlip,
        DEFAULT_NOISE_MM,
        SEED,
    ))?;
    let window = clf.config().n_in;
    let single = measure_forward_time(|| clf.classify_sequence(params, &seq).map(|_| ()), 10, 100)?;
    let observed = &seq.frames[..window - 3];
    let cascade = measure_forward_time(
        || predict_event(&pred.net, &pred.params, clf, params, observed, 3).map(|_| ()),
        10,
        100,
    )?;
    Ok((
        single.mean_ms < FRAME_BUDGET_MS && cascade.mean_ms < FRAME_BUDGET_MS,
        format!(
            "classifier {:.2} ± {:.2} ms, cascade (3 predicted frames) {:.2} ± {:.2} ms, budget {FRAME_BUDGET_MS:.1} ms",
            single.mean_ms, single.std_ms, cascade.mean_ms, cascade.std_ms
        ),
    ))
}

// -------------------------------------------------------------------- formats

fn format_round_trips(data: &Classifiers) -> Check {
    let dir = tempfile::tempdir()?;
    let mut corpus = build_corpus(3, 11, DEFAULT_NOISE_MM, 1)?;
    corpus.sequences[2].label = None;
    let path = dir.path().join("c.tevd");
    corpus.save(&path)?;
    let bytes = std::fs::read(&path)?;
    let back = Corpus::load(&path)?;
    let corpus_ok = back == corpus && back.to_bytes()? == bytes;

    let (clf, params) = data.lstm().ok_or("LSTM not trained")?;
    let ckpt = Checkpoint::new(clf.architecture(), params.clone());
    let cpath = dir.path().join("m.tevw");
    ckpt.save(&cpath)?;
    let cbytes = std::fs::read(&cpath)?;
    let cback = Checkpoint::load(&cpath)?;
    let ckpt_ok = cback.params == ckpt.params && cback.architecture == ckpt.architecture && cback.to_bytes()? == cbytes;

    let mut typed = Vec::new();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    typed.push(matches!(
        Corpus::from_bytes(&bad),
        Err(TevError::Format { offset: 0, .. })
    ));
    let mut bad = bytes.clone();
    bad[4] = 9;
    typed.push(matches!(
        Corpus::from_bytes(&bad),
        Err(TevError::Format { offset: 4, .. })
    ));
    let header_len = u32::from_le_bytes(bytes[6..10].try_into()?) as usize;
    let label_at = 10 + header_len + 4;
    let mut bad = bytes.clone();
    bad[label_at] = 40;
    typed.push(matches!(Corpus::from_bytes(&bad), Err(TevError::Format { offset, .. }) if offset == label_at as u64));
    let cut = bytes.len() - 7;
    typed.push(
        matches!(Corpus::from_bytes(&bytes[..cut]), Err(TevError::Format { offset, .. }) if offset <= cut as u64),
    );
    let mut bad = cbytes.clone();
    bad[1] ^= 0xFF;
    typed.push(matches!(
        Checkpoint::from_bytes(&bad),
        Err(NumericsError::Checkpoint { offset: 0, .. })
    ));
    let cut = cbytes.len() / 2;
    typed.push(matches!(
        Checkpoint::from_bytes(&cbytes[..cut]),
        Err(NumericsError::Checkpoint { offset, .. }) if offset <= cut as u64
    ));
    let typed_ok = typed.iter().all(|&t| t);
    Ok((
        corpus_ok && ckpt_ok && typed_ok,
        format!(
            "corpus round trip {}, checkpoint round trip {}, {}/{} corruptions reported with offsets",
            if corpus_ok { "bit-identical" } else { "differs" },
            if ckpt_ok { "bit-identical" } else { "differs" },
            typed.iter().filter(|&&t| t).count(),
            typed.len()
        ),
    ))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut report = Report { failures: 0 };
    let mut classifiers = Classifiers {
        corpus: match build_corpus(500, SEED, DEFAULT_NOISE_MM, jobs()) {
            Ok(c) => c,
            Err(e) => {
                println!("cannot build the corpus: {e}");
                return ExitCode::FAILURE;
            }
        },
        validation: Vec::new(),
        trained: Vec::new(),
    };
    let mut predictor = None;

    report.record(1, "gradient correctness", gradient_checks);
    report.record(2, "classifier capability", || classifier_capability(&mut classifiers));
    report.record(3, "baseline ordering", || baseline_ordering(&mut classifiers));
    report.record(4, "predictor beats copy-last-frame", || {
        predictor_vs_copy_last(&mut predictor)
    });
    report.record(5, "residual identity", residual_identity);
    report.record(6, "SSIM oracle", ssim_oracle);
    report.record(7, "grasp experiment gap", || grasp_gap(&classifiers));
    report.record(8, "slip stabilisation", || {
        slip_narrative(&classifiers, predictor.as_ref())
    });
    report.record(9, "real-time budget", || {
        realtime_budget(&classifiers, predictor.as_ref())
    });
    report.record(10, "format round trips", || format_round_trips(&classifiers));

    let (supplement_ok, detail) = match cascade_anticipation(&classifiers, predictor.as_ref()) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "supplement   {} cascade anticipates contact: {detail}",
        if supplement_ok { "PASS" } else { "FAIL" }
    );

    println!(
        "acceptance: {} of 10 criteria passed in {:.1} min",
        10 - report.failures,
        start.elapsed().as_secs_f64() / 60.0
    );
    if report.failures == 0 && supplement_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
