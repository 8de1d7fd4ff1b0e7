use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tev_core::graspsim::{
    object_presets, run_experiment_suite, run_slip_trial, slip_object, write_suite_csv, ContactConfig, GraspModels,
    Mode, ObjectSpec, SlipConfig, Trial,
};
use tev_numerics::derive_seed;

use super::{csv_to_string, emit, load_classifier, load_predictor, write_output};
use crate::context::{overlay, usage, CliError, CliResult, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Pick each object with a measured or a sensed closing width.
    Contact,
    /// Hold one object while weights are added.
    Slip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Open,
    Closed,
    Both,
}

impl ModeChoice {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeChoice::Open => vec![Mode::Open],
            ModeChoice::Closed => vec![Mode::Closed],
            ModeChoice::Both => vec![Mode::Open, Mode::Closed],
        }
    }
}

#[derive(Args, Debug)]
pub struct GraspArgs {
    /// Which experiment to run [default: contact]
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// Controller [default: both]
    #[arg(long, value_enum)]
    mode: Option<ModeChoice>,
    /// Trials per object (contact) or in total (slip) [default: 10]
    #[arg(long)]
    trials: Option<usize>,
    /// Standard deviation of the open-loop width measurement, mm [default: 1.0]
    #[arg(long)]
    noise_mm: Option<f64>,
    /// Seed shared by both modes [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Classifier checkpoint for closed loop [default: lstm.tevw]
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Predictor checkpoint; the slip controller then acts on predicted frames
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Result CSV [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-tick JSON log of every trial
    #[arg(long)]
    log: Option<PathBuf>,
}

/// `[grasp]` table. `contact`, `slip` and `objects` can only be set from
/// the config file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GraspSettings {
    experiment: Experiment,
    mode: ModeChoice,
    trials: usize,
    noise_mm: f64,
    seed: u64,
    ckpt: PathBuf,
    predictor: Option<PathBuf>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
    contact: ContactConfig,
    slip: SlipConfig,
    objects: Vec<ObjectSpec>,
    slip_object: ObjectSpec,
}

impl Default for GraspSettings {
    fn default() -> Self {
        GraspSettings {
            experiment: Experiment::Contact,
            mode: ModeChoice::Both,
            trials: 10,
            noise_mm: ContactConfig::default().measurement_noise_mm,
            seed: 42,
            ckpt: "lstm.tevw".into(),
            predictor: None,
            out: None,
            log: None,
            contact: ContactConfig::default(),
            slip: SlipConfig::default(),
            objects: object_presets(),
            slip_object: slip_object(),
        }
    }
}

pub fn run(args: GraspArgs, ctx: &Context) -> CliResult<()> {
    let mut s: GraspSettings = ctx.section("grasp")?;
    overlay!(
        s,
        args,
        [experiment, mode, trials, noise_mm, seed, ckpt, predictor, out, log]
    );
    s.contact.measurement_noise_mm = s.noise_mm;
    ctx.echo("grasp", &s)?;
    if s.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if !(s.noise_mm >= 0.0) {
        return Err(usage("--noise-mm must be nonnegative"));
    }
    for o in s.objects.iter().chain([&s.slip_object]) {
        o.validate()?;
    }
    let modes = s.mode.modes();
    let classifier = if modes.contains(&Mode::Closed) {
        Some(load_classifier(ctx, &s.ckpt)?)
    } else {
        None
    };
    let predictor = match &s.predictor {
        Some(p) => Some(load_predictor(ctx, p)?),
        None => None,
    };
    let models = classifier.as_ref().map(|(c, p)| GraspModels {
        classifier: c,
        classifier_params: p,
        predictor: predictor.as_ref().map(|(n, q)| (n, q)),
    });
    let trials = match s.experiment {
        Experiment::Contact => {
            let summary = run_experiment_suite(&s.objects, s.trials, &modes, &s.contact, models, s.seed, ctx.jobs)?;
            emit(ctx, s.out.as_deref(), &csv_to_string(|w| write_suite_csv(&summary, w))?)?;
            report_latency(&summary.trials);
            summary.trials
        }
        Experiment::Slip => {
            let mut cfg = s.slip.clone();
            if predictor.is_none() {
                cfg.use_prediction = false;
            }
            let mut trials = Vec::new();
            for &mode in &modes {
                for i in 0..s.trials {
                    let m = if mode == Mode::Closed { models } else { None };
                    trials.push(run_slip_trial(
                        &s.slip_object,
                        mode,
                        &cfg,
                        m,
                        derive_seed(s.seed, i as u64),
                    )?);
                }
            }
            emit(ctx, s.out.as_deref(), &csv_to_string(|w| write_slip_csv(&trials, w))?)?;
            trials
        }
    };
    if let Some(path) = &s.log {
        let json = serde_json::to_vec_pretty(&trials).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_output(ctx, path, &json)?;
    }
    Ok(())
}

fn write_slip_csv(trials: &[Trial], w: &mut Vec<u8>) -> std::io::Result<()> {
    use std::io::Write;
    writeln!(w, "mode,seed,outcome,weights_loaded,weights_at_drop,final_squeeze_mm")?;
    for t in trials {
        let outcome = serde_json::to_value(t.outcome).map_err(std::io::Error::other)?;
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            t.mode.name(),
            t.seed,
            outcome.as_str().unwrap_or_default(),
            t.weights_loaded,
            t.weights_at_drop.map(|n| n.to_string()).unwrap_or_default(),
            t.final_squeeze_mm
        )?;
    }
    Ok(())
}

fn report_latency(trials: &[Trial]) {
    let lags: Vec<i64> = trials
        .iter()
        .filter_map(|t| Some(t.detection_tick? as i64 - t.first_contact_tick? as i64))
        .collect();
    if let (Some(min), Some(max)) = (lags.iter().min(), lags.iter().max()) {
        let mean = lags.iter().sum::<i64>() as f64 / lags.len() as f64;
        eprintln!(
            "contact detection lag: mean {mean:.2} ticks, range {min}..={max}, {} trials",
            lags.len()
        );
    }
}
