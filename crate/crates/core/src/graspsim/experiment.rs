use std::collections::VecDeque;
use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tev_numerics::{derive_seed, seeded, ParamSet};

use super::{GraspWorld, ObjectSpec};
use crate::dataset::{EventClass, DEFAULT_NOISE_MM};
use crate::error::{Result, TevError};
use crate::eventnet::{ClassifierOutput, EventClassifier};
use crate::field::{DisplacementFrame, RESAMPLE_STRIDE};
use crate::parallel::parallel_map;
use crate::pixelmotion::{predict_event, PixelMotionNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Open,
    Closed,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Open => "open",
            Mode::Closed => "closed",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = TevError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "open" | "open-loop" => Ok(Mode::Open),
            "closed" | "closed-loop" => Ok(Mode::Closed),
            _ => Err(TevError::Config(format!("unknown grasp mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Drop,
    Crush,
    /// The gripper never closed on the object.
    Missed,
}

/// Trained networks available to a closed-loop controller.
#[derive(Clone, Copy)]
pub struct GraspModels<'a> {
    pub classifier: &'a EventClassifier,
    pub classifier_params: &'a ParamSet,
    pub predictor: Option<(&'a PixelMotionNet, &'a ParamSet)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    /// Standard deviation of the pre-grasp opening measurement.
    pub measurement_noise_mm: f64,
    pub sensor_noise_mm: f64,
    pub speed_mm: f64,
    /// Closed-loop approach starts this far outside the measured opening.
    pub approach_clearance_mm: f64,
    /// Extra closing after contact is detected.
    pub squeeze_mm: f64,
    pub lift_ticks: usize,
    /// Idle ticks before moving, filling the classifier window.
    pub settle_ticks: usize,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            measurement_noise_mm: 1.0,
            sensor_noise_mm: DEFAULT_NOISE_MM,
            speed_mm: 0.05,
            approach_clearance_mm: 5.0,
            squeeze_mm: 0.55,
            lift_ticks: 60,
            settle_ticks: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlipConfig {
    pub sensor_noise_mm: f64,
    pub speed_mm: f64,
    /// Opening decrement per tick while slip is reported.
    pub tighten_mm: f64,
    /// Slip probability above which the controller tightens.
    pub threshold: f32,
    /// Squeeze of the initial grasp, identical for both modes.
    pub initial_squeeze_mm: f64,
    pub added_weight_n: f64,
    pub weights: usize,
    pub interval_ticks: usize,
    pub settle_ticks: usize,
    /// Classify predicted future frames rather than only observed ones.
    pub use_prediction: bool,
    pub n_p: usize,
}

impl Default for SlipConfig {
    fn default() -> Self {
        SlipConfig {
            sensor_noise_mm: DEFAULT_NOISE_MM,
            speed_mm: 0.2,
            tighten_mm: 0.2,
            threshold: 0.5,
            initial_squeeze_mm: 1.1,
            added_weight_n: 0.5,
            weights: 7,
            interval_ticks: 150,
            settle_ticks: 24,
            use_prediction: true,
            n_p: 3,
        }
    }
}

/// What a controller is allowed to see: its own opening, the sensor frame
/// and the network output for this tick.
#[derive(Debug, Clone, Copy)]
pub struct ControllerInput<'a> {
    pub tick: usize,
    pub opening_mm: f64,
    pub frame: &'a DisplacementFrame,
    pub output: Option<&'a ClassifierOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub tick: usize,
    pub opening_mm: f64,
    pub command_mm: f64,
    pub force_n: f64,
    pub load_n: f64,
    pub contact: bool,
    pub event: Option<EventClass>,
    pub probabilities: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub object: String,
    pub mode: Mode,
    pub seed: u64,
    pub outcome: Outcome,
    pub measured_opening_mm: Option<f64>,
    pub first_contact_tick: Option<usize>,
    pub detection_tick: Option<usize>,
    /// Weights on the object when it was dropped.
    pub weights_at_drop: Option<usize>,
    pub weights_loaded: usize,
    pub final_squeeze_mm: f64,
    pub log: Vec<StepLog>,
}

impl Trial {
    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// Raw frame history and the network call made each control tick.
struct Perception<'a> {
    models: GraspModels<'a>,
    history: VecDeque<DisplacementFrame>,
    n_p: usize,
}

impl<'a> Perception<'a> {
    fn new(models: GraspModels<'a>, n_p: usize) -> Result<Self> {
        if n_p > 0 && models.predictor.is_none() {
            return Err(TevError::Config("slip prediction needs a predictor".into()));
        }
        if n_p >= models.classifier.config().n_in {
            return Err(TevError::Config(format!(
                "{n_p} predicted frames leave no observed frames in a {}-frame window",
                models.classifier.config().n_in
            )));
        }
        Ok(Perception {
            models,
            history: VecDeque::new(),
            n_p,
        })
    }

    fn observed_len(&self) -> usize {
        self.models.classifier.config().n_in - self.n_p
    }

    fn capacity(&self) -> usize {
        RESAMPLE_STRIDE * (self.observed_len() - 1) + 1
    }

    fn push(&mut self, frame: DisplacementFrame) {
        if self.history.len() == self.capacity() {
            self.history.pop_front();
        }
        self.history.push_back(frame);
    }

    fn classify(&self) -> Result<Option<ClassifierOutput>> {
        if self.history.len() < self.capacity() {
            return Ok(None);
        }
        let observed: Vec<DisplacementFrame> = self.history.iter().step_by(RESAMPLE_STRIDE).cloned().collect();
        let m = self.models;
        let out = match m.predictor {
            Some((net, params)) if self.n_p > 0 => {
                predict_event(net, params, m.classifier, m.classifier_params, &observed, self.n_p)?
            }
            _ => m.classifier.classify(m.classifier_params, &observed)?,
        };
        Ok(Some(out))
    }
}

enum Phase {
    Closing,
    Squeezing(f64),
    Holding,
}

/// Closes on the object. Open loop drives to the measured opening;
/// closed loop closes until contact is reported, then squeezes a fixed
/// amount.
struct ContactController {
    mode: Mode,
    target_mm: f64,
    speed_mm: f64,
    squeeze_mm: f64,
    phase: Phase,
    detected_at: Option<usize>,
}

impl ContactController {
    fn decide(&mut self, input: &ControllerInput) -> f64 {
        match self.phase {
            Phase::Closing => match self.mode {
                Mode::Open => {
                    let remaining = input.opening_mm - self.target_mm;
                    if remaining <= 1e-12 {
                        self.phase = Phase::Holding;
                        0.0
                    } else {
                        -remaining.min(self.speed_mm)
                    }
                }
                Mode::Closed => {
                    if input.output.map(|o| o.predicted) == Some(EventClass::MakingContact) {
                        self.detected_at = Some(input.tick);
                        self.phase = Phase::Squeezing(self.squeeze_mm);
                        self.decide(input)
                    } else {
                        -self.speed_mm.min(input.opening_mm)
                    }
                }
            },
            Phase::Squeezing(left) => {
                let step = left.min(self.speed_mm);
                self.phase = if left - step <= 1e-12 {
                    Phase::Holding
                } else {
                    Phase::Squeezing(left - step)
                };
                -step
            }
            Phase::Holding => 0.0,
        }
    }

    fn holding(&self) -> bool {
        matches!(self.phase, Phase::Holding)
    }
}

fn log_step(world: &GraspWorld, command: f64, output: Option<&ClassifierOutput>) -> StepLog {
    StepLog {
        tick: world.tick,
        opening_mm: world.opening_mm,
        command_mm: command,
        force_n: world.grip_force_n(),
        load_n: world.load_n,
        contact: world.in_contact(),
        event: output.map(|o| o.predicted),
        probabilities: output.map(|o| o.probabilities.to_vec()),
    }
}

/// One pick attempt: approach, close by `mode`, then lift and hold.
pub fn run_contact_trial(
    object: &ObjectSpec,
    mode: Mode,
    cfg: &ContactConfig,
    models: Option<GraspModels>,
    seed: u64,
) -> Result<Trial> {
    let mut perception = match (mode, models) {
        (Mode::Closed, Some(m)) => Some(Perception::new(m, 0)?),
        (Mode::Closed, None) => return Err(TevError::Config("closed-loop grasping needs a classifier".into())),
        (Mode::Open, _) => None,
    };
    let nominal = object.width_mm - object.nominal_squeeze();
    let measurement = Normal::new(0.0, cfg.measurement_noise_mm).map_err(|e| TevError::Config(e.to_string()))?;
    let measured = nominal + measurement.sample(&mut seeded(derive_seed(seed, 0x3EA5)));
    let start = measured.max(0.0) + cfg.approach_clearance_mm;
    let mut world = GraspWorld::with_noise(
        object.clone(),
        start,
        cfg.speed_mm,
        cfg.sensor_noise_mm,
        derive_seed(seed, 0x5115),
    )?;
    let mut ctl = ContactController {
        mode,
        target_mm: measured.max(0.0),
        speed_mm: cfg.speed_mm,
        squeeze_mm: cfg.squeeze_mm,
        phase: Phase::Closing,
        detected_at: None,
    };
    let mut log = Vec::new();
    let mut frame = world.step(0.0)?;
    for _ in 0..cfg.settle_ticks {
        if let Some(p) = perception.as_mut() {
            p.push(frame.clone());
        }
        log.push(log_step(&world, 0.0, None));
        frame = world.step(0.0)?;
    }
    let travel_ticks = ((start + 1.0) / cfg.speed_mm).ceil() as usize + 1;
    for _ in 0..travel_ticks {
        let output = match perception.as_mut() {
            Some(p) => {
                p.push(frame.clone());
                p.classify()?
            }
            None => None,
        };
        let input = ControllerInput {
            tick: world.tick,
            opening_mm: world.opening_mm,
            frame: &frame,
            output: output.as_ref(),
        };
        let command = ctl.decide(&input);
        log.push(log_step(&world, command, output.as_ref()));
        if ctl.holding() || world.crushed() {
            break;
        }
        frame = world.step(command)?;
        if world.crushed() {
            break;
        }
    }
    if !world.crushed() && world.in_contact() {
        world.load_n = object.weight_n;
        for _ in 0..cfg.lift_ticks {
            world.step(0.0)?;
            log.push(log_step(&world, 0.0, None));
            if world.dropped() {
                break;
            }
        }
    }
    let outcome = if world.crushed() {
        Outcome::Crush
    } else if world.first_contact_tick().is_none() {
        Outcome::Missed
    } else if world.dropped() || !world.in_contact() {
        Outcome::Drop
    } else {
        Outcome::Success
    };
    Ok(Trial {
        object: object.name.clone(),
        mode,
        seed,
        outcome,
        measured_opening_mm: Some(measured),
        first_contact_tick: world.first_contact_tick(),
        detection_tick: ctl.detected_at,
        weights_at_drop: None,
        weights_loaded: 0,
        final_squeeze_mm: world.squeeze_mm(),
        log,
    })
}

/// Holds the object while weights are added one by one. Closed loop
/// tightens whenever the slip probability exceeds the threshold.
pub fn run_slip_trial(
    object: &ObjectSpec,
    mode: Mode,
    cfg: &SlipConfig,
    models: Option<GraspModels>,
    seed: u64,
) -> Result<Trial> {
    let mut perception = match (mode, models) {
        (Mode::Closed, Some(m)) => Some(Perception::new(m, if cfg.use_prediction { cfg.n_p } else { 0 })?),
        (Mode::Closed, None) => return Err(TevError::Config("closed-loop grasping needs a classifier".into())),
        (Mode::Open, _) => None,
    };
    if cfg.tighten_mm > cfg.speed_mm {
        return Err(TevError::Config("tighten step exceeds the gripper speed".into()));
    }
    let mut world = GraspWorld::with_noise(
        object.clone(),
        object.width_mm - cfg.initial_squeeze_mm,
        cfg.speed_mm,
        cfg.sensor_noise_mm,
        derive_seed(seed, 0x5115),
    )?;
    world.load_n = object.weight_n;
    let total = cfg.settle_ticks + (cfg.weights + 1) * cfg.interval_ticks;
    let mut log = Vec::with_capacity(total);
    let mut loaded = 0;
    let mut weights_at_drop = None;
    let mut frame = world.step(0.0)?;
    for t in 0..total {
        if t >= cfg.settle_ticks && (t - cfg.settle_ticks) % cfg.interval_ticks == 0 && loaded < cfg.weights {
            loaded += 1;
            world.load_n += cfg.added_weight_n;
        }
        let output = match perception.as_mut() {
            Some(p) => {
                p.push(frame.clone());
                p.classify()?
            }
            None => None,
        };
        let command = match output.as_ref() {
            Some(o) if o.probability(EventClass::TranslationalSlip) > cfg.threshold => -cfg.tighten_mm,
            _ => 0.0,
        };
        log.push(log_step(&world, command, output.as_ref()));
        frame = world.step(command)?;
        if world.crushed() {
            break;
        }
        if world.dropped() {
            weights_at_drop = Some(loaded);
            break;
        }
    }
    let outcome = if world.crushed() {
        Outcome::Crush
    } else if world.dropped() {
        Outcome::Drop
    } else {
        Outcome::Success
    };
    Ok(Trial {
        object: object.name.clone(),
        mode,
        seed,
        outcome,
        measured_opening_mm: None,
        first_contact_tick: world.first_contact_tick(),
        detection_tick: None,
        weights_at_drop,
        weights_loaded: loaded,
        final_squeeze_mm: world.squeeze_mm(),
        log,
    })
}

/// Success counts per object for each mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub objects: Vec<String>,
    pub trials_per_object: usize,
    pub rows: Vec<(Mode, Vec<usize>)>,
    #[serde(skip)]
    pub trials: Vec<Trial>,
}

impl SuiteSummary {
    pub fn successes(&self, mode: Mode) -> Option<&[usize]> {
        self.rows.iter().find(|(m, _)| *m == mode).map(|(_, s)| s.as_slice())
    }

    pub fn success_rate(&self, mode: Mode) -> Option<f64> {
        let s = self.successes(mode)?;
        Some(s.iter().sum::<usize>() as f64 / (s.len() * self.trials_per_object) as f64)
    }
}

pub fn write_suite_csv(summary: &SuiteSummary, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "mode,{},average", summary.objects.join(","))?;
    for (mode, counts) in &summary.rows {
        let cells: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
        let rate = summary.success_rate(*mode).unwrap_or(0.0);
        writeln!(out, "{},{},{}", mode.name(), cells.join(","), rate)?;
    }
    Ok(())
}

/// `trials` pick attempts per object in every mode. Both modes see the
/// same measurement noise and sensor noise for a given trial.
pub fn run_experiment_suite(
    objects: &[ObjectSpec],
    trials: usize,
    modes: &[Mode],
    cfg: &ContactConfig,
    models: Option<GraspModels>,
    seed: u64,
    jobs: usize,
) -> Result<SuiteSummary> {
    if trials == 0 || objects.is_empty() || modes.is_empty() {
        return Err(TevError::Config(
            "the suite needs objects, modes and at least one trial".into(),
        ));
    }
    let mut jobs_list = Vec::new();
    for &mode in modes {
        for (i, _) in objects.iter().enumerate() {
            for j in 0..trials {
                jobs_list.push((mode, i, derive_seed(seed, ((i as u64) << 32) | j as u64)));
            }
        }
    }
    let results = parallel_map(&jobs_list, jobs, |&(mode, i, s)| {
        run_contact_trial(&objects[i], mode, cfg, models, s)
    })?;
    let rows = modes
        .iter()
        .map(|&mode| {
            let counts = (0..objects.len())
                .map(|i| {
                    results
                        .iter()
                        .zip(&jobs_list)
                        .filter(|(t, (m, o, _))| *m == mode && *o == i && t.succeeded())
                        .count()
                })
                .collect();
            (mode, counts)
        })
        .collect();
    Ok(SuiteSummary {
        objects: objects.iter().map(|o| o.name.clone()).collect(),
        trials_per_object: trials,
        rows,
        trials: results,
    })
}
