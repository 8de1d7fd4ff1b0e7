//! Kinematic parallel-gripper simulator that renders tactile fields, and the
//! reactive grasp experiments driven by it.
//!
//! The gripper closes along one axis. Squeeze depth `d = width - opening`
//! sets the grip force `k·d`; friction holds a tangential load up to `μ·k·d`
//! and any excess makes the object slide at `k_slide · (load - μ·k·d)` mm per
//! tick.

mod experiment;

pub use experiment::{
    run_contact_trial, run_experiment_suite, run_slip_trial, write_suite_csv, ContactConfig, ControllerInput,
    GraspModels, Mode, Outcome, SlipConfig, StepLog, SuiteSummary, Trial,
};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tev_numerics::SeededRng;

use crate::dataset::{bulge_amplitude, patch_weight, radial_bulge, render_field, ContactPatch, DEFAULT_NOISE_MM};
use crate::error::{Result, TevError};
use crate::field::{DisplacementFrame, GridSpec};

/// Seconds per control tick.
pub const TICK_S: f64 = 1.0 / 30.0;
pub const DEFAULT_FINGER_LENGTH_MM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub width_mm: f64,
    pub weight_n: f64,
    pub friction: f64,
    /// Grip force per millimetre of squeeze.
    pub stiffness_n_per_mm: f64,
    /// Squeeze depth at which the object is crushed.
    pub crush_depth_mm: f64,
    /// Slide per tick per newton of unbalanced load.
    pub slide_gain: f64,
    pub patch: ContactPatch,
}

impl ObjectSpec {
    /// Least squeeze at which friction carries `load_n`.
    pub fn holding_depth(&self, load_n: f64) -> f64 {
        load_n / (self.friction * self.stiffness_n_per_mm)
    }

    /// Squeeze a careful manual measurement aims for: midway between the
    /// holding depth for the bare object and the crush depth.
    pub fn nominal_squeeze(&self) -> f64 {
        0.5 * (self.holding_depth(self.weight_n) + self.crush_depth_mm)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.width_mm,
            self.weight_n,
            self.friction,
            self.stiffness_n_per_mm,
            self.crush_depth_mm,
            self.slide_gain,
            self.patch.radius,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(TevError::Config(format!(
                "object `{}` has a nonpositive parameter",
                self.name
            )));
        }
        if self.holding_depth(self.weight_n) >= self.crush_depth_mm {
            return Err(TevError::Config(format!(
                "object `{}` cannot be held without being crushed",
                self.name
            )));
        }
        Ok(())
    }
}

fn object(name: &str, width_mm: f64, friction: f64, holding: f64, crush: f64, patch: ([f64; 2], f64)) -> ObjectSpec {
    let stiffness = 4.0;
    ObjectSpec {
        name: name.to_string(),
        width_mm,
        weight_n: holding * friction * stiffness,
        friction,
        stiffness_n_per_mm: stiffness,
        crush_depth_mm: crush,
        slide_gain: 3.0,
        patch: ContactPatch {
            center: patch.0,
            radius: patch.1,
        },
    }
}

/// Ten objects whose tolerance windows (holding depth to crush depth) range
/// from half a millimetre to about 1.7 mm.
pub fn object_presets() -> Vec<ObjectSpec> {
    vec![
        object("Box", 62.0, 0.5, 0.40, 0.91, ([10.0, 10.0], 5.5)),
        object("Ball", 45.0, 0.6, 0.35, 1.12, ([9.5, 10.5], 3.5)),
        object("Chess", 22.0, 0.5, 0.30, 1.98, ([10.5, 9.0], 3.2)),
        object("Yellow", 30.0, 0.7, 0.25, 1.93, ([9.0, 9.5], 4.5)),
        object("Bottle", 58.0, 0.4, 0.45, 0.96, ([10.0, 11.0], 5.0)),
        object("Cup", 70.0, 0.5, 0.35, 2.03, ([11.0, 10.0], 4.8)),
        object("Cone", 35.0, 0.6, 0.30, 1.65, ([10.0, 8.5], 3.8)),
        object("Rabbit", 40.0, 0.5, 0.40, 2.08, ([8.5, 10.0], 4.2)),
        object("Mouse", 55.0, 0.6, 0.25, 1.60, ([10.5, 10.5], 5.2)),
        object("Power", 48.0, 0.5, 0.45, 1.80, ([9.5, 9.0], 4.0)),
    ]
}

/// The object for the weight-loading experiment.
pub fn slip_object() -> ObjectSpec {
    ObjectSpec {
        name: "Block".into(),
        width_mm: 50.0,
        weight_n: 1.0,
        friction: 0.5,
        stiffness_n_per_mm: 4.0,
        crush_depth_mm: 12.0,
        slide_gain: 0.25,
        patch: ContactPatch {
            center: [10.0, 10.0],
            radius: 4.5,
        },
    }
}

/// Ground-truth state of gripper and object.
#[derive(Debug, Clone)]
pub struct GraspWorld {
    pub object: ObjectSpec,
    pub opening_mm: f64,
    /// Largest opening change per tick.
    pub speed_mm: f64,
    /// Tangential load currently pulling the object out of the grasp.
    pub load_n: f64,
    pub finger_length_mm: f64,
    /// Direction, on the sensor, in which a sliding object drags the skin.
    pub slide_direction: [f64; 2],
    pub tick: usize,
    slide_mm: f64,
    first_contact: Option<usize>,
    crushed: bool,
    dropped: bool,
    grid: GridSpec,
    noise: Normal<f64>,
    rng: SeededRng,
}

impl GraspWorld {
    pub fn new(object: ObjectSpec, opening_mm: f64, speed_mm: f64, seed: u64) -> Result<Self> {
        Self::with_noise(object, opening_mm, speed_mm, DEFAULT_NOISE_MM, seed)
    }

    pub fn with_noise(object: ObjectSpec, opening_mm: f64, speed_mm: f64, noise_mm: f64, seed: u64) -> Result<Self> {
        object.validate()?;
        if !(speed_mm > 0.0) || opening_mm < 0.0 {
            return Err(TevError::Config(
                "gripper speed must be positive and opening nonnegative".into(),
            ));
        }
        let noise = Normal::new(0.0, noise_mm).map_err(|e| TevError::Config(e.to_string()))?;
        let mut world = GraspWorld {
            object,
            opening_mm,
            speed_mm,
            load_n: 0.0,
            finger_length_mm: DEFAULT_FINGER_LENGTH_MM,
            slide_direction: [0.0, 1.0],
            tick: 0,
            slide_mm: 0.0,
            first_contact: None,
            crushed: false,
            dropped: false,
            grid: GridSpec::default(),
            noise,
            rng: SeededRng::seed_from_u64(seed),
        };
        world.check_contact();
        Ok(world)
    }

    pub fn squeeze_mm(&self) -> f64 {
        if self.dropped {
            0.0
        } else {
            (self.object.width_mm - self.opening_mm).max(0.0)
        }
    }

    pub fn in_contact(&self) -> bool {
        self.squeeze_mm() > 0.0
    }

    pub fn grip_force_n(&self) -> f64 {
        self.object.stiffness_n_per_mm * self.squeeze_mm()
    }

    /// Load in excess of what friction can hold.
    pub fn force_deficit_n(&self) -> f64 {
        (self.load_n - self.object.friction * self.grip_force_n()).max(0.0)
    }

    pub fn slide_rate(&self) -> f64 {
        if self.dropped || self.load_n <= 0.0 {
            0.0
        } else {
            self.object.slide_gain * self.force_deficit_n()
        }
    }

    pub fn slide_mm(&self) -> f64 {
        self.slide_mm
    }

    pub fn first_contact_tick(&self) -> Option<usize> {
        self.first_contact
    }

    pub fn crushed(&self) -> bool {
        self.crushed
    }

    pub fn dropped(&self) -> bool {
        self.dropped
    }

    fn check_contact(&mut self) {
        if self.in_contact() && self.first_contact.is_none() {
            self.first_contact = Some(self.tick);
        }
        if self.squeeze_mm() > self.object.crush_depth_mm {
            self.crushed = true;
        }
    }

    /// Noise-free field for the current state. Skin dragged by a sliding
    /// object stays sheared once it sticks again.
    pub fn clean_field(&self) -> DisplacementFrame {
        if !self.in_contact() {
            return DisplacementFrame::zeros(self.grid.rows, self.grid.cols);
        }
        let patch = self.object.patch;
        let amplitude = bulge_amplitude(self.grip_force_n());
        let shift = [
            self.slide_direction[0] * self.slide_mm,
            self.slide_direction[1] * self.slide_mm,
        ];
        render_field(&self.grid, |p| {
            let b = radial_bulge(p, &patch, amplitude);
            let w = patch_weight(p, &patch);
            [b[0] + w * shift[0], b[1] + w * shift[1]]
        })
    }

    /// Moves the gripper by `delta_mm` (negative closes), advances the
    /// object one tick and returns the sensor frame.
    pub fn step(&mut self, delta_mm: f64) -> Result<DisplacementFrame> {
        if !delta_mm.is_finite() || delta_mm.abs() > self.speed_mm + 1e-12 {
            return Err(TevError::Config(format!(
                "command {delta_mm} mm exceeds the {} mm per-tick limit",
                self.speed_mm
            )));
        }
        self.tick += 1;
        self.opening_mm = (self.opening_mm + delta_mm).max(0.0);
        self.check_contact();
        let rate = self.slide_rate();
        if rate > 0.0 {
            self.slide_mm += rate;
            if self.slide_mm > self.finger_length_mm {
                self.dropped = true;
                self.load_n = 0.0;
            }
        }
        let mut frame = self.clean_field();
        if self.noise.std_dev() > 0.0 {
            for v in frame.as_mut_slice() {
                *v += self.noise.sample(&mut self.rng) as f32;
            }
        }
        Ok(frame)
    }
}
