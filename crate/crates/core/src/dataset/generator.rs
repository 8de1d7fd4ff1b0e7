//! Kinematic contact-event synthesis.
//!
//! A contact is a circular patch: a flat core of radius `r` with a raised
//! cosine falloff out to `1.5 r`. Normal load pushes the elastomer radially
//! outward under the patch; each class then adds its own in-plane motion.
//! Frame indices below are resampled-sequence indices.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tev_numerics::{derive_seed, seeded};

use super::EventClass;
use crate::error::{Result, TevError};
use crate::field::{DisplacementFrame, GridSpec, TactileSequence, SEQUENCE_LEN};

pub const DEFAULT_NOISE_MM: f64 = 0.02;

const FALLOFF: f64 = 0.5;
const STABLE_JITTER: f64 = 0.03;
const LEADING_EDGE_GAIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPatch {
    pub center: [f64; 2],
    pub radius: f64,
}

impl ContactPatch {
    pub fn outer_radius(&self) -> f64 {
        self.radius * (1.0 + FALLOFF)
    }
}

/// 1 on the core, raised-cosine falloff to 0 at the outer radius.
pub fn patch_weight(p: [f64; 2], patch: &ContactPatch) -> f64 {
    let d = (p[0] - patch.center[0]).hypot(p[1] - patch.center[1]);
    let r = patch.radius;
    if d <= r {
        1.0
    } else if d < patch.outer_radius() {
        0.5 * (1.0 + (std::f64::consts::PI * (d - r) / (FALLOFF * r)).cos())
    } else {
        0.0
    }
}

/// Outward displacement under a normally loaded patch.
pub fn radial_bulge(p: [f64; 2], patch: &ContactPatch, amplitude: f64) -> [f64; 2] {
    let w = patch_weight(p, patch);
    if w == 0.0 {
        return [0.0, 0.0];
    }
    let s = amplitude * w / patch.outer_radius();
    [s * (p[0] - patch.center[0]), s * (p[1] - patch.center[1])]
}

/// Samples `field` at every node of `grid`.
pub fn render_field(grid: &GridSpec, field: impl Fn([f64; 2]) -> [f64; 2]) -> DisplacementFrame {
    DisplacementFrame::from_fn(grid.rows, grid.cols, |r, c| {
        let v = field(grid.node(r, c));
        [v[0] as f32, v[1] as f32]
    })
}

/// Bulge amplitude in millimetres for a normal force in newtons.
pub fn bulge_amplitude(force_n: f64) -> f64 {
    0.3 + 0.08 * force_n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub class: EventClass,
    pub force_n: f64,
    pub duration_s: f64,
    pub patch: ContactPatch,
    /// Slip drift or rolling velocity, mm per frame.
    pub velocity_mm: [f64; 2],
    /// Signed rotational slip rate, degrees per frame.
    pub angular_rate_deg: f64,
    /// Slips and rolling start moving after this frame; transitions first
    /// change at this frame.
    pub onset_frame: usize,
    pub noise_mm: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Draws every motion parameter for `class` from its configured range.
    pub fn random(class: EventClass, noise_mm: f64, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, 0xC0FF));
        let force_n = rng.gen_range(0.0..=20.0);
        let duration_s = rng.gen_range(0.5..=2.0);
        let center = [rng.gen_range(7.0..13.0), rng.gen_range(7.0..13.0)];
        let radius = rng.gen_range(3.0..6.0);
        let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = match class {
            EventClass::TranslationalSlip => rng.gen_range(0.05..0.35),
            EventClass::Rolling => rng.gen_range(0.25..0.5),
            _ => 0.0,
        };
        let angular_rate_deg = match class {
            EventClass::RotationalSlip => {
                let rate = rng.gen_range(1.5..4.0);
                if rng.gen_bool(0.5) {
                    rate
                } else {
                    -rate
                }
            }
            _ => 0.0,
        };
        let onset_frame = match class {
            EventClass::MakingContact | EventClass::BreakingContact => rng.gen_range(4..=11),
            EventClass::TranslationalSlip | EventClass::RotationalSlip => rng.gen_range(0..=5),
            _ => 0,
        };
        let mut center = center;
        if class == EventClass::Rolling {
            // Centre the travel on the sampled point.
            let travel = speed * (SEQUENCE_LEN - 1) as f64 / 2.0;
            center[0] -= travel * heading.cos();
            center[1] -= travel * heading.sin();
        }
        ScenarioConfig {
            class,
            force_n,
            duration_s,
            patch: ContactPatch { center, radius },
            velocity_mm: [speed * heading.cos(), speed * heading.sin()],
            angular_rate_deg,
            onset_frame,
            noise_mm,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=20.0).contains(&self.force_n) {
            return Err(TevError::Config(format!("force {} N outside [0, 20]", self.force_n)));
        }
        if !(0.5..=2.0).contains(&self.duration_s) {
            return Err(TevError::Config(format!(
                "duration {} s outside [0.5, 2]",
                self.duration_s
            )));
        }
        if !(self.noise_mm >= 0.0) || !(self.patch.radius > 0.0) {
            return Err(TevError::Config(
                "noise and radius must be nonnegative and positive".into(),
            ));
        }
        Ok(())
    }

    /// Frames a contact transition takes to complete.
    pub fn ramp_frames(&self) -> usize {
        (self.duration_s * 2.0).round().clamp(1.0, 3.0) as usize
    }

    /// Noise-free field at frame `t`.
    pub fn field_at(&self, t: usize, grid: &GridSpec, jitter: f64) -> DisplacementFrame {
        let amplitude = bulge_amplitude(self.force_n);
        let patch = self.patch;
        let moving = t.saturating_sub(self.onset_frame) as f64;
        match self.class {
            EventClass::Noncontact => DisplacementFrame::zeros(grid.rows, grid.cols),
            EventClass::Stable => render_field(grid, |p| radial_bulge(p, &patch, amplitude * (1.0 + jitter))),
            EventClass::TranslationalSlip => {
                let shift = [self.velocity_mm[0] * moving, self.velocity_mm[1] * moving];
                render_field(grid, |p| {
                    let b = radial_bulge(p, &patch, amplitude);
                    let w = patch_weight(p, &patch);
                    [b[0] + w * shift[0], b[1] + w * shift[1]]
                })
            }
            EventClass::RotationalSlip => {
                let theta = (self.angular_rate_deg * moving).to_radians();
                let (s, c) = theta.sin_cos();
                render_field(grid, |p| {
                    let b = radial_bulge(p, &patch, amplitude);
                    let w = patch_weight(p, &patch);
                    let rx = p[0] - patch.center[0];
                    let ry = p[1] - patch.center[1];
                    [b[0] + w * (c * rx - s * ry - rx), b[1] + w * (s * rx + c * ry - ry)]
                })
            }
            EventClass::Rolling => {
                let center = [
                    patch.center[0] + self.velocity_mm[0] * t as f64,
                    patch.center[1] + self.velocity_mm[1] * t as f64,
                ];
                let moved = ContactPatch { center, ..patch };
                let speed = self.velocity_mm[0].hypot(self.velocity_mm[1]).max(1e-12);
                let heading = [self.velocity_mm[0] / speed, self.velocity_mm[1] / speed];
                let outer = moved.outer_radius();
                render_field(grid, |p| {
                    let ahead = ((p[0] - center[0]) * heading[0] + (p[1] - center[1]) * heading[1]) / outer;
                    let b = radial_bulge(p, &moved, amplitude);
                    let gain = 1.0 + LEADING_EDGE_GAIN * ahead;
                    [gain * b[0], gain * b[1]]
                })
            }
            EventClass::MakingContact | EventClass::BreakingContact => {
                let progress = ((t as f64 - self.onset_frame as f64 + 1.0) / self.ramp_frames() as f64).clamp(0.0, 1.0);
                let envelope = if self.class == EventClass::MakingContact {
                    progress
                } else {
                    1.0 - progress
                };
                render_field(grid, |p| radial_bulge(p, &patch, amplitude * envelope))
            }
        }
    }
}

/// A labelled 15-frame sequence on the default grid.
pub fn generate(cfg: &ScenarioConfig) -> Result<TactileSequence> {
    generate_on(cfg, &GridSpec::default(), SEQUENCE_LEN)
}

pub fn generate_on(cfg: &ScenarioConfig, grid: &GridSpec, frames: usize) -> Result<TactileSequence> {
    cfg.validate()?;
    let mut rng = seeded(derive_seed(cfg.seed, 0x5E0));
    let noise = Normal::new(0.0, cfg.noise_mm).map_err(|e| TevError::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let jitter = if cfg.class == EventClass::Stable {
            rng.gen_range(-STABLE_JITTER..=STABLE_JITTER)
        } else {
            0.0
        };
        let mut frame = cfg.field_at(t, grid, jitter);
        if cfg.noise_mm > 0.0 {
            for v in frame.as_mut_slice() {
                *v += noise.sample(&mut rng) as f32;
            }
        }
        out.push(frame);
    }
    Ok(TactileSequence::new(out, Some(cfg.class)))
}
