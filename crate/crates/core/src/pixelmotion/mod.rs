//! Future-frame prediction. The network predicts a per-node velocity map
//! that is added to the current frame; predictions are fed back as inputs
//! to roll out several frames ahead.

mod metrics;

pub use metrics::{mse, prediction_loss, ssim, SSIM_WINDOW};

use serde::{Deserialize, Serialize};
use tev_numerics::{Bindings, CellState, Conv2d, ConvLstmCell, Graph, ParamSet, Tensor, Var};

use crate::dataset::EventClass;
use crate::error::{Result, TevError};
use crate::eventnet::{ClassifierOutput, EventClassifier};
use crate::field::{encode_hsv, DisplacementFrame, RgbImage, CHANNELS, GRID_COLS, GRID_ROWS};

/// Classes the predictor is trained on.
pub const PREDICTOR_CLASSES: [EventClass; 4] = [
    EventClass::TranslationalSlip,
    EventClass::RotationalSlip,
    EventClass::Stable,
    EventClass::Noncontact,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub rows: usize,
    pub cols: usize,
    /// Output channels of the stride-2 and stride-1 encoder convolutions.
    pub encoder_channels: [usize; 2],
    pub recurrent_channels: usize,
    pub decoder_channels: usize,
    pub kernel: usize,
    /// Observed frames per training window.
    pub n_in: usize,
    /// Frames rolled out per training window.
    pub n_p: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            rows: GRID_ROWS,
            cols: GRID_COLS,
            encoder_channels: [16, 32],
            recurrent_channels: 32,
            decoder_channels: 16,
            kernel: 3,
            n_in: 10,
            n_p: 5,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.rows % 2 != 0 || self.cols % 2 != 0 {
            return Err(TevError::Config(format!(
                "predictor grid {}x{} must have even, nonzero sides",
                self.rows, self.cols
            )));
        }
        if self.n_in == 0 || self.n_p == 0 {
            return Err(TevError::Config("predictor needs n_in ≥ 1 and n_p ≥ 1".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(TevError::Config(format!("kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PixelMotionNet {
    config: PredictorConfig,
    enc1: Conv2d,
    enc2: Conv2d,
    cell: ConvLstmCell,
    dec: Conv2d,
    head: Conv2d,
}

impl PixelMotionNet {
    pub fn new(config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        let [e1, e2] = config.encoder_channels;
        let k = config.kernel;
        Ok(PixelMotionNet {
            enc1: Conv2d::same("enc1", CHANNELS, e1, k, 2),
            enc2: Conv2d::same("enc2", e1, e2, k, 1),
            cell: ConvLstmCell::new("convlstm", e2, config.recurrent_channels, k),
            dec: Conv2d::same("dec", config.recurrent_channels, config.decoder_channels, k, 1),
            head: Conv2d::same("head", config.decoder_channels, CHANNELS, k, 1),
            config,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    fn latent_size(&self) -> (usize, usize) {
        (self.config.rows / 2, self.config.cols / 2)
    }

    pub fn init(&self, seed: u64) -> ParamSet {
        let mut rng = tev_numerics::seeded(seed);
        let mut params = ParamSet::new();
        self.enc1.init(&mut params, &mut rng);
        self.enc2.init(&mut params, &mut rng);
        self.cell.init(&mut params, &mut rng);
        self.dec.init(&mut params, &mut rng);
        self.head.init(&mut params, &mut rng);
        params
    }

    /// Zeroes the velocity head so every prediction equals its input frame.
    pub fn zero_velocity_head(&self, params: &mut ParamSet) -> Result<()> {
        for name in [self.head.weight_name(), self.head.bias_name()] {
            params.get_mut(&name)?.data_mut().fill(0.0);
        }
        Ok(())
    }

    pub fn architecture(&self) -> serde_json::Value {
        serde_json::json!({ "model": "predictor", "config": self.config })
    }

    pub fn from_architecture(value: &serde_json::Value) -> Result<Self> {
        if value.get("model").and_then(|m| m.as_str()) != Some("predictor") {
            return Err(TevError::Config("checkpoint does not hold a predictor".into()));
        }
        let config: PredictorConfig = serde_json::from_value(value["config"].clone())
            .map_err(|e| TevError::Config(format!("predictor descriptor: {e}")))?;
        Self::new(config)
    }

    fn check_frame(&self, f: &DisplacementFrame) -> Result<()> {
        if f.rows() != self.config.rows || f.cols() != self.config.cols {
            return Err(TevError::Shape(format!(
                "{}x{} frame, predictor expects {}x{}",
                f.rows(),
                f.cols(),
                self.config.rows,
                self.config.cols
            )));
        }
        Ok(())
    }

    fn encode(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var> {
        let e = self.enc1.forward(g, p, x)?;
        let e = g.relu(e)?;
        let e = self.enc2.forward(g, p, e)?;
        Ok(g.relu(e)?)
    }

    fn velocity(&self, g: &mut Graph, p: &Bindings, h: Var) -> Result<Var> {
        let u = g.upsample_nearest(h, 2)?;
        let d = self.dec.forward(g, p, u)?;
        let d = g.relu(d)?;
        Ok(self.head.forward(g, p, d)?)
    }

    /// One recurrent step: `frame [B×2×H×W]` to the predicted next frame.
    pub fn step(&self, g: &mut Graph, p: &Bindings, frame: Var, state: CellState) -> Result<(Var, CellState)> {
        let e = self.encode(g, p, frame)?;
        let state = self.cell.step(g, p, e, state)?;
        let delta = self.velocity(g, p, state.h)?;
        Ok((g.add(frame, delta)?, state))
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> CellState {
        let (h, w) = self.latent_size();
        self.cell.zero_state(g, batch, h, w)
    }

    /// Runs the recurrent state over every observed frame of each window,
    /// then rolls out `n_p` frames autoregressively. Returns one
    /// `[B×2×H×W]` node per predicted frame.
    pub fn rollout_graph(
        &self,
        g: &mut Graph,
        p: &Bindings,
        observed: &[&[DisplacementFrame]],
        n_p: usize,
    ) -> Result<Vec<Var>> {
        let b = observed.len();
        let n_obs = observed.first().map_or(0, |w| w.len());
        if b == 0 || n_obs == 0 {
            return Err(TevError::Shape("rollout needs at least one observed frame".into()));
        }
        if n_p == 0 {
            return Err(TevError::Config("rollout length must be at least 1".into()));
        }
        let (rows, cols) = (self.config.rows, self.config.cols);
        let frame_len = CHANNELS * rows * cols;
        let mut data = Vec::with_capacity(b * n_obs * frame_len);
        for t in 0..n_obs {
            for w in observed {
                if w.len() != n_obs {
                    return Err(TevError::Shape("observed windows differ in length".into()));
                }
                self.check_frame(&w[t])?;
                data.extend_from_slice(w[t].as_slice());
            }
        }
        let x = g.constant(Tensor::new([n_obs * b, CHANNELS, rows, cols], data)?);
        let encoded = self.encode(g, p, x)?;
        let projected = self.cell.project_input(g, p, encoded)?;
        let mut state = self.zero_state(g, b);
        for t in 0..n_obs {
            let xt = g.narrow(projected, 0, t * b, b)?;
            state = self.cell.step_projected(g, p, xt, state)?;
        }
        let last = g.narrow(x, 0, (n_obs - 1) * b, b)?;
        let delta = self.velocity(g, p, state.h)?;
        let mut frame = g.add(last, delta)?;
        let mut out = vec![frame];
        for _ in 1..n_p {
            let (next, s) = self.step(g, p, frame, state)?;
            state = s;
            frame = next;
            out.push(frame);
        }
        Ok(out)
    }

    /// Predicted frames for each observed window.
    pub fn rollout_batch(
        &self,
        params: &ParamSet,
        observed: &[&[DisplacementFrame]],
        n_p: usize,
    ) -> Result<Vec<Vec<DisplacementFrame>>> {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let nodes = self.rollout_graph(&mut g, &p, observed, n_p)?;
        let mut out = vec![Vec::with_capacity(n_p); observed.len()];
        for node in nodes {
            let frames = split_frames(g.value(node), self.config.rows, self.config.cols)?;
            for (dst, f) in out.iter_mut().zip(frames) {
                dst.push(f);
            }
        }
        Ok(out)
    }

    pub fn rollout(
        &self,
        params: &ParamSet,
        observed: &[DisplacementFrame],
        n_p: usize,
    ) -> Result<Vec<DisplacementFrame>> {
        Ok(self.rollout_batch(params, &[observed], n_p)?.remove(0))
    }

    /// Rolls out `n_p` frames after the first `n_in` of `frames` and scores
    /// them against the frames that follow.
    pub fn evaluate_rollout(
        &self,
        params: &ParamSet,
        frames: &[DisplacementFrame],
        n_in: usize,
        n_p: usize,
        data_range: f64,
    ) -> Result<RolloutResult> {
        if frames.len() < n_in + n_p {
            return Err(TevError::Shape(format!(
                "{} frames cannot cover {n_in} observed and {n_p} predicted",
                frames.len()
            )));
        }
        let predicted = self.rollout(params, &frames[..n_in], n_p)?;
        RolloutResult::score(predicted, frames[n_in..n_in + n_p].to_vec(), data_range)
    }
}

fn split_frames(t: &Tensor, rows: usize, cols: usize) -> Result<Vec<DisplacementFrame>> {
    t.data()
        .chunks_exact(CHANNELS * rows * cols)
        .map(|c| DisplacementFrame::unflatten(rows, cols, c.to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub predicted: Vec<DisplacementFrame>,
    pub truth: Vec<DisplacementFrame>,
    pub mse: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl RolloutResult {
    pub fn score(predicted: Vec<DisplacementFrame>, truth: Vec<DisplacementFrame>, data_range: f64) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(TevError::Shape(format!(
                "{} predicted frames against {} true frames",
                predicted.len(),
                truth.len()
            )));
        }
        let mut m = Vec::with_capacity(predicted.len());
        let mut s = Vec::with_capacity(predicted.len());
        for (p, t) in predicted.iter().zip(&truth) {
            m.push(mse(p, t)?);
            s.push(ssim(p, t, data_range)?);
        }
        Ok(RolloutResult {
            predicted,
            truth,
            mse: m,
            ssim: s,
        })
    }

    /// Truth frames on the top row, predictions below.
    pub fn strip(&self, v_max: f64, scale: usize) -> Result<RgbImage> {
        let row = |frames: &[DisplacementFrame]| -> Result<RgbImage> {
            let tiles = frames
                .iter()
                .map(|f| Ok(encode_hsv(f, v_max)?.upscale(scale)))
                .collect::<Result<Vec<_>>>()?;
            Ok(RgbImage::hconcat(&tiles, 2))
        };
        Ok(RgbImage::vconcat(&[row(&self.truth)?, row(&self.predicted)?], 2))
    }
}

/// Frame-by-frame prediction with the recurrent state carried between
/// calls. [`take_state`](Self::take_state) detaches the state; further
/// predictions need [`reset`](Self::reset) or [`restore`](Self::restore).
pub struct PredictorSession<'a> {
    net: &'a PixelMotionNet,
    params: &'a ParamSet,
    state: SessionState,
}

enum SessionState {
    Fresh,
    Running { h: Tensor, c: Tensor },
    Detached,
}

impl<'a> PredictorSession<'a> {
    pub fn new(net: &'a PixelMotionNet, params: &'a ParamSet) -> Self {
        PredictorSession {
            net,
            params,
            state: SessionState::Fresh,
        }
    }

    pub fn predict_next(&mut self, frame: &DisplacementFrame) -> Result<DisplacementFrame> {
        self.net.check_frame(frame)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let state = match &self.state {
            SessionState::Fresh => self.net.zero_state(&mut g, 1),
            SessionState::Running { h, c } => CellState {
                h: g.constant(h.clone()),
                c: g.constant(c.clone()),
            },
            SessionState::Detached => {
                return Err(TevError::State(
                    "predictor state was taken; reset or restore before predicting".into(),
                ))
            }
        };
        let (rows, cols) = (self.net.config.rows, self.net.config.cols);
        let x = g.constant(Tensor::new([1, CHANNELS, rows, cols], frame.flatten())?);
        let (next, state) = self.net.step(&mut g, &p, x, state)?;
        self.state = SessionState::Running {
            h: g.value(state.h).clone(),
            c: g.value(state.c).clone(),
        };
        Ok(split_frames(g.value(next), rows, cols)?.remove(0))
    }

    pub fn take_state(&mut self) -> Option<(Tensor, Tensor)> {
        match std::mem::replace(&mut self.state, SessionState::Detached) {
            SessionState::Running { h, c } => Some((h, c)),
            _ => None,
        }
    }

    pub fn restore(&mut self, h: Tensor, c: Tensor) {
        self.state = SessionState::Running { h, c };
    }

    pub fn reset(&mut self) {
        self.state = SessionState::Fresh;
    }
}

/// Rolls the predictor `n_p` frames past `observed` and classifies the last
/// classifier window of observed followed by predicted frames.
pub fn predict_event(
    predictor: &PixelMotionNet,
    predictor_params: &ParamSet,
    classifier: &EventClassifier,
    classifier_params: &ParamSet,
    observed: &[DisplacementFrame],
    n_p: usize,
) -> Result<ClassifierOutput> {
    let pc = predictor.config();
    let cc = classifier.config();
    if pc.rows != cc.rows || pc.cols != cc.cols {
        return Err(TevError::Config(format!(
            "predictor grid {}x{} does not match classifier grid {}x{}",
            pc.rows, pc.cols, cc.rows, cc.cols
        )));
    }
    let window = cc.n_in;
    if observed.len() + n_p < window || observed.is_empty() {
        return Err(TevError::Config(format!(
            "{} observed and {n_p} predicted frames cannot fill a {window}-frame window",
            observed.len()
        )));
    }
    let mut frames: Vec<DisplacementFrame> = observed.to_vec();
    if n_p > 0 {
        frames.extend(predictor.rollout(predictor_params, observed, n_p)?);
    }
    classifier.classify(classifier_params, &frames[frames.len() - window..])
}
