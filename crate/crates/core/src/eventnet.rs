//! Contact-event classifiers: a frame-vector LSTM, a ConvLSTM classifier and
//! a per-frame CNN encoder feeding an LSTM. All three end in
//! `FC → ReLU → FC → softmax` over the seven classes.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tev_numerics::{
    seeded, Bindings, Conv2d, ConvLstmCell, Graph, Linear, LstmCell, Mode, ParamSet, SeededRng, Tensor, Var,
};

use crate::dataset::{EventClass, NUM_CLASSES};
use crate::error::{Result, TevError};
use crate::field::{DisplacementFrame, TactileSequence, CHANNELS, GRID_COLS, GRID_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lstm,
    ConvLstm,
    CnnLstm,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lstm, Variant::ConvLstm, Variant::CnnLstm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Lstm => "LSTM",
            Variant::ConvLstm => "ConvLSTM",
            Variant::CnnLstm => "CNN+LSTM",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = TevError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['+', '-', '_'], "").as_str() {
            "lstm" => Ok(Variant::Lstm),
            "convlstm" => Ok(Variant::ConvLstm),
            "cnnlstm" => Ok(Variant::CnnLstm),
            _ => Err(TevError::Config(format!("unknown classifier variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub variant: Variant,
    /// Frames consumed per classification.
    pub n_in: usize,
    pub rows: usize,
    pub cols: usize,
    /// LSTM hidden size, or ConvLSTM hidden channels.
    pub hidden: usize,
    pub fc_hidden: usize,
    pub dropout: f32,
    pub kernel: usize,
    /// CNN encoder output channels per stride-2 convolution.
    pub encoder_channels: Vec<usize>,
}

impl ClassifierConfig {
    pub fn new(variant: Variant) -> Self {
        let (hidden, encoder_channels) = match variant {
            Variant::Lstm => (256, Vec::new()),
            Variant::ConvLstm => (8, Vec::new()),
            Variant::CnnLstm => (128, vec![8, 16]),
        };
        ClassifierConfig {
            variant,
            n_in: 12,
            rows: GRID_ROWS,
            cols: GRID_COLS,
            hidden,
            fc_hidden: 64,
            dropout: 0.5,
            kernel: 3,
            encoder_channels,
        }
    }

    pub fn with_n_in(mut self, n_in: usize) -> Self {
        self.n_in = n_in;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.rows == 0 || self.cols == 0 || self.hidden == 0 || self.fc_hidden == 0 {
            return Err(TevError::Config(format!("degenerate classifier config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TevError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.variant == Variant::CnnLstm && self.encoder_channels.is_empty() {
            return Err(TevError::Config("CNN+LSTM needs at least one encoder layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutput {
    pub logits: [f32; NUM_CLASSES],
    pub probabilities: [f32; NUM_CLASSES],
    pub predicted: EventClass,
}

impl ClassifierOutput {
    fn from_logits(logits: &[f32]) -> Self {
        let mut l = [0.0; NUM_CLASSES];
        l.copy_from_slice(logits);
        let mut p = l;
        tev_numerics::softmax_in_place(&mut p);
        let best = argmax(&l);
        ClassifierOutput {
            logits: l,
            probabilities: p,
            predicted: EventClass::from_index(best).expect("class index"),
        }
    }

    pub fn probability(&self, class: EventClass) -> f32 {
        self.probabilities[class.index()]
    }
}

pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Layer layout of one classifier variant.
#[derive(Debug, Clone)]
pub struct EventClassifier {
    config: ClassifierConfig,
    encoder: Vec<Conv2d>,
    lstm: Option<LstmCell>,
    conv_lstm: Option<ConvLstmCell>,
    fc1: Linear,
    fc2: Linear,
}

impl EventClassifier {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let frame_len = CHANNELS * config.rows * config.cols;
        let mut encoder = Vec::new();
        let (lstm, conv_lstm, features) = match config.variant {
            Variant::Lstm => (
                Some(LstmCell::new("lstm", frame_len, config.hidden)),
                None,
                config.hidden,
            ),
            Variant::ConvLstm => (
                None,
                Some(ConvLstmCell::new("convlstm", CHANNELS, config.hidden, config.kernel)),
                config.hidden * config.rows * config.cols,
            ),
            Variant::CnnLstm => {
                let (mut c, mut h, mut w) = (CHANNELS, config.rows, config.cols);
                for (i, &out) in config.encoder_channels.iter().enumerate() {
                    let conv = Conv2d::same(format!("enc{}", i + 1), c, out, config.kernel, 2);
                    (h, w) = conv.output_size(h, w)?;
                    c = out;
                    encoder.push(conv);
                }
                (
                    Some(LstmCell::new("lstm", c * h * w, config.hidden)),
                    None,
                    config.hidden,
                )
            }
        };
        Ok(EventClassifier {
            fc1: Linear::new("fc1", features, config.fc_hidden),
            fc2: Linear::new("fc2", config.fc_hidden, NUM_CLASSES),
            config,
            encoder,
            lstm,
            conv_lstm,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    /// Length of the vector handed to the first FC layer.
    pub fn feature_len(&self) -> usize {
        self.fc1.input
    }

    /// Length of the per-frame vector entering the LSTM, if there is one.
    pub fn lstm_input_len(&self) -> Option<usize> {
        self.lstm.as_ref().map(|l| l.input)
    }

    pub fn init(&self, seed: u64) -> ParamSet {
        let mut rng = seeded(seed);
        let mut params = ParamSet::new();
        for conv in &self.encoder {
            conv.init(&mut params, &mut rng);
        }
        if let Some(l) = &self.lstm {
            l.init(&mut params, &mut rng);
        }
        if let Some(c) = &self.conv_lstm {
            c.init(&mut params, &mut rng);
        }
        self.fc1.init(&mut params, &mut rng);
        self.fc2.init(&mut params, &mut rng);
        params
    }

    pub fn architecture(&self) -> serde_json::Value {
        serde_json::json!({ "model": "classifier", "config": self.config })
    }

    pub fn from_architecture(value: &serde_json::Value) -> Result<Self> {
        if value.get("model").and_then(|m| m.as_str()) != Some("classifier") {
            return Err(TevError::Config("checkpoint does not hold a classifier".into()));
        }
        let config: ClassifierConfig = serde_json::from_value(value["config"].clone())
            .map_err(|e| TevError::Config(format!("classifier descriptor: {e}")))?;
        Self::new(config)
    }

    /// The frames a sequence contributes: its first `n_in`.
    pub fn window<'s>(&self, seq: &'s TactileSequence) -> Result<&'s [DisplacementFrame]> {
        if seq.len() < self.config.n_in {
            return Err(TevError::Shape(format!(
                "sequence has {} frames, classifier needs {}",
                seq.len(),
                self.config.n_in
            )));
        }
        Ok(&seq.frames[..self.config.n_in])
    }

    fn check_windows(&self, windows: &[&[DisplacementFrame]]) -> Result<()> {
        if windows.is_empty() {
            return Err(TevError::Shape("empty batch".into()));
        }
        for w in windows {
            if w.len() != self.config.n_in {
                return Err(TevError::Shape(format!(
                    "window of {} frames, classifier needs {}",
                    w.len(),
                    self.config.n_in
                )));
            }
            for f in w.iter() {
                if f.rows() != self.config.rows || f.cols() != self.config.cols {
                    let expected = CHANNELS * self.config.rows * self.config.cols;
                    return Err(TevError::Shape(format!(
                        "frame flattens to {}, classifier expects {expected}",
                        f.as_slice().len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Frames stacked time-major: row `t·B + b` is frame `t` of window `b`.
    fn time_major(&self, windows: &[&[DisplacementFrame]]) -> Vec<f32> {
        let frame_len = CHANNELS * self.config.rows * self.config.cols;
        let mut data = Vec::with_capacity(windows.len() * self.config.n_in * frame_len);
        for t in 0..self.config.n_in {
            for w in windows {
                data.extend_from_slice(w[t].as_slice());
            }
        }
        data
    }

    /// Class logits `[B × 7]` for a batch of equally long windows.
    pub fn logits(
        &self,
        g: &mut Graph,
        p: &Bindings,
        windows: &[&[DisplacementFrame]],
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Var> {
        self.check_windows(windows)?;
        let b = windows.len();
        let t_len = self.config.n_in;
        let (rows, cols) = (self.config.rows, self.config.cols);
        let data = self.time_major(windows);
        let features = match self.config.variant {
            Variant::Lstm => {
                let lstm = self.lstm.as_ref().expect("lstm variant");
                let x = g.constant(Tensor::new([t_len * b, lstm.input], data)?);
                let proj = lstm.project_input(g, p, x)?;
                let mut state = lstm.zero_state(g, b);
                for t in 0..t_len {
                    let xt = g.narrow(proj, 0, t * b, b)?;
                    state = lstm.step_projected(g, p, xt, state)?;
                }
                state.h
            }
            Variant::CnnLstm => {
                let lstm = self.lstm.as_ref().expect("cnn-lstm variant");
                let mut x = g.constant(Tensor::new([t_len * b, CHANNELS, rows, cols], data)?);
                for conv in &self.encoder {
                    let y = conv.forward(g, p, x)?;
                    x = g.relu(y)?;
                }
                let flat = g.reshape(x, vec![t_len * b, lstm.input])?;
                let proj = lstm.project_input(g, p, flat)?;
                let mut state = lstm.zero_state(g, b);
                for t in 0..t_len {
                    let xt = g.narrow(proj, 0, t * b, b)?;
                    state = lstm.step_projected(g, p, xt, state)?;
                }
                state.h
            }
            Variant::ConvLstm => {
                let cell = self.conv_lstm.as_ref().expect("convlstm variant");
                let x = g.constant(Tensor::new([t_len * b, CHANNELS, rows, cols], data)?);
                let proj = cell.project_input(g, p, x)?;
                let mut state = cell.zero_state(g, b, rows, cols);
                for t in 0..t_len {
                    let xt = g.narrow(proj, 0, t * b, b)?;
                    state = cell.step_projected(g, p, xt, state)?;
                }
                g.reshape(state.h, vec![b, self.fc1.input])?
            }
        };
        let h = g.dropout(features, self.config.dropout, mode, rng)?;
        let h = self.fc1.forward(g, p, h)?;
        let h = g.relu(h)?;
        let h = g.dropout(h, self.config.dropout, mode, rng)?;
        Ok(self.fc2.forward(g, p, h)?)
    }

    /// Inference-mode outputs, one per window.
    pub fn predict_windows(
        &self,
        params: &ParamSet,
        windows: &[&[DisplacementFrame]],
    ) -> Result<Vec<ClassifierOutput>> {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let mut rng = seeded(0);
        let logits = self.logits(&mut g, &p, windows, Mode::Infer, &mut rng)?;
        Ok(g.value(logits)
            .data()
            .chunks_exact(NUM_CLASSES)
            .map(ClassifierOutput::from_logits)
            .collect())
    }

    pub fn classify(&self, params: &ParamSet, frames: &[DisplacementFrame]) -> Result<ClassifierOutput> {
        Ok(self.predict_windows(params, &[frames])?.remove(0))
    }

    pub fn classify_sequence(&self, params: &ParamSet, seq: &TactileSequence) -> Result<ClassifierOutput> {
        self.classify(params, self.window(seq)?)
    }
}

/// One control tick of [`StreamClassifier`].
#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub timestamp: f64,
    /// `None` until the window has filled.
    pub output: Option<ClassifierOutput>,
    /// No new frame arrived this tick; `output` repeats the previous one.
    pub stale: bool,
    pub latency: Duration,
}

/// Sliding-window classification of a raw frame stream. Each tick
/// classifies the newest frame together with every `stride`-th frame
/// before it.
pub struct StreamClassifier<'a> {
    classifier: &'a EventClassifier,
    params: &'a ParamSet,
    stride: usize,
    history: VecDeque<DisplacementFrame>,
    last: Option<ClassifierOutput>,
}

impl<'a> StreamClassifier<'a> {
    pub fn new(classifier: &'a EventClassifier, params: &'a ParamSet, stride: usize) -> Self {
        StreamClassifier {
            classifier,
            params,
            stride: stride.max(1),
            history: VecDeque::new(),
            last: None,
        }
    }

    fn capacity(&self) -> usize {
        self.stride * (self.classifier.config.n_in - 1) + 1
    }

    pub fn tick(&mut self, timestamp: f64, frame: Option<DisplacementFrame>) -> Result<StreamOutput> {
        let Some(frame) = frame else {
            return Ok(StreamOutput {
                timestamp,
                output: self.last.clone(),
                stale: true,
                latency: Duration::ZERO,
            });
        };
        if self.history.len() == self.capacity() {
            self.history.pop_front();
        }
        self.history.push_back(frame);
        if self.history.len() < self.capacity() {
            return Ok(StreamOutput {
                timestamp,
                output: None,
                stale: false,
                latency: Duration::ZERO,
            });
        }
        let start = Instant::now();
        let window: Vec<DisplacementFrame> = self.history.iter().step_by(self.stride).cloned().collect();
        let out = self.classifier.classify(self.params, &window)?;
        let latency = start.elapsed();
        self.last = Some(out.clone());
        Ok(StreamOutput {
            timestamp,
            output: Some(out),
            stale: false,
            latency,
        })
    }
}
