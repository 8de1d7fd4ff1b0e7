//! Displacement fields: marker tracking, interpolation onto the sensing grid,
//! sequence assembly and HSV rendering.

mod hsv;
mod tracking;

pub use hsv::{encode_hsv, hsv_to_rgb, RgbImage};
pub use tracking::{
    interpolate_field, track_markers, MarkerFlow, MarkerLayout, TrackConfig, DEFAULT_DISPLACEMENT_CAP_MM,
};

use serde::{Deserialize, Serialize};

use crate::dataset::EventClass;
use crate::error::{Result, TevError};

pub const GRID_ROWS: usize = 30;
pub const GRID_COLS: usize = 30;
pub const CHANNELS: usize = 2;
/// Length of a flattened default frame (2·30·30).
pub const FRAME_LEN: usize = CHANNELS * GRID_ROWS * GRID_COLS;

pub const SAMPLE_RATE_HZ: f64 = 30.0;
pub const WINDOW_S: f64 = 1.0;
pub const RESAMPLE_STRIDE: usize = 2;
/// Frames per resampled default window.
pub const SEQUENCE_LEN: usize = 15;

/// Placement of the `rows × cols` raster nodes on the sensing area. Nodes
/// span the area edge to edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: GRID_ROWS,
            cols: GRID_COLS,
            width_mm: 20.0,
            height_mm: 20.0,
        }
    }
}

impl GridSpec {
    /// Sensor-plane position `(x, y)` of node `(row, col)`.
    pub fn node(&self, row: usize, col: usize) -> [f64; 2] {
        let step = |extent: f64, n: usize| if n > 1 { extent / (n - 1) as f64 } else { 0.0 };
        [
            col as f64 * step(self.width_mm, self.cols),
            row as f64 * step(self.height_mm, self.rows),
        ]
    }

    pub fn center(&self) -> [f64; 2] {
        [self.width_mm / 2.0, self.height_mm / 2.0]
    }
}

/// One two-channel raster: channel 0 holds the X components, channel 1 the
/// Y components, each `rows × cols` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementFrame {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DisplacementFrame {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DisplacementFrame {
            rows,
            cols,
            data: vec![0.0; CHANNELS * rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> [f32; 2]) -> Self {
        let mut frame = Self::zeros(rows, cols);
        let plane = rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                let [dx, dy] = f(r, c);
                frame.data[r * cols + c] = dx;
                frame.data[plane + r * cols + c] = dy;
            }
        }
        frame
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != CHANNELS * rows * cols {
            return Err(TevError::Shape(format!(
                "{} values cannot form a {CHANNELS}x{rows}x{cols} frame",
                data.len()
            )));
        }
        Ok(DisplacementFrame { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dx(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn dy(&self, row: usize, col: usize) -> f32 {
        self.data[self.rows * self.cols + row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: [f32; 2]) {
        let plane = self.rows * self.cols;
        self.data[row * self.cols + col] = v[0];
        self.data[plane + row * self.cols + col] = v[1];
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.rows * self.cols;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Channel-major, row-major values.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn flatten(&self) -> Vec<f32> {
        self.data.clone()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn same_dims(&self, other: &DisplacementFrame) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// An ordered, uniformly spaced run of frames with its sampling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileSequence {
    pub frames: Vec<DisplacementFrame>,
    pub sample_rate_hz: f64,
    pub window_s: f64,
    pub stride: usize,
    pub label: Option<EventClass>,
}

impl TactileSequence {
    pub fn new(frames: Vec<DisplacementFrame>, label: Option<EventClass>) -> Self {
        TactileSequence {
            frames,
            sample_rate_hz: SAMPLE_RATE_HZ,
            window_s: WINDOW_S,
            stride: RESAMPLE_STRIDE,
            label,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Seconds between consecutive kept frames.
    pub fn frame_period(&self) -> f64 {
        self.stride as f64 / self.sample_rate_hz
    }

    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.frames.len()).map(|k| k as f64 * self.frame_period()).collect()
    }
}

/// Number of frames kept from a `sample_rate_hz · window_s` window at
/// `stride`.
pub fn resampled_len(sample_rate_hz: f64, window_s: f64, stride: usize) -> usize {
    if stride == 0 {
        return 0;
    }
    ((sample_rate_hz * window_s).round() as usize) / stride
}

/// Takes the newest `sample_rate_hz · window_s` frames of `stream` and keeps
/// every `stride`-th, oldest first.
pub fn assemble_sequence(
    stream: &[DisplacementFrame],
    sample_rate_hz: f64,
    window_s: f64,
    stride: usize,
) -> Result<TactileSequence> {
    if stride == 0 || sample_rate_hz <= 0.0 || window_s <= 0.0 {
        return Err(TevError::Config(format!(
            "invalid sampling f_s={sample_rate_hz} t_w={window_s} stride={stride}"
        )));
    }
    let window = (sample_rate_hz * window_s).round() as usize;
    if stream.len() < window {
        return Err(TevError::Config(format!(
            "stream holds {} frames, window needs {window}",
            stream.len()
        )));
    }
    let start = stream.len() - window;
    let kept = resampled_len(sample_rate_hz, window_s, stride);
    let frames = (0..kept).map(|k| stream[start + k * stride].clone()).collect();
    Ok(TactileSequence {
        frames,
        sample_rate_hz,
        window_s,
        stride,
        label: None,
    })
}

/// Single-writer ring of the newest raw frames that can emit a resampled
/// window at any time.
#[derive(Debug, Clone)]
pub struct StreamAssembler {
    sample_rate_hz: f64,
    window_s: f64,
    stride: usize,
    capacity: usize,
    frames: std::collections::VecDeque<DisplacementFrame>,
}

impl StreamAssembler {
    pub fn new(sample_rate_hz: f64, window_s: f64, stride: usize) -> Result<Self> {
        if stride == 0 || sample_rate_hz <= 0.0 || window_s <= 0.0 {
            return Err(TevError::Config(format!(
                "invalid sampling f_s={sample_rate_hz} t_w={window_s} stride={stride}"
            )));
        }
        let capacity = (sample_rate_hz * window_s).round() as usize;
        Ok(StreamAssembler {
            sample_rate_hz,
            window_s,
            stride,
            capacity,
            frames: std::collections::VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, frame: DisplacementFrame) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity
    }

    /// The current window, once enough frames have arrived.
    pub fn sequence(&self) -> Option<TactileSequence> {
        if !self.is_full() {
            return None;
        }
        let (a, b) = self.frames.as_slices();
        let all: Vec<DisplacementFrame> = a.iter().chain(b).cloned().collect();
        assemble_sequence(&all, self.sample_rate_hz, self.window_s, self.stride).ok()
    }
}
