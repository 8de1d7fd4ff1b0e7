//! Dense 32-bit tensors, tape-based reverse-mode differentiation, the layer
//! primitives used by the tactile networks, and the Adam optimiser.

pub mod adam;
pub mod binio;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod params;
pub mod rng;
mod tensor;

pub use adam::{Adam, AdamConfig, LrSchedule};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::{NumericsError, Result};
pub use graph::{softmax_in_place, Graph, Mode, Var};
pub use kernels::{ConvGeometry, Padding};
pub use layers::{CellState, Conv2d, ConvLstmCell, Linear, LstmCell};
pub use params::{Bindings, Gradients, ParamSet};
pub use rng::{derive_seed, seeded, SeededRng};
pub use tensor::Tensor;
