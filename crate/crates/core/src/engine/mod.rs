//! The quantized mask network and the streaming enhancement pipeline.

pub mod activation;
pub mod model;
pub mod network;
pub mod stream;

pub use activation::ActivationTables;
pub use model::{Activation, DenseLayer, Gate, LayerId, LstmLayer, ModelDims, SeModel};
pub use network::{lstm_step, NetworkState};
pub use stream::{enhance, ops_per_frame, Enhancer, EnhancerState, FrameOps};
