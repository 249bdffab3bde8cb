//! Layer graphs, reverse-mode gradients, Adam, MAE loss and training.

pub mod checkpoint;
pub mod experiments;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod optim;
pub mod spec;
pub mod train;

pub use checkpoint::Checkpoint;
pub use experiments::{build_experiment, published_param_count};
pub use loss::{mae_grad, mae_loss};
pub use network::{Gradients, Mode, Network, Trace};
pub use optim::Adam;
pub use spec::{ActivationKind, LayerKind, LayerSpec, NetworkBuilder, NetworkSpec};
pub use train::{train, Samples, StopReason, TrainConfig, TrainHistory, Trained};
