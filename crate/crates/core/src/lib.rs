//! Generator networks that report estimations as coded images.
//!
//! A network maps tabular features or an input image to an `N × N × 3`
//! canvas. Payload regions of the canvas carry the estimate as color,
//! intensity, size or pattern; everything else is a reserved uncertainty
//! (RU) region that every target paints black, so energy a trained network
//! leaks into it is a direct, per-image signal of uncertainty.
//!
//! - [`tensor`]: dense tensors, forward and transposed convolutions.
//! - [`nn`]: layer graphs, gradients, Adam, training, reference architectures.
//! - [`codecs`]: label → target image and image → label for each pipeline.
//! - [`uncertainty`]: RU energy, decode margin and boundary sharpness.
//! - [`data`]: CSV ingestion, preprocessing, splits, synthetic generators.
//! - [`cli`]: the `glyphnet` command-line front end.

pub mod cli;
pub mod codecs;
pub mod data;
pub mod error;
pub mod experiment;
mod kernels;
pub mod nn;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use experiment::{Experiment, RetinaType, Scale, Variant};
pub use tensor::{ConvSpec, Tensor};
