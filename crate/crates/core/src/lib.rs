//! Compositional image degradation toolkit.
//!
//! Simulates a blur, additive white Gaussian noise and JPEG chain, and trains
//! two small dilated-convolution networks: one estimating per-pixel
//! degradation strengths and one restoring images conditioned on those
//! strengths.

pub mod attributes;
pub mod degrade;
pub mod error;
pub mod eval;
pub mod image;
pub mod network;
pub mod optim;
pub mod synth;
pub mod tensor;
pub mod training;

pub use crate::attributes::{AttributeMap, AttributeTriple};
pub use crate::degrade::{degrade, DegradationSpec, Seed};
pub use crate::error::{Error, Result};
pub use crate::image::Image;
pub use crate::network::{ArchitectureSpec, NetworkKind, NetworkWeights};
pub use crate::tensor::{ConvLayer, Shape, Tensor};
