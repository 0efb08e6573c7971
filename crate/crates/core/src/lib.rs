//! Continuous implicit representation of human motion.
//!
//! A hierarchy of per-scale clip encoders feeds Fourier-activated MLPs whose
//! latents are fused top-down by cross-scale attention and decoded together
//! with a query time `t`. Once trained on fixed-rate data the model can be
//! queried at any temporal coordinate, which gives interpolation at arbitrary
//! (including non-integer) frame-rate scales, inbetweening and extrapolation.
//!
//! Modules:
//! - [`tensor`], [`graph`], [`params`]: dense arrays, reverse-mode
//!   differentiation and the parameter container.
//! - [`motion`]: sequences, BVH, skeletons and forward kinematics.
//! - [`model`]: activations, MLPs, attention and the full network.
//! - [`training`]: losses, batch sampling, Adam and the training loop.
//! - [`metrics`]: PSNR, SSIM, L2P, L2Q, NPSS and report tables.
//! - [`tasks`]: interpolation, inbetweening, extrapolation and evaluation.

pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod params;
pub mod tasks;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Gradients, Graph, NodeId};
pub use metrics::MetricReport;
pub use model::{ArchConfig, Model};
pub use motion::{FeatureLayout, MotionSequence, Skeleton};
pub use params::ParamStore;
pub use tensor::Tensor;
pub use training::{LossConfig, TrainConfig, TrainState};
