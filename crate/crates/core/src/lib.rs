//! Energy-based models trained with Stein variational gradient descent.
//!
//! The crate provides SVGD particle updates, contrastive-divergence style
//! learners that use SVGD or Langevin dynamics to produce negative samples,
//! Stein score matching, amortized SVGD for training an MLP sampler
//! (SteinGAN), and exact evaluation on Gaussian-Bernoulli RBMs.

pub mod checkpoint;
pub mod data_io;
pub mod energy;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod kernels;
pub mod learners;
pub mod numerics;
pub mod samplers;
pub mod steingan;
pub mod svgd;

pub use checkpoint::{Checkpoint, ModelSpec};
pub use energy::{DiagGaussian, DiagGaussianParams, EnergyModel, GaussianMixtureEnergy, GbRbm, GbRbmParams};
pub use error::{Error, Result};
pub use kernels::KernelSpec;
pub use learners::{FiniteDifference, OptimizerKind, TrainConfig};
pub use numerics::{Layout, ParamVector, ParticleBatch, RngStream};
pub use steingan::{Method, TrainState};
