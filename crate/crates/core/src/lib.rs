//! Empirical Bayes multiple testing in nonparametric hidden Markov models.
//!
//! The pipeline:
//!
//! 1. [`spectral`] estimates the emission densities in supremum norm from
//!    moment matrices of consecutive observation triples.
//! 2. [`recovery`] fits the transition matrix by profile likelihood and
//!    decides which estimated state is the null.
//! 3. [`smoothing`] computes the ℓ-values `P(theta_i = 0 | X)` by
//!    forward–backward recursions.
//! 4. [`testing`] thresholds the ℓ-values so that the posterior FDR stays
//!    below a user level `t`.
//!
//! [`harness`] runs Monte Carlo campaigns around this pipeline.

pub mod error;
pub mod harness;
pub mod hmm;
pub mod kernels;
mod linalg;
pub mod perturbation;
pub mod quadrature;
pub mod recovery;
pub mod rng;
pub mod smoothing;
pub mod spectral;
pub mod testing;

pub use error::{Error, Result};
pub use hmm::{
    density_at, marginal_density, simulate, stationary_distribution, EmissionModel, GridDensity,
    HmmParams, Measure, SampledPath, StationaryDist, TransitionMatrix,
};
pub use kernels::{build_kernel, choose_level, eval_kl, smooth, BandwidthLevel, Kernel};
