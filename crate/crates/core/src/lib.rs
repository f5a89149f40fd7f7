//! Kernel-weighted specification testing for parametric regression models.
//!
//! The library is organized around a U-statistic test of a parametric
//! conditional-mean specification. Pairs of residuals are weighted by a
//! compactly supported product kernel evaluated at scaled covariate
//! differences; the studentized statistic is compared against one-sided
//! normal critical values. The covariate law may be absolutely continuous,
//! singular (fractal supports, rank-deficient Gaussians, atoms), or any
//! mixture of these.
//!
//! Modules:
//!
//! - [`kernel`]: Epanechnikov and quartic kernels, product form, derivatives.
//! - [`dist`]: covariate distribution specs, samplers (including chaos-game
//!   iterated function systems), small-ball probability curves and
//!   singularity-exponent estimation.
//! - [`regress`]: regression model specs, data generation with optional
//!   drift terms, OLS and Gauss-Newton fitting, local-alternative rates.
//! - [`stat`]: the pairwise test statistic, its variance estimate, the
//!   studentized statistic, and the end-to-end test runner.
//! - [`oracle`]: Monte Carlo moment estimators, a degeneracy diagnostic
//!   ratio, an integration-by-parts identity checker, and a small-bandwidth
//!   limit check for the second moment.
//! - [`harness`]: batch experiment driver (size, power, null-distribution
//!   and small-ball profiles) with deterministic seeding and CSV outputs.

pub mod dist;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod matrix;
pub mod oracle;
pub mod regress;
pub mod rng;
pub mod stat;

pub use error::{Error, Result};
pub use matrix::Matrix;
