//! The kernel-weighted specification test statistic.
//!
//! For residuals `u` and covariates `x`, the centerpiece is the degenerate
//! second-order U-statistic
//!
//! ```text
//! I_hat = (n(n-1))^-1 sum_{i != j} u_i u_j K((x_i - x_j)/h)
//! ```
//!
//! studentized by `tau_hat = n * I_hat / sqrt(sigma_hat_sq)` with
//!
//! ```text
//! sigma_hat_sq = 2 (n(n-1))^-1 sum_{i != j} u_i^2 u_j^2 K((x_i - x_j)/h)^2.
//! ```
//!
//! Pair sums skip pairs that the compact kernel support forces to zero: rows
//! are sorted by the first coordinate and only windows with first-coordinate
//! gaps below `h` are visited. Accumulation is compensated (Kahan) within
//! fixed-size blocks of the sorted order and blocks are reduced in index
//! order, so results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::matrix::Matrix;
use crate::regress::{fit_nls, fit_ols, residuals, Model};

/// Sorted-order block length of the pair-sum reduction. Fixing it (rather
/// than deriving it from the thread count) is what makes results
/// bit-identical across thread pools.
const BLOCK: usize = 256;

/// Residuals whose largest magnitude falls below this level, relative to
/// the response scale, are treated as an exact fit; the variance estimate
/// is then zero and the test is degenerate.
const RESIDUAL_FLOOR_REL: f64 = 1e-10;

/// Compensated accumulator (Neumaier's variant of Kahan summation).
#[derive(Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline(always)]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline(always)]
    pub(crate) fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Pair sums underlying the statistic and its variance estimate:
/// over unordered pairs `i < j`, `sum_w = sum u_i u_j K_ij` and
/// `sum_w_sq = sum (u_i u_j K_ij)^2`.
struct PairSums {
    sum_w: f64,
    sum_w_sq: f64,
}

fn validate_pair_inputs(x: &Matrix, u: &[f64], h: f64) -> Result<()> {
    if x.rows() < 2 {
        return Err(Error::InvalidInput("pair statistics need n >= 2".into()));
    }
    if u.len() != x.rows() {
        return Err(Error::InvalidInput(format!(
            "residual length {} does not match {} rows",
            u.len(),
            x.rows()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput("bandwidth must be finite and positive".into()));
    }
    if x.data().iter().any(|v| !v.is_finite()) || u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite covariate or residual".into()));
    }
    Ok(())
}

fn pair_sums(x: &Matrix, u: &[f64], h: f64, kernel: KernelSpec) -> PairSums {
    let n = x.rows();
    let q = x.cols();
    // Deterministic sort by first coordinate (ties by index) makes the
    // window pruning below independent of input order details.
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        x.get(a as usize, 0).total_cmp(&x.get(b as usize, 0)).then(a.cmp(&b))
    });
    let mut xs = vec![0.0f64; n * q];
    let mut us = vec![0.0f64; n];
    for (pos, &i) in order.iter().enumerate() {
        xs[pos * q..(pos + 1) * q].copy_from_slice(x.row(i as usize));
        us[pos] = u[i as usize];
    }
    let inv_h = 1.0 / h;
    let nblocks = n.div_ceil(BLOCK);
    let block_sums: Vec<(f64, f64)> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(n);
            let mut acc_w = Kahan::default();
            let mut acc_sq = Kahan::default();
            let mut dx = [0.0f64; 16];
            let mut dx_heap;
            let dx: &mut [f64] = if q <= 16 {
                &mut dx[..q]
            } else {
                dx_heap = vec![0.0; q];
                &mut dx_heap
            };
            for a in lo..hi {
                let xa = &xs[a * q..(a + 1) * q];
                let ua = us[a];
                for b2 in (a + 1)..n {
                    let xb = &xs[b2 * q..(b2 + 1) * q];
                    // Sorted first coordinate: once the gap reaches h the
                    // kernel is zero here and for every later row.
                    if (xb[0] - xa[0]) * inv_h >= 1.0 {
                        break;
                    }
                    for (d, (va, vb)) in dx.iter_mut().zip(xa.iter().zip(xb)) {
                        *d = (va - vb) * inv_h;
                    }
                    let k = kernel.eval_product(dx);
                    if k == 0.0 {
                        continue;
                    }
                    let w = ua * us[b2] * k;
                    acc_w.add(w);
                    acc_sq.add(w * w);
                }
            }
            (acc_w.value(), acc_sq.value())
        })
        .collect();
    let mut total_w = Kahan::default();
    let mut total_sq = Kahan::default();
    for (w, sq) in block_sums {
        total_w.add(w);
        total_sq.add(sq);
    }
    PairSums { sum_w: total_w.value(), sum_w_sq: total_sq.value() }
}

/// The pair statistic `(n(n-1))^-1 sum_{i != j} u_i u_j K((x_i - x_j)/h)`
/// evaluated on known errors.
pub fn u_stat(x: &Matrix, u: &[f64], h: f64, kernel: KernelSpec) -> Result<f64> {
    validate_pair_inputs(x, u, h)?;
    let n = x.rows() as f64;
    Ok(2.0 * pair_sums(x, u, h, kernel).sum_w / (n * (n - 1.0)))
}

/// The same pair statistic evaluated on fitted residuals.
pub fn i_hat(x: &Matrix, u_hat: &[f64], h: f64, kernel: KernelSpec) -> Result<f64> {
    u_stat(x, u_hat, h, kernel)
}

/// Variance estimate
/// `2 (n(n-1))^-1 sum_{i != j} u_i^2 u_j^2 K((x_i - x_j)/h)^2`.
pub fn sigma_hat_sq(x: &Matrix, u_hat: &[f64], h: f64, kernel: KernelSpec) -> Result<f64> {
    validate_pair_inputs(x, u_hat, h)?;
    let n = x.rows() as f64;
    Ok(4.0 * pair_sums(x, u_hat, h, kernel).sum_w_sq / (n * (n - 1.0)))
}

/// Both pair statistics in one pass (used by the test runner and the
/// simulation harness, where the pair scan dominates the cost).
pub fn pair_statistics(
    x: &Matrix,
    u_hat: &[f64],
    h: f64,
    kernel: KernelSpec,
) -> Result<(f64, f64)> {
    validate_pair_inputs(x, u_hat, h)?;
    let n = x.rows() as f64;
    let sums = pair_sums(x, u_hat, h, kernel);
    Ok((2.0 * sums.sum_w / (n * (n - 1.0)), 4.0 * sums.sum_w_sq / (n * (n - 1.0))))
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub fn normal_cdf(t: f64) -> f64 {
    std_normal().cdf(t)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(Error::InvalidInput(format!("quantile level {p} outside (0, 1)")));
    }
    Ok(std_normal().inverse_cdf(p))
}

/// Studentizes the statistic and computes the one-sided upper-tail p-value.
///
/// Returns `(tau, p)` with `tau = n * i_hat / sqrt(sigma_hat_sq)` and
/// `p = 1 - Phi(tau)`. A zero (or negative) variance estimate means every
/// kernel-weighted residual pair vanished and the test is degenerate.
pub fn tau_hat(i_hat: f64, sigma_hat_sq: f64, n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidInput("test needs n >= 2".into()));
    }
    if !i_hat.is_finite() || !sigma_hat_sq.is_finite() {
        return Err(Error::InvalidInput("non-finite statistic inputs".into()));
    }
    if sigma_hat_sq <= 0.0 {
        return Err(Error::DegenerateStatistic(
            "variance estimate is zero: no kernel-weighted residual pairs".into(),
        ));
    }
    let tau = n as f64 * i_hat / sigma_hat_sq.sqrt();
    Ok((tau, 1.0 - normal_cdf(tau)))
}

/// Two-sided p-value for the studentized statistic.
pub fn p_value_two_sided(tau: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(tau.abs()))
}

/// Outcome of the specification test.
#[derive(Clone, Debug, Serialize)]
pub struct TestResult {
    pub n: usize,
    pub bandwidth: f64,
    pub kernel: KernelSpec,
    pub i_hat: f64,
    pub sigma_hat_sq: f64,
    pub tau_hat: f64,
    /// One-sided upper-tail p-value.
    pub p_value: f64,
}

/// Fits the model (OLS when linear in parameters, Gauss-Newton otherwise),
/// forms residuals, and runs the specification test.
///
/// Residuals that vanish to machine precision relative to the response
/// scale (an exact fit) give a zero variance estimate, reported as
/// [`Error::DegenerateStatistic`].
pub fn run_test(
    x: &Matrix,
    y: &[f64],
    model: &Model,
    h: f64,
    kernel: KernelSpec,
) -> Result<TestResult> {
    let beta = if model.is_linear() {
        fit_ols(model, x, y)?.beta
    } else {
        let init = vec![0.0; model.param_dim()];
        let fit = fit_nls(model, x, y, &init, 100, 1e-10)?;
        if !fit.converged {
            return Err(Error::EstimationFailed(format!(
                "nonlinear fit did not converge in {} iterations",
                fit.iterations
            )));
        }
        fit.beta
    };
    let mut u_hat = residuals(model, &beta, x, y)?;
    let y_scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let u_max = u_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if u_max <= RESIDUAL_FLOOR_REL * y_scale {
        u_hat.iter_mut().for_each(|v| *v = 0.0);
    }
    let (i_val, sigma_sq) = pair_statistics(x, &u_hat, h, kernel)?;
    let (tau, p) = tau_hat(i_val, sigma_sq, x.rows())?;
    Ok(TestResult {
        n: x.rows(),
        bandwidth: h,
        kernel,
        i_hat: i_val,
        sigma_hat_sq: sigma_sq,
        tau_hat: tau,
        p_value: p,
    })
}
