//! Monte Carlo and quadrature checks of the moment quantities that drive
//! the test's limit behavior.
//!
//! With `Z = (X, u)` and `H(Z_1, Z_2) = u_1 u_2 K((X_1 - X_2)/h)`, the module
//! estimates `E[H^2]`, `E[H^4]`, and `E[G^2]` for
//! `G(Z_1, Z_2) = E[H(Z_1, Z_3) H(Z_2, Z_3) | Z_1, Z_2]`, forms the
//! normality-condition ratio `(E[G^2] + E[H^4]/n) / E[H^2]^2`, verifies the
//! one-dimensional integration-by-parts identity
//! `int g dF = -int (F(t) - F(l)) g'(t) dt` by quadrature, and tracks the
//! absolutely-continuous limit `h^{-q} E[H^2] -> mu2^2 E[f_X] (int k^2)^q`.
//!
//! All Monte Carlo estimators draw every needed point up front from child
//! streams of the caller's seed, so estimates at different bandwidths share
//! draws: monotonicity comparisons are per-draw statements, not statistical
//! ones. Reductions run over fixed-size replication blocks with compensated
//! sums, folded in block order, so results do not depend on thread count.

use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::dist::{sample, Distribution, DistributionSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::regress::{gen_errors, Dgp};
use crate::rng::{child_seed, rng_from_seed};
use crate::stat::Kahan;

/// Fewest replications accepted by the Monte Carlo oracles.
pub const REPS_MIN: usize = 100;

/// Fewest quadrature panels accepted by the integration-by-parts check.
pub const GRID_MIN: usize = 8;

const REP_BLOCK: usize = 2048;

/// Runs `f` once per replication with a reusable scratch buffer,
/// accumulating `width` compensated sums in fixed-size blocks folded in
/// block order.
fn block_reduce<F>(reps: usize, width: usize, scratch_len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [Kahan], &mut [f64]) + Sync,
{
    let nblocks = reps.div_ceil(REP_BLOCK);
    let per_block: Vec<Vec<f64>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut accs = vec![Kahan::default(); width];
            let mut scratch = vec![0.0f64; scratch_len];
            for r in b * REP_BLOCK..((b + 1) * REP_BLOCK).min(reps) {
                f(r, &mut accs, &mut scratch);
            }
            accs.iter().map(|k| k.value()).collect()
        })
        .collect();
    let mut totals = vec![Kahan::default(); width];
    for block in per_block {
        for (t, v) in totals.iter_mut().zip(block) {
            t.add(v);
        }
    }
    totals.into_iter().map(|k| k.value()).collect()
}

fn kernel_product(kernel: KernelSpec, xa: &[f64], xb: &[f64], inv_h: f64, dx: &mut [f64]) -> f64 {
    for (d, (a, b)) in dx.iter_mut().zip(xa.iter().zip(xb)) {
        *d = (a - b) * inv_h;
    }
    kernel.eval_product(dx)
}

fn mean_and_se(sum: f64, sum_sq: f64, reps: usize) -> (f64, f64) {
    let mean = sum / reps as f64;
    let var = (sum_sq / reps as f64 - mean * mean).max(0.0);
    (mean, (var / reps as f64).sqrt())
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < REPS_MIN {
        return Err(Error::InvalidInput(format!(
            "need at least {REPS_MIN} replications, got {reps}"
        )));
    }
    Ok(())
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput("bandwidth must be finite and positive".into()));
    }
    Ok(())
}

/// Monte Carlo estimates of the pair moments `E[H^2]`, `E[H^4]` and the
/// projected moment `E[G^2]`, with standard errors.
#[derive(Clone, Copy, Debug)]
pub struct MomentEstimates {
    pub e_h2: f64,
    pub e_h4: f64,
    pub e_g2: f64,
    pub se_h2: f64,
    pub se_h4: f64,
    pub se_g2: f64,
    /// Total number of `(X, u)` draws consumed (four per replication).
    pub n_used: usize,
    pub reps: usize,
}

/// Estimates the pair moments at bandwidth `h` by averaging over independent
/// quadruples `(Z_1, Z_2, Z_3, Z_3')`.
///
/// `E[H^2]` and `E[H^4]` average `(u_1 u_2 K_12)^2` and its square over the
/// `(Z_1, Z_2)` pairs. `E[G^2]` averages
/// `H(Z_1, Z_3) H(Z_2, Z_3) H(Z_1, Z_3') H(Z_2, Z_3')`: the two independent
/// third draws make the product an unbiased estimate of the squared
/// conditional expectation.
///
/// The four quadruple components come from separately seeded streams:
/// chain-sampled laws (iterated function systems and mixtures containing
/// them) produce serially dependent rows within one draw, so slicing a
/// single draw into quadruples would correlate the components and bias every
/// joint moment upward. Serial dependence along each stream leaves the
/// estimates unbiased and only perturbs the independence-based standard
/// errors.
///
/// Draws are streamed in fixed-size replication blocks with per-block child
/// seeds, so memory stays bounded and calls sharing `seed` and `reps` but
/// differing in `h` are coupled draw for draw.
pub fn mc_moments(
    dgp: &Dgp,
    h: f64,
    kernel: KernelSpec,
    reps: usize,
    seed: u64,
) -> Result<MomentEstimates> {
    check_reps(reps)?;
    check_bandwidth(h)?;
    let q = dgp.dist().dim();
    let inv_h = 1.0 / h;
    let nblocks = reps.div_ceil(REP_BLOCK);
    let per_block: Vec<Result<[f64; 5]>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let len = ((b + 1) * REP_BLOCK).min(reps) - b * REP_BLOCK;
            let bs = child_seed(seed, b as u64);
            let (xs1, us1) = gen_errors(dgp, len, child_seed(bs, 0))?;
            let (xs2, us2) = gen_errors(dgp, len, child_seed(bs, 1))?;
            let (xs3, us3) = gen_errors(dgp, len, child_seed(bs, 2))?;
            let (xs3p, us3p) = gen_errors(dgp, len, child_seed(bs, 3))?;
            let mut accs = [Kahan::default(); 5];
            let mut dx = vec![0.0f64; q];
            for r in 0..len {
                let (x1, x2, x3, x3p) = (xs1.row(r), xs2.row(r), xs3.row(r), xs3p.row(r));
                let (u1, u2, u3, u3p) = (us1[r], us2[r], us3[r], us3p[r]);
                let k12 = kernel_product(kernel, x1, x2, inv_h, &mut dx);
                if k12 != 0.0 {
                    let s_h2 = (u1 * u2 * k12) * (u1 * u2 * k12);
                    // s_h2^2 is both the variance term for H^2 and the
                    // sample mean term for H^4.
                    accs[0].add(s_h2);
                    accs[1].add(s_h2 * s_h2);
                    accs[2].add((s_h2 * s_h2) * (s_h2 * s_h2));
                }
                let k13 = kernel_product(kernel, x1, x3, inv_h, &mut dx);
                let k23 = kernel_product(kernel, x2, x3, inv_h, &mut dx);
                if k13 != 0.0 && k23 != 0.0 {
                    let k13p = kernel_product(kernel, x1, x3p, inv_h, &mut dx);
                    let k23p = kernel_product(kernel, x2, x3p, inv_h, &mut dx);
                    if k13p != 0.0 && k23p != 0.0 {
                        let g = (u1 * u1) * (u2 * u2) * (u3 * u3) * (u3p * u3p)
                            * k13 * k23 * k13p * k23p;
                        accs[3].add(g);
                        accs[4].add(g * g);
                    }
                }
            }
            Ok([accs[0].value(), accs[1].value(), accs[2].value(), accs[3].value(), accs[4].value()])
        })
        .collect();
    let mut totals = [Kahan::default(); 5];
    for block in per_block {
        for (t, v) in totals.iter_mut().zip(block?) {
            t.add(v);
        }
    }
    let sums: Vec<f64> = totals.iter().map(|k| k.value()).collect();
    let (e_h2, se_h2) = mean_and_se(sums[0], sums[1], reps);
    let (e_h4, se_h4) = mean_and_se(sums[1], sums[2], reps);
    let (e_g2, se_g2) = mean_and_se(sums[3], sums[4], reps);
    Ok(MomentEstimates { e_h2, e_h4, e_g2, se_h2, se_h4, se_g2, n_used: 4 * reps, reps })
}

/// The asymptotic-normality condition ratio `(E[G^2] + E[H^4]/n) / E[H^2]^2`.
///
/// The test statistic is asymptotically standard normal along sequences
/// where this ratio tends to zero.
pub fn hall_ratio(est: &MomentEstimates, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    if est.e_h2 <= 0.0 {
        return Err(Error::DegenerateStatistic(
            "second pair moment estimate is zero".into(),
        ));
    }
    Ok((est.e_g2 + est.e_h4 / n as f64) / (est.e_h2 * est.e_h2))
}

/// A compactly supported, continuously differentiable bump
/// `g(t) = amplitude * k((t - center)/halfwidth)`.
#[derive(Clone, Copy, Debug)]
pub struct BumpSpec {
    pub kernel: KernelSpec,
    pub center: f64,
    pub halfwidth: f64,
    pub amplitude: f64,
}

impl BumpSpec {
    pub fn new(kernel: KernelSpec, center: f64, halfwidth: f64) -> Self {
        BumpSpec { kernel, center, halfwidth, amplitude: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.halfwidth.is_finite() && self.halfwidth > 0.0) {
            return Err(Error::InvalidInput("bump halfwidth must be finite and positive".into()));
        }
        if !self.center.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::InvalidInput("bump center and amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Interval outside which the bump vanishes identically.
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.halfwidth, self.center + self.halfwidth)
    }

    /// Exactly zero at and beyond the [`support`](Self::support) endpoints,
    /// even when `(t - center) / halfwidth` rounds to just inside the unit
    /// interval.
    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t <= lo || t >= hi {
            return 0.0;
        }
        self.amplitude * self.kernel.eval_1d((t - self.center) / self.halfwidth)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.halfwidth;
        if s.abs() > 1.0 {
            return 0.0;
        }
        let d = self.kernel.deriv_1d(s, 1).expect("first derivative inside support");
        self.amplitude * d / self.halfwidth
    }
}

/// One-dimensional measures with a closed-form CDF and density, the class
/// accepted by [`ibp_check_1d`].
enum Measure1d {
    Uniform { a: f64, b: f64 },
    Gauss(Normal),
}

impl Measure1d {
    fn from_spec(spec: &DistributionSpec) -> Result<Measure1d> {
        Distribution::new(spec.clone())?;
        match spec {
            DistributionSpec::UniformBox { lo, hi } if lo.len() == 1 => {
                Ok(Measure1d::Uniform { a: lo[0], b: hi[0] })
            }
            DistributionSpec::Gaussian { mean, cov } if mean.len() == 1 && cov[0][0] > 0.0 => {
                Ok(Measure1d::Gauss(Normal::new(mean[0], cov[0][0].sqrt()).expect("valid normal")))
            }
            _ => Err(Error::InvalidInput(
                "integration-by-parts check needs a one-dimensional uniform or \
                 nondegenerate Gaussian measure"
                    .into(),
            )),
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        match self {
            Measure1d::Uniform { a, b } => ((t - a) / (b - a)).clamp(0.0, 1.0),
            Measure1d::Gauss(n) => n.cdf(t),
        }
    }

    fn density(&self, t: f64) -> f64 {
        match self {
            Measure1d::Uniform { a, b } => {
                if t >= *a && t <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Measure1d::Gauss(n) => n.pdf(t),
        }
    }

    /// Points where the density jumps; quadrature panels split there.
    fn knots(&self) -> Vec<f64> {
        match self {
            Measure1d::Uniform { a, b } => vec![*a, *b],
            Measure1d::Gauss(_) => Vec::new(),
        }
    }
}

/// Two independent quadratures of the same integral.
#[derive(Clone, Copy, Debug)]
pub struct IbpReport {
    /// `int g dF`, composite midpoint rule on the density.
    pub lhs: f64,
    /// `-int (F(t) - F(l)) g'(t) dt`, composite trapezoid rule.
    pub rhs: f64,
    pub gap: f64,
}

/// Checks `int g dF = -int_l^r (F(t) - F(l)) g'(t) dt` over the bump's own
/// support interval.
pub fn ibp_check_1d(bump: &BumpSpec, measure: &DistributionSpec, grid: usize) -> Result<IbpReport> {
    ibp_check_1d_on(bump, measure, grid, bump.support())
}

/// [`ibp_check_1d`] over an explicit interval `(l, r)`; the identity requires
/// the bump to vanish at both endpoints.
pub fn ibp_check_1d_on(
    bump: &BumpSpec,
    measure: &DistributionSpec,
    grid: usize,
    interval: (f64, f64),
) -> Result<IbpReport> {
    bump.validate()?;
    if grid < GRID_MIN {
        return Err(Error::InvalidInput(format!("grid must be at least {GRID_MIN} panels")));
    }
    let (l, r) = interval;
    if !(l.is_finite() && r.is_finite() && l < r) {
        return Err(Error::InvalidInput("integration interval must be finite and ordered".into()));
    }
    if bump.eval(l) != 0.0 || bump.eval(r) != 0.0 {
        return Err(Error::InvalidInput(
            "bump does not vanish at the integration endpoints".into(),
        ));
    }
    let m = Measure1d::from_spec(measure)?;
    // g and g' vanish outside the bump support, so integrate over the
    // overlap; F(l) stays the reference point of the identity.
    let (s_lo, s_hi) = bump.support();
    let lo = l.max(s_lo);
    let hi = r.min(s_hi);
    if lo >= hi {
        return Ok(IbpReport { lhs: 0.0, rhs: 0.0, gap: 0.0 });
    }
    let mut cuts = vec![lo, hi];
    for k in m.knots() {
        if k > lo && k < hi {
            cuts.push(k);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let total_len = hi - lo;
    let f_l = m.cdf(l);
    let mut lhs_acc = Kahan::default();
    let mut rhs_acc = Kahan::default();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let panels = ((grid as f64 * (b - a) / total_len).ceil() as usize).max(GRID_MIN);
        let step = (b - a) / panels as f64;
        for j in 0..panels {
            let t = a + (j as f64 + 0.5) * step;
            lhs_acc.add(bump.eval(t) * m.density(t) * step);
        }
        let phi = |t: f64| (m.cdf(t) - f_l) * bump.deriv(t);
        rhs_acc.add(0.5 * step * phi(a));
        for j in 1..panels {
            rhs_acc.add(step * phi(a + j as f64 * step));
        }
        rhs_acc.add(0.5 * step * phi(b));
    }
    let lhs = lhs_acc.value();
    let rhs = -rhs_acc.value();
    Ok(IbpReport { lhs, rhs, gap: (lhs - rhs).abs() })
}

/// One bandwidth row of the absolutely-continuous limit check.
#[derive(Clone, Copy, Debug)]
pub struct AcLimitRow {
    pub h: f64,
    /// `h^{-q}` times the Monte Carlo estimate of `E[H^2]`.
    pub ratio: f64,
    pub se: f64,
    /// `mu2^2 * E[f_X] * (int k^2)^q` when `E[f_X]` has a closed form.
    pub target: Option<f64>,
}

/// Mean of the density under its own law, for laws where it is closed form.
fn mean_density(spec: &DistributionSpec) -> Option<f64> {
    match spec {
        DistributionSpec::UniformBox { lo, hi } => {
            let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
            Some(1.0 / vol)
        }
        DistributionSpec::Gaussian { mean, cov } => {
            let q = mean.len();
            let flat: Vec<f64> = cov.iter().flatten().copied().collect();
            let det = nalgebra::DMatrix::from_row_slice(q, q, &flat).determinant();
            if det <= 0.0 || !det.is_finite() {
                return None;
            }
            // int phi^2 = N(0; 0, 2 Sigma) = ((4 pi)^{q/2} sqrt(det))^{-1}.
            Some(1.0 / ((2.0 * std::f64::consts::PI.sqrt()).powi(q as i32) * det.sqrt()))
        }
        _ => None,
    }
}

/// Tracks `h^{-q} E[H^2]` along a decreasing bandwidth list against the
/// absolutely-continuous limit. Errors are homoscedastic with second moment
/// `mu2`; all rows share one set of draws.
pub fn ac_limit_check(
    density: &DistributionSpec,
    mu2: f64,
    kernel: KernelSpec,
    h_list: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<AcLimitRow>> {
    check_reps(reps)?;
    if !(mu2.is_finite() && mu2 >= 0.0) {
        return Err(Error::InvalidInput("mu2 must be finite and nonnegative".into()));
    }
    if h_list.is_empty() {
        return Err(Error::InvalidInput("bandwidth list is empty".into()));
    }
    for w in h_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidInput("bandwidth list must be strictly decreasing".into()));
        }
    }
    check_bandwidth(h_list[h_list.len() - 1])?;
    check_bandwidth(h_list[0])?;
    // Separate streams per pair component; see `mc_moments`.
    let xa = sample(density, reps, child_seed(seed, 0))?;
    let xb = sample(density, reps, child_seed(seed, 1))?;
    let q = xa.cols();
    let mut rng = rng_from_seed(child_seed(seed, 2));
    let root_mu2 = mu2.sqrt();
    let u: Vec<f64> = (0..2 * reps)
        .map(|_| root_mu2 * rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
        .collect();
    let target_const = mean_density(density).map(|ef| {
        mu2 * mu2 * ef * kernel.l2_integral_1d().powi(q as i32)
    });
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let inv_h = 1.0 / h;
        let sums = block_reduce(reps, 2, q, |r, accs, dx| {
            let k = kernel_product(kernel, xa.row(r), xb.row(r), inv_h, dx);
            if k != 0.0 {
                let s = (u[2 * r] * u[2 * r + 1] * k) * (u[2 * r] * u[2 * r + 1] * k);
                accs[0].add(s);
                accs[1].add(s * s);
            }
        });
        let (mean, se) = mean_and_se(sums[0], sums[1], reps);
        let scale = h.powi(q as i32).recip();
        rows.push(AcLimitRow { h, ratio: mean * scale, se: se * scale, target: target_const });
    }
    Ok(rows)
}

/// Coupled Monte Carlo estimates for the small-ball envelope of `E[H^2]`:
/// `lower <= e_h2 <= upper` up to Monte Carlo noise, where the envelope
/// constants use the pooled error second moment and the kernel's extreme
/// values on the ball.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeReport {
    pub e_h2: f64,
    pub se_h2: f64,
    /// Pooled estimate of `E[u^2]`.
    pub mu2_hat: f64,
    /// Pair-proximity frequency at sup-norm radius `h`.
    pub r_h: f64,
    pub se_r_h: f64,
    /// Pair-proximity frequency at radius `eps * h`.
    pub r_eps_h: f64,
    pub se_r_eps_h: f64,
    /// `mu2_hat^2 * k(0)^{2q} * r_h`.
    pub upper: f64,
    /// `mu2_hat^2 * k(eps)^{2q} * r_eps_h`.
    pub lower: f64,
}

/// Estimates `E[H^2]` and its small-ball envelope from one set of pair draws.
///
/// The kernel vanishes outside the unit ball and decreases from `k(0)`, so
/// pointwise `mu2^2 k(eps)^{2q} 1{d <= eps h} <= E[H^2 | X] <= mu2^2 k(0)^{2q}
/// 1{d < h}` for homoscedastic errors; the envelope requires `noise_scale`
/// to be absent.
pub fn envelope_check(
    dgp: &Dgp,
    kernel: KernelSpec,
    h: f64,
    eps: f64,
    reps: usize,
    seed: u64,
) -> Result<EnvelopeReport> {
    check_reps(reps)?;
    check_bandwidth(h)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput("eps must lie in (0, 1)".into()));
    }
    if dgp.spec().noise_scale.is_some() {
        return Err(Error::InvalidInput(
            "envelope constants assume homoscedastic errors".into(),
        ));
    }
    // Separate streams per pair component; see `mc_moments`.
    let (x_a, u_a) = gen_errors(dgp, reps, child_seed(seed, 0))?;
    let (x_b, u_b) = gen_errors(dgp, reps, child_seed(seed, 1))?;
    let q = x_a.cols();
    let inv_h = 1.0 / h;
    let sums = block_reduce(reps, 4, q, |r, accs, dx| {
        let (xa, xb) = (x_a.row(r), x_b.row(r));
        let d = xa.iter().zip(xb).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        let k = kernel_product(kernel, xa, xb, inv_h, dx);
        if k != 0.0 {
            let s = (u_a[r] * u_b[r] * k) * (u_a[r] * u_b[r] * k);
            accs[0].add(s);
            accs[1].add(s * s);
        }
        if d <= h {
            accs[2].add(1.0);
        }
        if d <= eps * h {
            accs[3].add(1.0);
        }
    });
    let (e_h2, se_h2) = mean_and_se(sums[0], sums[1], reps);
    let r_h = sums[2] / reps as f64;
    let r_eps_h = sums[3] / reps as f64;
    let binom_se = |p: f64| (p * (1.0 - p) / reps as f64).sqrt();
    let mut mu2_acc = Kahan::default();
    for v in u_a.iter().chain(&u_b) {
        mu2_acc.add(v * v);
    }
    let mu2_hat = mu2_acc.value() / (2 * reps) as f64;
    let two_q = 2 * q as i32;
    Ok(EnvelopeReport {
        e_h2,
        se_h2,
        mu2_hat,
        r_h,
        se_r_h: binom_se(r_h),
        r_eps_h,
        se_r_eps_h: binom_se(r_eps_h),
        upper: mu2_hat * mu2_hat * kernel.at_zero().powi(two_q) * r_h,
        lower: mu2_hat * mu2_hat * kernel.eval_1d(eps).powi(two_q) * r_eps_h,
    })
}
