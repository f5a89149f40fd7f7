//! Regression models, data-generating processes, and fitting.
//!
//! Models are either linear in parameters (a list of named basis functions)
//! or drawn from a small catalog of nonlinear mean functions with analytic
//! parameter gradients. Data generation adds an optional scaled drift term
//! to the null mean, so the same machinery produces null, fixed-alternative,
//! and local-alternative samples.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, DistributionSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{child_seed, rng_from_seed};

/// Condition-number estimate above which OLS flags the design as
/// ill-conditioned (without failing).
pub const COND_WARN_THRESHOLD: f64 = 1e8;

/// Ratio of the largest to a given QR diagonal below which the associated
/// column is treated as linearly dependent.
const RANK_TOL: f64 = 1e-12;

/// Serializable model description.
///
/// Exactly one of `basis` (linear-in-parameters model) or `nonlinear`
/// (catalog name) must be given. Basis names are `"constant"`, coordinates
/// `"x1"`, `"x2"`, ..., or a registered smooth function name.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub basis: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<String>,
}

impl ModelSpec {
    pub fn linear(names: &[&str]) -> Self {
        ModelSpec { basis: names.iter().map(|s| s.to_string()).collect(), nonlinear: None }
    }

    pub fn nonlinear(name: &str) -> Self {
        ModelSpec { basis: Vec::new(), nonlinear: Some(name.to_string()) }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}

/// Registered smooth basis functions usable inside linear models.
struct BasisEntry {
    name: &'static str,
    min_dim: usize,
    f: fn(&[f64]) -> f64,
}

static BASIS_REGISTRY: &[BasisEntry] = &[
    BasisEntry { name: "sq_x1", min_dim: 1, f: |x| x[0] * x[0] },
    BasisEntry { name: "sin_2pi_x1", min_dim: 1, f: |x| (TAU * x[0]).sin() },
    BasisEntry { name: "exp_x1", min_dim: 1, f: |x| x[0].exp() },
];

/// Catalog of nonlinear mean functions with analytic gradients.
struct NonlinearEntry {
    name: &'static str,
    param_dim: usize,
    min_dim: usize,
    eval: fn(&[f64], &[f64]) -> f64,
    grad: fn(&[f64], &[f64], &mut [f64]),
}

static NONLINEAR_REGISTRY: &[NonlinearEntry] = &[NonlinearEntry {
    name: "exp_scalar",
    param_dim: 1,
    min_dim: 1,
    eval: |x, b| (b[0] * x[0]).exp(),
    grad: |x, b, out| out[0] = x[0] * (b[0] * x[0]).exp(),
}];

#[derive(Clone, Copy)]
enum Basis {
    Constant,
    Coordinate(usize),
    Registered(&'static BasisEntry),
}

impl Basis {
    fn eval(self, x: &[f64]) -> f64 {
        match self {
            Basis::Constant => 1.0,
            Basis::Coordinate(j) => x[j],
            Basis::Registered(e) => (e.f)(x),
        }
    }
}

enum ModelKind {
    Linear(Vec<Basis>),
    Nonlinear(&'static NonlinearEntry),
}

/// A validated, evaluatable regression model.
pub struct Model {
    spec: ModelSpec,
    kind: ModelKind,
    min_dim: usize,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        match (&spec.basis.is_empty(), &spec.nonlinear) {
            (false, None) => {
                let mut basis = Vec::with_capacity(spec.basis.len());
                let mut min_dim = 0usize;
                for name in &spec.basis {
                    let b = parse_basis(name)?;
                    min_dim = min_dim.max(match b {
                        Basis::Constant => 0,
                        Basis::Coordinate(j) => j + 1,
                        Basis::Registered(e) => e.min_dim,
                    });
                    basis.push(b);
                }
                Ok(Model { spec, kind: ModelKind::Linear(basis), min_dim })
            }
            (true, Some(name)) => {
                let entry = NONLINEAR_REGISTRY
                    .iter()
                    .find(|e| e.name == name)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown nonlinear model {name:?}")))?;
                Ok(Model { spec, kind: ModelKind::Nonlinear(entry), min_dim: entry.min_dim })
            }
            _ => Err(Error::InvalidConfig(
                "model must set exactly one of `basis` or `nonlinear`".into(),
            )),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Number of parameters.
    pub fn param_dim(&self) -> usize {
        match &self.kind {
            ModelKind::Linear(basis) => basis.len(),
            ModelKind::Nonlinear(e) => e.param_dim,
        }
    }

    /// Smallest covariate dimension the model can be evaluated on.
    pub fn min_input_dim(&self) -> usize {
        self.min_dim
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, ModelKind::Linear(_))
    }

    /// Mean function `g(x, beta)`.
    pub fn eval(&self, x: &[f64], beta: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Linear(basis) => {
                basis.iter().zip(beta).map(|(b, coef)| coef * b.eval(x)).sum()
            }
            ModelKind::Nonlinear(e) => (e.eval)(x, beta),
        }
    }

    /// Parameter gradient of the mean function, written into `out`.
    pub fn grad(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Linear(basis) => {
                for (o, b) in out.iter_mut().zip(basis) {
                    *o = b.eval(x);
                }
            }
            ModelKind::Nonlinear(e) => (e.grad)(x, beta, out),
        }
    }

    /// Full design matrix of a linear model.
    pub fn design(&self, x: &Matrix) -> Result<Matrix> {
        let ModelKind::Linear(basis) = &self.kind else {
            return Err(Error::InvalidInput("design matrix requires a linear model".into()));
        };
        self.check_input(x)?;
        let mut d = Matrix::zeros(x.rows(), basis.len());
        for i in 0..x.rows() {
            let xi = x.row(i);
            let row = d.row_mut(i);
            for (j, b) in basis.iter().enumerate() {
                row[j] = b.eval(xi);
            }
        }
        Ok(d)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() < self.min_dim {
            return Err(Error::InvalidInput(format!(
                "model needs covariate dimension >= {}, data has {}",
                self.min_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.param_dim() {
            return Err(Error::InvalidInput(format!(
                "parameter length {} does not match model dimension {}",
                beta.len(),
                self.param_dim()
            )));
        }
        Ok(())
    }
}

fn parse_basis(name: &str) -> Result<Basis> {
    if name == "constant" {
        return Ok(Basis::Constant);
    }
    if let Some(rest) = name.strip_prefix('x') {
        if let Ok(k) = rest.parse::<usize>() {
            if k >= 1 {
                return Ok(Basis::Coordinate(k - 1));
            }
            return Err(Error::InvalidConfig("coordinates are 1-based: x1, x2, ...".into()));
        }
    }
    if let Some(entry) = BASIS_REGISTRY.iter().find(|e| e.name == name) {
        return Ok(Basis::Registered(entry));
    }
    Err(Error::InvalidConfig(format!("unknown basis function {name:?}")))
}

/// Names of all registered (non-constant, non-coordinate) basis functions.
pub fn registered_basis_names() -> Vec<&'static str> {
    BASIS_REGISTRY.iter().map(|e| e.name).collect()
}

/// Names of all catalog nonlinear models.
pub fn registered_nonlinear_names() -> Vec<&'static str> {
    NONLINEAR_REGISTRY.iter().map(|e| e.name).collect()
}

/// Drift functions for alternatives, registered by name.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Drift {
    /// `sin(2 pi x_1) sin(2 pi x_2)`
    SineProd,
    /// `cos(2 pi x_1) cos(2 pi x_2)`
    CosineProd,
    /// `1{ lo <= x_1 <= hi }`: a drift supported on a band of the first
    /// coordinate, for support-restricted alternatives.
    IndicatorBand { lo: f64, hi: f64 },
}

impl Drift {
    pub fn resolve(name: &str, band: Option<[f64; 2]>) -> Result<Drift> {
        let drift = match name {
            "sine_prod" => Drift::SineProd,
            "cosine_prod" => Drift::CosineProd,
            "indicator_band" => {
                let [lo, hi] = band.ok_or_else(|| {
                    Error::InvalidConfig("indicator_band drift requires `drift_band = [lo, hi]`".into())
                })?;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidConfig("drift_band must satisfy lo < hi".into()));
                }
                return Ok(Drift::IndicatorBand { lo, hi });
            }
            other => {
                return Err(Error::InvalidConfig(format!("unknown drift function {other:?}")))
            }
        };
        if band.is_some() {
            return Err(Error::InvalidConfig(format!(
                "drift {name:?} does not take a drift_band"
            )));
        }
        Ok(drift)
    }

    pub fn min_input_dim(self) -> usize {
        match self {
            Drift::SineProd | Drift::CosineProd => 2,
            Drift::IndicatorBand { .. } => 1,
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Drift::SineProd => (TAU * x[0]).sin() * (TAU * x[1]).sin(),
            Drift::CosineProd => (TAU * x[0]).cos() * (TAU * x[1]).cos(),
            Drift::IndicatorBand { lo, hi } => {
                if x[0] >= lo && x[0] <= hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Multiplicative error-scale hooks for heteroscedastic designs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseScale {
    /// Error standard deviation multiplier `1 + |x_1|`.
    OnePlusAbsX1,
}

impl NoiseScale {
    pub fn resolve(name: &str) -> Result<NoiseScale> {
        match name {
            "one_plus_abs_x1" => Ok(NoiseScale::OnePlusAbsX1),
            other => Err(Error::InvalidConfig(format!("unknown noise scale {other:?}"))),
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            NoiseScale::OnePlusAbsX1 => 1.0 + x[0].abs(),
        }
    }
}

fn default_sigma() -> f64 {
    1.0
}

/// Serializable data-generating process description.
///
/// `Y = g(X, beta0) + gamma * drift(X) + error_sigma * scale(X) * Z` with
/// `X ~ x_dist` and `Z` standard normal. A nonzero `gamma` requires a drift;
/// a drift with `gamma = 0` degenerates to the null.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub x_dist: DistributionSpec,
    pub beta0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_band: Option<[f64; 2]>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_sigma")]
    pub error_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<String>,
}

/// A validated data-generating process.
pub struct Dgp {
    spec: DgpSpec,
    dist: Distribution,
    drift: Option<Drift>,
    noise: Option<NoiseScale>,
}

impl Dgp {
    pub fn new(spec: DgpSpec) -> Result<Self> {
        if spec.beta0.is_empty() || spec.beta0.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("beta0 must be nonempty and finite".into()));
        }
        if !spec.error_sigma.is_finite() || spec.error_sigma < 0.0 {
            return Err(Error::InvalidConfig("error_sigma must be finite and >= 0".into()));
        }
        if !spec.gamma.is_finite() {
            return Err(Error::InvalidConfig("gamma must be finite".into()));
        }
        let dist = Distribution::new(spec.x_dist.clone())?;
        let drift = match &spec.drift {
            Some(name) => Some(Drift::resolve(name, spec.drift_band)?),
            None => {
                if spec.gamma != 0.0 {
                    return Err(Error::InvalidConfig(
                        "gamma != 0 requires a drift function".into(),
                    ));
                }
                if spec.drift_band.is_some() {
                    return Err(Error::InvalidConfig("drift_band given without a drift".into()));
                }
                None
            }
        };
        if let Some(d) = drift {
            if dist.dim() < d.min_input_dim() {
                return Err(Error::InvalidConfig(format!(
                    "drift needs covariate dimension >= {}, x_dist has {}",
                    d.min_input_dim(),
                    dist.dim()
                )));
            }
        }
        let noise = match &spec.noise_scale {
            Some(name) => Some(NoiseScale::resolve(name)?),
            None => None,
        };
        Ok(Dgp { spec, dist, drift, noise })
    }

    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    pub fn dist(&self) -> &Distribution {
        &self.dist
    }

    pub fn drift(&self) -> Option<Drift> {
        self.drift
    }

    /// Conditional mean `E[Y | X = x]` under this process for `model`.
    pub fn conditional_mean(&self, model: &Model, x: &[f64]) -> Result<f64> {
        model.check_beta(&self.spec.beta0)?;
        let mut y = model.eval(x, &self.spec.beta0);
        if let Some(d) = self.drift {
            y += self.spec.gamma * d.eval(x);
        }
        Ok(y)
    }

    /// Returns a copy with a different drift coefficient (validating the
    /// gamma/drift pairing).
    pub fn with_gamma(&self, gamma: f64) -> Result<Dgp> {
        let mut spec = self.spec.clone();
        spec.gamma = gamma;
        Dgp::new(spec)
    }
}

/// Draws covariates and raw error terms of size `n` (no regression mean).
///
/// Covariates come from child stream 0 of `seed` and errors from child
/// stream 1, the same layout as [`gen_dgp`], so the two agree draw for draw
/// and the same seed yields the same covariates whether or not a drift is
/// present.
pub fn gen_errors(dgp: &Dgp, n: usize, seed: u64) -> Result<(Matrix, Vec<f64>)> {
    let x = dgp.dist.sample(n, child_seed(seed, 0))?;
    let mut rng = rng_from_seed(child_seed(seed, 1));
    let sigma = dgp.spec.error_sigma;
    let mut u = vec![0.0; n];
    if sigma > 0.0 {
        for (i, ui) in u.iter_mut().enumerate() {
            let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
            let scale = dgp.noise.map_or(1.0, |s| s.eval(x.row(i)));
            *ui = sigma * scale * z;
        }
    }
    Ok((x, u))
}

/// Draws `(X, Y)` of size `n`.
///
/// `Y` adds the conditional mean (regression function plus any drift) to the
/// error draws of [`gen_errors`].
pub fn gen_dgp(dgp: &Dgp, model: &Model, n: usize, seed: u64) -> Result<(Matrix, Vec<f64>)> {
    model.check_beta(&dgp.spec.beta0)?;
    let (x, u) = gen_errors(dgp, n, seed)?;
    model.check_input(&x)?;
    let mut y = u;
    for (i, yi) in y.iter_mut().enumerate() {
        let xi = x.row(i);
        let mut m = model.eval(xi, &dgp.spec.beta0);
        if let Some(d) = dgp.drift {
            m += dgp.spec.gamma * d.eval(xi);
        }
        *yi += m;
    }
    Ok((x, y))
}

/// OLS fit of a linear-in-parameters model.
#[derive(Clone, Debug)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    /// True when the condition estimate exceeds [`COND_WARN_THRESHOLD`].
    pub cond_warning: bool,
    /// Ratio of largest to smallest QR diagonal magnitude.
    pub condition_estimate: f64,
}

/// Fits a linear model by QR decomposition (never normal equations).
///
/// Numerically dependent columns produce [`Error::RankDeficientDesign`]
/// naming the offending design columns; a condition estimate above 1e8 sets
/// `cond_warning` without failing.
pub fn fit_ols(model: &Model, x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    let design = model.design(x)?;
    fit_ols_design(&design, y)
}

/// OLS on an explicit design matrix; see [`fit_ols`].
pub fn fit_ols_design(design: &Matrix, y: &[f64]) -> Result<OlsFit> {
    let (n, p) = (design.rows(), design.cols());
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "response length {} does not match {} design rows",
            y.len(),
            n
        )));
    }
    if n < p {
        return Err(Error::InvalidInput(format!("need at least {p} rows, got {n}")));
    }
    let a = DMatrix::from_row_slice(n, p, design.data());
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|k| r[(k, k)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dependent: Vec<usize> =
        (0..p).filter(|&k| diag[k] <= RANK_TOL * dmax).collect();
    if dmax == 0.0 || !dependent.is_empty() {
        return Err(Error::RankDeficientDesign { columns: dependent });
    }
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_estimate = dmax / dmin;
    let mut rhs = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut rhs);
    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut acc = rhs[k];
        for j in (k + 1)..p {
            acc -= r[(k, j)] * beta[j];
        }
        beta[k] = acc / r[(k, k)];
    }
    Ok(OlsFit { beta, cond_warning: condition_estimate > COND_WARN_THRESHOLD, condition_estimate })
}

/// Gauss-Newton fit result. Non-convergence within the iteration budget is
/// flagged, not silently returned.
#[derive(Clone, Debug)]
pub struct NlsFit {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub ssr: f64,
}

/// Maximum number of step halvings per Gauss-Newton iteration.
pub const NLS_MAX_HALVINGS: usize = 20;

/// Fits a (possibly nonlinear) model by Gauss-Newton with step halving.
///
/// Each iteration solves the linearized least-squares step by QR and halves
/// the step until the sum of squared residuals decreases (at most
/// [`NLS_MAX_HALVINGS`] times). Convergence means the relative SSR
/// improvement fell below `tol` (or the SSR hit the noiseless floor).
pub fn fit_nls(
    model: &Model,
    x: &Matrix,
    y: &[f64],
    beta_init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<NlsFit> {
    model.check_beta(beta_init)?;
    model.check_input(x)?;
    let (n, p) = (x.rows(), model.param_dim());
    if y.len() != n {
        return Err(Error::InvalidInput("response length does not match data rows".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidInput("tol must be finite and positive".into()));
    }
    let ssr_of = |beta: &[f64]| -> f64 {
        (0..n).map(|i| {
            let e = y[i] - model.eval(x.row(i), beta);
            e * e
        }).sum()
    };
    let mut beta = beta_init.to_vec();
    let mut ssr = ssr_of(&beta);
    let floor = ssr * 1e-24 + f64::MIN_POSITIVE;
    let mut grad_row = vec![0.0; p];
    for it in 1..=max_iter {
        if ssr <= floor {
            return Ok(NlsFit { beta, converged: true, iterations: it - 1, ssr });
        }
        let mut jac = DMatrix::zeros(n, p);
        let mut resid = DVector::zeros(n);
        for i in 0..n {
            let xi = x.row(i);
            model.grad(xi, &beta, &mut grad_row);
            for j in 0..p {
                jac[(i, j)] = grad_row[j];
            }
            resid[i] = y[i] - model.eval(xi, &beta);
        }
        let qr = jac.qr();
        let r = qr.r();
        let diag_min = (0..p).map(|k| r[(k, k)].abs()).fold(f64::INFINITY, f64::min);
        let diag_max = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
        if diag_min <= RANK_TOL * diag_max || diag_max == 0.0 {
            return Err(Error::EstimationFailed(
                "singular Jacobian in Gauss-Newton step".into(),
            ));
        }
        qr.q_tr_mul(&mut resid);
        let mut step = vec![0.0; p];
        for k in (0..p).rev() {
            let mut acc = resid[k];
            for j in (k + 1)..p {
                acc -= r[(k, j)] * step[j];
            }
            step[k] = acc / r[(k, k)];
        }
        let mut lambda = 1.0;
        let mut improved = None;
        for _ in 0..=NLS_MAX_HALVINGS {
            let cand: Vec<f64> =
                beta.iter().zip(&step).map(|(b, s)| b + lambda * s).collect();
            let cand_ssr = ssr_of(&cand);
            if cand_ssr < ssr {
                improved = Some((cand, cand_ssr));
                break;
            }
            lambda *= 0.5;
        }
        let Some((next, next_ssr)) = improved else {
            // No descent direction even after halving: report where we are.
            return Ok(NlsFit { beta, converged: false, iterations: it, ssr });
        };
        let rel = (ssr - next_ssr) / ssr.max(f64::MIN_POSITIVE);
        beta = next;
        ssr = next_ssr;
        if rel < tol || ssr <= floor {
            return Ok(NlsFit { beta, converged: true, iterations: it, ssr });
        }
    }
    Ok(NlsFit { beta, converged: false, iterations: max_iter, ssr })
}

/// Residuals `y_i - g(x_i, beta)`.
pub fn residuals(model: &Model, beta: &[f64], x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    model.check_beta(beta)?;
    model.check_input(x)?;
    if y.len() != x.rows() {
        return Err(Error::InvalidInput("response length does not match data rows".into()));
    }
    Ok((0..x.rows()).map(|i| y[i] - model.eval(x.row(i), beta)).collect())
}

/// Variant of the local-alternative drift coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateVariant {
    /// `gamma_n = c n^{-1/2} r_hat^{-1/4}`: the detectable rate when the
    /// drift is visible to the kernel weights at bandwidth `h_n`.
    Standard,
    /// `gamma_n = c n^{-1/2} r_hat^{1/4} h^{-s/2}`: the slower detectable
    /// rate for support-restricted drifts, with `s` the exponent such that
    /// the bandwidth factor is `h^{-s/2}`.
    SupportRestricted { h: f64, s_delta_q: f64 },
}

/// Drift coefficient sequence for local alternatives.
///
/// `r_hat` is the estimated small-ball probability at the test bandwidth.
pub fn local_alternative_rate(n: usize, r_hat: f64, c: f64, variant: RateVariant) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if !(r_hat.is_finite() && r_hat > 0.0) {
        return Err(Error::InvalidInput("r_hat must be finite and positive".into()));
    }
    if !c.is_finite() {
        return Err(Error::InvalidInput("c must be finite".into()));
    }
    let root_n = (n as f64).sqrt();
    match variant {
        RateVariant::Standard => Ok(c / root_n * r_hat.powf(-0.25)),
        RateVariant::SupportRestricted { h, s_delta_q } => {
            if !(h.is_finite() && h > 0.0) || !(s_delta_q.is_finite() && s_delta_q >= 0.0) {
                return Err(Error::InvalidInput(
                    "support-restricted rate needs h > 0 and s_delta_q >= 0".into(),
                ));
            }
            Ok(c / root_n * r_hat.powf(0.25) * h.powf(-0.5 * s_delta_q))
        }
    }
}
