//! Simulation experiments: configuration, seeded replication cells, and
//! artifact output.
//!
//! An experiment is a grid of cells, one per combination of sample size,
//! bandwidth rule, and (for power studies) mixture weight or drift scale.
//! Each cell replicates draw-test cycles from its own seed stream, derived
//! as `child(root, fnv1a(label))` and then one child per replication, so
//! results depend only on the configuration and are bit-identical across
//! thread counts. Degenerate replications (zero variance estimate) are
//! counted and excluded from rates; a cell whose degenerate share exceeds
//! [`DEGENERATE_SHARE_MAX`] is flagged and poisons the run's exit status.

pub mod output;
pub mod summary;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{log_grid, small_ball_curve, singularity_exponent, DistributionSpec};
use crate::dist::{SlopeFit, SmallBallCurve};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::regress::{gen_dgp, local_alternative_rate, Dgp, DgpSpec, Model, ModelSpec, RateVariant};
use crate::rng::{child_seed, fnv1a64};
use crate::stat::run_test;

/// Cells with a degenerate-replication share above this are flagged.
pub const DEGENERATE_SHARE_MAX: f64 = 0.001;

/// Smallest per-cell sample size; below this the test is meaningless and
/// the asymptotics grossly wrong.
pub const MIN_CELL_N: usize = 10;

/// What a run estimates and which artifacts it writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Null draws of the studentized statistic, kept for histograms.
    NullHistogram,
    /// Rejection rate under the null across nominal levels 1% through 10%.
    SizeCurve,
    /// Power grid over mixture weights `alpha2`.
    PowerTable,
    /// Power along drift sequences that shrink at the detectable rate.
    LocalPower,
    /// Small-ball curves and fitted singularity exponents, no testing.
    SmallballProfile,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::NullHistogram => "null_histogram",
            ExperimentKind::SizeCurve => "size_curve",
            ExperimentKind::PowerTable => "power_table",
            ExperimentKind::LocalPower => "local_power",
            ExperimentKind::SmallballProfile => "smallball_profile",
        })
    }
}

fn default_reps() -> usize {
    5000
}

fn default_alphas() -> Vec<f64> {
    vec![0.01, 0.05, 0.10]
}

/// Declarative experiment description, loadable from TOML.
///
/// `alpha2_values` applies only to `power_table` (it overrides the mixture
/// weights of the covariate law), `c_values` only to `local_power`, and the
/// `h_min`/`h_max`/`h_points` grid only to `smallball_profile`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dgp: DgpSpec,
    pub model: ModelSpec,
    pub n_values: Vec<usize>,
    /// Bandwidth rule exponents `a`, giving `h = n^(-1/a)` per sample size.
    pub bandwidth_rules: Vec<f64>,
    pub kernel: KernelSpec,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alphas")]
    pub alpha_levels: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub alpha2_values: Vec<f64>,
    #[serde(default)]
    pub c_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_points: Option<usize>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses and validates a config from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Checks every field, including kind-specific requirements and the
    /// model/process compatibility the per-replication code relies on.
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        if self.n_values.is_empty() {
            return Err(Error::InvalidConfig("n_values must be nonempty".into()));
        }
        if self.n_values.iter().any(|&n| n < MIN_CELL_N) {
            return Err(Error::InvalidConfig(format!(
                "every sample size must be >= {MIN_CELL_N}"
            )));
        }
        if has_dup(self.n_values.iter().map(|&n| n as f64)) {
            return Err(Error::InvalidConfig("duplicate entries in n_values".into()));
        }
        if self.bandwidth_rules.is_empty() {
            return Err(Error::InvalidConfig("bandwidth_rules must be nonempty".into()));
        }
        for &a in &self.bandwidth_rules {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidConfig("bandwidth rules must be finite and > 0".into()));
            }
        }
        if has_dup(self.bandwidth_rules.iter().copied()) {
            return Err(Error::InvalidConfig("duplicate entries in bandwidth_rules".into()));
        }
        for &alpha in &self.alpha_levels {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig("levels must lie strictly in (0, 1)".into()));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("output_dir must be set".into()));
        }
        let model = Model::new(self.model.clone())?;
        let dgp = Dgp::new(self.dgp.clone())?;
        if self.dgp.beta0.len() != model.param_dim() {
            return Err(Error::InvalidConfig(format!(
                "beta0 has {} entries but the model takes {}",
                self.dgp.beta0.len(),
                model.param_dim()
            )));
        }
        if dgp.dist().dim() < model.min_input_dim() {
            return Err(Error::InvalidConfig(format!(
                "model needs covariate dimension >= {}, x_dist has {}",
                model.min_input_dim(),
                dgp.dist().dim()
            )));
        }
        let is_power = self.kind == ExperimentKind::PowerTable;
        let is_local = self.kind == ExperimentKind::LocalPower;
        let is_smallball = self.kind == ExperimentKind::SmallballProfile;
        if !is_power && !self.alpha2_values.is_empty() {
            return Err(Error::InvalidConfig("alpha2_values only apply to power_table".into()));
        }
        if !is_local && !self.c_values.is_empty() {
            return Err(Error::InvalidConfig("c_values only apply to local_power".into()));
        }
        if !is_smallball && (self.h_min.is_some() || self.h_max.is_some() || self.h_points.is_some())
        {
            return Err(Error::InvalidConfig(
                "h_min/h_max/h_points only apply to smallball_profile".into(),
            ));
        }
        match self.kind {
            ExperimentKind::NullHistogram | ExperimentKind::SizeCurve => {
                if self.dgp.gamma != 0.0 {
                    return Err(Error::InvalidConfig(
                        "size experiments need gamma = 0 so the null holds".into(),
                    ));
                }
            }
            ExperimentKind::PowerTable => {
                if self.alpha2_values.is_empty() {
                    return Err(Error::InvalidConfig("power_table needs alpha2_values".into()));
                }
                if self.alpha2_values.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    return Err(Error::InvalidConfig("alpha2 weights must lie in [0, 1]".into()));
                }
                if has_dup(self.alpha2_values.iter().copied()) {
                    return Err(Error::InvalidConfig("duplicate entries in alpha2_values".into()));
                }
                mixture_with_weight(&self.dgp.x_dist, 0.5)?;
                if self.alpha_levels.is_empty() {
                    return Err(Error::InvalidConfig("power_table needs alpha_levels".into()));
                }
            }
            ExperimentKind::LocalPower => {
                if self.c_values.is_empty() {
                    return Err(Error::InvalidConfig("local_power needs c_values".into()));
                }
                if self.c_values.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(Error::InvalidConfig("drift scales must be finite and >= 0".into()));
                }
                if has_dup(self.c_values.iter().copied()) {
                    return Err(Error::InvalidConfig("duplicate entries in c_values".into()));
                }
                if self.dgp.drift.is_none() {
                    return Err(Error::InvalidConfig(
                        "local_power needs a drift in the process spec".into(),
                    ));
                }
                if self.alpha_levels.is_empty() {
                    return Err(Error::InvalidConfig("local_power needs alpha_levels".into()));
                }
            }
            ExperimentKind::SmallballProfile => {
                let (lo, hi, pts) = match (self.h_min, self.h_max, self.h_points) {
                    (Some(lo), Some(hi), Some(p)) => (lo, hi, p),
                    _ => {
                        return Err(Error::InvalidConfig(
                            "smallball_profile needs h_min, h_max, and h_points".into(),
                        ))
                    }
                };
                if pts < 3 {
                    return Err(Error::InvalidConfig(
                        "smallball_profile needs at least 3 grid points".into(),
                    ));
                }
                log_grid(lo, hi, pts)?;
            }
        }
        Ok(())
    }

    /// Levels the run actually evaluates: the nominal 1%-10% grid for size
    /// curves, the configured levels otherwise.
    pub fn alphas_for_run(&self) -> Vec<f64> {
        match self.kind {
            ExperimentKind::SizeCurve => (1..=10).map(|k| k as f64 / 100.0).collect(),
            _ => self.alpha_levels.clone(),
        }
    }
}

fn has_dup(values: impl Iterator<Item = f64>) -> bool {
    let mut seen = Vec::new();
    for v in values {
        if seen.contains(&v.to_bits()) {
            return true;
        }
        seen.push(v.to_bits());
    }
    false
}

/// Bandwidth from a rule exponent: `h = n^(-1/a)`.
pub fn bandwidth(rule_exponent: f64, n: usize) -> Result<f64> {
    if !(rule_exponent.is_finite() && rule_exponent > 0.0) {
        return Err(Error::InvalidInput("rule exponent must be finite and > 0".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    Ok((n as f64).powf(-1.0 / rule_exponent))
}

/// Replaces the weights of a two-component mixture with `[1 - alpha2, alpha2]`.
///
/// This is how power grids sweep the singular share of the covariate law
/// without touching the component specs.
pub fn mixture_with_weight(x_dist: &DistributionSpec, alpha2: f64) -> Result<DistributionSpec> {
    if !(0.0..=1.0).contains(&alpha2) {
        return Err(Error::InvalidInput("mixture weight must lie in [0, 1]".into()));
    }
    match x_dist {
        DistributionSpec::Mixture { components, .. } if components.len() == 2 => {
            Ok(DistributionSpec::Mixture {
                weights: vec![1.0 - alpha2, alpha2],
                components: components.clone(),
            })
        }
        _ => Err(Error::InvalidConfig(
            "weight sweep needs a two-component mixture covariate law".into(),
        )),
    }
}

/// Rejection rate at one nominal level, with its binomial standard error.
#[derive(Clone, Copy, Debug)]
pub struct RateRow {
    pub alpha: f64,
    pub rate: f64,
    pub se: f64,
}

/// Outcome of one experiment cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub label: String,
    pub n: usize,
    /// Bandwidth rule exponent.
    pub rule: f64,
    pub bandwidth: f64,
    /// Mixture weight, for power tables.
    pub alpha2: Option<f64>,
    /// Drift scale `c`, for local power runs.
    pub c: Option<f64>,
    /// Drift coefficient actually used by the cell's process.
    pub gamma: f64,
    pub reps_total: usize,
    pub reps_used: usize,
    pub degenerate: usize,
    /// True when the degenerate share exceeds [`DEGENERATE_SHARE_MAX`].
    pub flagged: bool,
    pub rates: Vec<RateRow>,
    /// Studentized statistics of the kept replications, in replication order.
    pub taus: Vec<f64>,
}

/// Small-ball curve and fitted exponent for one sample size.
#[derive(Clone, Debug)]
pub struct SmallballProfile {
    pub n: usize,
    pub curve: SmallBallCurve,
    pub fit: SlopeFit,
}

/// Everything a run produced, before any files are written.
#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub kind: ExperimentKind,
    pub cells: Vec<CellResult>,
    pub smallball: Vec<SmallballProfile>,
}

impl ExperimentSummary {
    pub fn any_flagged(&self) -> bool {
        self.cells.iter().any(|c| c.flagged)
    }
}

struct CellPlan {
    label: String,
    n: usize,
    rule: f64,
    bandwidth: f64,
    alpha2: Option<f64>,
    c: Option<f64>,
    dgp: Dgp,
}

fn base_plan(n: usize, rule: f64, dgp: Dgp, label: String) -> Result<CellPlan> {
    Ok(CellPlan { label, n, rule, bandwidth: bandwidth(rule, n)?, alpha2: None, c: None, dgp })
}

fn build_plans(cfg: &ExperimentConfig) -> Result<Vec<CellPlan>> {
    let mut plans = Vec::new();
    match cfg.kind {
        ExperimentKind::NullHistogram | ExperimentKind::SizeCurve => {
            for &n in &cfg.n_values {
                for &rule in &cfg.bandwidth_rules {
                    let dgp = Dgp::new(cfg.dgp.clone())?;
                    plans.push(base_plan(n, rule, dgp, format!("n={n}/a={rule}"))?);
                }
            }
        }
        ExperimentKind::PowerTable => {
            for &alpha2 in &cfg.alpha2_values {
                let mut spec = cfg.dgp.clone();
                spec.x_dist = mixture_with_weight(&cfg.dgp.x_dist, alpha2)?;
                for &n in &cfg.n_values {
                    for &rule in &cfg.bandwidth_rules {
                        let mut plan = base_plan(
                            n,
                            rule,
                            Dgp::new(spec.clone())?,
                            format!("alpha2={alpha2}/n={n}/a={rule}"),
                        )?;
                        plan.alpha2 = Some(alpha2);
                        plans.push(plan);
                    }
                }
            }
        }
        ExperimentKind::LocalPower => {
            // All drift scales at one (n, rule) share a pilot estimate of the
            // small-ball probability, so their gammas are exactly proportional.
            let mut pilots: BTreeMap<(usize, u64), f64> = BTreeMap::new();
            let base = Dgp::new(cfg.dgp.clone())?;
            for &n in &cfg.n_values {
                for &rule in &cfg.bandwidth_rules {
                    let h = bandwidth(rule, n)?;
                    let pilot_label = format!("pilot/n={n}/a={rule}");
                    let pilot_seed = child_seed(cfg.seed, fnv1a64(pilot_label.as_bytes()));
                    let x = base.dist().sample(n, pilot_seed)?;
                    let r_hat = small_ball_curve(&x, &[h])?.r_hat[0];
                    if r_hat <= 0.0 {
                        return Err(Error::EstimationFailed(format!(
                            "pilot sample has no pairs within bandwidth {h:.3e} at n = {n}"
                        )));
                    }
                    pilots.insert((n, rule.to_bits()), r_hat);
                }
            }
            for &c in &cfg.c_values {
                for &n in &cfg.n_values {
                    for &rule in &cfg.bandwidth_rules {
                        let r_hat = pilots[&(n, rule.to_bits())];
                        let gamma =
                            local_alternative_rate(n, r_hat, c, RateVariant::Standard)?;
                        let mut plan = base_plan(
                            n,
                            rule,
                            base.with_gamma(gamma)?,
                            format!("c={c}/n={n}/a={rule}"),
                        )?;
                        plan.c = Some(c);
                        plans.push(plan);
                    }
                }
            }
        }
        ExperimentKind::SmallballProfile => {
            return Err(Error::InvalidConfig(
                "smallball_profile has no test cells".into(),
            ))
        }
    }
    Ok(plans)
}

fn run_cell(
    cfg: &ExperimentConfig,
    model: &Model,
    plan: &CellPlan,
    alphas: &[f64],
) -> Result<CellResult> {
    let cell_seed = child_seed(cfg.seed, fnv1a64(plan.label.as_bytes()));
    // Each replication is a pure function of its own child seed, so the
    // parallel map is deterministic regardless of thread count.
    let outcomes: Vec<Result<Option<(f64, f64)>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let (x, y) = gen_dgp(&plan.dgp, model, plan.n, child_seed(cell_seed, rep as u64))?;
            match run_test(&x, &y, model, plan.bandwidth, cfg.kernel) {
                Ok(t) => Ok(Some((t.tau_hat, t.p_value))),
                Err(Error::DegenerateStatistic(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut taus = Vec::with_capacity(cfg.reps);
    let mut pvals = Vec::with_capacity(cfg.reps);
    let mut degenerate = 0usize;
    for outcome in outcomes {
        match outcome? {
            Some((tau, p)) => {
                taus.push(tau);
                pvals.push(p);
            }
            None => degenerate += 1,
        }
    }
    let used = taus.len();
    let rates = alphas
        .iter()
        .map(|&alpha| {
            if used == 0 {
                return RateRow { alpha, rate: 0.0, se: 0.0 };
            }
            let rate = pvals.iter().filter(|&&p| p < alpha).count() as f64 / used as f64;
            RateRow { alpha, rate, se: (rate * (1.0 - rate) / used as f64).sqrt() }
        })
        .collect();
    Ok(CellResult {
        label: plan.label.clone(),
        n: plan.n,
        rule: plan.rule,
        bandwidth: plan.bandwidth,
        alpha2: plan.alpha2,
        c: plan.c,
        gamma: plan.dgp.spec().gamma,
        reps_total: cfg.reps,
        reps_used: used,
        degenerate,
        flagged: degenerate as f64 > DEGENERATE_SHARE_MAX * cfg.reps as f64,
        rates,
        taus,
    })
}

fn run_smallball(cfg: &ExperimentConfig) -> Result<Vec<SmallballProfile>> {
    let (lo, hi, pts) = (cfg.h_min.unwrap(), cfg.h_max.unwrap(), cfg.h_points.unwrap());
    let grid = log_grid(lo, hi, pts)?;
    let dgp = Dgp::new(cfg.dgp.clone())?;
    let mut profiles = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let label = format!("smallball/n={n}");
        let x = dgp.dist().sample(n, child_seed(cfg.seed, fnv1a64(label.as_bytes())))?;
        let curve = small_ball_curve(&x, &grid)?;
        let fit = singularity_exponent(&curve)?;
        profiles.push(SmallballProfile { n, curve, fit });
    }
    Ok(profiles)
}

/// Runs every cell of the experiment without touching the filesystem.
pub fn run_cells(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    if cfg.kind == ExperimentKind::SmallballProfile {
        return Ok(ExperimentSummary {
            kind: cfg.kind,
            cells: Vec::new(),
            smallball: run_smallball(cfg)?,
        });
    }
    let model = Model::new(cfg.model.clone())?;
    let alphas = cfg.alphas_for_run();
    let plans = build_plans(cfg)?;
    let mut cells = Vec::with_capacity(plans.len());
    for plan in &plans {
        cells.push(run_cell(cfg, &model, plan, &alphas)?);
    }
    Ok(ExperimentSummary { kind: cfg.kind, cells, smallball: Vec::new() })
}

fn file_tag(label: &str) -> String {
    label.replace(['/', '='], "_").replace('.', "p")
}

/// Runs the experiment and writes its artifacts under `cfg.output_dir`:
/// a TOML manifest (always), rate tables, and for histogram runs the raw
/// statistics and binned counts per cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let summary = run_cells(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    output::write_manifest(&cfg.output_dir.join("manifest.toml"), cfg)?;
    match cfg.kind {
        ExperimentKind::SmallballProfile => {
            output::write_smallball_csv(&cfg.output_dir.join("smallball.csv"), &summary.smallball)?;
        }
        ExperimentKind::NullHistogram => {
            output::write_rates_csv(&cfg.output_dir.join("rates.csv"), &summary.cells)?;
            for cell in &summary.cells {
                let tag = file_tag(&cell.label);
                output::write_tau_csv(&cfg.output_dir.join(format!("tau_{tag}.csv")), &cell.taus)?;
                if !cell.taus.is_empty() {
                    let hist = summary::histogram_fd(&cell.taus, -4.0, 4.0)?;
                    output::write_hist_csv(&cfg.output_dir.join(format!("hist_{tag}.csv")), &hist)?;
                }
            }
        }
        _ => {
            output::write_rates_csv(&cfg.output_dir.join("rates.csv"), &summary.cells)?;
        }
    }
    Ok(summary)
}

/// Rates pivoted into a row-coefficient by `(rule, level)` table.
///
/// Rows are mixture weights (power tables) or drift scales (local power).
#[derive(Clone, Debug)]
pub struct PowerTable {
    pub n: usize,
    pub row_values: Vec<f64>,
    /// Column keys `(rule exponent, nominal level)`.
    pub columns: Vec<(f64, f64)>,
    pub rates: Vec<Vec<f64>>,
    pub ses: Vec<Vec<f64>>,
}

impl PowerTable {
    /// Pivots cells from a single-`n` run; cells must carry a row
    /// coefficient and cover the full grid exactly once.
    pub fn from_cells(cells: &[CellResult]) -> Result<PowerTable> {
        let first = cells
            .first()
            .ok_or_else(|| Error::InvalidInput("no cells to tabulate".into()))?;
        let n = first.n;
        let mut row_values: Vec<f64> = Vec::new();
        let mut columns: Vec<(f64, f64)> = Vec::new();
        for cell in cells {
            if cell.n != n {
                return Err(Error::InvalidInput("table needs a single sample size".into()));
            }
            let row = cell
                .alpha2
                .or(cell.c)
                .ok_or_else(|| Error::InvalidInput("cells carry no row coefficient".into()))?;
            if !row_values.contains(&row) {
                row_values.push(row);
            }
            for rate in &cell.rates {
                if !columns.contains(&(cell.rule, rate.alpha)) {
                    columns.push((cell.rule, rate.alpha));
                }
            }
        }
        let mut rates = vec![vec![f64::NAN; columns.len()]; row_values.len()];
        let mut ses = vec![vec![f64::NAN; columns.len()]; row_values.len()];
        for cell in cells {
            let row = cell.alpha2.or(cell.c).unwrap();
            let i = row_values.iter().position(|v| *v == row).unwrap();
            for rate in &cell.rates {
                let j = columns.iter().position(|k| *k == (cell.rule, rate.alpha)).unwrap();
                if !rates[i][j].is_nan() {
                    return Err(Error::InvalidInput(format!(
                        "duplicate table cell at row {row}, rule {}, level {}",
                        cell.rule, rate.alpha
                    )));
                }
                if !(0.0..=1.0).contains(&rate.rate) {
                    return Err(Error::InvalidInput("rate outside [0, 1]".into()));
                }
                rates[i][j] = rate.rate;
                ses[i][j] = rate.se;
            }
        }
        if rates.iter().flatten().any(|r| r.is_nan()) {
            return Err(Error::InvalidInput("table grid is incomplete".into()));
        }
        Ok(PowerTable { n, row_values, columns, rates, ses })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEED: u64 = 86_420;

    fn uniform_dgp(dim: usize) -> DgpSpec {
        DgpSpec {
            x_dist: DistributionSpec::UniformBox { lo: vec![0.0; dim], hi: vec![1.0; dim] },
            beta0: vec![1.0; dim + 1],
            drift: None,
            drift_band: None,
            gamma: 0.0,
            error_sigma: 1.0,
            noise_scale: None,
        }
    }

    fn tiny_config(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            dgp: uniform_dgp(1),
            model: ModelSpec::linear(&["constant", "x1"]),
            n_values: vec![24],
            bandwidth_rules: vec![3.0],
            kernel: KernelSpec::Epanechnikov,
            reps: 150,
            alpha_levels: vec![0.05, 0.2],
            seed: SEED,
            alpha2_values: Vec::new(),
            c_values: Vec::new(),
            h_min: None,
            h_max: None,
            h_points: None,
            output_dir: PathBuf::from("unused"),
        }
    }

    fn drift_config(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = tiny_config(kind);
        cfg.dgp = uniform_dgp(2);
        cfg.dgp.drift = Some("sine_prod".into());
        cfg.dgp.gamma = 0.4;
        cfg.model = ModelSpec::linear(&["constant", "x1", "x2"]);
        cfg.reps = 40;
        cfg
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir =
            std::env::temp_dir().join(format!("kspec-harness-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn bandwidth_rule_arithmetic() {
        assert!((bandwidth(4.0, 10_000).unwrap() - 0.1).abs() <= 1e-12);
        assert!((bandwidth(2.0, 25).unwrap() - 0.2).abs() <= 1e-15);
        let h = bandwidth(3.0, 1500).unwrap();
        assert!((h - (1500f64).powf(-1.0 / 3.0)).abs() <= 1e-16);
        assert!(h > 0.087 && h < 0.088, "h {h}");
        assert!(bandwidth(0.0, 100).is_err());
        assert!(bandwidth(-2.0, 100).is_err());
        assert!(bandwidth(3.0, 0).is_err());
    }

    #[test]
    fn config_toml_round_trips_and_validates() {
        let text = r#"
            kind = "size_curve"
            n_values = [30, 60]
            bandwidth_rules = [3.0, 4.0]
            kernel = "epanechnikov"
            reps = 25
            seed = 11
            output_dir = "out"

            [dgp]
            beta0 = [1.0, 0.5]
            error_sigma = 1.0
            [dgp.x_dist]
            type = "uniform_box"
            lo = [0.0]
            hi = [1.0]

            [model]
            basis = ["constant", "x1"]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::SizeCurve);
        assert_eq!(cfg.alpha_levels, vec![0.01, 0.05, 0.10]);
        assert_eq!(cfg.reps, 25);
        let echoed = toml::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_toml_str(&echoed).unwrap();
        assert_eq!(toml::to_string(&back).unwrap(), echoed);
        assert!(ExperimentConfig::from_toml_str(&text.replace("reps = 25", "wrong = 1")).is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = tiny_config(ExperimentKind::SizeCurve);
        ok.validate().unwrap();

        let mut cfg = ok.clone();
        cfg.reps = 0;
        assert!(cfg.validate().is_err());

        cfg = ok.clone();
        cfg.n_values = vec![5];
        assert!(cfg.validate().is_err());

        cfg = ok.clone();
        cfg.n_values = vec![30, 30];
        assert!(cfg.validate().is_err());

        cfg = ok.clone();
        cfg.bandwidth_rules = vec![];
        assert!(cfg.validate().is_err());

        cfg = ok.clone();
        cfg.alpha_levels = vec![1.2];
        assert!(cfg.validate().is_err());

        cfg = ok.clone();
        cfg.dgp.beta0 = vec![1.0];
        assert!(cfg.validate().is_err());

        cfg = ok.clone();
        cfg.alpha2_values = vec![0.5];
        assert!(cfg.validate().is_err(), "weight sweep outside power_table");

        cfg = ok.clone();
        cfg.h_min = Some(0.01);
        assert!(cfg.validate().is_err(), "grid fields outside smallball_profile");

        cfg = drift_config(ExperimentKind::SizeCurve);
        assert!(cfg.validate().is_err(), "size run with a live drift");

        cfg = drift_config(ExperimentKind::PowerTable);
        cfg.alpha2_values = vec![0.2, 0.8];
        assert!(cfg.validate().is_err(), "power sweep without a mixture law");

        cfg = drift_config(ExperimentKind::LocalPower);
        cfg.c_values = vec![0.5, 2.0];
        cfg.dgp.drift = None;
        cfg.dgp.gamma = 0.0;
        assert!(cfg.validate().is_err(), "local power without a drift");

        cfg = tiny_config(ExperimentKind::SmallballProfile);
        assert!(cfg.validate().is_err(), "profile without a grid");
        cfg.h_min = Some(0.01);
        cfg.h_max = Some(0.5);
        cfg.h_points = Some(8);
        cfg.validate().unwrap();
    }

    #[test]
    fn size_curve_runs_and_accounts_for_every_replication() {
        let cfg = tiny_config(ExperimentKind::SizeCurve);
        let summary = run_cells(&cfg).unwrap();
        assert_eq!(summary.cells.len(), 1);
        let cell = &summary.cells[0];
        assert_eq!(cell.label, "n=24/a=3");
        assert_eq!(cell.reps_total, 150);
        assert_eq!(cell.reps_used + cell.degenerate, 150);
        assert_eq!(cell.rates.len(), 10);
        assert_eq!(cell.gamma, 0.0);
        for pair in cell.rates.windows(2) {
            assert!(pair[0].alpha < pair[1].alpha);
            assert!(pair[0].rate <= pair[1].rate, "rates must nest with the level");
        }
        for r in &cell.rates {
            assert!((0.0..=1.0).contains(&r.rate));
            assert!(r.se >= 0.0);
        }
        assert!(!cell.flagged);
        assert_eq!(cell.taus.len(), cell.reps_used);
    }

    #[test]
    fn cell_results_do_not_depend_on_thread_count() {
        let cfg = tiny_config(ExperimentKind::SizeCurve);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_cells(&cfg))
            .unwrap();
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_cells(&cfg))
            .unwrap();
        let a = &single.cells[0];
        let b = &multi.cells[0];
        assert_eq!(a.taus.len(), b.taus.len());
        for (x, y) in a.taus.iter().zip(&b.taus) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.rates.iter().zip(&b.rates) {
            assert_eq!(x.rate.to_bits(), y.rate.to_bits());
        }
    }

    #[test]
    fn histogram_run_writes_reproducible_artifacts() {
        let dir = temp_dir("hist");
        let mut cfg = tiny_config(ExperimentKind::NullHistogram);
        cfg.n_values = vec![30];
        cfg.reps = 120;
        cfg.output_dir = dir.join("first");
        let summary = run_experiment(&cfg).unwrap();
        assert!(!summary.any_flagged());
        let rates = cfg.output_dir.join("rates.csv");
        let tau = cfg.output_dir.join("tau_n_30_a_3.csv");
        let hist = cfg.output_dir.join("hist_n_30_a_3.csv");
        for p in [&rates, &tau, &hist] {
            assert!(p.exists(), "missing {}", p.display());
        }

        let mut again = output::read_manifest(&cfg.output_dir.join("manifest.toml")).unwrap();
        again.output_dir = dir.join("second");
        run_experiment(&again).unwrap();
        for name in ["rates.csv", "tau_n_30_a_3.csv", "hist_n_30_a_3.csv"] {
            let a = fs::read(cfg.output_dir.join(name)).unwrap();
            let b = fs::read(again.output_dir.join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} changed across re-runs");
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn weight_sweep_rewrites_mixture_weights() {
        let components = vec![
            DistributionSpec::UniformBox { lo: vec![0.0], hi: vec![1.0] },
            DistributionSpec::DiscretePoints { atoms: vec![vec![0.5]], probs: vec![1.0] },
        ];
        let mix = DistributionSpec::Mixture {
            weights: vec![0.9, 0.1],
            components: components.clone(),
        };
        match mixture_with_weight(&mix, 0.25).unwrap() {
            DistributionSpec::Mixture { weights, components: got } => {
                assert_eq!(weights, vec![0.75, 0.25]);
                assert_eq!(got.len(), components.len());
            }
            other => panic!("unexpected spec {other:?}"),
        }
        assert!(mixture_with_weight(&mix, 1.5).is_err());
        assert!(mixture_with_weight(&components[0], 0.5).is_err());
    }

    #[test]
    fn power_cells_carry_their_weight_and_drift() {
        let mut cfg = drift_config(ExperimentKind::PowerTable);
        cfg.dgp.x_dist = DistributionSpec::Mixture {
            weights: vec![0.5, 0.5],
            components: vec![
                DistributionSpec::UniformBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
                DistributionSpec::UniformBox { lo: vec![0.4, 0.4], hi: vec![0.6, 0.6] },
            ],
        };
        cfg.alpha2_values = vec![0.0, 1.0];
        cfg.reps = 30;
        let summary = run_cells(&cfg).unwrap();
        assert_eq!(summary.cells.len(), 2);
        assert_eq!(summary.cells[0].label, "alpha2=0/n=24/a=3");
        assert_eq!(summary.cells[0].alpha2, Some(0.0));
        assert_eq!(summary.cells[1].alpha2, Some(1.0));
        for cell in &summary.cells {
            assert_eq!(cell.gamma, 0.4);
            assert_eq!(cell.c, None);
        }
        let table = PowerTable::from_cells(&summary.cells).unwrap();
        assert_eq!(table.row_values, vec![0.0, 1.0]);
        assert_eq!(table.columns.len(), 2);
        assert!(table.rates.iter().flatten().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn local_power_gammas_scale_exactly_with_c() {
        let mut cfg = drift_config(ExperimentKind::LocalPower);
        cfg.dgp.gamma = 0.0;
        cfg.c_values = vec![0.0, 0.5, 2.0];
        cfg.reps = 25;
        let summary = run_cells(&cfg).unwrap();
        assert_eq!(summary.cells.len(), 3);
        let by_c: Vec<(f64, f64)> =
            summary.cells.iter().map(|cell| (cell.c.unwrap(), cell.gamma)).collect();
        assert_eq!(by_c[0], (0.0, 0.0));
        assert!(by_c[1].1 > 0.0);
        // The pilot estimate is shared across drift scales, so gamma is
        // exactly proportional to c (the scales here are powers of two).
        assert_eq!(by_c[2].1, 4.0 * by_c[1].1);
    }

    #[test]
    fn smallball_profile_recovers_the_interval_dimension() {
        let mut cfg = tiny_config(ExperimentKind::SmallballProfile);
        cfg.n_values = vec![2000];
        cfg.h_min = Some(0.005);
        cfg.h_max = Some(0.1);
        cfg.h_points = Some(10);
        let summary = run_cells(&cfg).unwrap();
        assert_eq!(summary.cells.len(), 0);
        assert_eq!(summary.smallball.len(), 1);
        let p = &summary.smallball[0];
        assert_eq!(p.n, 2000);
        assert_eq!(p.curve.h.len(), 10);
        assert!((p.fit.slope - 1.0).abs() < 0.1, "slope {}", p.fit.slope);
    }

    #[test]
    fn power_table_pivot_rejects_ragged_input() {
        let cell = |label: &str, n: usize, alpha2: f64| CellResult {
            label: label.into(),
            n,
            rule: 3.0,
            bandwidth: 0.1,
            alpha2: Some(alpha2),
            c: None,
            gamma: 0.4,
            reps_total: 10,
            reps_used: 10,
            degenerate: 0,
            flagged: false,
            rates: vec![RateRow { alpha: 0.05, rate: 0.5, se: 0.1 }],
            taus: vec![],
        };
        let ok = vec![cell("a", 100, 0.2), cell("b", 100, 0.8)];
        let table = PowerTable::from_cells(&ok).unwrap();
        assert_eq!(table.n, 100);
        assert_eq!(table.rates, vec![vec![0.5], vec![0.5]]);

        assert!(PowerTable::from_cells(&[]).is_err());
        let mixed_n = vec![cell("a", 100, 0.2), cell("b", 200, 0.8)];
        assert!(PowerTable::from_cells(&mixed_n).is_err());
        let dup = vec![cell("a", 100, 0.2), cell("a2", 100, 0.2)];
        assert!(PowerTable::from_cells(&dup).is_err());
        let mut no_row = cell("a", 100, 0.2);
        no_row.alpha2 = None;
        assert!(PowerTable::from_cells(&[no_row]).is_err());
    }
}

