//! Command-line front end: sampling, one-shot tests, batch simulations,
//! small-ball profiles, and Monte Carlo oracle checks.
//!
//! Exit codes: 0 on success, 2 when a simulation finished but flagged cells
//! (too many degenerate replications), 1 on any error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};

use kspec_core::dist::{log_grid, sample, singularity_exponent, small_ball_curve, DistributionSpec};
use kspec_core::harness::{self, output, ExperimentConfig, ExperimentSummary, SmallballProfile};
use kspec_core::kernel::KernelSpec;
use kspec_core::oracle::{ac_limit_check, ibp_check_1d, mc_moments, BumpSpec, hall_ratio};
use kspec_core::regress::{Dgp, DgpSpec, Model, ModelSpec};
use kspec_core::stat::{p_value_two_sided, run_test};

use output::fmt_f64;

#[derive(Parser)]
#[command(name = "kspec", version, about = "Kernel-weighted specification testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw covariates from a distribution spec and write them as CSV.
    Sample {
        /// TOML file containing a distribution spec.
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path with columns x1..xq.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the specification test on a CSV file with columns x1..xq,y.
    Test {
        #[arg(long)]
        data: PathBuf,
        /// TOML file containing a model spec.
        #[arg(long)]
        model: PathBuf,
        /// A number like 0.1, or a rule like "n^(-1/3)".
        #[arg(long)]
        bandwidth: String,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        /// Nominal level the reject column refers to.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Report the two-sided p-value instead of the upper-tailed one.
        #[arg(long)]
        two_sided: bool,
    },
    /// Run a batch experiment from a TOML config and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the configured root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker thread count (results do not depend on it).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Estimate the small-ball curve and singularity exponent of a law.
    Smallball {
        /// TOML file containing a distribution spec.
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        hmin: f64,
        #[arg(long)]
        hmax: f64,
        #[arg(long, default_value_t = 13)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo and quadrature checks of the moment formulas.
    Oracle {
        #[command(subcommand)]
        check: OracleCheck,
    },
}

#[derive(Subcommand)]
enum OracleCheck {
    /// Pair-moment estimates E[H^2], E[H^4], E[G^2] at one bandwidth.
    Moments {
        /// TOML file with the covariate distribution spec.
        #[arg(long)]
        dist: PathBuf,
        /// Error standard deviation of the synthetic process.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Degeneracy ratio (E[G^2] + E[H^4]/n) / E[H^2]^2 along a size path.
    Hall {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Sample sizes, comma separated; h = n^(-1/rule) at each.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, default_value_t = 3.0)]
        rule: f64,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        #[arg(long, default_value_t = 200_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Integration-by-parts identity of a kernel bump against a 1-D measure.
    Ibp {
        /// TOML file with a 1-D uniform or Gaussian spec.
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        #[arg(long)]
        center: f64,
        #[arg(long)]
        halfwidth: f64,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
    },
    /// Small-bandwidth limit of h^-q E[H^2] against its closed form.
    Aclimit {
        /// TOML file with the covariate distribution spec.
        #[arg(long)]
        density: PathBuf,
        /// Second moment of the synthetic errors.
        #[arg(long, default_value_t = 1.0)]
        mu2: f64,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        /// Bandwidths, comma separated, strictly decreasing.
        #[arg(long, value_delimiter = ',')]
        h: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Sample { dist, n, seed, out } => {
            let spec = load_dist(&dist)?;
            let x = sample(&spec, n, seed)?;
            output::write_matrix_csv(&out, &x)?;
            eprintln!("wrote {} rows to {}", x.rows(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Test { data, model, bandwidth, kernel, alpha, two_sided } => {
            anyhow::ensure!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
            let (x, y) = output::read_xy_csv(&data)?;
            let spec = ModelSpec::load(&model)?;
            let model = Model::new(spec)?;
            let h = parse_bandwidth(&bandwidth, x.rows())?;
            let result = run_test(&x, &y, &model, h, parse_kernel(&kernel)?)?;
            let p = if two_sided { p_value_two_sided(result.tau_hat) } else { result.p_value };
            let side = if two_sided { "two_sided" } else { "upper" };
            println!("n,bandwidth,i_hat,sigma_hat_sq,tau_hat,p_value,side,reject");
            println!(
                "{},{},{},{},{},{},{side},{}",
                result.n,
                fmt_f64(result.bandwidth),
                fmt_f64(result.i_hat),
                fmt_f64(result.sigma_hat_sq),
                fmt_f64(result.tau_hat),
                fmt_f64(p),
                p < alpha
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, reps, seed, out, threads } => {
            if let Some(t) = threads {
                anyhow::ensure!(t >= 1, "threads must be >= 1");
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .context("thread pool already initialized")?;
            }
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            cfg.validate()?;
            let summary = harness::run_experiment(&cfg)?;
            print_summary(&summary);
            eprintln!("artifacts in {}", cfg.output_dir.display());
            if summary.any_flagged() {
                eprintln!("warning: some cells exceeded the degenerate-replication budget");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Smallball { dist, n, hmin, hmax, points, seed, out } => {
            let spec = load_dist(&dist)?;
            let x = sample(&spec, n, seed)?;
            let curve = small_ball_curve(&x, &log_grid(hmin, hmax, points)?)?;
            let fit = singularity_exponent(&curve)?;
            let profile = SmallballProfile { n, curve, fit };
            match out {
                Some(path) => output::write_smallball_csv(&path, std::slice::from_ref(&profile))?,
                None => print!("{}", smallball_text(&profile)),
            }
            eprintln!("slope {:.4} (se {:.4})", fit.slope, fit.stderr);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { check } => {
            run_oracle(check)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_oracle(check: OracleCheck) -> anyhow::Result<()> {
    match check {
        OracleCheck::Moments { dist, sigma, h, kernel, reps, seed } => {
            let dgp = error_only_dgp(&dist, sigma)?;
            let est = mc_moments(&dgp, h, parse_kernel(&kernel)?, reps, seed)?;
            println!("moment,estimate,se,reps");
            println!("e_h2,{},{},{}", fmt_f64(est.e_h2), fmt_f64(est.se_h2), est.reps);
            println!("e_h4,{},{},{}", fmt_f64(est.e_h4), fmt_f64(est.se_h4), est.reps);
            println!("e_g2,{},{},{}", fmt_f64(est.e_g2), fmt_f64(est.se_g2), est.reps);
        }
        OracleCheck::Hall { dist, sigma, n, rule, kernel, reps, seed } => {
            anyhow::ensure!(!n.is_empty(), "give at least one sample size via --n");
            let dgp = error_only_dgp(&dist, sigma)?;
            let kernel = parse_kernel(&kernel)?;
            println!("n,h,ratio");
            for &ni in &n {
                let h = harness::bandwidth(rule, ni)?;
                let est = mc_moments(&dgp, h, kernel, reps, seed)?;
                println!("{ni},{},{}", fmt_f64(h), fmt_f64(hall_ratio(&est, ni)?));
            }
        }
        OracleCheck::Ibp { measure, kernel, center, halfwidth, amplitude, grid } => {
            let spec = load_dist(&measure)?;
            let mut bump = BumpSpec::new(parse_kernel(&kernel)?, center, halfwidth);
            bump.amplitude = amplitude;
            let report = ibp_check_1d(&bump, &spec, grid)?;
            println!("lhs,rhs,gap");
            println!("{},{},{}", fmt_f64(report.lhs), fmt_f64(report.rhs), fmt_f64(report.gap));
        }
        OracleCheck::Aclimit { density, mu2, kernel, h, reps, seed } => {
            anyhow::ensure!(!h.is_empty(), "give at least one bandwidth via --h");
            let spec = load_dist(&density)?;
            let rows = ac_limit_check(&spec, mu2, parse_kernel(&kernel)?, &h, reps, seed)?;
            println!("h,ratio,se,target");
            for row in rows {
                println!(
                    "{},{},{},{}",
                    fmt_f64(row.h),
                    fmt_f64(row.ratio),
                    fmt_f64(row.se),
                    row.target.map(fmt_f64).unwrap_or_default()
                );
            }
        }
    }
    Ok(())
}

fn load_dist(path: &Path) -> anyhow::Result<DistributionSpec> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading distribution spec {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing distribution spec {}", path.display()))
}

/// Process with the given covariate law and pure noise, for moment checks
/// that never evaluate a regression mean.
fn error_only_dgp(dist: &Path, sigma: f64) -> anyhow::Result<Dgp> {
    let spec = DgpSpec {
        x_dist: load_dist(dist)?,
        beta0: vec![0.0],
        drift: None,
        drift_band: None,
        gamma: 0.0,
        error_sigma: sigma,
        noise_scale: None,
    };
    Ok(Dgp::new(spec)?)
}

fn parse_kernel(name: &str) -> anyhow::Result<KernelSpec> {
    match name {
        "epanechnikov" => Ok(KernelSpec::Epanechnikov),
        "quartic" => Ok(KernelSpec::Quartic),
        other => bail!("unknown kernel {other:?} (expected epanechnikov or quartic)"),
    }
}

/// Accepts a positive literal like `0.1` or a rule of the form `n^(-1/a)`.
fn parse_bandwidth(arg: &str, n: usize) -> anyhow::Result<f64> {
    if let Ok(h) = arg.parse::<f64>() {
        anyhow::ensure!(h.is_finite() && h > 0.0, "bandwidth must be finite and positive");
        return Ok(h);
    }
    let a = arg
        .strip_prefix("n^(-1/")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| anyhow!("bandwidth must be a number or of the form n^(-1/a)"))?
        .parse::<f64>()
        .map_err(|_| anyhow!("unparseable rule exponent in {arg:?}"))?;
    Ok(harness::bandwidth(a, n)?)
}

fn print_summary(summary: &ExperimentSummary) {
    for cell in &summary.cells {
        for rate in &cell.rates {
            println!(
                "{}  alpha={:.3}  rate={:.4}  se={:.4}  used={}/{}{}",
                cell.label,
                rate.alpha,
                rate.rate,
                rate.se,
                cell.reps_used,
                cell.reps_total,
                if cell.flagged { "  FLAGGED" } else { "" }
            );
        }
    }
    for profile in &summary.smallball {
        println!(
            "smallball n={}  slope={:.4}  se={:.4}  points={}",
            profile.n, profile.fit.slope, profile.fit.stderr, profile.fit.points_used
        );
    }
}

fn smallball_text(profile: &SmallballProfile) -> String {
    let mut out = String::from("n,h,r_hat,pairs,slope,slope_se\n");
    for (k, h) in profile.curve.h.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            profile.n,
            fmt_f64(*h),
            fmt_f64(profile.curve.r_hat[k]),
            profile.curve.pair_count[k],
            fmt_f64(profile.fit.slope),
            fmt_f64(profile.fit.stderr)
        );
    }
    out
}
