//! Resolved command configurations, execution, and the run manifest.
//!
//! Every subcommand resolves its flags into a serializable config, executes,
//! and drops a manifest.json next to its outputs; `replay` re-executes a
//! manifest and reproduces every artifact byte-identically.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use riskclt_core::asymptotics::MpLaw;
use riskclt_core::estimator::DesignMatrix;
use riskclt_core::montecarlo::{run_experiment, BetaModeKind, ExperimentConfig, ModelConfig, RiskType};
use riskclt_core::randgen::{sample_beta, sample_entries, BetaMode, EntryDistribution};
use riskclt_core::risk::{mc_risk_oracle, risk_report, OracleEstimate, RiskReport};
use riskclt_core::rng::stream;
use riskclt_core::sweep::{detect_more_data_hurt, double_descent_band, risk_density_surface};
use riskclt_core::Error as CoreError;

use crate::output::{csv, fmt_f64, write_atomic};

pub const ARTIFACT_VERSION: &str = "1";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InterpolationThreshold { .. }
            | CoreError::RegimeMismatch(_)
            | CoreError::CovarianceNotPositiveDefinite
            | CoreError::NotSymmetric => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Band subcommand configuration (n sweeps from n_min to n_max at fixed p).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandRun {
    pub model: ModelConfig,
    pub n_min: usize,
    pub n_max: usize,
    pub alpha: f64,
    pub risk_type: RiskType,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_steps: usize,
    /// When set, overlays empirical risk quantiles from this many Monte
    /// Carlo repetitions per n (written to band_mc.csv).
    pub mc_reps: Option<usize>,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpRun {
    pub c: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskRun {
    pub model: ModelConfig,
    pub master_seed: u64,
    pub oracle_n_test: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum ResolvedCommand {
    Clt(ExperimentConfig),
    Band(BandRun),
    Mp(MpRun),
    Risk(RiskRun),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub out_dir: String,
    pub command: ResolvedCommand,
}

/// Scalar summary written by `clt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub p: usize,
    pub realized_c_n: f64,
    pub reps: usize,
    pub mean: f64,
    pub variance: f64,
    pub ks_distance: f64,
    pub cover_rate: f64,
    pub ill_conditioned_rate: f64,
    pub params: riskclt_core::asymptotics::CltParams,
    pub interval: riskclt_core::asymptotics::Interval,
}

/// Output of `risk`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskOutput {
    pub n: usize,
    pub p: usize,
    pub report: RiskReport,
    pub oracle: Option<OracleEstimate>,
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v)
        .map_err(|e| CliError::Io(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn write_manifest(out: &Path, command: ResolvedCommand) -> Result<(), CliError> {
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        out_dir: out.display().to_string(),
        command,
    };
    write_atomic(&out.join("manifest.json"), &to_json(&manifest)?)?;
    Ok(())
}

pub fn execute(cmd: &ResolvedCommand, out: &Path) -> Result<(), CliError> {
    match cmd {
        ResolvedCommand::Clt(cfg) => run_clt(cfg, out),
        ResolvedCommand::Band(cfg) => run_band(cfg, out),
        ResolvedCommand::Mp(cfg) => run_mp(cfg, out),
        ResolvedCommand::Risk(cfg) => run_risk(cfg, out),
    }
}

pub fn run_clt(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if cfg.reps > 100_000 {
        return Err(CliError::Usage("reps is capped at 100000".into()));
    }
    let res = run_experiment(cfg)?;
    write_atomic(
        &out.join("stats.csv"),
        &csv("t", res.stats.iter().map(|&t| fmt_f64(t))),
    )?;
    write_atomic(
        &out.join("hist.csv"),
        &csv(
            "bin_left,bin_right,count",
            res.histogram
                .iter()
                .map(|b| format!("{},{},{}", fmt_f64(b.left), fmt_f64(b.right), b.count)),
        ),
    )?;
    let summary = Summary {
        n: cfg.model.n,
        p: cfg.model.p,
        realized_c_n: cfg.model.c_n(),
        reps: cfg.reps,
        mean: res.mean,
        variance: res.variance,
        ks_distance: res.ks_distance,
        cover_rate: res.cover_rate,
        ill_conditioned_rate: res.ill_conditioned_rate,
        params: res.params,
        interval: res.interval,
    };
    write_atomic(&out.join("summary.json"), &to_json(&summary)?)?;
    write_manifest(out, ResolvedCommand::Clt(cfg.clone()))?;
    println!(
        "clt: n={} p={} c_n={:.6} reps={} cover_rate={:.4} ks={:.4}",
        cfg.model.n,
        cfg.model.p,
        cfg.model.c_n(),
        cfg.reps,
        res.cover_rate,
        res.ks_distance
    );
    Ok(())
}

pub fn run_band(cfg: &BandRun, out: &Path) -> Result<(), CliError> {
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max {
        return Err(CliError::Usage(format!(
            "empty n range [{}, {}]",
            cfg.n_min, cfg.n_max
        )));
    }
    let ns: Vec<usize> = (cfg.n_min..=cfg.n_max).collect();
    let band = double_descent_band(&cfg.model, &ns, cfg.alpha, cfg.risk_type)?;
    write_atomic(
        &out.join("band.csv"),
        &csv(
            "n,c_n,center,lower,upper,valid",
            band.rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.n,
                    fmt_f64(r.c_n),
                    fmt_f64(r.center),
                    fmt_f64(r.lower),
                    fmt_f64(r.upper),
                    r.valid
                )
            }),
        ),
    )?;
    let pairs = detect_more_data_hurt(&band);
    write_atomic(
        &out.join("pairs.csv"),
        &csv(
            "n1,n2,gap",
            pairs
                .iter()
                .map(|p| format!("{},{},{}", p.n1, p.n2, fmt_f64(p.gap))),
        ),
    )?;
    if cfg.grid_steps < 2 || !(cfg.grid_lo < cfg.grid_hi) {
        return Err(CliError::Usage("bad density grid".into()));
    }
    let step = (cfg.grid_hi - cfg.grid_lo) / (cfg.grid_steps - 1) as f64;
    let grid: Vec<f64> = (0..cfg.grid_steps)
        .map(|i| cfg.grid_lo + i as f64 * step)
        .collect();
    let surface = risk_density_surface(&cfg.model, &ns, &grid, cfg.risk_type)?;
    let mut rows = Vec::with_capacity(ns.len() * grid.len());
    for (i, &n) in ns.iter().enumerate() {
        for (j, &x) in grid.iter().enumerate() {
            rows.push(format!("{},{},{}", n, fmt_f64(x), fmt_f64(surface[i][j])));
        }
    }
    write_atomic(&out.join("density.csv"), &csv("n,risk,density", rows))?;

    if let Some(reps) = cfg.mc_reps {
        let mc = mc_overlay(cfg, &band, reps)?;
        write_atomic(&out.join("band_mc.csv"), &csv("n,mc_lower,mc_upper", mc))?;
    }
    write_manifest(out, ResolvedCommand::Band(cfg.clone()))?;
    println!(
        "band: p={} n=[{}, {}] rows={} hurt_pairs={}",
        cfg.model.p,
        cfg.n_min,
        cfg.n_max,
        band.rows.len(),
        pairs.len()
    );
    Ok(())
}

/// Empirical alpha/2 and 1-alpha/2 risk quantiles per valid n, from a small
/// Monte Carlo run, for eyeballing against the analytic band.
fn mc_overlay(
    cfg: &BandRun,
    band: &riskclt_core::sweep::DescentBand,
    reps: usize,
) -> Result<Vec<String>, CliError> {
    if reps == 0 {
        return Err(CliError::Usage("--mc needs reps >= 1".into()));
    }
    let mut rows = Vec::new();
    for row in band.rows.iter().filter(|r| r.valid) {
        let mut model = cfg.model.clone();
        model.n = row.n;
        let mut exp = ExperimentConfig::new(
            model,
            row.theorem.expect("valid row has a theorem"),
            reps,
            cfg.master_seed.wrapping_add(row.n as u64),
        );
        exp.alpha = cfg.alpha;
        exp.risk_type = Some(cfg.risk_type);
        let res = run_experiment(&exp)?;
        let mut risks = res.risks;
        risks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| -> f64 {
            // linear interpolation between order statistics
            let h = p * (risks.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            risks[lo] + (h - lo as f64) * (risks[hi] - risks[lo])
        };
        rows.push(format!(
            "{},{},{}",
            row.n,
            fmt_f64(q(cfg.alpha / 2.0)),
            fmt_f64(q(1.0 - cfg.alpha / 2.0))
        ));
    }
    Ok(rows)
}

pub fn run_mp(cfg: &MpRun, out: &Path) -> Result<(), CliError> {
    if cfg.steps < 2 {
        return Err(CliError::Usage("--steps must be >= 2".into()));
    }
    let law = MpLaw::new(cfg.c)?;
    let step = (law.b - law.a) / (cfg.steps - 1) as f64;
    let mut body = format!("# point_mass_at_zero = {}\n", fmt_f64(law.point_mass_at_zero));
    body.push_str(&csv(
        "x,density",
        (0..cfg.steps).map(|i| {
            let x = law.a + i as f64 * step;
            format!("{},{}", fmt_f64(x), fmt_f64(law.density(x)))
        }),
    ));
    write_atomic(&out.join("density.csv"), &body)?;
    write_manifest(out, ResolvedCommand::Mp(cfg.clone()))?;
    println!(
        "mp: c={} support=[{:.6}, {:.6}] point_mass={:.6}",
        cfg.c, law.a, law.b, law.point_mass_at_zero
    );
    Ok(())
}

pub fn run_risk(cfg: &RiskRun, out: &Path) -> Result<(), CliError> {
    let m = &cfg.model;
    m.validate()?;
    let z = sample_entries(
        m.n,
        m.p,
        &m.entry_dist,
        &mut stream(cfg.master_seed, 0, "entries"),
    );
    let x = riskclt_core::randgen::apply_covariance(&z, &m.sigma_spec)?;
    let design = DesignMatrix::new(x);
    let mode = match m.beta_mode {
        BetaModeKind::Fixed => {
            let mut rng = stream(cfg.master_seed, 0, "beta-direction");
            let g = sample_entries(m.p, 1, &EntryDistribution::StandardNormal, &mut rng);
            let norm: f64 = (0..m.p).map(|i| g[(i, 0)] * g[(i, 0)]).sum::<f64>().sqrt();
            BetaMode::Fixed {
                direction: (0..m.p).map(|i| g[(i, 0)] / norm).collect(),
                r: m.r,
            }
        }
        BetaModeKind::Gaussian => BetaMode::Gaussian { r: m.r },
    };
    let beta = sample_beta(&mode, m.p, &mut stream(cfg.master_seed, 0, "beta"))?;
    let report = risk_report(&design, &m.sigma_spec, m.sigma, &mode, Some(beta.as_ref()))?;
    let oracle = match cfg.oracle_n_test {
        Some(n_test) => Some(mc_risk_oracle(
            &design,
            &m.sigma_spec,
            m.sigma,
            beta.as_ref(),
            n_test,
            &mut stream(cfg.master_seed, 0, "oracle"),
        )?),
        None => None,
    };
    let output = RiskOutput {
        n: m.n,
        p: m.p,
        report,
        oracle,
    };
    write_atomic(&out.join("risk.json"), &to_json(&output)?)?;
    write_manifest(out, ResolvedCommand::Risk(cfg.clone()))?;
    println!(
        "risk: n={} p={} R_x={:.6} R_xb={:.6}",
        m.n, m.p, report.risk_given_x, report.risk_given_x_beta
    );
    Ok(())
}

pub fn run_replay(manifest_path: &Path, out_override: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad manifest: {e}")))?;
    if manifest.artifact_version != ARTIFACT_VERSION {
        return Err(CliError::Usage(format!(
            "manifest version {} not supported (expected {})",
            manifest.artifact_version, ARTIFACT_VERSION
        )));
    }
    let out = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.out_dir.clone().into());
    execute(&manifest.command, &out)
}
