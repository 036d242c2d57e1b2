//! `riskclt`: prediction risk of min-norm least squares, its CLTs and
//! confidence intervals, Monte Carlo reproduction of the coverage
//! experiments, and the sample-wise double-descent band.

mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use riskclt_core::asymptotics::Theorem;
use riskclt_core::montecarlo::{
    BetaModeKind, ExperimentConfig, ModelConfig, RiskType, Standardization, DEFAULT_BINS,
};
use riskclt_core::randgen::{EntryDistribution, SigmaSpec};

use run::{BandRun, CliError, MpRun, RiskRun};

#[derive(Parser)]
#[command(name = "riskclt", version, about = "Risk CLTs for min-norm least squares")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo experiment: standardized statistics, histogram, KS
    /// distance and CI cover rate for one theorem.
    Clt(CltArgs),
    /// Double-descent confidence band over n at fixed p, hurt-pair
    /// detection and the risk-density surface.
    Band(BandArgs),
    /// Marchenko-Pastur density table.
    Mp(MpArgs),
    /// Exact risk report for a single design draw.
    Risk(RiskArgs),
    /// Re-run a saved manifest, reproducing its outputs byte-identically.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl From<TheoremArg> for Theorem {
    fn from(t: TheoremArg) -> Theorem {
        match t {
            TheoremArg::T1 => Theorem::T1RxUnder,
            TheoremArg::T2 => Theorem::T2RxbUnder,
            TheoremArg::T3 => Theorem::T3RxFixedOver,
            TheoremArg::T4 => Theorem::T4RxRandomOver,
            TheoremArg::T5 => Theorem::T5RxbRandomOver,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Under,
    Over,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Normal,
    Gamma,
    StudentT,
}

#[derive(Clone, Copy, ValueEnum)]
enum BetaArg {
    Fixed,
    Gaussian,
}

impl From<BetaArg> for BetaModeKind {
    fn from(b: BetaArg) -> BetaModeKind {
        match b {
            BetaArg::Fixed => BetaModeKind::Fixed,
            BetaArg::Gaussian => BetaModeKind::Gaussian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RiskTypeArg {
    Rx,
    Rxb,
}

impl From<RiskTypeArg> for RiskType {
    fn from(r: RiskTypeArg) -> RiskType {
        match r {
            RiskTypeArg::Rx => RiskType::GivenX,
            RiskTypeArg::Rxb => RiskType::GivenXBeta,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StandardizeArg {
    Practical,
    Theoretical,
}

/// Flags shared by every command that simulates data.
#[derive(Args)]
struct DistFlags {
    /// Entry distribution of the design matrix.
    #[arg(long, value_enum, default_value_t = DistArg::Normal)]
    dist: DistArg,
    /// Gamma shape k (centered-gamma entries; k * scale^2 must be 1).
    #[arg(long, default_value_t = 4.0)]
    gamma_shape: f64,
    /// Gamma scale theta.
    #[arg(long, default_value_t = 0.5)]
    gamma_scale: f64,
    /// Degrees of freedom for scaled Student-t entries (must exceed 4).
    #[arg(long, default_value_t = 6.0)]
    df: f64,
}

impl DistFlags {
    fn resolve(&self) -> EntryDistribution {
        match self.dist {
            DistArg::Normal => EntryDistribution::StandardNormal,
            DistArg::Gamma => EntryDistribution::CenteredGamma {
                shape: self.gamma_shape,
                scale: self.gamma_scale,
            },
            DistArg::StudentT => EntryDistribution::ScaledStudentT { df: self.df },
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var("RISKCLT_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

#[derive(Args)]
struct CltArgs {
    /// Which limit theorem drives the centering, rate and parameters.
    #[arg(long, value_enum)]
    theorem: TheoremArg,
    /// Optional sanity check against the theorem's regime.
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Feature dimension.
    #[arg(long)]
    p: usize,
    /// Aspect ratio p/n; n is set to round(p/c). Conflicts with --n.
    #[arg(long, conflicts_with = "n")]
    c: Option<f64>,
    /// Sample size. Conflicts with --c.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[command(flatten)]
    dist: DistFlags,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Master seed; falls back to RISKCLT_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Beta mode; defaults to fixed for t3, gaussian otherwise.
    #[arg(long, value_enum)]
    beta: Option<BetaArg>,
    /// Standardize with practical (finite-p corrected) or theoretical
    /// parameters.
    #[arg(long, value_enum, default_value_t = StandardizeArg::Practical)]
    standardize: StandardizeArg,
    /// Override the risk type the statistic is computed from.
    #[arg(long, value_enum)]
    risk: Option<RiskTypeArg>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BandArgs {
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    n_min: usize,
    #[arg(long)]
    n_max: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = RiskTypeArg::Rxb)]
    risk: RiskTypeArg,
    #[arg(long, value_enum, default_value_t = BetaArg::Gaussian)]
    beta: BetaArg,
    #[command(flatten)]
    dist: DistFlags,
    #[arg(long, default_value_t = 0.0)]
    grid_lo: f64,
    #[arg(long, default_value_t = 5.0)]
    grid_hi: f64,
    #[arg(long, default_value_t = 200)]
    grid_steps: usize,
    /// Overlay empirical risk quantiles from this many repetitions per n.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct MpArgs {
    /// Aspect ratio of the Marchenko-Pastur law (> 0).
    #[arg(long, allow_hyphen_values = true)]
    c: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[command(flatten)]
    dist: DistFlags,
    #[arg(long, value_enum, default_value_t = BetaArg::Gaussian)]
    beta: BetaArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Attach a Monte Carlo oracle estimate over this many test points.
    #[arg(long)]
    oracle: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Path to a manifest.json from a previous run.
    #[arg(long)]
    manifest: PathBuf,
    /// Optional output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_clt(args: &CltArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let theorem: Theorem = args.theorem.into();
    let n = match (args.c, args.n) {
        (Some(c), None) => {
            if !(c > 0.0) {
                return Err(CliError::Usage("--c must be positive".into()));
            }
            let n = (args.p as f64 / c).round() as usize;
            if n == 0 {
                return Err(CliError::Usage("--c implies n = 0".into()));
            }
            n
        }
        (None, Some(n)) => n,
        (None, None) => return Err(CliError::Usage("one of --c or --n is required".into())),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    };
    if let Some(regime) = args.regime {
        let over = matches!(regime, RegimeArg::Over);
        if over != theorem.overparametrized() {
            return Err(CliError::Usage(format!(
                "--regime contradicts the theorem (t{} is {})",
                match theorem {
                    Theorem::T1RxUnder => 1,
                    Theorem::T2RxbUnder => 2,
                    Theorem::T3RxFixedOver => 3,
                    Theorem::T4RxRandomOver => 4,
                    Theorem::T5RxbRandomOver => 5,
                },
                if theorem.overparametrized() {
                    "over-parametrized"
                } else {
                    "under-parametrized"
                }
            )));
        }
    }
    let beta_mode = args.beta.map(BetaModeKind::from).unwrap_or(match theorem {
        Theorem::T3RxFixedOver => BetaModeKind::Fixed,
        _ => BetaModeKind::Gaussian,
    });
    let model = ModelConfig {
        n,
        p: args.p,
        sigma: args.sigma,
        r: args.r,
        entry_dist: args.dist.resolve(),
        sigma_spec: SigmaSpec::identity(),
        beta_mode,
    };
    let mut cfg = ExperimentConfig::new(model, theorem, args.reps, resolve_seed(args.seed));
    cfg.alpha = args.alpha;
    cfg.bins = args.bins;
    cfg.workers = args.workers;
    cfg.standardization = match args.standardize {
        StandardizeArg::Practical => Standardization::Practical,
        StandardizeArg::Theoretical => Standardization::Theoretical,
    };
    cfg.risk_type = args.risk.map(RiskType::from);
    Ok((cfg, args.out.clone()))
}

fn dispatch(cmd: &Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Clt(args) => {
            let (cfg, out) = resolve_clt(args)?;
            println!(
                "resolved: n={} (realized c_n = {})",
                cfg.model.n,
                cfg.model.c_n()
            );
            run::run_clt(&cfg, &out)
        }
        Cmd::Band(args) => {
            let cfg = BandRun {
                model: ModelConfig {
                    n: 1, // swept over [n_min, n_max]
                    p: args.p,
                    sigma: args.sigma,
                    r: args.r,
                    entry_dist: args.dist.resolve(),
                    sigma_spec: SigmaSpec::identity(),
                    beta_mode: args.beta.into(),
                },
                n_min: args.n_min,
                n_max: args.n_max,
                alpha: args.alpha,
                risk_type: args.risk.into(),
                grid_lo: args.grid_lo,
                grid_hi: args.grid_hi,
                grid_steps: args.grid_steps,
                mc_reps: args.mc,
                master_seed: resolve_seed(args.seed),
            };
            run::run_band(&cfg, &args.out)
        }
        Cmd::Mp(args) => run::run_mp(
            &MpRun {
                c: args.c,
                steps: args.steps,
            },
            &args.out,
        ),
        Cmd::Risk(args) => {
            let cfg = RiskRun {
                model: ModelConfig {
                    n: args.n,
                    p: args.p,
                    sigma: args.sigma,
                    r: args.r,
                    entry_dist: args.dist.resolve(),
                    sigma_spec: SigmaSpec::identity(),
                    beta_mode: args.beta.into(),
                },
                master_seed: resolve_seed(args.seed),
                oracle_n_test: args.oracle,
            };
            run::run_risk(&cfg, &args.out)
        }
        Cmd::Replay(args) => run::run_replay(&args.manifest, args.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
