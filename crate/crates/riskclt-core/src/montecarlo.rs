//! Repetition harness: standardized-statistic samples, histograms,
//! normality distance and confidence-interval cover rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    clt_params, confidence_interval, standardize, standardize_theoretical, CltParams, Interval,
    Theorem,
};
use crate::error::{Error, Result};
use crate::estimator::{singular_values_only, DesignMatrix};
use crate::normal;
use crate::randgen::{
    apply_covariance, fourth_moment, sample_beta, sample_entries, BetaMode, EntryDistribution,
    SigmaSpec,
};
use crate::risk::{self, variance_identity_from_svals};
use crate::rng::stream;

/// How beta is produced across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaModeKind {
    /// One random unit direction drawn per experiment, scaled to norm r,
    /// held fixed across repetitions (assumption (C1)).
    Fixed,
    /// Fresh `N(0, (r^2/p) I)` draw per repetition (assumption (C2)).
    Gaussian,
}

/// Which conditional risk a repetition reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskType {
    GivenX,
    GivenXBeta,
}

/// Which parameter pair standardizes the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standardization {
    /// Finite-p corrected parameters (the tilde-corrected versions used for the
    /// sqrt(p)-rate theorems; identical to theoretical otherwise).
    Practical,
    /// Uncorrected limit parameters.
    Theoretical,
}

/// One simulated world: dimensions, noise, signal, entry law, covariance
/// and beta mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub r: f64,
    pub entry_dist: EntryDistribution,
    pub sigma_spec: SigmaSpec,
    pub beta_mode: BetaModeKind,
}

impl ModelConfig {
    pub fn c_n(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParameter("n and p must be >= 1".into()));
        }
        if !(self.sigma >= 0.0) || !(self.r >= 0.0) {
            return Err(Error::InvalidParameter(
                "sigma and r must be nonnegative".into(),
            ));
        }
        self.entry_dist.validate()?;
        self.sigma_spec.validate()?;
        if let Some(d) = self.sigma_spec.dim() {
            if d != self.p {
                return Err(Error::DimensionMismatch(format!(
                    "covariance dimension {d} != p = {}",
                    self.p
                )));
            }
        }
        Ok(())
    }
}

/// Full experiment specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub theorem: Theorem,
    pub reps: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub bins: usize,
    /// Worker-count hint; 0 means the global default pool.
    pub workers: usize,
    pub standardization: Standardization,
    /// Overrides the theorem's natural risk type. Lets the harness report
    /// `R_X` under a random-beta over-parametrized model, where the two
    /// conditional risks differ.
    pub risk_type: Option<RiskType>,
}

impl ExperimentConfig {
    pub fn new(model: ModelConfig, theorem: Theorem, reps: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            model,
            theorem,
            reps,
            master_seed,
            alpha: 0.05,
            bins: DEFAULT_BINS,
            workers: 0,
            standardization: Standardization::Practical,
            risk_type: None,
        }
    }

    fn effective_risk_type(&self) -> RiskType {
        self.risk_type.unwrap_or(match self.theorem {
            Theorem::T2RxbUnder | Theorem::T5RxbRandomOver => RiskType::GivenXBeta,
            _ => RiskType::GivenX,
        })
    }
}

pub const DEFAULT_BINS: usize = 40;
pub const HIST_RANGE: (f64, f64) = (-4.0, 4.0);

/// One histogram bin; the two overflow sentinels use infinite edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

/// Aggregated output of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub stats: Vec<f64>,
    pub histogram: Vec<HistBin>,
    pub ks_distance: f64,
    pub cover_rate: f64,
    pub mean: f64,
    pub variance: f64,
    /// Fraction of repetitions whose design was flagged ill-conditioned.
    pub ill_conditioned_rate: f64,
    pub params: CltParams,
    pub interval: Interval,
    /// Per-repetition raw risks, in repetition order.
    pub risks: Vec<f64>,
}

/// Runs `cfg.reps` independent repetitions and aggregates deterministically
/// in repetition order, whatever the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.model.validate()?;
    if cfg.reps == 0 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
    }
    let m = &cfg.model;
    let c_n = m.c_n();
    let nu4 = fourth_moment(&m.entry_dist)?;
    let params = clt_params(cfg.theorem, c_n, c_n, m.p, m.sigma, m.r, nu4)?;
    let interval = confidence_interval(&params, m.p, cfg.alpha)?;
    let risk_type = cfg.effective_risk_type();

    // Fixed-beta experiments share one direction across repetitions.
    let fixed_direction = match m.beta_mode {
        BetaModeKind::Fixed => {
            let mut rng = stream(cfg.master_seed, 0, "beta-direction");
            let g = sample_entries(m.p, 1, &EntryDistribution::StandardNormal, &mut rng);
            let norm: f64 = (0..m.p).map(|i| g[(i, 0)] * g[(i, 0)]).sum::<f64>().sqrt();
            Some((0..m.p).map(|i| g[(i, 0)] / norm).collect::<Vec<f64>>())
        }
        BetaModeKind::Gaussian => None,
    };

    let run = || -> Result<Vec<(f64, bool)>> {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| one_repetition(cfg, rep as u64, risk_type, fixed_direction.as_deref()))
            .collect()
    };
    let per_rep = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };

    let risks: Vec<f64> = per_rep.iter().map(|&(r, _)| r).collect();
    let ill = per_rep.iter().filter(|&&(_, f)| f).count();
    let stats: Vec<f64> = risks
        .iter()
        .map(|&risk| match cfg.standardization {
            Standardization::Practical => standardize(risk, &params, m.p),
            Standardization::Theoretical => standardize_theoretical(risk, &params, m.p),
        })
        .collect();

    let covered = risks.iter().filter(|&&r| interval.contains(r)).count();
    let (mean, variance) = mean_variance(&stats);
    let mut sorted = stats.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks_distance = ks_statistic(&sorted)?;
    let histogram = histogram(&stats, cfg.bins, HIST_RANGE)?;

    Ok(ExperimentResult {
        stats,
        histogram,
        ks_distance,
        cover_rate: covered as f64 / cfg.reps as f64,
        mean,
        variance,
        ill_conditioned_rate: ill as f64 / cfg.reps as f64,
        params,
        interval,
        risks,
    })
}

fn one_repetition(
    cfg: &ExperimentConfig,
    rep: u64,
    risk_type: RiskType,
    fixed_direction: Option<&[f64]>,
) -> Result<(f64, bool)> {
    let m = &cfg.model;
    let z = sample_entries(
        m.n,
        m.p,
        &m.entry_dist,
        &mut stream(cfg.master_seed, rep, "entries"),
    );
    let x = if m.sigma_spec.is_identity() {
        z
    } else {
        apply_covariance(&z, &m.sigma_spec)?
    };

    // The rate-p statistics with identity covariance depend on the design
    // only through its singular values; skip the factored SVD there.
    let values_only = m.sigma_spec.is_identity()
        && matches!(
            (m.beta_mode, risk_type),
            (BetaModeKind::Gaussian, RiskType::GivenX)
        );
    if values_only {
        let svals = singular_values_only(x.as_ref());
        let (variance, rank) = variance_identity_from_svals(&svals, m.n, m.p, m.sigma);
        let bias = m.r * m.r * (1.0 - rank as f64 / m.p as f64);
        let ill = rank > 0 && svals[rank - 1] < 1e-6 * svals[0];
        return Ok((bias + variance, ill));
    }

    let design = DesignMatrix::new(x);
    let mode = match m.beta_mode {
        BetaModeKind::Fixed => BetaMode::Fixed {
            direction: fixed_direction.expect("fixed direction missing").to_vec(),
            r: m.r,
        },
        BetaModeKind::Gaussian => BetaMode::Gaussian { r: m.r },
    };
    let beta_draw = match m.beta_mode {
        BetaModeKind::Gaussian => Some(sample_beta(
            &mode,
            m.p,
            &mut stream(cfg.master_seed, rep, "beta"),
        )?),
        BetaModeKind::Fixed => None,
    };
    let report = risk::risk_report(
        &design,
        &m.sigma_spec,
        m.sigma,
        &mode,
        beta_draw.as_ref().map(|b| b.as_ref()),
    )?;
    let risk = match risk_type {
        RiskType::GivenX => report.risk_given_x,
        RiskType::GivenXBeta => report.risk_given_x_beta,
    };
    Ok((risk, report.ill_conditioned))
}

/// Sup-distance between the empirical CDF of `sorted` and the standard
/// normal CDF. Input must be sorted ascending.
pub fn ks_statistic(sorted: &[f64]) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidParameter(
            "ks_statistic needs at least one sample".into(),
        ));
    }
    let m = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal::cdf(x);
        d = d.max((i as f64 + 1.0) / m - phi).max(phi - i as f64 / m);
    }
    Ok(d)
}

/// Fraction of `risks[i]` inside `intervals[i]` (closed on both ends).
pub fn cover_rate(risks: &[f64], intervals: &[Interval]) -> Result<f64> {
    if risks.len() != intervals.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} risks vs {} intervals",
            risks.len(),
            intervals.len()
        )));
    }
    if risks.is_empty() {
        return Err(Error::InvalidParameter("cover_rate needs samples".into()));
    }
    let hits = risks
        .iter()
        .zip(intervals)
        .filter(|(r, iv)| iv.contains(**r))
        .count();
    Ok(hits as f64 / risks.len() as f64)
}

/// Equal-width bins over `[lo, hi]`; out-of-range samples land in overflow
/// sentinel bins with infinite outer edges, appended only when occupied so
/// counts always sum to `samples.len()`.
pub fn histogram(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<Vec<HistBin>> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be >= 1".into()));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "bad histogram range [{lo}, {hi})"
        )));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut under = 0u64;
    let mut over = 0u64;
    for &x in samples {
        if x < lo {
            under += 1;
        } else if x > hi {
            over += 1;
        } else {
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
    }
    let mut out = Vec::with_capacity(bins + 2);
    if under > 0 {
        out.push(HistBin {
            left: f64::NEG_INFINITY,
            right: lo,
            count: under,
        });
    }
    for (i, &count) in counts.iter().enumerate() {
        out.push(HistBin {
            left: lo + i as f64 * width,
            right: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            count,
        });
    }
    if over > 0 {
        out.push(HistBin {
            left: hi,
            right: f64::INFINITY,
            count: over,
        });
    }
    Ok(out)
}

/// One-pass (Welford) mean and sample variance; deterministic for a given
/// input order.
pub fn mean_variance(samples: &[f64]) -> (f64, f64) {
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = if samples.len() > 1 {
        m2 / (samples.len() - 1) as f64
    } else {
        0.0
    };
    (mean, var)
}
