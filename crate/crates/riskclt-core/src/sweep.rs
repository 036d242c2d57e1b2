//! Sample-wise double descent: pointwise confidence band over n at fixed p,
//! the implied risk-density surface, and "more data hurt" pair detection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{clt_params, confidence_interval, CltParams, Theorem};
use crate::error::{Error, Result};
use crate::montecarlo::{BetaModeKind, ModelConfig, RiskType};
use crate::normal;
use crate::randgen::fourth_moment;

/// One band row. Invalid rows (interpolation-threshold n, or a regime whose
/// parameters are undefined for the model) keep their place with NaN values
/// so plots show a gap instead of interpolating across the pole.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BandRow {
    pub n: usize,
    pub c_n: f64,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub valid: bool,
    pub theorem: Option<Theorem>,
}

/// Pointwise confidence band of the prediction risk over a range of n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentBand {
    pub p: usize,
    pub alpha: f64,
    pub rows: Vec<BandRow>,
}

/// A pair of sample sizes where more data provably hurts: the whole
/// interval at the larger n sits above the whole interval at the smaller n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurtPair {
    pub n1: usize,
    pub n2: usize,
    /// `lower(n2) - upper(n1) > 0`.
    pub gap: f64,
}

/// Picks the theorem matching the regime, beta mode and risk type.
pub fn select_theorem(c_n: f64, beta_mode: BetaModeKind, risk_type: RiskType) -> Theorem {
    if c_n < 1.0 {
        match risk_type {
            RiskType::GivenX => Theorem::T1RxUnder,
            RiskType::GivenXBeta => Theorem::T2RxbUnder,
        }
    } else {
        match beta_mode {
            BetaModeKind::Fixed => Theorem::T3RxFixedOver,
            BetaModeKind::Gaussian => match risk_type {
                RiskType::GivenX => Theorem::T4RxRandomOver,
                RiskType::GivenXBeta => Theorem::T5RxbRandomOver,
            },
        }
    }
}

fn row_params(model: &ModelConfig, n: usize, risk_type: RiskType) -> Result<CltParams> {
    let p = model.p;
    let c_n = p as f64 / n as f64;
    let theorem = select_theorem(c_n, model.beta_mode, risk_type);
    let nu4 = fourth_moment(&model.entry_dist)?;
    clt_params(theorem, c_n, c_n, p, model.sigma, model.r, nu4)
}

/// Confidence band of the risk over `n_range` at fixed `p = model.p`
/// (`model.n` is ignored). Rows come back sorted by n.
pub fn double_descent_band(
    model: &ModelConfig,
    n_range: &[usize],
    alpha: f64,
    risk_type: RiskType,
) -> Result<DescentBand> {
    if n_range.is_empty() {
        return Err(Error::InvalidParameter("n_range must be nonempty".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
    }
    let p = model.p;
    let mut ns: Vec<usize> = n_range.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns[0] == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let rows: Vec<BandRow> = ns
        .par_iter()
        .map(|&n| {
            let c_n = p as f64 / n as f64;
            let theorem = select_theorem(c_n, model.beta_mode, risk_type);
            match row_params(model, n, risk_type)
                .and_then(|params| Ok((params, confidence_interval(&params, p, alpha)?)))
            {
                Ok((params, iv)) => BandRow {
                    n,
                    c_n,
                    center: params.center,
                    lower: iv.lower,
                    upper: iv.upper,
                    valid: true,
                    theorem: Some(theorem),
                },
                Err(_) => BandRow {
                    n,
                    c_n,
                    center: f64::NAN,
                    lower: f64::NAN,
                    upper: f64::NAN,
                    valid: false,
                    theorem: None,
                },
            }
        })
        .collect();
    Ok(DescentBand { p, alpha, rows })
}

/// All pairs `n1 < n2 < p`, both valid, whose intervals separate upward:
/// `lower(n2) > upper(n1)`. Sorted by gap, largest first.
pub fn detect_more_data_hurt(band: &DescentBand) -> Vec<HurtPair> {
    let over: Vec<&BandRow> = band
        .rows
        .iter()
        .filter(|r| r.valid && r.n < band.p)
        .collect();
    let mut pairs = Vec::new();
    for (i, r1) in over.iter().enumerate() {
        for r2 in &over[i + 1..] {
            let gap = r2.lower - r1.upper;
            if gap > 0.0 {
                pairs.push(HurtPair {
                    n1: r1.n,
                    n2: r2.n,
                    gap,
                });
            }
        }
    }
    pairs.sort_by(|a, b| b.gap.partial_cmp(&a.gap).unwrap());
    pairs
}

/// For each n, the normal density the matching CLT implies for the risk,
/// evaluated on `grid`: mean `center + mu/scale`, std `sqrt(sigma2)/scale`
/// (effective parameters). Invalid rows are all zero.
pub fn risk_density_surface(
    model: &ModelConfig,
    n_range: &[usize],
    grid: &[f64],
    risk_type: RiskType,
) -> Result<Vec<Vec<f64>>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "density grid must be strictly increasing".into(),
        ));
    }
    let p = model.p;
    Ok(n_range
        .par_iter()
        .map(|&n| match row_params(model, n, risk_type) {
            Ok(params) => {
                let scale = params.rate.scale(p);
                let (mu, sigma2) = params.effective();
                let mean = params.center + mu / scale;
                let sd = sigma2.sqrt() / scale;
                grid.iter()
                    .map(|&x| normal::pdf((x - mean) / sd) / sd)
                    .collect()
            }
            Err(_) => vec![0.0; grid.len()],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::{EntryDistribution, SigmaSpec};

    fn model(p: usize, beta_mode: BetaModeKind) -> ModelConfig {
        ModelConfig {
            n: 1, // ignored by the sweep
            p,
            sigma: 1.0,
            r: 1.0,
            entry_dist: EntryDistribution::StandardNormal,
            sigma_spec: SigmaSpec::identity(),
            beta_mode,
        }
    }

    fn full_range(p: usize) -> Vec<usize> {
        (1..=2 * p).collect()
    }

    #[test]
    fn band_centers_match_hand_values() {
        let m = model(100, BetaModeKind::Gaussian);
        let band =
            double_descent_band(&m, &full_range(100), 0.05, RiskType::GivenXBeta).unwrap();
        let at = |n: usize| band.rows.iter().find(|r| r.n == n).unwrap();
        // n = 200: c_n = 0.5, T2 center = 1.0
        let r = at(200);
        assert_eq!(r.theorem, Some(Theorem::T2RxbUnder));
        assert!((r.center - 1.0).abs() < 1e-12);
        // n = 50: c_n = 2, T5 center = 1.5
        let r = at(50);
        assert_eq!(r.theorem, Some(Theorem::T5RxbRandomOver));
        assert!((r.center - 1.5).abs() < 1e-12);
        // n = p: inside the guard band
        let r = at(100);
        assert!(!r.valid);
        assert!(r.center.is_nan());
        // rows sorted, all n present
        assert_eq!(band.rows.len(), 200);
        assert!(band.rows.windows(2).all(|w| w[0].n < w[1].n));
    }

    #[test]
    fn band_rows_bracket_their_midpoint() {
        let m = model(80, BetaModeKind::Fixed);
        let band = double_descent_band(&m, &full_range(80), 0.05, RiskType::GivenX).unwrap();
        for r in band.rows.iter().filter(|r| r.valid) {
            assert!(r.lower <= r.upper);
            assert!(r.lower <= r.center + (r.upper - r.lower) && r.upper >= r.lower);
            // midpoint of [L, U] is center + mu/scale, inside by construction
            let mid = 0.5 * (r.lower + r.upper);
            assert!(r.lower <= mid && mid <= r.upper);
        }
    }

    #[test]
    fn regime_dispatch_consistent() {
        let m = model(60, BetaModeKind::Gaussian);
        let band = double_descent_band(&m, &full_range(60), 0.05, RiskType::GivenX).unwrap();
        for r in band.rows.iter().filter(|r| r.valid) {
            match r.theorem.unwrap() {
                Theorem::T1RxUnder | Theorem::T2RxbUnder => assert!(r.c_n < 1.0),
                _ => assert!(r.c_n > 1.0),
            }
        }
    }

    #[test]
    fn underparametrized_center_strictly_decreasing() {
        let m = model(50, BetaModeKind::Gaussian);
        let band =
            double_descent_band(&m, &full_range(50), 0.05, RiskType::GivenXBeta).unwrap();
        let under: Vec<&BandRow> = band.rows.iter().filter(|r| r.valid && r.n > 50).collect();
        assert!(under.len() > 40);
        for w in under.windows(2) {
            assert!(w[1].center < w[0].center);
        }
    }

    #[test]
    fn hurt_pairs_found_in_figure_setting() {
        let m = model(100, BetaModeKind::Gaussian);
        let band =
            double_descent_band(&m, &full_range(100), 0.05, RiskType::GivenXBeta).unwrap();
        let pairs = detect_more_data_hurt(&band);
        assert!(!pairs.is_empty());
        assert!(pairs
            .iter()
            .any(|pr| pr.n1 < 20 && pr.n2 > 80));
        // defining inequality re-checked directly against the band
        let row = |n: usize| band.rows.iter().find(|r| r.n == n).unwrap();
        for pr in &pairs {
            assert!(pr.n1 < pr.n2 && pr.n2 < 100);
            assert!(pr.gap > 0.0);
            assert!((row(pr.n2).lower - row(pr.n1).upper - pr.gap).abs() < 1e-15);
        }
        // sorted by gap descending
        assert!(pairs.windows(2).all(|w| w[0].gap >= w[1].gap));
    }

    #[test]
    fn hurt_pairs_empty_without_overparametrized_rows() {
        let m = model(30, BetaModeKind::Gaussian);
        let ns: Vec<usize> = (31..=90).collect();
        let band = double_descent_band(&m, &ns, 0.05, RiskType::GivenXBeta).unwrap();
        assert!(detect_more_data_hurt(&band).is_empty());
    }

    #[test]
    fn narrower_intervals_never_lose_pairs() {
        let m = model(100, BetaModeKind::Gaussian);
        let wide = double_descent_band(&m, &full_range(100), 0.01, RiskType::GivenXBeta).unwrap();
        let narrow =
            double_descent_band(&m, &full_range(100), 0.5, RiskType::GivenXBeta).unwrap();
        assert!(
            detect_more_data_hurt(&narrow).len() >= detect_more_data_hurt(&wide).len()
        );
    }

    #[test]
    fn density_rows_normalize_and_drift() {
        let m = model(100, BetaModeKind::Gaussian);
        let ns: Vec<usize> = vec![20, 40, 60, 80, 100];
        // grid wide enough to cover +-6 sd of every row
        let grid: Vec<f64> = (0..4000).map(|i| i as f64 * 0.005).collect();
        let surface = risk_density_surface(&m, &ns, &grid, RiskType::GivenXBeta).unwrap();
        let argmax = |row: &[f64]| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let mut last_peak = 0usize;
        for (i, row) in surface.iter().enumerate() {
            if ns[i] == 100 {
                assert!(row.iter().all(|&v| v == 0.0));
                continue;
            }
            let integral: f64 = row
                .windows(2)
                .map(|w| 0.5 * (w[0] + w[1]) * 0.005)
                .sum();
            assert!((integral - 1.0).abs() < 1e-3, "n = {}: {integral}", ns[i]);
            let peak = argmax(row);
            assert!(peak > last_peak, "peak should drift upward as n -> p");
            last_peak = peak;
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let m = model(10, BetaModeKind::Gaussian);
        assert!(double_descent_band(&m, &[], 0.05, RiskType::GivenX).is_err());
        assert!(double_descent_band(&m, &[5], 0.0, RiskType::GivenX).is_err());
        assert!(double_descent_band(&m, &[0, 5], 0.05, RiskType::GivenX).is_err());
        assert!(risk_density_surface(&m, &[5], &[1.0, 1.0], RiskType::GivenX).is_err());
    }
}
