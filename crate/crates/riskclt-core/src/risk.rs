//! Exact finite-sample bias, variance and prediction risk for one design
//! draw, plus a brute-force Monte Carlo oracle for the closed forms.

use faer::{Col, ColRef, Mat};

use crate::error::{Error, Result};
use crate::estimator::DesignMatrix;
use crate::randgen::{apply_covariance, sample_entries, sample_noise, BetaMode, EntryDistribution, SigmaSpec};
use crate::rng::Stream;

/// Bias/variance/risk for both conditioning types.
///
/// The decomposition identities `risk = bias + variance` hold with the same
/// floating-point additions used to build the struct.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RiskReport {
    /// `B_X`: bias conditioning on X only (beta averaged out in the
    /// Gaussian mode).
    pub bias_given_x: f64,
    /// `B_{X,beta}`: bias conditioning on X and beta.
    pub bias_given_x_beta: f64,
    /// `V_X = V_{X,beta} = sigma^2/n Tr(Sigma_hat^+ Sigma)`.
    pub variance: f64,
    pub risk_given_x: f64,
    pub risk_given_x_beta: f64,
    pub ill_conditioned: bool,
}

/// `sigma^2/n Tr(Sigma_hat^+ Sigma)`, computed spectrally as
/// `sigma^2 * sum_k (v_k' Sigma v_k) / s_k^2` over kept singular values.
pub fn variance_term(x: &DesignMatrix, sigma_spec: &SigmaSpec, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..x.rank() {
        let s = x.singular_values()[k];
        let q = sigma_spec.quadratic_form(x.v().col(k));
        acc += q / (s * s);
    }
    sigma * sigma * acc
}

/// Identity-covariance fast path used by the repetition harness: only the
/// singular values of X are needed. Returns `(V, rank)`.
pub fn variance_identity_from_svals(svals: &[f64], n: usize, p: usize, sigma: f64) -> (f64, usize) {
    let s_max = svals.first().copied().unwrap_or(0.0);
    let tol = usize::max(n, p) as f64 * f64::EPSILON * s_max * s_max;
    let mut acc = 0.0;
    let mut rank = 0;
    for &s in svals {
        if s * s > tol {
            acc += 1.0 / (s * s);
            rank += 1;
        }
    }
    (sigma * sigma * acc, rank)
}

/// `B_{X,beta} = beta' Pi Sigma Pi beta`, computed as the Sigma-quadratic
/// form of the null-space component of beta.
pub fn bias_given_beta(
    x: &DesignMatrix,
    sigma_spec: &SigmaSpec,
    beta: ColRef<'_, f64>,
) -> Result<f64> {
    let proj = x.row_projection(beta)?;
    let null_part = beta - &proj;
    Ok(sigma_spec.quadratic_form(null_part.as_ref()))
}

/// `B_X` under the Gaussian beta mode: `(r^2/p) Tr(Pi Sigma Pi)`, which is
/// `r^2 (1 - rank/p)` for identity Sigma.
pub fn bias_random_beta(x: &DesignMatrix, sigma_spec: &SigmaSpec, r: f64) -> f64 {
    let p = x.ncols();
    let mut proj_trace = 0.0;
    for k in 0..x.rank() {
        proj_trace += sigma_spec.quadratic_form(x.v().col(k));
    }
    // clamp the roundoff-negative full-rank case
    ((r * r / p as f64) * (sigma_spec.trace(p) - proj_trace)).max(0.0)
}

/// Assembles a full report. `beta_draw` is required in the Gaussian mode
/// (it is the realized beta the conditional-on-beta risk refers to).
pub fn risk_report(
    x: &DesignMatrix,
    sigma_spec: &SigmaSpec,
    sigma: f64,
    beta_mode: &BetaMode,
    beta_draw: Option<ColRef<'_, f64>>,
) -> Result<RiskReport> {
    let variance = variance_term(x, sigma_spec, sigma);
    let (bias_given_x, bias_given_x_beta) = match beta_mode {
        BetaMode::Fixed { direction, r } => {
            let beta = Col::from_fn(direction.len(), |i| r * direction[i]);
            let b = bias_given_beta(x, sigma_spec, beta.as_ref())?;
            (b, b)
        }
        BetaMode::Gaussian { r } => {
            let draw = beta_draw.ok_or_else(|| {
                Error::InvalidParameter(
                    "gaussian beta mode requires the realized beta draw".into(),
                )
            })?;
            (
                bias_random_beta(x, sigma_spec, *r),
                bias_given_beta(x, sigma_spec, draw)?,
            )
        }
    };
    Ok(RiskReport {
        bias_given_x,
        bias_given_x_beta,
        variance,
        risk_given_x: bias_given_x + variance,
        risk_given_x_beta: bias_given_x_beta + variance,
        ill_conditioned: x.is_ill_conditioned(),
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_err: f64,
}

const ORACLE_NOISE_REDRAWS: usize = 200;
const ORACLE_CHUNK: usize = 1024;

/// Brute-force estimate of `R_{X,beta}`: refits the min-norm estimator on
/// `ORACLE_NOISE_REDRAWS` fresh noise vectors, then averages the squared
/// prediction error over `n_test` fresh test points `x0 = Sigma^{1/2} z`.
/// Independent of the closed-form path it checks.
pub fn mc_risk_oracle(
    x: &DesignMatrix,
    sigma_spec: &SigmaSpec,
    sigma: f64,
    beta: ColRef<'_, f64>,
    n_test: usize,
    rng: &mut Stream,
) -> Result<OracleEstimate> {
    if beta.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "beta length {} != p = {}",
            beta.nrows(),
            x.ncols()
        )));
    }
    let n = x.nrows();
    let p = x.ncols();
    let xb = x.matrix() * beta;
    let mut deviations = Mat::<f64>::zeros(p, ORACLE_NOISE_REDRAWS);
    for j in 0..ORACLE_NOISE_REDRAWS {
        let eps = sample_noise(n, sigma, rng);
        let y = &xb + &eps;
        let beta_hat = x.min_norm_lsq(y.as_ref())?;
        for i in 0..p {
            deviations[(i, j)] = beta_hat[i] - beta[i];
        }
    }
    mc_mean_quadratic(&deviations, sigma_spec, n_test, rng)
}

/// Monte Carlo mean of `(x0' v)^2` for a fixed vector `v`; converges to
/// `v' Sigma v`.
pub fn mc_quadratic_form(
    v: ColRef<'_, f64>,
    sigma_spec: &SigmaSpec,
    n_test: usize,
    rng: &mut Stream,
) -> Result<OracleEstimate> {
    let mut m = Mat::<f64>::zeros(v.nrows(), 1);
    for i in 0..v.nrows() {
        m[(i, 0)] = v[i];
    }
    mc_mean_quadratic(&m, sigma_spec, n_test, rng)
}

fn mc_mean_quadratic(
    vs: &Mat<f64>,
    sigma_spec: &SigmaSpec,
    n_test: usize,
    rng: &mut Stream,
) -> Result<OracleEstimate> {
    if n_test == 0 {
        return Err(Error::InvalidParameter("n_test must be >= 1".into()));
    }
    let p = vs.nrows();
    let ncols = vs.ncols();
    let cols = ncols as f64;
    // Welford over per-test-point means, plus per-column totals so the
    // scatter across noise redraws (shared by every test point) also shows
    // up in the reported standard error.
    let mut count = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    let mut col_sums = vec![0.0f64; ncols];
    let mut remaining = n_test;
    while remaining > 0 {
        let m = remaining.min(ORACLE_CHUNK);
        let z = sample_entries(m, p, &EntryDistribution::StandardNormal, rng);
        let x0 = apply_covariance(&z, sigma_spec)?;
        let errs = &x0 * vs; // m x cols
        for t in 0..m {
            let mut row_mean = 0.0;
            for (j, sum) in col_sums.iter_mut().enumerate() {
                let e = errs[(t, j)];
                row_mean += e * e;
                *sum += e * e;
            }
            row_mean /= cols;
            count += 1;
            let delta = row_mean - mean;
            mean += delta / count as f64;
            m2 += delta * (row_mean - mean);
        }
        remaining -= m;
    }
    let var_test = if count > 1 { m2 / (count - 1) as f64 } else { 0.0 };
    let se2_test = var_test / count as f64;
    let se2_cols = if ncols > 1 {
        let col_means: Vec<f64> = col_sums.iter().map(|s| s / count as f64).collect();
        let cm = col_means.iter().sum::<f64>() / cols;
        let cv = col_means.iter().map(|q| (q - cm) * (q - cm)).sum::<f64>() / (cols - 1.0);
        cv / cols
    } else {
        0.0
    };
    Ok(OracleEstimate {
        mean,
        std_err: (se2_test + se2_cols).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::{sample_beta, SigmaSpec};
    use crate::rng::stream;

    fn gaussian_design(n: usize, p: usize, seed: u64) -> DesignMatrix {
        DesignMatrix::new(sample_entries(
            n,
            p,
            &EntryDistribution::StandardNormal,
            &mut stream(seed, 0, "entries"),
        ))
    }

    #[test]
    fn variance_identity_spectrum() {
        // X = sqrt(n) I so Sigma_hat = I; V = p/n.
        let n = 6;
        let x = Mat::from_fn(n, n, |i, j| if i == j { (n as f64).sqrt() } else { 0.0 });
        let d = DesignMatrix::new(x);
        let v = variance_term(&d, &SigmaSpec::identity(), 1.0);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_zero_sigma() {
        let d = gaussian_design(10, 4, 1);
        assert_eq!(variance_term(&d, &SigmaSpec::identity(), 0.0), 0.0);
    }

    #[test]
    fn variance_near_first_order_limit() {
        // 200x100 Gaussian: V should be near c/(1-c) = 1 for c = 0.5.
        let d = gaussian_design(200, 100, 42);
        let v = variance_term(&d, &SigmaSpec::identity(), 1.0);
        assert!((v - 1.0).abs() < 0.1, "V = {v}");
    }

    #[test]
    fn variance_matches_svals_fast_path() {
        let d = gaussian_design(30, 50, 7);
        let slow = variance_term(&d, &SigmaSpec::identity(), 1.3);
        let (fast, rank) = variance_identity_from_svals(d.singular_values(), 30, 50, 1.3);
        assert!((slow - fast).abs() < 1e-10 * fast);
        assert_eq!(rank, d.rank());
    }

    #[test]
    fn bias_zero_when_full_column_rank() {
        let d = gaussian_design(12, 5, 3);
        let beta = Col::from_fn(5, |i| i as f64);
        let b = bias_given_beta(&d, &SigmaSpec::identity(), beta.as_ref()).unwrap();
        assert!(b < 1e-10 * beta.squared_norm_l2());
    }

    #[test]
    fn bias_zero_for_row_space_beta() {
        let d = gaussian_design(4, 9, 5);
        let y = Col::from_fn(4, |i| (i as f64).cos());
        let beta = d.min_norm_lsq(y.as_ref()).unwrap(); // lies in row(X)
        let b = bias_given_beta(&d, &SigmaSpec::identity(), beta.as_ref()).unwrap();
        assert!(b < 1e-10 * beta.squared_norm_l2().max(1e-30));
    }

    #[test]
    fn bias_matches_projector_free_route() {
        let d = gaussian_design(50, 100, 11);
        let beta = sample_beta(
            &BetaMode::Gaussian { r: 1.0 },
            100,
            &mut stream(11, 0, "beta"),
        )
        .unwrap();
        let b = bias_given_beta(&d, &SigmaSpec::identity(), beta.as_ref()).unwrap();
        // independent route: beta minus row-space projection via the SVD
        let proj = d.row_projection(beta.as_ref()).unwrap();
        let diff = &beta - &proj;
        let alt = diff.squared_norm_l2();
        assert!((b - alt).abs() < 1e-8 * alt.max(1.0));
    }

    #[test]
    fn bias_depends_on_beta_only_through_null_component() {
        let d = gaussian_design(6, 14, 23);
        let sigma = SigmaSpec::identity();
        let beta = sample_beta(&BetaMode::Gaussian { r: 1.0 }, 14, &mut stream(2, 0, "b")).unwrap();
        let b0 = bias_given_beta(&d, &sigma, beta.as_ref()).unwrap();
        // add a row-space vector
        let y = Col::from_fn(6, |i| (i as f64 + 0.3).sin());
        let w = d.min_norm_lsq(y.as_ref()).unwrap();
        let shifted = &beta + &w;
        let b1 = bias_given_beta(&d, &sigma, shifted.as_ref()).unwrap();
        assert!((b0 - b1).abs() < 1e-8 * b0.max(1.0));
    }

    #[test]
    fn bias_random_beta_identity_formula() {
        let d = gaussian_design(50, 100, 31);
        assert_eq!(d.rank(), 50);
        let b = bias_random_beta(&d, &SigmaSpec::identity(), 1.5);
        // r^2 (1 - n/p)
        assert!((b - 1.5 * 1.5 * 0.5).abs() < 1e-10);
        let d2 = gaussian_design(9, 4, 31);
        assert!(bias_random_beta(&d2, &SigmaSpec::identity(), 2.0).abs() < 1e-10);
    }

    #[test]
    fn bias_random_beta_is_average_over_draws() {
        let d = gaussian_design(20, 40, 13);
        let sigma = SigmaSpec::identity();
        let expected = bias_random_beta(&d, &sigma, 1.0);
        let reps = 2000;
        let mut vals = Vec::with_capacity(reps);
        for rep in 0..reps {
            let beta = sample_beta(
                &BetaMode::Gaussian { r: 1.0 },
                40,
                &mut stream(77, rep as u64, "beta"),
            )
            .unwrap();
            vals.push(bias_given_beta(&d, &sigma, beta.as_ref()).unwrap());
        }
        let mean: f64 = vals.iter().sum::<f64>() / reps as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn report_fixed_mode_risks_coincide() {
        let d = gaussian_design(8, 20, 3);
        let mut dir = vec![0.0; 20];
        dir[2] = 1.0;
        let mode = BetaMode::Fixed { direction: dir, r: 2.0 };
        let rep = risk_report(&d, &SigmaSpec::identity(), 1.0, &mode, None).unwrap();
        assert_eq!(rep.risk_given_x, rep.risk_given_x_beta);
        assert_eq!(rep.bias_given_x, rep.bias_given_x_beta);
        // decomposition is the literal same floating addition
        assert_eq!(rep.risk_given_x, rep.bias_given_x + rep.variance);
        assert_eq!(rep.risk_given_x_beta, rep.bias_given_x_beta + rep.variance);
    }

    #[test]
    fn report_underparametrized_is_pure_variance() {
        let d = gaussian_design(30, 10, 17);
        let mode = BetaMode::Gaussian { r: 1.0 };
        let beta = sample_beta(&mode, 10, &mut stream(17, 0, "beta")).unwrap();
        let rep = risk_report(&d, &SigmaSpec::identity(), 1.0, &mode, Some(beta.as_ref())).unwrap();
        assert!(rep.bias_given_x.abs() < 1e-10);
        assert!(rep.bias_given_x_beta.abs() < 1e-10);
        assert!((rep.risk_given_x - rep.variance).abs() < 1e-12);
    }

    #[test]
    fn report_scales_quadratically() {
        let d = gaussian_design(14, 30, 29);
        let mode = BetaMode::Gaussian { r: 0.8 };
        let beta = sample_beta(&mode, 30, &mut stream(5, 0, "beta")).unwrap();
        let base =
            risk_report(&d, &SigmaSpec::identity(), 0.7, &mode, Some(beta.as_ref())).unwrap();
        let t = 3.0;
        let mode_t = BetaMode::Gaussian { r: 0.8 * t };
        let beta_t = faer::Col::from_fn(30, |i| beta[i] * t);
        let scaled =
            risk_report(&d, &SigmaSpec::identity(), 0.7 * t, &mode_t, Some(beta_t.as_ref()))
                .unwrap();
        assert!((scaled.risk_given_x - t * t * base.risk_given_x).abs()
            <= 1e-12 * scaled.risk_given_x.abs());
        assert!((scaled.risk_given_x_beta - t * t * base.risk_given_x_beta).abs()
            <= 1e-12 * scaled.risk_given_x_beta.abs());
    }

    #[test]
    fn oracle_exact_recovery_noiseless() {
        // sigma = 0 and beta in row(X): beta_hat recovers beta exactly.
        let d = gaussian_design(5, 12, 41);
        let y = Col::from_fn(5, |i| (i as f64 * 0.9).cos());
        let beta = d.min_norm_lsq(y.as_ref()).unwrap();
        let est = mc_risk_oracle(
            &d,
            &SigmaSpec::identity(),
            0.0,
            beta.as_ref(),
            500,
            &mut stream(1, 0, "oracle"),
        )
        .unwrap();
        assert!(est.mean < 1e-8);
    }

    #[test]
    fn oracle_matches_closed_form() {
        let d = gaussian_design(200, 100, 53);
        let mode = BetaMode::Gaussian { r: 1.0 };
        let beta = sample_beta(&mode, 100, &mut stream(53, 0, "beta")).unwrap();
        let rep = risk_report(&d, &SigmaSpec::identity(), 1.0, &mode, Some(beta.as_ref())).unwrap();
        let est = mc_risk_oracle(
            &d,
            &SigmaSpec::identity(),
            1.0,
            beta.as_ref(),
            20_000,
            &mut stream(53, 0, "oracle"),
        )
        .unwrap();
        assert!(
            (est.mean - rep.risk_given_x_beta).abs() < 3.0 * est.std_err.max(1e-3),
            "oracle {} +- {}, closed form {}",
            est.mean,
            est.std_err,
            rep.risk_given_x_beta
        );
    }

    #[test]
    fn quadratic_form_hand_value() {
        // v = e2, Sigma = diag(1, 4): E (x0'v)^2 = 4.
        let v = Col::from_fn(2, |i| if i == 1 { 1.0 } else { 0.0 });
        let est = mc_quadratic_form(
            v.as_ref(),
            &SigmaSpec::diagonal(vec![1.0, 4.0]),
            100_000,
            &mut stream(8, 0, "qf"),
        )
        .unwrap();
        assert!(
            (est.mean - 4.0).abs() < 3.0 * est.std_err,
            "{} +- {}",
            est.mean,
            est.std_err
        );
    }
}
