//! Marchenko-Pastur law, CLT parameters, confidence intervals and
//! standardized statistics for the five limit theorems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::z_alpha_half;

/// Poles at c = 1 make the formulas useless nearby; requests inside this
/// band of |c_n - 1| fail loudly.
pub const DELTA_GUARD: f64 = 0.02;

/// Which limit theorem a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// `R_X`, under-parametrized (c < 1), rate p.
    T1RxUnder,
    /// `R_{X,beta}`, under-parametrized; identical parameters to T1.
    T2RxbUnder,
    /// `R_X` with fixed beta, over-parametrized (c > 1), rate sqrt(p).
    T3RxFixedOver,
    /// `R_X` with random beta, over-parametrized, rate p.
    T4RxRandomOver,
    /// `R_{X,beta}` with random beta, over-parametrized, rate sqrt(p).
    T5RxbRandomOver,
}

impl Theorem {
    pub fn rate(self) -> Rate {
        match self {
            Theorem::T1RxUnder | Theorem::T2RxbUnder | Theorem::T4RxRandomOver => Rate::P,
            Theorem::T3RxFixedOver | Theorem::T5RxbRandomOver => Rate::SqrtP,
        }
    }

    pub fn overparametrized(self) -> bool {
        !matches!(self, Theorem::T1RxUnder | Theorem::T2RxbUnder)
    }
}

/// Convergence rate of the risk fluctuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rate {
    P,
    SqrtP,
}

impl Rate {
    /// Numeric scale applied to `risk - center`.
    pub fn scale(self, p: usize) -> f64 {
        match self {
            Rate::P => p as f64,
            Rate::SqrtP => (p as f64).sqrt(),
        }
    }
}

/// Everything needed to standardize a risk draw or build its interval.
///
/// `mu`/`sigma2` are the limit parameters as displayed in the theorems;
/// `mu_practical`/`sigma2_practical` carry the finite-p corrected versions
/// for the sqrt(p)-rate theorems and simply repeat `mu`/`sigma2` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltParams {
    pub theorem: Theorem,
    pub rate: Rate,
    pub center: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub mu_practical: f64,
    pub sigma2_practical: f64,
}

impl CltParams {
    /// Parameters actually used for intervals and standardization.
    pub fn effective(&self) -> (f64, f64) {
        (self.mu_practical, self.sigma2_practical)
    }
}

/// Two-sided confidence interval `[L, U]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// The standard Marchenko-Pastur law with aspect ratio `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    pub c: f64,
    /// Lower support edge `(1 - sqrt(c))^2`.
    pub a: f64,
    /// Upper support edge `(1 + sqrt(c))^2`.
    pub b: f64,
    /// `max(0, 1 - 1/c)`.
    pub point_mass_at_zero: f64,
}

impl MpLaw {
    pub fn new(c: f64) -> Result<MpLaw> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "MP aspect ratio must be positive, got {c}"
            )));
        }
        let s = c.sqrt();
        Ok(MpLaw {
            c,
            a: (1.0 - s) * (1.0 - s),
            b: (1.0 + s) * (1.0 + s),
            point_mass_at_zero: (1.0 - 1.0 / c).max(0.0),
        })
    }

    /// Density of the continuous part at `x` (point mass excluded).
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        ((self.b - x) * (x - self.a)).sqrt() / (2.0 * std::f64::consts::PI * self.c * x)
    }

    /// `∫ f(x) dF_c(x)` over the continuous part.
    ///
    /// Substituting `x = a + (b-a) sin^2(t)` absorbs both square-root edge
    /// singularities, leaving a smooth integrand for composite Simpson.
    pub fn integrate_continuous(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (a, b, c) = (self.a, self.b, self.c);
        let width = b - a;
        let g = |t: f64| {
            let (sin, cos) = t.sin_cos();
            let x = a + width * sin * sin;
            if x == 0.0 {
                // only reachable when a = 0 (c = 1); the 0/0 below has the
                // finite limit width cos^2 / (pi c)
                return f(0.0) * width * cos * cos / (std::f64::consts::PI * c);
            }
            // density * dx/dt = [width sin cos / (2 pi c x)] * 2 width sin cos
            let w = width * width * sin * sin * cos * cos / (std::f64::consts::PI * c * x);
            f(x) * w
        };
        let n = 4096; // even
        let h = std::f64::consts::FRAC_PI_2 / n as f64;
        let mut acc = g(0.0) + g(std::f64::consts::FRAC_PI_2);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Total mass of the continuous part; should be `min(1, 1/c)`.
    pub fn continuous_mass(&self) -> f64 {
        self.integrate_continuous(|_| 1.0)
    }
}

/// Continuous MP density at `x` for ratio `c` (free function form).
pub fn mp_density(x: f64, c: f64) -> Result<f64> {
    Ok(MpLaw::new(c)?.density(x))
}

fn guard_cn(c_n: f64) -> Result<()> {
    if !(c_n > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "aspect ratio c_n must be positive, got {c_n}"
        )));
    }
    let gap = (c_n - 1.0).abs();
    if gap < DELTA_GUARD {
        return Err(Error::InterpolationThreshold {
            gap,
            guard: DELTA_GUARD,
        });
    }
    Ok(())
}

/// Finite-n centering term shared by all CLTs:
/// `c_n sigma^2 / (1 - c_n)` for c_n < 1, and
/// `(1 - 1/c_n) r^2 + sigma^2 / (c_n - 1)` for c_n > 1.
pub fn limit_risk(c_n: f64, sigma: f64, r: f64) -> Result<f64> {
    guard_cn(c_n)?;
    if c_n < 1.0 {
        Ok(c_n * sigma * sigma / (1.0 - c_n))
    } else {
        Ok((1.0 - 1.0 / c_n) * r * r + sigma * sigma / (c_n - 1.0))
    }
}

/// The over-parametrized finite-p correction pair: mean and variance of the
/// variance-term fluctuation, which is exactly Theorem 4's `(mu, sigma^2)`
/// and also the `1/sqrt(p)`, `1/p` corrections of the practical T3/T5
/// parameters.
fn over_correction(c: f64, sigma: f64, nu4: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let s4 = s2 * s2;
    let om = 1.0 - c;
    let mu = c * s2 / (om * om) + s2 * (nu4 - 3.0) / (c - 1.0);
    let var = 2.0 * c * c * c * s4 / (om * om * om * om)
        + c * s4 * (nu4 - 3.0) / ((c - 1.0) * (c - 1.0));
    (mu, var)
}

/// Limit mean/variance, centering and practical corrections for `theorem`
/// at limit ratio `c`, finite ratio `c_n` and dimension `p`.
pub fn clt_params(
    theorem: Theorem,
    c: f64,
    c_n: f64,
    p: usize,
    sigma: f64,
    r: f64,
    nu4: f64,
) -> Result<CltParams> {
    guard_cn(c)?;
    if theorem.overparametrized() != (c > 1.0) || theorem.overparametrized() != (c_n > 1.0) {
        return Err(Error::RegimeMismatch(format!(
            "{theorem:?} is not valid at c = {c}, c_n = {c_n}"
        )));
    }
    match theorem {
        Theorem::T1RxUnder | Theorem::T2RxbUnder | Theorem::T4RxRandomOver => {
            if !(sigma > 0.0) {
                return Err(Error::InvalidParameter(
                    "noise level sigma must be positive for the rate-p theorems".into(),
                ));
            }
        }
        Theorem::T3RxFixedOver | Theorem::T5RxbRandomOver => {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(
                    "signal strength r must be positive for the rate-sqrt(p) theorems".into(),
                ));
            }
        }
    }
    let center = limit_risk(c_n, sigma, r)?;
    let s2 = sigma * sigma;
    let s4 = s2 * s2;
    let r4 = r * r * r * r;
    let (mu, sigma2) = match theorem {
        Theorem::T1RxUnder | Theorem::T2RxbUnder => {
            let cm = c - 1.0;
            (
                c * c * s2 / (cm * cm) + s2 * c * c * (nu4 - 3.0) / (1.0 - c),
                2.0 * c * c * c * s4 / (cm * cm * cm * cm)
                    + c * c * c * s4 * (nu4 - 3.0) / ((1.0 - c) * (1.0 - c)),
            )
        }
        Theorem::T3RxFixedOver => (0.0, 2.0 * (c - 1.0) * r4 / (c * c)),
        Theorem::T4RxRandomOver => over_correction(c, sigma, nu4),
        Theorem::T5RxbRandomOver => (0.0, 2.0 * (1.0 - 1.0 / c) * r4),
    };
    let (mu_practical, sigma2_practical) = match theorem.rate() {
        Rate::P => (mu, sigma2),
        Rate::SqrtP => {
            let (cm, cv) = over_correction(c, sigma, nu4);
            let pf = p as f64;
            (mu + cm / pf.sqrt(), sigma2 + cv / pf)
        }
    };
    Ok(CltParams {
        theorem,
        rate: theorem.rate(),
        center,
        mu,
        sigma2,
        mu_practical,
        sigma2_practical,
    })
}

/// `[center + (mu_eff -/+ Z_{alpha/2} sigma_eff) / rate-scale]`, the
/// theorem's asymptotic `1 - alpha` interval for the risk.
pub fn confidence_interval(params: &CltParams, p: usize, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let (mu, sigma2) = params.effective();
    let scale = params.rate.scale(p);
    let z = z_alpha_half(alpha);
    let half = z * sigma2.sqrt();
    Ok(Interval {
        lower: params.center + (mu - half) / scale,
        upper: params.center + (mu + half) / scale,
        alpha,
    })
}

/// Standardized statistic using the effective (practical) parameters.
/// `|standardize(risk)| <= Z_{alpha/2}` iff `risk` is inside the interval.
pub fn standardize(risk_value: f64, params: &CltParams, p: usize) -> f64 {
    let (mu, sigma2) = params.effective();
    (params.rate.scale(p) * (risk_value - params.center) - mu) / sigma2.sqrt()
}

/// Standardized statistic using the uncorrected limit parameters
/// (the `T_{n,0}` / `T_{n,2}` convention).
pub fn standardize_theoretical(risk_value: f64, params: &CltParams, p: usize) -> f64 {
    (params.rate.scale(p) * (risk_value - params.center) - params.mu) / params.sigma2.sqrt()
}
