//! Data generation: i.i.d. entry matrices with zero mean, unit variance and
//! known fourth moment, coefficient vectors, noise, and the population
//! covariance applied as `X = Z Sigma^{1/2}`.

use faer::{Col, Mat, Side};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Standardized entry law: zero mean, unit variance, finite fourth moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EntryDistribution {
    StandardNormal,
    /// Gamma(shape, scale), centered and scaled to unit variance.
    CenteredGamma { shape: f64, scale: f64 },
    /// Student-t divided by sqrt(df / (df - 2)); needs df > 4 for a finite
    /// fourth moment.
    ScaledStudentT { df: f64 },
}

impl EntryDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EntryDistribution::StandardNormal => Ok(()),
            EntryDistribution::CenteredGamma { shape, scale } => {
                if shape > 0.0 && scale > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(
                        "gamma shape and scale must be positive".into(),
                    ))
                }
            }
            EntryDistribution::ScaledStudentT { df } => {
                if df > 4.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(
                        "student-t needs df > 4 for a finite fourth moment".into(),
                    ))
                }
            }
        }
    }

    fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            EntryDistribution::StandardNormal => rng.sample(StandardNormal),
            EntryDistribution::CenteredGamma { shape, scale } => {
                let g = Gamma::new(shape, scale).expect("validated");
                (g.sample(rng) - shape * scale) / (scale * shape.sqrt())
            }
            EntryDistribution::ScaledStudentT { df } => {
                let t = StudentT::new(df).expect("validated");
                t.sample(rng) / (df / (df - 2.0)).sqrt()
            }
        }
    }
}

/// Analytic fourth moment `E z^4` of the standardized law.
pub fn fourth_moment(dist: &EntryDistribution) -> Result<f64> {
    dist.validate()?;
    Ok(match *dist {
        EntryDistribution::StandardNormal => 3.0,
        EntryDistribution::CenteredGamma { shape, .. } => 3.0 + 6.0 / shape,
        EntryDistribution::ScaledStudentT { df } => 3.0 + 6.0 / (df - 4.0),
    })
}

/// `n x p` matrix of i.i.d. draws from `dist`, filled column by column.
pub fn sample_entries(n: usize, p: usize, dist: &EntryDistribution, rng: &mut Stream) -> Mat<f64> {
    let mut m = Mat::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            m[(i, j)] = dist.sample(rng);
        }
    }
    m
}

/// Population covariance specification with an eigenvalue floor.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaKind {
    Identity,
    Diagonal(Vec<f64>),
    Spd(Mat<f64>),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(from = "SigmaSpecRepr", into = "SigmaSpecRepr")]
pub struct SigmaSpec {
    pub kind: SigmaKind,
    /// Eigenvalue floor c0 > 0 used by `validate`.
    pub eigen_floor: f64,
}

// Serialization mirror: faer matrices travel as row-major nested vectors.
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SigmaKindRepr {
    Identity,
    Diagonal(Vec<f64>),
    Spd(Vec<Vec<f64>>),
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SigmaSpecRepr {
    kind: SigmaKindRepr,
    eigen_floor: f64,
}

impl From<SigmaSpec> for SigmaSpecRepr {
    fn from(s: SigmaSpec) -> Self {
        let kind = match s.kind {
            SigmaKind::Identity => SigmaKindRepr::Identity,
            SigmaKind::Diagonal(d) => SigmaKindRepr::Diagonal(d),
            SigmaKind::Spd(m) => SigmaKindRepr::Spd(
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect(),
            ),
        };
        SigmaSpecRepr {
            kind,
            eigen_floor: s.eigen_floor,
        }
    }
}

impl From<SigmaSpecRepr> for SigmaSpec {
    fn from(r: SigmaSpecRepr) -> Self {
        let kind = match r.kind {
            SigmaKindRepr::Identity => SigmaKind::Identity,
            SigmaKindRepr::Diagonal(d) => SigmaKind::Diagonal(d),
            SigmaKindRepr::Spd(rows) => {
                let n = rows.len();
                let m = rows.first().map_or(0, Vec::len);
                SigmaKind::Spd(Mat::from_fn(n, m, |i, j| rows[i][j]))
            }
        };
        SigmaSpec {
            kind,
            eigen_floor: r.eigen_floor,
        }
    }
}

impl SigmaSpec {
    pub fn identity() -> Self {
        SigmaSpec {
            kind: SigmaKind::Identity,
            eigen_floor: 1e-12,
        }
    }

    pub fn diagonal(values: Vec<f64>) -> Self {
        SigmaSpec {
            kind: SigmaKind::Diagonal(values),
            eigen_floor: 1e-12,
        }
    }

    pub fn spd(matrix: Mat<f64>) -> Self {
        SigmaSpec {
            kind: SigmaKind::Spd(matrix),
            eigen_floor: 1e-12,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, SigmaKind::Identity)
    }

    /// Dimension constraint, if the spec carries one.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            SigmaKind::Identity => None,
            SigmaKind::Diagonal(d) => Some(d.len()),
            SigmaKind::Spd(m) => Some(m.nrows()),
        }
    }

    /// Checks symmetry and the eigenvalue floor.
    pub fn validate(&self) -> Result<()> {
        if self.eigen_floor <= 0.0 {
            return Err(Error::InvalidParameter("eigen floor must be > 0".into()));
        }
        match &self.kind {
            SigmaKind::Identity => Ok(()),
            SigmaKind::Diagonal(d) => {
                if d.iter().all(|&v| v >= self.eigen_floor) {
                    Ok(())
                } else {
                    Err(Error::CovarianceNotPositiveDefinite)
                }
            }
            SigmaKind::Spd(m) => {
                check_symmetric(m, 1e-12)?;
                let eigs = m
                    .self_adjoint_eigenvalues(Side::Lower)
                    .map_err(|_| Error::CovarianceNotPositiveDefinite)?;
                if eigs.iter().all(|&v| v >= self.eigen_floor) {
                    Ok(())
                } else {
                    Err(Error::CovarianceNotPositiveDefinite)
                }
            }
        }
    }

    /// Quadratic form `v' Sigma v` without materializing Sigma.
    pub fn quadratic_form(&self, v: faer::ColRef<'_, f64>) -> f64 {
        match &self.kind {
            SigmaKind::Identity => v.squared_norm_l2(),
            SigmaKind::Diagonal(d) => (0..v.nrows()).map(|i| d[i] * v[i] * v[i]).sum(),
            SigmaKind::Spd(m) => {
                let mv = m * v;
                (0..v.nrows()).map(|i| v[i] * mv[i]).sum()
            }
        }
    }

    /// Trace of Sigma at dimension `p`.
    pub fn trace(&self, p: usize) -> f64 {
        match &self.kind {
            SigmaKind::Identity => p as f64,
            SigmaKind::Diagonal(d) => d.iter().sum(),
            SigmaKind::Spd(m) => (0..p).map(|i| m[(i, i)]).sum(),
        }
    }

    /// Dense Sigma, for oracle paths.
    pub fn matrix(&self, p: usize) -> Mat<f64> {
        match &self.kind {
            SigmaKind::Identity => Mat::identity(p, p),
            SigmaKind::Diagonal(d) => Mat::from_fn(p, p, |i, j| if i == j { d[i] } else { 0.0 }),
            SigmaKind::Spd(m) => m.clone(),
        }
    }

    /// Symmetric PSD square root `Sigma^{1/2}`.
    ///
    /// Eigenvalues below `-1e-10 * ||Sigma||` are an error; values in
    /// `[-1e-10 * ||Sigma||, 0]` are clamped to zero.
    pub fn sqrt_matrix(&self, p: usize) -> Result<Mat<f64>> {
        match &self.kind {
            SigmaKind::Identity => Ok(Mat::identity(p, p)),
            SigmaKind::Diagonal(d) => {
                if d.iter().any(|&v| v < 0.0) {
                    return Err(Error::CovarianceNotPositiveDefinite);
                }
                Ok(Mat::from_fn(
                    p,
                    p,
                    |i, j| if i == j { d[i].sqrt() } else { 0.0 },
                ))
            }
            SigmaKind::Spd(m) => {
                check_symmetric(m, 1e-12)?;
                let eig = m
                    .self_adjoint_eigen(Side::Lower)
                    .map_err(|_| Error::CovarianceNotPositiveDefinite)?;
                let q = eig.U();
                let lambda: Vec<f64> = (0..p).map(|i| eig.S()[i]).collect();
                let norm = lambda.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                let neg_tol = -1e-10 * norm;
                let mut roots = Vec::with_capacity(p);
                for &v in &lambda {
                    if v < neg_tol {
                        return Err(Error::CovarianceNotPositiveDefinite);
                    }
                    roots.push(v.max(0.0).sqrt());
                }
                // Q diag(sqrt(lambda)) Q'
                let scaled = Mat::from_fn(p, p, |i, j| q[(i, j)] * roots[j]);
                Ok(&scaled * q.transpose())
            }
        }
    }
}

fn check_symmetric(m: &Mat<f64>, rel_tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSymmetric);
    }
    let norm = m.norm_max();
    let tol = rel_tol * norm.max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// Returns `Z Sigma^{1/2}`.
pub fn apply_covariance(z: &Mat<f64>, sigma: &SigmaSpec) -> Result<Mat<f64>> {
    let p = z.ncols();
    if let Some(d) = sigma.dim() {
        if d != p {
            return Err(Error::DimensionMismatch(format!(
                "covariance dimension {d} != p = {p}"
            )));
        }
    }
    match &sigma.kind {
        SigmaKind::Identity => Ok(z.clone()),
        SigmaKind::Diagonal(diag) => {
            if diag.iter().any(|&v| v < 0.0) {
                return Err(Error::CovarianceNotPositiveDefinite);
            }
            let mut out = z.clone();
            for j in 0..p {
                let s = diag[j].sqrt();
                for i in 0..out.nrows() {
                    out[(i, j)] *= s;
                }
            }
            Ok(out)
        }
        SigmaKind::Spd(_) => {
            let root = sigma.sqrt_matrix(p)?;
            Ok(z * &root)
        }
    }
}

/// Coefficient vector mode: nonrandom with exact norm `r`, or Gaussian with
/// `E ||beta||^2 = r^2`.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaMode {
    Fixed { direction: Vec<f64>, r: f64 },
    Gaussian { r: f64 },
}

impl BetaMode {
    pub fn r(&self) -> f64 {
        match *self {
            BetaMode::Fixed { r, .. } | BetaMode::Gaussian { r } => r,
        }
    }
}

/// Draws beta. Fixed mode returns `r * direction` exactly; Gaussian mode one
/// draw from `N_p(0, (r^2/p) I)`.
pub fn sample_beta(mode: &BetaMode, p: usize, rng: &mut Stream) -> Result<Col<f64>> {
    match mode {
        BetaMode::Fixed { direction, r } => {
            if direction.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "direction length {} != p = {p}",
                    direction.len()
                )));
            }
            let norm2: f64 = direction.iter().map(|v| v * v).sum();
            if (norm2.sqrt() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(
                    "fixed beta direction must be a unit vector".into(),
                ));
            }
            if *r <= 0.0 {
                return Err(Error::InvalidParameter("r must be positive".into()));
            }
            Ok(Col::from_fn(p, |i| r * direction[i]))
        }
        BetaMode::Gaussian { r } => {
            if *r <= 0.0 {
                return Err(Error::InvalidParameter("r must be positive".into()));
            }
            let scale = r / (p as f64).sqrt();
            Ok(Col::from_fn(p, |_| {
                scale * rng.sample::<f64, _>(StandardNormal)
            }))
        }
    }
}

/// i.i.d. `N(0, sigma^2)` noise. See `sample_noise_from` for the other
/// entry families.
pub fn sample_noise(n: usize, sigma: f64, rng: &mut Stream) -> Col<f64> {
    sample_noise_from(n, sigma, &EntryDistribution::StandardNormal, rng).expect("normal is valid")
}

/// Noise from any supported standardized family, scaled by `sigma`.
pub fn sample_noise_from(
    n: usize,
    sigma: f64,
    dist: &EntryDistribution,
    rng: &mut Stream,
) -> Result<Col<f64>> {
    if sigma < 0.0 {
        return Err(Error::InvalidParameter("sigma must be >= 0".into()));
    }
    dist.validate()?;
    Ok(Col::from_fn(n, |_| sigma * dist.sample(rng)))
}
