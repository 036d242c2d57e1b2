//! Min-norm least squares and the SVD artifacts every risk formula needs.

use faer::linalg::solvers::Svd;
use faer::{Col, ColRef, Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Singular values of `x`, descending, without forming the factors.
/// Computed as square roots of the smaller Gram matrix's eigenvalues,
/// which is about twice as fast as a values-only SVD.
pub fn singular_values_only(x: MatRef<'_, f64>) -> Vec<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let gram = if n >= p {
        x.transpose() * x
    } else {
        x * x.transpose()
    };
    let mut s: Vec<f64> = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("eigendecomposition failed to converge")
        .into_iter()
        .map(|e| e.max(0.0).sqrt())
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Design matrix with cached thin SVD `X = U diag(s) V'`, rank and the rank
/// cutoff.
///
/// The cutoff follows the usual numerically safe rule for `X'X`:
/// `tol = max(n, p) * eps * s_max^2` on eigenvalues of `X'X`, i.e. singular
/// values are kept when `s^2 > tol`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: Mat<f64>,
    u: Mat<f64>,
    s: Vec<f64>,
    v: Mat<f64>,
    rank: usize,
    tol: f64,
}

impl DesignMatrix {
    pub fn new(x: Mat<f64>) -> Self {
        let svd = x.thin_svd().expect("svd failed to converge");
        Self::from_svd(x, &svd)
    }

    fn from_svd(x: Mat<f64>, svd: &Svd<f64>) -> Self {
        let k = usize::min(x.nrows(), x.ncols());
        let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
        let tol = rank_tol(x.nrows(), x.ncols(), s.first().copied().unwrap_or(0.0));
        let rank = s.iter().filter(|&&v| v * v > tol).count();
        DesignMatrix {
            u: svd.U().to_owned(),
            v: svd.V().to_owned(),
            x,
            s,
            rank,
            tol,
        }
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn u(&self) -> MatRef<'_, f64> {
        self.u.as_ref()
    }

    pub fn v(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Rank cutoff on eigenvalues of `X'X`.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// True when the smallest kept singular value is below `1e-6 * s_max`.
    /// Risk outputs near the interpolation threshold are still returned,
    /// just flagged.
    pub fn is_ill_conditioned(&self) -> bool {
        if self.rank == 0 {
            return false;
        }
        self.s[self.rank - 1] < 1e-6 * self.s[0]
    }

    /// Min-norm least squares `beta = V diag(1/s) U' y`, kept values only.
    pub fn min_norm_lsq(&self, y: ColRef<'_, f64>) -> Result<Col<f64>> {
        if y.nrows() != self.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y length {} != n = {}",
                y.nrows(),
                self.nrows()
            )));
        }
        let uty = self.u.transpose() * y;
        let mut coeff = Col::<f64>::zeros(self.s.len());
        for i in 0..self.rank {
            coeff[i] = uty[i] / self.s[i];
        }
        Ok(&self.v * &coeff)
    }

    /// Cross-check path: `(X'X)^+ X' y` formed densely.
    pub fn min_norm_lsq_normal_eq(&self, y: ColRef<'_, f64>) -> Result<Col<f64>> {
        if y.nrows() != self.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y length {} != n = {}",
                y.nrows(),
                self.nrows()
            )));
        }
        let xtx = self.x.transpose() * &self.x;
        let pinv = pseudoinverse(xtx.as_ref(), self.tol)?;
        Ok(&pinv * (self.x.transpose() * y))
    }

    /// Orthogonal projection of `b` onto the row space of `X`.
    pub fn row_projection(&self, b: ColRef<'_, f64>) -> Result<Col<f64>> {
        if b.nrows() != self.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} != p = {}",
                b.nrows(),
                self.ncols()
            )));
        }
        let vk = self.v.as_ref().subcols(0, self.rank);
        let vtb = vk.transpose() * b;
        Ok(vk * &vtb)
    }

    /// Null-space projector `Pi = I_p - Sigma_hat^+ Sigma_hat = I - V_k V_k'`.
    pub fn null_projection(&self) -> Mat<f64> {
        let p = self.ncols();
        let vk = self.v.as_ref().subcols(0, self.rank);
        let mut pi = Mat::identity(p, p);
        let vvt = vk * vk.transpose();
        for i in 0..p {
            for j in 0..p {
                pi[(i, j)] -= vvt[(i, j)];
            }
        }
        pi
    }

    /// Uncentered sample covariance `Sigma_hat = X'X / n`.
    pub fn sample_cov(&self) -> SampleCov {
        let n = self.nrows() as f64;
        let mut m = self.x.transpose() * &self.x;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] /= n;
            }
        }
        SampleCov { matrix: m }
    }
}

/// `Sigma_hat = X'X/n`.
#[derive(Debug, Clone)]
pub struct SampleCov {
    pub matrix: Mat<f64>,
}

fn rank_tol(n: usize, p: usize, s_max: f64) -> f64 {
    usize::max(n, p) as f64 * f64::EPSILON * s_max * s_max
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix. Eigenvalues with
/// absolute value `<= tol` are treated as zero.
pub fn pseudoinverse(a: MatRef<'_, f64>, tol: f64) -> Result<Mat<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSymmetric);
    }
    let norm = a.norm_max();
    let sym_tol = 1e-10 * norm.max(1.0);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > sym_tol {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::InvalidParameter("eigendecomposition failed".into()))?;
    let q = eig.U();
    let p = a.nrows();
    let inv: Vec<f64> = (0..p)
        .map(|i| {
            let v = eig.S()[i];
            if v.abs() > tol {
                1.0 / v
            } else {
                0.0
            }
        })
        .collect();
    let scaled = Mat::from_fn(p, p, |i, j| q[(i, j)] * inv[j]);
    Ok(&scaled * q.transpose())
}
