//! Dense linear-algebra kernels shared by the solvers: singular value
//! soft-thresholding, masked projection, and objective evaluation.

use ndarray::{Array2, ArrayView2};
use ndarray_linalg::{JobSvd, SVDDC};

use crate::dataset::RatingTriples;
use crate::error::{Error, Result};

/// Singular values at or below this magnitude count as zero when reporting
/// rank.
pub const SV_TRUNCATION: f64 = 1e-10;

/// Scalar soft-thresholding: `sign(t) * max(0, |t| - u)`.
#[inline]
pub fn soft(t: f64, u: f64) -> f64 {
    debug_assert!(u >= 0.0);
    if t > u {
        t - u
    } else if t < -u {
        t + u
    } else {
        0.0
    }
}

/// Output of singular value thresholding.
#[derive(Debug, Clone)]
pub struct SvtResult {
    pub matrix: Array2<f64>,
    /// Count of singular values above [`SV_TRUNCATION`] after thresholding.
    pub rank_after: usize,
    /// Sum of the retained singular values.
    pub nuclear_norm: f64,
    /// Retained singular values, sorted descending.
    pub singular_values: Vec<f64>,
}

fn svd_error(a: &ArrayView2<f64>, err: impl std::fmt::Display) -> Error {
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let max_abs = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Error::Numerical(format!(
        "SVD failed on {}x{} matrix (fro={:.3e}, max|a_ij|={:.3e}): {}",
        a.nrows(),
        a.ncols(),
        fro,
        max_abs,
        err
    ))
}

/// Soft-thresholds the singular values of `a` at level `tau` and
/// reconstructs `U soft(S, tau) V^T`.
pub fn svt(a: &ArrayView2<f64>, tau: f64) -> Result<SvtResult> {
    if tau < 0.0 {
        return Err(Error::Config(format!("svt threshold {tau} must be >= 0")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("svt input has non-finite entries".into()));
    }
    let (u, s, vt) = a
        .svddc(JobSvd::Some)
        .map_err(|e| svd_error(a, e))?;
    let u = u.ok_or_else(|| svd_error(a, "missing U factor"))?;
    let vt = vt.ok_or_else(|| svd_error(a, "missing V^T factor"))?;

    // LAPACK returns singular values sorted descending.
    let thresholded: Vec<f64> = s.iter().map(|&sv| soft(sv, tau)).collect();
    let rank_after = thresholded.iter().filter(|&&sv| sv > SV_TRUNCATION).count();
    let retained = &thresholded[..rank_after];
    let nuclear_norm = retained.iter().sum();

    let matrix = if rank_after == 0 {
        Array2::zeros(a.dim())
    } else {
        let mut u_scaled = u.slice(ndarray::s![.., ..rank_after]).to_owned();
        for (mut col, &sv) in u_scaled.columns_mut().into_iter().zip(retained) {
            col *= sv;
        }
        u_scaled.dot(&vt.slice(ndarray::s![..rank_after, ..]))
    };

    Ok(SvtResult {
        matrix,
        rank_after,
        nuclear_norm,
        singular_values: retained.to_vec(),
    })
}

/// Sum of singular values.
pub fn nuclear_norm(a: &ArrayView2<f64>) -> Result<f64> {
    let (_, s, _) = a.svddc(JobSvd::None).map_err(|e| svd_error(a, e))?;
    Ok(s.sum())
}

/// Elementwise 0/1 sampling operator over a fixed support.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskOperator {
    shape: (usize, usize),
    support: Vec<(u32, u32)>,
}

impl MaskOperator {
    pub fn new(shape: (usize, usize), support: Vec<(u32, u32)>) -> Result<Self> {
        for &(r, c) in &support {
            if r as usize >= shape.0 || c as usize >= shape.1 {
                return Err(Error::Validation(format!(
                    "support cell ({r}, {c}) outside {}x{}",
                    shape.0, shape.1
                )));
            }
        }
        Ok(MaskOperator { shape, support })
    }

    pub fn from_triples(triples: &RatingTriples) -> Self {
        MaskOperator {
            shape: (triples.num_users, triples.num_items),
            support: triples.entries.iter().map(|e| (e.user, e.item)).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn support(&self) -> &[(u32, u32)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Projects a dense matrix onto the support (entries off the support
    /// become zero). The operator is idempotent and self-adjoint.
    pub fn apply(&self, a: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(a.dim(), self.shape, "mask shape mismatch");
        let mut out = Array2::zeros(self.shape);
        for &(r, c) in &self.support {
            let idx = (r as usize, c as usize);
            out[idx] = a[idx];
        }
        out
    }
}

/// Sparse observations: values aligned with a mask's support cells.
#[derive(Debug, Clone)]
pub struct SparseObservations {
    pub mask: MaskOperator,
    pub values: Vec<f64>,
}

impl SparseObservations {
    pub fn new(mask: MaskOperator, values: Vec<f64>) -> Self {
        assert_eq!(mask.len(), values.len(), "values must align with support");
        SparseObservations { mask, values }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    /// Sum of squared observation values, i.e. the data-term value at Z = 0.
    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Dense matrix holding the observations on their support.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.shape());
        for (k, &(r, c)) in self.mask.support().iter().enumerate() {
            out[(r as usize, c as usize)] = self.values[k];
        }
        out
    }
}

/// Residual `Y - M(Z)` as a dense matrix (zero off-support) together with
/// its squared Frobenius norm.
pub fn masked_residual(y: &SparseObservations, z: &ArrayView2<f64>) -> (Array2<f64>, f64) {
    assert_eq!(z.dim(), y.shape(), "shape mismatch");
    let mut residual = Array2::zeros(y.shape());
    let mut sq = 0.0;
    for (k, &(r, c)) in y.mask.support().iter().enumerate() {
        let idx = (r as usize, c as usize);
        let d = y.values[k] - z[idx];
        residual[idx] = d;
        sq += d * d;
    }
    (residual, sq)
}

/// Squared Frobenius norm of the masked residual only.
pub fn masked_residual_sq(y: &SparseObservations, z: &ArrayView2<f64>) -> f64 {
    assert_eq!(z.dim(), y.shape(), "shape mismatch");
    y.mask
        .support()
        .iter()
        .zip(&y.values)
        .map(|(&(r, c), &v)| {
            let d = v - z[(r as usize, c as usize)];
            d * d
        })
        .sum()
}

/// Full objective: `||Y - M(Z)||_F^2 + lambda_n ||Z||_* + lambda_d ||Z F||_F^2`.
/// With `lambda_d = 0` the diversity term (and `f`) is ignored.
pub fn mcad_objective(
    y: &SparseObservations,
    z: &ArrayView2<f64>,
    f: Option<&ArrayView2<f64>>,
    lambda_n: f64,
    lambda_d: f64,
) -> Result<f64> {
    let data = masked_residual_sq(y, z);
    let nuclear = if lambda_n != 0.0 {
        nuclear_norm(z)?
    } else {
        0.0
    };
    let diversity = if lambda_d != 0.0 {
        let f = f.ok_or_else(|| {
            Error::Config("diversity weight is nonzero but no F operator given".into())
        })?;
        z.dot(f).iter().map(|v| v * v).sum()
    } else {
        0.0
    };
    Ok(data + lambda_n * nuclear + lambda_d * diversity)
}
