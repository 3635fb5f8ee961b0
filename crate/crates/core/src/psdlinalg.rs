//! Dense symmetric positive-semidefinite linear algebra.
//!
//! Every matrix that gets pseudoinverted by the observer is symmetric PSD, so
//! the whole module is built on one cyclic Jacobi eigendecomposition that is
//! computed once when a [`SymPsdMatrix`] is constructed and reused for the
//! pseudoinverse, the numerical rank and the extremal eigenvalues.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Off-diagonal Frobenius mass (relative to `‖M‖_F`) at which Jacobi stops.
const JACOBI_OFF_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 30;
/// Largest admissible `|a_ij - a_ji|` relative to `max(1, max|a_ij|)`.
const SYMMETRY_TOL: f64 = 1e-10;
/// Default relative rank tolerance, multiplied by the dimension.
pub const DEFAULT_TOL_REL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored column-wise, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
///
/// The input is assumed exactly symmetric; only rotations with a nonzero
/// pivot are applied, so exact structural zeros survive untouched.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let fro = a.norm();

    if fro > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += a[(i, j)] * a[(i, j)];
                    }
                }
            }
            if off.sqrt() <= JACOBI_OFF_TOL * fro {
                break;
            }
            for p in 0..n.saturating_sub(1) {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = if theta.abs() > 1e150 {
                        0.5 / theta
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;

                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymEigen { values, vectors }
}

/// Absolute truncation threshold for a given relative tolerance.
///
/// `tol_rel == 0` selects the default `1e-10 * dim`.
pub fn tolerance(tol_rel: f64, dim: usize, lambda_max: f64) -> f64 {
    let rel = if tol_rel > 0.0 {
        tol_rel
    } else {
        DEFAULT_TOL_REL * dim.max(1) as f64
    };
    rel * lambda_max.max(1.0)
}

/// A symmetric positive-semidefinite matrix together with its eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPsdMatrix {
    entries: DMatrix<f64>,
    eigen: SymEigen,
}

impl SymPsdMatrix {
    /// Symmetrizes `m` and checks that it is PSD at the default tolerance.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSymmetric {
                asymmetry: f64::NAN,
            });
        }
        let scale = m.amax().max(1.0);
        let mut asym = 0.0f64;
        for i in 0..rows {
            for j in (i + 1)..rows {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let entries = DMatrix::from_fn(rows, rows, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        let eigen = jacobi_eigen(&entries);
        let out = SymPsdMatrix { entries, eigen };
        let tol = tolerance(0.0, rows, out.lambda_max());
        if out.raw_min_eigenvalue() < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: out.raw_min_eigenvalue(),
                tol,
            });
        }
        Ok(out)
    }

    pub fn identity(dim: usize) -> Self {
        SymPsdMatrix {
            entries: DMatrix::identity(dim, dim),
            eigen: SymEigen {
                values: vec![1.0; dim],
                vectors: DMatrix::identity(dim, dim),
            },
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// Eigenvalues in descending order, unclamped.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigen(&self) -> &SymEigen {
        &self.eigen
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigen.values.first().copied().unwrap_or(0.0).max(0.0)
    }

    fn raw_min_eigenvalue(&self) -> f64 {
        self.eigen.values.last().copied().unwrap_or(0.0)
    }

    /// `(M v, v)`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        (&self.entries * v).dot(v)
    }

    pub fn is_positive_definite(&self, tol_rel: f64) -> bool {
        rank(self, tol_rel) == self.dim()
    }
}

/// Moore–Penrose pseudoinverse of a PSD matrix plus the data it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PinvResult {
    pub pinv: SymPsdMatrix,
    pub rank: usize,
    /// Eigenvalues of the input, descending.
    pub eigenvalues: Vec<f64>,
    pub tol_used: f64,
    /// Orthonormal basis of the numerical range (kept eigenvectors).
    basis: DMatrix<f64>,
}

impl PinvResult {
    /// Orthogonal projection onto the numerical range, `M⁺ M v`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    pub fn range_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `M⁺ v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.pinv.matrix() * v
    }
}

/// Pseudoinverse through the cached eigendecomposition.
///
/// Eigenvalues at or below `tol_used = tol_rel * max(λ_max, 1)` are treated
/// as zero; `tol_rel == 0` selects `1e-10 * dim`.
pub fn pinv_psd(m: &SymPsdMatrix, tol_rel: f64) -> Result<PinvResult> {
    let n = m.dim();
    let tol_used = tolerance(tol_rel, n, m.lambda_max());
    let lmin = m.raw_min_eigenvalue();
    if lmin < -tol_used {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
            tol: tol_used,
        });
    }
    let values = &m.eigen.values;
    let vectors = &m.eigen.vectors;
    let rank = values.iter().filter(|&&l| l > tol_used).count();

    // kept eigenvalues are the leading `rank` ones
    let basis = vectors.columns(0, rank).into_owned();
    let mut pinv = DMatrix::<f64>::zeros(n, n);
    for (i, &l) in values.iter().enumerate().take(rank) {
        let col = vectors.column(i);
        pinv += (col * col.transpose()) / l;
    }
    let pinv = DMatrix::from_fn(n, n, |i, j| 0.5 * (pinv[(i, j)] + pinv[(j, i)]));

    // same eigenvectors; reciprocal eigenvalues reordered descending
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let ki = if i < rank { 1.0 / values[i] } else { 0.0 };
        let kj = if j < rank { 1.0 / values[j] } else { 0.0 };
        kj.total_cmp(&ki)
    });
    let inv_values = order
        .iter()
        .map(|&i| if i < rank { 1.0 / values[i] } else { 0.0 })
        .collect();
    let inv_vectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);

    Ok(PinvResult {
        pinv: SymPsdMatrix {
            entries: pinv,
            eigen: SymEigen {
                values: inv_values,
                vectors: inv_vectors,
            },
        },
        rank,
        eigenvalues: values.clone(),
        tol_used,
        basis,
    })
}

/// Smallest eigenvalue, clamped at zero.
pub fn min_eigenvalue(m: &SymPsdMatrix) -> f64 {
    m.raw_min_eigenvalue().max(0.0)
}

/// Numerical rank at the given relative tolerance.
pub fn rank(m: &SymPsdMatrix, tol_rel: f64) -> usize {
    let tol = tolerance(tol_rel, m.dim(), m.lambda_max());
    m.eigen.values.iter().filter(|&&l| l > tol).count()
}

/// Orthogonal projection of `v` onto `range(M)` at the default tolerance.
pub fn project_range(m: &SymPsdMatrix, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != m.dim() {
        return Err(Error::dim("vector", m.dim(), v.len()));
    }
    Ok(pinv_psd(m, 0.0)?.project(v))
}

/// Moore–Penrose pseudoinverse of a rectangular matrix via SVD, dropping
/// singular values below `max(rows, cols) · ε · σ_max`. Going through
/// `A'A` would square the condition number.
pub fn pinv_general(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSymmetric {
            asymmetry: f64::NAN,
        });
    }
    if a.is_empty() {
        return Ok(DMatrix::zeros(a.ncols(), a.nrows()));
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * sigma_max;
    Ok(svd.pseudo_inverse(eps).expect("u and v were computed"))
}

/// Symmetric square root `M^{1/2}` of a PSD matrix.
pub fn sqrt_psd(m: &SymPsdMatrix) -> DMatrix<f64> {
    let n = m.dim();
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (i, &l) in m.eigen.values.iter().enumerate() {
        if l > 0.0 {
            let col = m.eigen.vectors.column(i);
            out += (col * col.transpose()) * l.sqrt();
        }
    }
    out
}
