//! Small dense linear-algebra kernels used throughout the crate: nullspaces
//! with relative rank tolerance, quadratic forms restricted to subspaces,
//! inertia with a determinant sign, and least-squares solves. Everything is
//! deterministic for fixed input bytes; matrices stay small (n <= ~10), so
//! dense SVD and symmetric eigendecompositions are used directly.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// A linear subspace of R^n carried as an orthonormal basis (columns).
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient_dim: usize,
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn new(ambient_dim: usize, basis: DMatrix<f64>) -> Self {
        assert_eq!(basis.nrows(), ambient_dim);
        Subspace { ambient_dim, basis }
    }

    /// The whole of R^n.
    pub fn full(n: usize) -> Self {
        Subspace {
            ambient_dim: n,
            basis: DMatrix::identity(n, n),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthonormal basis, one column per dimension.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Maps coordinates in the basis back to ambient coordinates.
    pub fn embed(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * v
    }
}

/// Nullspace of the row matrix `rows` (l x n). Singular values below
/// `tol * max(sigma_max, 1)` count as zero. With zero rows the result is all
/// of R^n; with l > n independent rows it is the zero subspace.
pub fn nullspace(rows: &DMatrix<f64>, tol: f64) -> Subspace {
    let n = rows.ncols();
    let l = rows.nrows();
    if l == 0 {
        return Subspace::full(n);
    }
    // Pad with zero rows so the SVD carries a full set of n right singular
    // vectors (a thin SVD of a wide matrix drops exactly the ones we need).
    let m = l.max(n);
    let mut padded = DMatrix::zeros(m, n);
    padded.view_mut((0, 0), (l, n)).copy_from(rows);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd computed with right singular vectors");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * sigma_max.max(1.0);
    let mut cols: Vec<usize> = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < cutoff {
            cols.push(i);
        }
    }
    let mut basis = DMatrix::zeros(n, cols.len());
    for (dst, src) in cols.iter().enumerate() {
        basis.column_mut(dst).copy_from(&v_t.row(*src).transpose());
    }
    Subspace {
        ambient_dim: n,
        basis,
    }
}

/// Restriction B^T H B of a symmetric form to a subspace; computed on the
/// upper triangle and mirrored so the result is symmetric to the bit.
pub fn restrict_form(h: &DMatrix<f64>, s: &Subspace) -> Result<DMatrix<f64>, LinalgError> {
    if h.nrows() != h.ncols() {
        return Err(LinalgError::DimensionMismatch(format!(
            "form is {}x{}, expected square",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.nrows() != s.ambient_dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "form has dimension {}, subspace ambient dimension is {}",
            h.nrows(),
            s.ambient_dim()
        )));
    }
    let d = s.dim();
    let hb = h * s.basis();
    let mut r = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = s.basis().column(i).dot(&hb.column(j));
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(r)
}

/// Signature of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Inertia {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_zero: usize,
}

/// Eigenvalues (ascending) and matching eigenvectors of a symmetric matrix.
pub fn eigen_sym_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = a.nrows();
    if d == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vals = DVector::zeros(d);
    let mut vecs = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = eig.eigenvalues[src];
        vecs.column_mut(dst).copy_from(&eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Inertia of a symmetric matrix together with the sign of its determinant.
/// Eigenvalues with |lambda| < tol * max(1, |lambda|_max) count as zero; the
/// sign is 0 exactly when a zero eigenvalue is present, otherwise
/// (-1)^(n_neg). The empty matrix has inertia (0,0,0) and sign +1.
pub fn inertia_and_detsign(a: &DMatrix<f64>, tol: f64) -> (Inertia, i8) {
    let d = a.nrows();
    if d == 0 {
        return (
            Inertia {
                n_pos: 0,
                n_neg: 0,
                n_zero: 0,
            },
            1,
        );
    }
    let (vals, _) = eigen_sym_sorted(a);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let cutoff = tol * scale;
    let mut inertia = Inertia {
        n_pos: 0,
        n_neg: 0,
        n_zero: 0,
    };
    for v in vals.iter() {
        if v.abs() < cutoff {
            inertia.n_zero += 1;
        } else if *v > 0.0 {
            inertia.n_pos += 1;
        } else {
            inertia.n_neg += 1;
        }
    }
    let sign = if inertia.n_zero > 0 {
        0
    } else if inertia.n_neg % 2 == 1 {
        -1
    } else {
        1
    };
    (inertia, sign)
}

/// Minimum-norm least-squares solution of `a z = b` via SVD, with singular
/// values below `tol * max(sigma_max, 1)` treated as zero. Returns the
/// solution; the caller judges the residual.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> DVector<f64> {
    let cols = a.ncols();
    if cols == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = tol * sigma_max.max(1.0);
    match svd.solve(b, eps) {
        Ok(z) => z.column(0).into_owned(),
        Err(_) => DVector::zeros(cols),
    }
}

/// Least squares through the normal equations A^T A z = A^T b. Kept as an
/// independent second path for cross-checking `lstsq` on well-conditioned
/// systems; `None` when the normal matrix is singular.
pub fn lstsq_normal(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let cols = a.ncols();
    if cols == 0 {
        return Some(DVector::zeros(0));
    }
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    if let Some(chol) = ata.clone().cholesky() {
        return Some(chol.solve(&atb));
    }
    ata.lu().solve(&atb)
}
