//! Small dense linear-algebra helpers shared by the estimation modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing order.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first so that round-off asymmetry
/// from upstream products does not leak into the solver.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric square root with eigenvalues below zero clipped to zero.
///
/// Returns the root and the most negative eigenvalue that was clipped (0 if none).
pub fn psd_sqrt(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut most_negative = 0.0f64;
    let roots = eig.eigenvalues.map(|v| {
        if v < 0.0 {
            most_negative = most_negative.min(v);
            0.0
        } else {
            v.sqrt()
        }
    });
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&roots) * q.transpose(), most_negative)
}

/// Square root and Moore-Penrose inverse square root of a PSD matrix.
///
/// Eigenvalues below `rel_cut * λ_max` are treated as zero in both factors.
pub fn sqrt_and_pinv_sqrt(a: &DMatrix<f64>, rel_cut: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_cut * lmax;
    let root = eig.eigenvalues.map(|v| if v > cut { v.sqrt() } else { 0.0 });
    let inv_root = eig.eigenvalues.map(|v| if v > cut { 1.0 / v.sqrt() } else { 0.0 });
    let q = &eig.eigenvectors;
    (
        q * DMatrix::from_diagonal(&root) * q.transpose(),
        q * DMatrix::from_diagonal(&inv_root) * q.transpose(),
    )
}

/// Flip each column so that its largest-magnitude entry is positive.
pub fn fix_column_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Column means of a matrix.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtract the given mean vector from every row.
pub fn center_rows(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}

/// Spectral norm (largest singular value) squared of a matrix, via `XᵀX`.
pub fn spectral_norm_sq(x: &DMatrix<f64>) -> f64 {
    if x.ncols() == 0 {
        return 0.0;
    }
    max_eigenvalue(&x.tr_mul(x)).max(0.0)
}
