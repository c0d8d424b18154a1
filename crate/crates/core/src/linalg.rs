//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{lit, Real};

/// Flips `v` so that its largest-magnitude entry is positive (first index wins ties).
pub fn fix_sign<T: Real>(v: &mut DVector<T>) {
    let mut best = 0;
    let mut best_abs = T::zero();
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if best_abs > T::zero() && v[best] < T::zero() {
        v.neg_mut();
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order and
/// eigenvector signs fixed by [`fix_sign`]. The input is symmetrized first.
pub fn sym_eigen_desc<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = lit::<T>(0.5);
    (m + m.transpose()) * half
}

pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| if x.abs() > acc { x.abs() } else { acc })
}

/// Symmetry check relative to the largest entry.
pub fn is_symmetric<T: Real>(m: &DMatrix<T>, rel_tol: T) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(T::one());
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// `a^T b` through the blocked gemm path.
pub fn at_b<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.transpose() * b
}

/// `B ⊗ I_k`: lifts a scalar matrix acting on series indices to coefficient space.
pub fn kron_identity<T: Real>(b: &DMatrix<T>, k: usize) -> DMatrix<T> {
    let (rows, cols) = b.shape();
    let mut out = DMatrix::zeros(rows * k, cols * k);
    for j in 0..cols {
        for i in 0..rows {
            let v = b[(i, j)];
            if v != T::zero() {
                for a in 0..k {
                    out[(i * k + a, j * k + a)] = v;
                }
            }
        }
    }
    out
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    if is_symmetric(m, lit(1e-12)) {
        let eig = symmetrize(m).symmetric_eigen();
        return eig.eigenvalues.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(T::zero(), |acc, x| acc.max(*x))
}

/// `V diag(f(λ)) V^T` over the eigenpairs of a symmetric matrix.
pub fn spectral_map<T: Real>(m: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let (vals, vecs) = sym_eigen_desc(m);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = f(v);
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * vecs.transpose()
}

/// Square root of the nonnegative part of a symmetric matrix.
pub fn psd_sqrt<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    spectral_map(m, |v| if v > T::zero() { v.sqrt() } else { T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_is_sorted_and_sign_fixed() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert!((vals[0] - 5.0f64).abs() < 1e-12);
        assert!((vals[1] - 3.0f64).abs() < 1e-12);
        assert!((vals[2] - 1.0f64).abs() < 1e-12);
        for j in 0..3 {
            let col = vecs.column(j);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rebuilt - m).norm() < 1e-12);
    }

    #[test]
    fn kron_identity_matches_definition() {
        let b = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let kb = kron_identity(&b, 2);
        assert_eq!(kb.shape(), (4, 2));
        assert_eq!(kb[(0, 0)], 1.0);
        assert_eq!(kb[(1, 1)], 1.0);
        assert_eq!(kb[(2, 0)], -2.0);
        assert_eq!(kb[(3, 1)], -2.0);
        assert_eq!(kb[(1, 0)], 0.0);
    }

    #[test]
    fn spectral_norm_of_rectangular() {
        let m = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        assert!((spectral_norm(&m) - 4.0f64).abs() < 1e-12);
    }
}
