//! Centering and the sample covariance matrix function.

use crate::basis::{FunctionalPanel, KernelMatrix};
use crate::error::{Error, Result};
use crate::linalg::at_b;
use crate::scalar::{count, Real};

/// Removes the time mean of every (series, coefficient) column.
pub fn center<T: Real>(panel: &FunctionalPanel<T>) -> Result<FunctionalPanel<T>> {
    let n = panel.n();
    if n < 2 {
        return Err(Error::invalid(format!("centering needs at least 2 observations, got {n}")));
    }
    let mut coeffs = panel.coeffs().clone();
    let nn = count::<T>(n);
    for mut col in coeffs.column_iter_mut() {
        let mean = col.sum() / nn;
        col.add_scalar_mut(-mean);
    }
    FunctionalPanel::new(n, panel.p(), panel.k(), coeffs)
}

/// `Σ̂(u,v) = n⁻¹ Σ_t y_t(u) y_t(v)^T`; the panel is assumed centered.
pub fn sample_cov<T: Real>(panel: &FunctionalPanel<T>) -> KernelMatrix<T> {
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    if n == 0 {
        return KernelMatrix::zeros(p, p, k);
    }
    let y = panel.coeffs();
    let mut s = at_b(y, y) / count::<T>(n);
    // Exact symmetry regardless of gemm summation order.
    for j in 0..s.ncols() {
        for i in (j + 1)..s.nrows() {
            let v = s[(i, j)];
            s[(j, i)] = v;
        }
    }
    KernelMatrix::square(p, k, s).expect("consistent shape")
}
