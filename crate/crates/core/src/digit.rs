//! Estimation under the functional-factor model `y_t = B f_t + ε_t`, where
//! `B` is a `p × r` real loading matrix and `f_t` are functional factors.

use nalgebra::{DMatrix, DVector};

use crate::aft::{apply_aft, variance_factors, ThresholdRule};
use crate::basis::{FunctionalPanel, KernelMatrix};
use crate::covariance::sample_cov;
use crate::error::{Error, Result};
use crate::linalg::{at_b, kron_identity, sym_eigen_desc};
use crate::scalar::{count, Real};

/// `p × p` doubly integrated Gram matrix `∫∫ Σ̂_y Σ̂_yᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMatrix<T: Real> {
    pub mat: DMatrix<T>,
}

impl<T: Real> OmegaMatrix<T> {
    pub fn p(&self) -> usize {
        self.mat.nrows()
    }

    /// Eigenvalues (descending) and sign-fixed eigenvectors.
    pub fn eigen(&self) -> (DVector<T>, DMatrix<T>) {
        sym_eigen_desc(&self.mat)
    }
}

#[derive(Debug, Clone)]
pub struct DigitFit<T: Real> {
    pub b_hat: DMatrix<T>,
    pub factors: FunctionalPanel<T>,
    pub sigma_f_hat: KernelMatrix<T>,
    pub residuals: FunctionalPanel<T>,
    pub omega_eigenvalues: DVector<T>,
    pub r: usize,
}

impl<T: Real> DigitFit<T> {
    /// `B̂ Σ̂_f B̂ᵀ` as a `p × p` kernel matrix.
    pub fn common_cov(&self) -> KernelMatrix<T> {
        let k = self.factors.k();
        let bk = kron_identity(&self.b_hat, k);
        let mat = &bk * self.sigma_f_hat.flat() * bk.transpose();
        KernelMatrix::square(self.b_hat.nrows(), k, crate::linalg::symmetrize(&mat)).expect("shape")
    }

    /// Common components `B̂ f̂_t`.
    pub fn common(&self) -> FunctionalPanel<T> {
        let (n, p, k) = (self.factors.n(), self.b_hat.nrows(), self.factors.k());
        let mut out = DMatrix::zeros(n, p * k);
        for a in 0..k {
            let fa = self.factors.coefficient_slice(a);
            let ca = fa * self.b_hat.transpose();
            for i in 0..p {
                out.column_mut(i * k + a).copy_from(&ca.column(i));
            }
        }
        FunctionalPanel::new(n, p, k, out).expect("shape")
    }
}

/// `Ω[i][l] = Σ_j tr(S_ij S_ljᵀ)`.
pub fn gram_omega<T: Real>(s: &KernelMatrix<T>) -> Result<OmegaMatrix<T>> {
    if !s.is_square() {
        return Err(Error::invalid("gram_omega needs a square kernel matrix"));
    }
    let (p, k) = (s.p_rows(), s.k());
    let flat = s.flat();
    let mut mat = DMatrix::zeros(p, p);
    for a in 0..k {
        let rows: Vec<usize> = (0..p).map(|i| i * k + a).collect();
        let xa = flat.select_rows(&rows);
        mat += &xa * xa.transpose();
    }
    Ok(OmegaMatrix { mat: crate::linalg::symmetrize(&mat) })
}

/// [`gram_omega`] of the sample covariance, computed from the panel through the
/// `n × n` Gram matrix without forming the `pK × pK` covariance.
pub fn gram_omega_panel<T: Real>(panel: &FunctionalPanel<T>) -> OmegaMatrix<T> {
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    if n == 0 {
        return OmegaMatrix { mat: DMatrix::zeros(p, p) };
    }
    let y = panel.coeffs();
    let m = y * y.transpose();
    let z = &m * y;
    let mut mat = DMatrix::zeros(p, p);
    for a in 0..k {
        let cols: Vec<usize> = (0..p).map(|i| i * k + a).collect();
        let ya = y.select_columns(&cols);
        let za = z.select_columns(&cols);
        mat += at_b(&ya, &za);
    }
    let nn = count::<T>(n);
    OmegaMatrix { mat: crate::linalg::symmetrize(&(mat / (nn * nn))) }
}

/// `B̂ = √p (ξ̂_1, …, ξ̂_r)`.
pub fn estimate_loadings<T: Real>(omega: &OmegaMatrix<T>, r: usize) -> Result<DMatrix<T>> {
    let p = omega.p();
    if r == 0 || r > p {
        return Err(Error::invalid(format!("need 1 <= r <= p = {p}, got r = {r}")));
    }
    let (_, vecs) = omega.eigen();
    Ok(vecs.columns(0, r).into_owned() * count::<T>(p).sqrt())
}

/// `f̂_t = p⁻¹ B̂ᵀ y_t`, applied to every basis coefficient.
pub fn estimate_factors<T: Real>(panel: &FunctionalPanel<T>, b_hat: &DMatrix<T>) -> Result<FunctionalPanel<T>> {
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    if b_hat.nrows() != p {
        return Err(Error::invalid(format!("loadings have {} rows, panel has p = {p}", b_hat.nrows())));
    }
    let r = b_hat.ncols();
    let pp = count::<T>(p);
    let mut out = DMatrix::zeros(n, r * k);
    for a in 0..k {
        let fa = panel.coefficient_slice(a) * b_hat / pp;
        for j in 0..r {
            out.column_mut(j * k + a).copy_from(&fa.column(j));
        }
    }
    FunctionalPanel::new(n, r, k, out)
}

/// `y_t − p⁻¹ B̂ B̂ᵀ y_t`.
pub fn residual_panel<T: Real>(panel: &FunctionalPanel<T>, b_hat: &DMatrix<T>) -> Result<FunctionalPanel<T>> {
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    if b_hat.nrows() != p {
        return Err(Error::invalid("loading/panel dimension mismatch"));
    }
    let proj = b_hat * b_hat.transpose() / count::<T>(p);
    let mut out = panel.coeffs().clone();
    for a in 0..k {
        let ya = panel.coefficient_slice(a);
        let ra = &ya - &ya * &proj;
        for i in 0..p {
            out.column_mut(i * k + a).copy_from(&ra.column(i));
        }
    }
    FunctionalPanel::new(n, p, k, out)
}

/// Loadings, factors and residuals for a given number of factors.
pub fn digit_fit<T: Real>(panel: &FunctionalPanel<T>, r: usize) -> Result<DigitFit<T>> {
    let omega = gram_omega_panel(panel);
    let (vals, vecs) = omega.eigen();
    let p = panel.p();
    if r == 0 || r > p {
        return Err(Error::invalid(format!("need 1 <= r <= p = {p}, got r = {r}")));
    }
    let b_hat = vecs.columns(0, r).into_owned() * count::<T>(p).sqrt();
    let factors = estimate_factors(panel, &b_hat)?;
    let residuals = residual_panel(panel, &b_hat)?;
    let sigma_f_hat = sample_cov(&factors);
    Ok(DigitFit { b_hat, factors, sigma_f_hat, residuals, omega_eigenvalues: vals, r })
}

/// `Σ̂_y^D = B̂ Σ̂_f B̂ᵀ + AFT(Σ̂_ε)` with diagonal blocks left untouched.
pub fn digit_estimator<T: Real>(
    panel: &FunctionalPanel<T>,
    r: usize,
    rule: &ThresholdRule<T>,
) -> Result<(KernelMatrix<T>, DigitFit<T>)> {
    digit_estimator_with(panel, r, rule, false)
}

pub fn digit_estimator_with<T: Real>(
    panel: &FunctionalPanel<T>,
    r: usize,
    rule: &ThresholdRule<T>,
    threshold_diagonal: bool,
) -> Result<(KernelMatrix<T>, DigitFit<T>)> {
    rule.validate()?;
    let fit = digit_fit(panel, r)?;
    let sigma_eps = sample_cov(&fit.residuals);
    let vf = variance_factors(&fit.residuals, &sigma_eps)?;
    let thresholded = apply_aft(&sigma_eps, &vf, rule, panel.n(), panel.p(), threshold_diagonal);
    let est = fit.common_cov().add(&thresholded)?.symmetrized();
    Ok((est, fit))
}
