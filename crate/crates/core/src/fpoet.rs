//! Estimation under the scalar-factor model `y_t = Q γ_t + ε_t`, where the
//! loadings `Q(·)` are functional and the factors `γ_t` are scalar.

use nalgebra::{DMatrix, DVector};

use crate::aft::{apply_aft, variance_factors, ThresholdRule};
use crate::basis::{kernel_norm, FunctionalPanel, KernelMatrix, KernelNorm};
use crate::covariance::sample_cov;
use crate::error::{Error, Result};
use crate::linalg::{fix_sign, sym_eigen_desc, symmetrize};
use crate::scalar::{count, lit, Real};

/// Multivariate functional principal components of the sample covariance.
#[derive(Debug, Clone)]
pub struct Mfpca<T: Real> {
    /// Eigenvalues `τ̂_1 ≥ τ̂_2 ≥ …`, `min(n, pK)` of them.
    pub tau: DVector<T>,
    /// Leading eigenfunctions as columns of a `pK × r` coefficient matrix.
    pub phi: DMatrix<T>,
}

/// Leading `r` eigenpairs of `Σ̂_y^S`, from the `pK × pK` flattening when
/// `pK ≤ 2n` and from the `n × n` dual Gram matrix otherwise.
pub fn mfpca<T: Real>(panel: &FunctionalPanel<T>, r: usize) -> Result<Mfpca<T>> {
    let (n, dim) = (panel.n(), panel.p() * panel.k());
    let m = n.min(dim);
    if r > m {
        return Err(Error::invalid(format!("need r <= min(n, pK) = {m}, got r = {r}")));
    }
    if dim > 2 * n {
        if let Some(out) = dual_mfpca(panel, r) {
            return Ok(out);
        }
    }
    let (vals, vecs) = sym_eigen_desc(sample_cov(panel).flat());
    let tau = DVector::from_iterator(m, vals.iter().take(m).map(|v| v.max(T::zero())));
    Ok(Mfpca { tau, phi: vecs.columns(0, r).into_owned() })
}

fn dual_mfpca<T: Real>(panel: &FunctionalPanel<T>, r: usize) -> Option<Mfpca<T>> {
    let y = panel.coeffs();
    let nn = count::<T>(panel.n());
    let (mu, v) = sym_eigen_desc(&(y * y.transpose()));
    let floor = mu.get(0).copied().unwrap_or(T::zero()) * lit(1e-12);
    let mut phi = DMatrix::zeros(y.ncols(), r);
    for j in 0..r {
        if !(mu[j] > floor) || mu[j] <= T::zero() {
            return None;
        }
        let mut col = y.tr_mul(&v.column(j)) / mu[j].sqrt();
        fix_sign(&mut col);
        phi.set_column(j, &col);
    }
    let tau = mu.map(|x| x.max(T::zero()) / nn);
    Some(Mfpca { tau, phi })
}

#[derive(Debug, Clone)]
pub struct FpoetFit<T: Real> {
    pub tau_hat: DVector<T>,
    pub phi_hat: DMatrix<T>,
    pub r_hat: KernelMatrix<T>,
    /// `n × r`, with `n⁻¹ Γ̂ᵀ Γ̂ = I_r`.
    pub gamma_hat: DMatrix<T>,
    /// `pK × r`; column `j` holds the coefficients of `q̂_j(·) ∈ H^p`.
    pub q_hat: DMatrix<T>,
    pub residuals: FunctionalPanel<T>,
    pub r: usize,
}

impl<T: Real> FpoetFit<T> {
    /// `Σ_{j≤r} τ̂_j φ̂_j φ̂_jᵀ`.
    pub fn low_rank(&self) -> KernelMatrix<T> {
        let (p, k) = (self.residuals.p(), self.residuals.k());
        let mut mat = DMatrix::zeros(p * k, p * k);
        for j in 0..self.r {
            let col = self.phi_hat.column(j);
            mat.ger(self.tau_hat[j], &col, &col, T::one());
        }
        KernelMatrix::square(p, k, symmetrize(&mat)).expect("shape")
    }
}

fn check_rank<T: Real>(panel: &FunctionalPanel<T>, r: usize, allow_zero: bool) -> Result<()> {
    let m = panel.n().min(panel.p() * panel.k());
    if (r == 0 && !allow_zero) || r > m {
        return Err(Error::invalid(format!("need 1 <= r <= min(n, pK) = {m}, got r = {r}")));
    }
    Ok(())
}

fn fit_inner<T: Real>(panel: &FunctionalPanel<T>, r: usize) -> Result<FpoetFit<T>> {
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    let pcs = mfpca(panel, r)?;
    let y = panel.coeffs();
    let scores = y * &pcs.phi;
    let resid = y - &scores * pcs.phi.transpose();
    let mut gamma_hat = DMatrix::zeros(n, r);
    let mut q_hat = DMatrix::zeros(p * k, r);
    for j in 0..r {
        let st = pcs.tau[j].sqrt();
        if st > T::zero() {
            gamma_hat.set_column(j, &(scores.column(j) / st));
        }
        q_hat.set_column(j, &(pcs.phi.column(j) * st));
    }
    let residuals = FunctionalPanel::new(n, p, k, resid)?;
    let r_hat = sample_cov(&residuals);
    Ok(FpoetFit { tau_hat: pcs.tau, phi_hat: pcs.phi, r_hat, gamma_hat, q_hat, residuals, r })
}

/// Principal components and the principal orthogonal complement
/// `R̂ = Σ̂_y^S − Σ_{j≤r} τ̂_j φ̂_j φ̂_jᵀ`, without thresholding.
pub fn fpoet_fit<T: Real>(panel: &FunctionalPanel<T>, r: usize) -> Result<FpoetFit<T>> {
    check_rank(panel, r, false)?;
    fit_inner(panel, r)
}

/// `Σ̂_y^F = Σ_{j≤r} τ̂_j φ̂_j φ̂_jᵀ + AFT(R̂)` with diagonal blocks untouched.
pub fn fpoet_estimator<T: Real>(
    panel: &FunctionalPanel<T>,
    r: usize,
    rule: &ThresholdRule<T>,
) -> Result<(KernelMatrix<T>, FpoetFit<T>)> {
    fpoet_estimator_with(panel, r, rule, false)
}

pub fn fpoet_estimator_with<T: Real>(
    panel: &FunctionalPanel<T>,
    r: usize,
    rule: &ThresholdRule<T>,
    threshold_diagonal: bool,
) -> Result<(KernelMatrix<T>, FpoetFit<T>)> {
    check_rank(panel, r, false)?;
    rule.validate()?;
    let fit = fit_inner(panel, r)?;
    let est = threshold_complement(&fit, rule, panel.n(), threshold_diagonal)?;
    Ok((est, fit))
}

fn threshold_complement<T: Real>(
    fit: &FpoetFit<T>,
    rule: &ThresholdRule<T>,
    n: usize,
    threshold_diagonal: bool,
) -> Result<KernelMatrix<T>> {
    let p = fit.residuals.p();
    let vf = variance_factors(&fit.residuals, &fit.r_hat)?;
    let thresholded = apply_aft(&fit.r_hat, &vf, rule, n, p, threshold_diagonal);
    Ok(fit.low_rank().add(&thresholded)?.symmetrized())
}

/// Constrained least-squares fit: `n^{-1/2} Γ̂` holds the top-`r` eigenvectors
/// of `M = Y Yᵀ`, `Q̂ = n⁻¹ Yᵀ Γ̂` and residuals are `y_t − Q̂ γ̂_t`.
pub fn ls_fit<T: Real>(panel: &FunctionalPanel<T>, r: usize) -> Result<FpoetFit<T>> {
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    if r > n {
        return Err(Error::invalid(format!("need r <= n = {n}, got r = {r}")));
    }
    let y = panel.coeffs();
    let nn = count::<T>(n.max(1));
    let sqrt_n = nn.sqrt();
    let (mu, v) = sym_eigen_desc(&(y * y.transpose()));
    let mut gamma_hat = DMatrix::zeros(n, r);
    let mut q_hat = DMatrix::zeros(p * k, r);
    let mut phi_hat = DMatrix::zeros(p * k, r);
    for j in 0..r {
        let mut g = v.column(j) * sqrt_n;
        let mut q = y.tr_mul(&g) / nn;
        let mut fixed = q.clone();
        fix_sign(&mut fixed);
        if fixed != q {
            q = fixed;
            g.neg_mut();
        }
        let qn = q.norm();
        if qn > T::zero() {
            phi_hat.set_column(j, &(&q / qn));
        }
        gamma_hat.set_column(j, &g);
        q_hat.set_column(j, &q);
    }
    let resid = y - &gamma_hat * q_hat.transpose();
    let residuals = FunctionalPanel::new(n, p, k, resid)?;
    let r_hat = sample_cov(&residuals);
    let tau_hat = mu.map(|x| x.max(T::zero()) / nn);
    let tau_hat = DVector::from_iterator(n.min(p * k), tau_hat.iter().take(n.min(p * k)).copied());
    Ok(FpoetFit { tau_hat, phi_hat, r_hat, gamma_hat, q_hat, residuals, r })
}

/// `Σ̂_y^L = Q̂ Q̂ᵀ + AFT(Σ̃_ε)` from the least-squares fit.
pub fn ls_estimator<T: Real>(
    panel: &FunctionalPanel<T>,
    r: usize,
    rule: &ThresholdRule<T>,
    threshold_diagonal: bool,
) -> Result<(KernelMatrix<T>, FpoetFit<T>)> {
    let fit = ls_fit(panel, r)?;
    let (p, k) = (panel.p(), panel.k());
    let vf = variance_factors(&fit.residuals, &fit.r_hat)?;
    let thresholded = apply_aft(&fit.r_hat, &vf, rule, panel.n(), p, threshold_diagonal);
    let qq = KernelMatrix::square(p, k, symmetrize(&(&fit.q_hat * fit.q_hat.transpose())))?;
    Ok((qq.add(&thresholded)?.symmetrized(), fit))
}

/// Discrepancies between the eigen-decomposition and least-squares routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence<T: Real> {
    /// `‖Σ̂_y^F − Σ̂_y^L‖_{S,max}`.
    pub estimator: T,
    /// `‖AFT(R̂) − AFT(Σ̃_ε)‖_{S,max}`.
    pub complement: T,
}

impl<T: Real> Equivalence<T> {
    pub fn max(&self) -> T {
        self.estimator.max(self.complement)
    }
}

/// Runs both routes with the same rule. `r = 0` is allowed, in which case both
/// reduce to thresholding the sample covariance.
pub fn check_equivalence<T: Real>(
    panel: &FunctionalPanel<T>,
    r: usize,
    rule: &ThresholdRule<T>,
) -> Result<Equivalence<T>> {
    check_rank(panel, r, true)?;
    let (n, p) = (panel.n(), panel.p());
    let f = fit_inner(panel, r)?;
    let est_f = threshold_complement(&f, rule, n, false)?;
    let (est_l, l) = ls_estimator(panel, r, rule, false)?;
    let vf_f = variance_factors(&f.residuals, &f.r_hat)?;
    let vf_l = variance_factors(&l.residuals, &l.r_hat)?;
    let ra = apply_aft(&f.r_hat, &vf_f, rule, n, p, false);
    let la = apply_aft(&l.r_hat, &vf_l, rule, n, p, false);
    Ok(Equivalence {
        estimator: kernel_norm(&est_f.sub(&est_l)?, KernelNorm::Smax),
        complement: kernel_norm(&ra.sub(&la)?, KernelNorm::Smax),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(n: usize, p: usize, k: usize, seed: u64) -> FunctionalPanel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = DMatrix::from_fn(n, p * k, |_, _| rng.random_range(-1.0..1.0));
        FunctionalPanel::new(n, p, k, coeffs).unwrap()
    }

    #[test]
    fn zero_threshold_and_full_rank() {
        let panel = random_panel(8, 3, 2, 2);
        let s = sample_cov(&panel);
        let rule = ThresholdRule::default().with_c_dot(0.0);
        let (est, _) = fpoet_estimator(&panel, 2, &rule).unwrap();
        assert!(max_abs(&(est.flat() - s.flat())) < 1e-10);
        let (est, fit) = fpoet_estimator(&panel, 6, &ThresholdRule::default()).unwrap();
        assert!(max_abs(fit.r_hat.flat()) < 1e-10);
        assert!(max_abs(&(est.flat() - s.flat())) < 1e-10);
        assert!(fpoet_estimator(&panel, 0, &rule).is_err());
        assert!(fpoet_estimator(&panel, 7, &rule).is_err());
    }

    #[test]
    fn dual_and_direct_paths_agree() {
        let panel = random_panel(6, 5, 3, 4);
        let dual = dual_mfpca(&panel, 3).unwrap();
        let (vals, vecs) = sym_eigen_desc(sample_cov(&panel).flat());
        for j in 0..3 {
            assert!((dual.tau[j] - vals[j]).abs() < 1e-12);
            assert!((dual.phi.column(j) - vecs.column(j)).amax() < 1e-9);
        }
    }

    #[test]
    fn ls_normalization_and_exact_low_rank() {
        let panel = random_panel(30, 20, 4, 5);
        let fit = ls_fit(&panel, 2).unwrap();
        let g = fit.gamma_hat.transpose() * &fit.gamma_hat / 30.0;
        assert!(max_abs(&(g - DMatrix::identity(2, 2))) < 1e-8);
        let ptp = fit.phi_hat.transpose() * &fit.phi_hat;
        assert!(max_abs(&(ptp - DMatrix::identity(2, 2))) < 1e-8);
        assert!(ls_fit(&panel, 31).is_err());

        let low = DMatrix::from_fn(10, 6, |t, c| ((t + 1) as f64).sin() * ((c + 1) as f64));
        let panel = FunctionalPanel::new(10, 3, 2, low).unwrap();
        let fit = ls_fit(&panel, 1).unwrap();
        assert!(max_abs(fit.residuals.coeffs()) < 1e-8);
    }

    #[test]
    fn single_observation_gamma_support() {
        let mut y = DMatrix::<f64>::zeros(5, 4);
        y.row_mut(2).copy_from_slice(&[1.0, 2.0, -1.0, 0.5]);
        let panel = FunctionalPanel::new(5, 2, 2, y).unwrap();
        let fit = ls_fit(&panel, 1).unwrap();
        for t in 0..5 {
            assert_eq!(fit.gamma_hat[(t, 0)].abs() > 1e-12, t == 2);
        }
    }

    #[test]
    fn equivalence_on_random_panels() {
        let rule = ThresholdRule::default();
        for seed in 0..3 {
            let panel = random_panel(20, 10, 3, seed);
            let eq = check_equivalence(&panel, 2, &rule).unwrap();
            assert!(eq.max() <= 1e-8, "{eq:?}");
            let eq0 = check_equivalence(&panel, 0, &rule).unwrap();
            assert_eq!(eq0.max(), 0.0);
        }
    }
}
