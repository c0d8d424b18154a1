//! Simulation designs with known covariance matrix functions.
//!
//! Curves are generated in a 50-dimensional Fourier basis (factor part) plus a
//! 25-dimensional idiosyncratic part and mapped into the estimation basis;
//! truths are expressed in the estimation basis directly so the full
//! `50p × 50p` operator is never formed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{fourier_value, trace_diag, BasisKind, BasisSpec, FunctionalPanel, KernelMatrix, KernelNorm};
use crate::error::{Error, Result};

fn default_burn_in() -> usize {
    100
}

fn default_factor_basis() -> usize {
    50
}

fn default_eps_basis() -> usize {
    25
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    /// 1: functional factors with real loadings; 2: scalar factors with functional loadings.
    pub dgp: u8,
    pub p: usize,
    pub n: usize,
    pub r: usize,
    pub alpha: f64,
    pub seed: u64,
    /// RNG stream; distinct replications use distinct streams of the same seed.
    #[serde(default)]
    pub replication: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_factor_basis")]
    pub n_factor_basis: usize,
    #[serde(default = "default_eps_basis")]
    pub n_eps_basis: usize,
}

impl DgpConfig {
    pub fn new(dgp: u8, p: usize, n: usize, r: usize, alpha: f64, seed: u64) -> Self {
        DgpConfig { dgp, p, n, r, alpha, seed, replication: 0, burn_in: 100, n_factor_basis: 50, n_eps_basis: 25 }
    }

    pub fn with_replication(self, replication: u64) -> Self {
        DgpConfig { replication, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dgp != 1 && self.dgp != 2 {
            return Err(Error::invalid(format!("dgp must be 1 or 2, got {}", self.dgp)));
        }
        if self.r == 0 || self.p == 0 || self.n == 0 {
            return Err(Error::invalid("p, n and r must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.n_factor_basis == 0 || self.n_eps_basis == 0 {
            return Err(Error::invalid("basis sizes must be positive"));
        }
        Ok(())
    }

    /// Dimension of the Fourier basis the curves are generated in.
    pub fn native_dim(&self) -> usize {
        self.n_factor_basis.max(self.n_eps_basis)
    }
}

#[derive(Debug, Clone)]
pub enum Loadings {
    /// `p × r` real loadings.
    Real(DMatrix<f64>),
    /// `pK × r` coefficients of functional loadings in the estimation basis.
    Functional(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub sigma_y: KernelMatrix<f64>,
    pub sigma_eps: KernelMatrix<f64>,
    pub loadings: Loadings,
    /// Sparsity of `Σ_ε` with `q = 0`.
    pub s_p: f64,
    /// Relative `SF` mass of the native `Σ_y` lost by the estimation basis.
    pub projection_remainder: f64,
    pub c_zeta: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: FunctionalPanel<f64>,
    pub truth: GroundTruth,
}

/// `A_jk = 0.4^{|j−k|+1}`.
pub fn var_matrix(r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, r, |j, k| 0.4f64.powi((j as i32 - k as i32).abs() + 1))
}

/// Stationary covariance `Σ = A Σ Aᵀ + Q` through `(I − A⊗A) vec Σ = vec Q`.
pub fn stationary_cov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = a.nrows();
    let lhs = DMatrix::identity(r * r, r * r) - a.kronecker(a);
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = lhs.lu().solve(&rhs).ok_or_else(|| Error::singular("VAR is not stationary"))?;
    let s = DMatrix::from_column_slice(r, r, sol.as_slice());
    Ok((&s + s.transpose()) * 0.5)
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Sparse positive-definite `C₀`: unit diagonal, symmetric `U[0, 0.5]`
/// off-diagonals hard-thresholded at the smallest level with at most
/// `⌊p^{1−α}⌋` nonzeros per row (diagonal included), then shifted by
/// `(max{−λ_min, 0} + 0.01) I`.
pub fn build_c0<R: Rng + ?Sized>(p: usize, alpha: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::identity(p, p);
    for j in 0..p {
        for i in (j + 1)..p {
            let v = rng.random_range(0.0..0.5);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let bound = ((p as f64).powf(1.0 - alpha) + 1e-9).floor() as usize;
    if bound == 0 {
        return Err(Error::DegenerateConfig(format!("alpha = {alpha} leaves no support")));
    }
    let keep_off = bound - 1;
    let mut level = 0.0f64;
    if keep_off < p.saturating_sub(1) {
        for i in 0..p {
            let mut row: Vec<f64> = (0..p).filter(|&j| j != i).map(|j| c[(i, j)]).collect();
            row.sort_by(|a, b| b.partial_cmp(a).unwrap());
            level = level.max(row[keep_off]);
        }
    }
    for j in 0..p {
        for i in 0..p {
            if i != j && c[(i, j)] <= level {
                c[(i, j)] = 0.0;
            }
        }
    }
    let lmin = c.clone().symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let delta = (-lmin).max(0.0) + 0.01;
    for i in 0..p {
        c[(i, i)] += delta;
    }
    Ok(c)
}

/// `K × native` matrix taking native Fourier coefficients to estimation-basis
/// coefficients. Identity truncation when the estimation basis is Fourier with
/// `K ≤ native`, quadrature cross-Gram otherwise.
pub fn coefficient_map(basis: &BasisSpec<f64>, native: usize) -> DMatrix<f64> {
    let k = basis.dim();
    if basis.kind() == BasisKind::Fourier && k <= native {
        return DMatrix::from_fn(k, native, |a, b| if a == b { 1.0 } else { 0.0 });
    }
    let grid = basis.grid();
    let w = basis.quad_weights();
    let vals = basis.values();
    DMatrix::from_fn(k, native, |a, b| {
        (0..grid.len()).map(|g| w[g] * vals[(g, a)] * fourier_value(b, grid[g])).sum()
    })
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, sd: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

/// Draws a panel and its truth in the estimation `basis`.
pub fn generate(cfg: &DgpConfig, basis: &BasisSpec<f64>) -> Result<Simulated> {
    cfg.validate()?;
    let (p, n, r) = (cfg.p, cfg.n, cfg.r);
    let nf = cfg.n_factor_basis;
    let ne = cfg.n_eps_basis;
    let native = cfg.native_dim();
    let k = basis.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.replication);

    let a = var_matrix(r);
    if spectral_radius(&a) >= 1.0 {
        return Err(Error::DegenerateConfig("VAR coefficient matrix is not stable".into()));
    }
    let sigma1 = stationary_cov(&a, &DMatrix::identity(r, r))?;

    // Loadings.
    let b = if cfg.dgp == 1 { DMatrix::from_fn(p, r, |_, _| rng.random_range(-0.75..0.75)) } else { DMatrix::zeros(0, 0) };
    // q_native[(i*native + a, k)] = a⁻¹ q_aik
    let q_native = if cfg.dgp == 2 {
        let mut q = DMatrix::zeros(p * native, r);
        for a_ in 0..nf {
            for i in 0..p {
                for kk in 0..r {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    q[(i * native + a_, kk)] = 0.3 * z / (a_ + 1) as f64;
                }
            }
        }
        q
    } else {
        DMatrix::zeros(0, 0)
    };

    // Idiosyncratic covariance.
    let c0 = build_c0(p, cfg.alpha, &mut rng)?;
    let gamma = Gamma::new(3.0, 1.0).expect("valid gamma parameters");
    let d = DVector::from_fn(p, |_, _| gamma.sample(&mut rng));
    let c_zeta = DMatrix::from_fn(p, p, |i, j| d[i] * c0[(i, j)] * d[j]);
    let chol = c_zeta
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("idiosyncratic covariance is not positive definite".into()))?;
    let l = chol.l();

    // Native coefficients: column i*native + a.
    let mut y = DMatrix::zeros(n, p * native);
    let steps = cfg.burn_in + n;
    match cfg.dgp {
        1 => {
            for a_ in 0..nf {
                let sd = 1.0 / (a_ + 1) as f64;
                let mut xi = DVector::zeros(r);
                let mut path = DMatrix::zeros(n, r);
                for t in 0..steps {
                    let u = normal_matrix(r, 1, sd, &mut rng);
                    xi = &a * xi + u.column(0);
                    if t >= cfg.burn_in {
                        path.row_mut(t - cfg.burn_in).copy_from(&xi.transpose());
                    }
                }
                let ya = path * b.transpose();
                for i in 0..p {
                    y.column_mut(i * native + a_).copy_from(&ya.column(i));
                }
            }
        }
        _ => {
            let mut g = DVector::zeros(r);
            let mut path = DMatrix::zeros(n, r);
            for t in 0..steps {
                let u = normal_matrix(r, 1, 1.0, &mut rng);
                g = &a * g + u.column(0);
                if t >= cfg.burn_in {
                    path.row_mut(t - cfg.burn_in).copy_from(&g.transpose());
                }
            }
            y += path * q_native.transpose();
        }
    }
    for l_ in 0..ne {
        let scale = 2f64.powf(-((l_ + 1) as f64) / 2.0);
        let psi = normal_matrix(n, p, 1.0, &mut rng) * l.transpose() * scale;
        for i in 0..p {
            let mut col = y.column_mut(i * native + l_);
            col += psi.column(i);
        }
    }

    // Map to the estimation basis.
    let m = coefficient_map(basis, native);
    let mut coeffs = DMatrix::zeros(n, p * k);
    for i in 0..p {
        let block = y.columns(i * native, native) * m.transpose();
        coeffs.columns_mut(i * k, k).copy_from(&block);
    }
    let panel = FunctionalPanel::new(n, p, k, coeffs)?;

    // Truth in the estimation basis.
    let d_f = DVector::from_fn(native, |a_, _| if a_ < nf { 1.0 / ((a_ + 1) * (a_ + 1)) as f64 } else { 0.0 });
    let d_e = DVector::from_fn(native, |a_, _| if a_ < ne { 2f64.powi(-((a_ + 1) as i32)) } else { 0.0 });
    let g_e = &m * DMatrix::from_diagonal(&d_e) * m.transpose();
    let sigma_eps_flat = c_zeta.kronecker(&g_e);
    let (common_flat, loadings, native_sq) = if cfg.dgp == 1 {
        let x = &b * &sigma1 * b.transpose();
        let g_f = &m * DMatrix::from_diagonal(&d_f) * m.transpose();
        let native_sq = x.norm_squared() * d_f.norm_squared()
            + 2.0 * (&x * &c_zeta).trace() * d_f.dot(&d_e)
            + c_zeta.norm_squared() * d_e.norm_squared();
        (x.kronecker(&g_f), Loadings::Real(b), native_sq)
    } else {
        let mut qk = DMatrix::zeros(p * k, r);
        for i in 0..p {
            let qi = &m * q_native.rows(i * native, native);
            qk.rows_mut(i * k, k).copy_from(&qi);
        }
        let qtq = q_native.transpose() * &q_native;
        let sq = &sigma1 * &qtq;
        let mut cross = 0.0;
        for a_ in 0..ne {
            let rows: Vec<usize> = (0..p).map(|i| i * native + a_).collect();
            let qa = q_native.select_rows(&rows);
            cross += d_e[a_] * (&sigma1 * qa.transpose() * &c_zeta * &qa).trace();
        }
        let native_sq = (&sq * &sq).trace() + 2.0 * cross + c_zeta.norm_squared() * d_e.norm_squared();
        (&qk * &sigma1 * qk.transpose(), Loadings::Functional(qk), native_sq)
    };
    let sigma_y_flat = crate::linalg::symmetrize(&(common_flat + &sigma_eps_flat));
    let sigma_y = KernelMatrix::square(p, k, sigma_y_flat)?;
    let sigma_eps = KernelMatrix::square(p, k, sigma_eps_flat)?;
    let kept = sigma_y.flat().norm_squared();
    let projection_remainder = if native_sq > 0.0 { (1.0 - kept / native_sq).max(0.0).sqrt() } else { 0.0 };
    let s_p = functional_sparsity(&sigma_eps)?;
    Ok(Simulated {
        panel,
        truth: GroundTruth { sigma_y, sigma_eps, loadings, s_p, projection_remainder, c_zeta },
    })
}

/// `s_p` with `q = 0`: `max_i Σ_j ‖σ_i‖_N^{1/2} ‖σ_j‖_N^{1/2} 1(Σ_ij ≠ 0)`.
pub fn functional_sparsity(sigma_eps: &KernelMatrix<f64>) -> Result<f64> {
    let traces = trace_diag(sigma_eps)?;
    let hs = sigma_eps.hs_norms();
    let p = sigma_eps.p_rows();
    let mut best = 0.0f64;
    for i in 0..p {
        let mut s = 0.0;
        for j in 0..p {
            if hs[(i, j)] != 0.0 {
                s += traces[i].max(0.0).sqrt() * traces[j].max(0.0).sqrt();
            }
        }
        best = best.max(s);
    }
    Ok(best)
}

/// `‖estimate − truth‖` in the chosen functional matrix norm.
pub fn loss(estimate: &KernelMatrix<f64>, truth: &KernelMatrix<f64>, which: KernelNorm) -> Result<f64> {
    if estimate.flat().shape() != truth.flat().shape() || estimate.k() != truth.k() {
        return Err(Error::invalid("estimate and truth shapes differ"));
    }
    Ok(crate::basis::kernel_norm(&estimate.sub(truth)?, which))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> BasisSpec<f64> {
        BasisSpec::new(BasisKind::Fourier, 7, 41).unwrap()
    }

    #[test]
    fn lyapunov_solution() {
        let a = var_matrix(3);
        assert!(spectral_radius(&a) < 1.0);
        let s = stationary_cov(&a, &DMatrix::identity(3, 3)).unwrap();
        let resid = &s - &a * &s * a.transpose() - DMatrix::identity(3, 3);
        assert!(resid.amax() < 1e-12);
    }

    #[test]
    fn c0_support_and_definiteness() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (p, alpha) in [(30, 0.5), (30, 1.0), (30, 0.0), (17, 0.75)] {
            let c = build_c0(p, alpha, &mut rng).unwrap();
            let bound = ((p as f64).powf(1.0 - alpha) + 1e-9).floor() as usize;
            for i in 0..p {
                let nz = (0..p).filter(|&j| c[(i, j)] != 0.0).count();
                assert!(nz <= bound, "p={p} alpha={alpha}: {nz} > {bound}");
            }
            assert_eq!(c, c.transpose());
            let lmin = c.clone().symmetric_eigen().eigenvalues.min();
            assert!(lmin >= 0.01 - 1e-10);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let cfg = DgpConfig::new(1, 6, 20, 2, 0.5, 42);
        let a = generate(&cfg, &basis()).unwrap();
        let b = generate(&cfg, &basis()).unwrap();
        assert_eq!(a.panel.coeffs(), b.panel.coeffs());
        let c = generate(&cfg.with_replication(1), &basis()).unwrap();
        assert_ne!(a.panel.coeffs(), c.panel.coeffs());
    }

    #[test]
    fn truth_is_symmetric_psd() {
        for dgp in [1, 2] {
            let cfg = DgpConfig::new(dgp, 5, 10, 2, 0.5, 3);
            let sim = generate(&cfg, &basis()).unwrap();
            assert!(sim.truth.sigma_y.is_symmetric(1e-12));
            assert!(sim.truth.sigma_y.min_eigenvalue() > -1e-10);
            assert!(sim.truth.projection_remainder > 0.0 && sim.truth.projection_remainder < 0.5);
        }
    }

    #[test]
    fn bad_configs() {
        assert!(generate(&DgpConfig::new(3, 5, 10, 2, 0.5, 0), &basis()).is_err());
        assert!(generate(&DgpConfig::new(1, 5, 10, 0, 0.5, 0), &basis()).is_err());
        assert!(generate(&DgpConfig::new(1, 5, 10, 1, 1.5, 0), &basis()).is_err());
    }

    #[test]
    fn loss_basics() {
        let t = KernelMatrix::<f64>::identity(3, 2);
        assert_eq!(loss(&t, &t, KernelNorm::Smax).unwrap(), 0.0);
        let mut e = t.clone();
        e.set_block(0, 2, &DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.4]));
        assert!((loss(&e, &t, KernelNorm::Smax).unwrap() - 0.5).abs() < 1e-12);
        assert!(loss(&e, &t, KernelNorm::Smax).unwrap() <= loss(&e, &t, KernelNorm::SF).unwrap());
        assert!(loss(&e, &KernelMatrix::identity(2, 2), KernelNorm::SF).is_err());
    }
}
