//! Adaptive functional thresholding of idiosyncratic covariance estimates.
//!
//! Each off-diagonal block `Σ̂_ij` is standardized by `‖Θ̂_ij^{1/2}‖_S`, shrunk
//! by a functional thresholding rule acting on its Hilbert–Schmidt norm, and
//! rescaled. Rules keep the direction of the block and only change its norm.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{FunctionalPanel, KernelMatrix};
use crate::covariance::sample_cov;
use crate::error::{Error, Result};
use crate::linalg::at_b;
use crate::scalar::{count, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdFamily {
    Hard,
    Soft,
    Scad,
    #[serde(alias = "alasso")]
    AdaptiveLasso,
}

impl fmt::Display for ThresholdFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdFamily::Hard => "hard",
            ThresholdFamily::Soft => "soft",
            ThresholdFamily::Scad => "scad",
            ThresholdFamily::AdaptiveLasso => "alasso",
        })
    }
}

impl FromStr for ThresholdFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ThresholdFamily::Hard),
            "soft" => Ok(ThresholdFamily::Soft),
            "scad" => Ok(ThresholdFamily::Scad),
            "alasso" | "adaptive-lasso" => Ok(ThresholdFamily::AdaptiveLasso),
            other => Err(Error::invalid(format!("unknown threshold family `{other}`"))),
        }
    }
}

/// A thresholding family together with the constant `Ċ` in
/// `λ = Ċ (√(log p / n) + 1/√p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRule<T: Real> {
    pub family: ThresholdFamily,
    pub c_dot: T,
    pub scad_a: T,
    pub alasso_eta: T,
}

impl<T: Real> Default for ThresholdRule<T> {
    fn default() -> Self {
        ThresholdRule { family: ThresholdFamily::Soft, c_dot: lit(0.5), scad_a: lit(3.7), alasso_eta: T::one() }
    }
}

impl<T: Real> ThresholdRule<T> {
    pub fn new(family: ThresholdFamily, c_dot: T) -> Result<Self> {
        let rule = ThresholdRule { family, c_dot, ..Default::default() };
        rule.validate()?;
        Ok(rule)
    }

    pub fn with_c_dot(self, c_dot: T) -> Self {
        ThresholdRule { c_dot, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_dot >= T::zero()) {
            return Err(Error::invalid("threshold constant must be nonnegative"));
        }
        if !(self.scad_a > lit(2.0)) {
            return Err(Error::invalid("SCAD parameter a must exceed 2"));
        }
        if !(self.alasso_eta >= T::zero()) {
            return Err(Error::invalid("adaptive-lasso exponent must be nonnegative"));
        }
        Ok(())
    }

    /// Norm of `s_λ(Z)` as a function of `z = ‖Z‖_S`.
    pub fn shrink_norm(&self, z: T, lambda: T) -> T {
        if z <= lambda {
            return T::zero();
        }
        match self.family {
            ThresholdFamily::Hard => z,
            ThresholdFamily::Soft => z - lambda,
            ThresholdFamily::Scad => {
                let a = self.scad_a;
                if z <= lambda + lambda {
                    z - lambda
                } else if z <= a * lambda {
                    ((a - T::one()) * z - a * lambda) / (a - lit(2.0))
                } else {
                    z
                }
            }
            ThresholdFamily::AdaptiveLasso => {
                let ratio = lambda / z;
                z - z * ratio.powf(self.alasso_eta + T::one())
            }
        }
    }

    /// `s_λ(Z)` for one coefficient block.
    pub fn apply_block(&self, block: &DMatrix<T>, lambda: T) -> DMatrix<T> {
        let z = block.norm();
        if z <= lambda || z == T::zero() {
            return DMatrix::zeros(block.nrows(), block.ncols());
        }
        block * (self.shrink_norm(z, lambda) / z)
    }
}

/// `λ = Ċ (√(log p / n) + 1/√p)`.
pub fn threshold_level<T: Real>(rule: &ThresholdRule<T>, n: usize, p: usize) -> T {
    let nn = count::<T>(n.max(1));
    let pp = count::<T>(p.max(1));
    rule.c_dot * ((pp.ln() / nn).sqrt() + T::one() / pp.sqrt())
}

/// `θ_ij = ∫∫ Θ̂_ij(u,v) du dv`, so that `‖Θ̂_ij^{1/2}‖_S = √θ_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFactors<T: Real> {
    pub theta_iint: DMatrix<T>,
}

impl<T: Real> VarianceFactors<T> {
    pub fn scale(&self, i: usize, j: usize) -> T {
        self.theta_iint[(i, j)].sqrt()
    }
}

/// Closed-form double integrals of the functional variance factors.
///
/// `Σ̂_ε` must be the sample covariance (divisor `n`) of `residuals`.
pub fn variance_factors<T: Real>(
    residuals: &FunctionalPanel<T>,
    sigma_eps: &KernelMatrix<T>,
) -> Result<VarianceFactors<T>> {
    let (n, p) = (residuals.n(), residuals.p());
    if sigma_eps.p_rows() != p || !sigma_eps.is_square() || sigma_eps.k() != residuals.k() {
        return Err(Error::invalid("residual panel and covariance shapes differ"));
    }
    if n == 0 {
        return Ok(VarianceFactors { theta_iint: DMatrix::zeros(p, p) });
    }
    let w = residuals.squared_norms();
    let fourth = at_b(&w, &w) / count::<T>(n);
    let hs = sigma_eps.hs_norms();
    let mut theta = DMatrix::zeros(p, p);
    let tol = lit::<T>(1e-10);
    for j in 0..p {
        for i in 0..p {
            let first = fourth[(i, j)];
            let v = first - hs[(i, j)] * hs[(i, j)];
            if v < -tol * first.max(T::one()) {
                return Err(Error::Numerical(format!("variance factor ({i},{j}) is negative: {v:?}")));
            }
            theta[(i, j)] = v.max(T::zero());
        }
    }
    for j in 0..p {
        for i in (j + 1)..p {
            let v = theta[(i, j)];
            theta[(j, i)] = v;
        }
    }
    Ok(VarianceFactors { theta_iint: theta })
}

/// Adaptive functional thresholding of `Σ̂_ε`. Diagonal blocks are left
/// untouched unless `threshold_diagonal` is set; blocks with zero variance
/// factor become zero.
pub fn apply_aft<T: Real>(
    sigma_eps: &KernelMatrix<T>,
    vf: &VarianceFactors<T>,
    rule: &ThresholdRule<T>,
    n: usize,
    p: usize,
    threshold_diagonal: bool,
) -> KernelMatrix<T> {
    let lambda = threshold_level(rule, n, p);
    apply_aft_at(sigma_eps, vf, rule, lambda, threshold_diagonal)
}

/// [`apply_aft`] with an explicit threshold level.
pub fn apply_aft_at<T: Real>(
    sigma_eps: &KernelMatrix<T>,
    vf: &VarianceFactors<T>,
    rule: &ThresholdRule<T>,
    lambda: T,
    threshold_diagonal: bool,
) -> KernelMatrix<T> {
    let p = sigma_eps.p_rows();
    let mut out = sigma_eps.clone();
    for j in 0..p {
        for i in j..p {
            if i == j && !threshold_diagonal {
                continue;
            }
            let scale = vf.scale(i, j);
            let block = sigma_eps.block_view(i, j).into_owned();
            // scale · s_λ(C / scale), written as a rescaling of C itself.
            let z = if scale > T::zero() { block.norm() / scale } else { T::zero() };
            let shrunk = if scale > T::zero() && z > lambda {
                block * (rule.shrink_norm(z, lambda) / z)
            } else {
                DMatrix::zeros(block.nrows(), block.ncols())
            };
            out.set_block(i, j, &shrunk);
            if i != j {
                out.set_block(j, i, &shrunk.transpose());
            }
        }
    }
    out
}

/// Number of nonzero off-diagonal blocks.
pub fn off_diagonal_support<T: Real>(m: &KernelMatrix<T>) -> usize {
    let hs = m.hs_norms();
    let mut count = 0;
    for i in 0..m.p_rows() {
        for j in 0..m.p_cols() {
            if i != j && hs[(i, j)] > T::zero() {
                count += 1;
            }
        }
    }
    count
}

/// Picks `Ċ` by contiguous-block cross-validation: for every fold the
/// thresholded training covariance is compared with the validation sample
/// covariance in squared `SF` norm. Ties go to the first grid entry.
pub fn cv_select_c<T: Real>(
    residuals: &FunctionalPanel<T>,
    family: ThresholdFamily,
    folds: usize,
    c_grid: &[T],
    threshold_diagonal: bool,
) -> Result<T> {
    if c_grid.is_empty() {
        return Err(Error::invalid("cross-validation grid is empty"));
    }
    if c_grid.len() == 1 {
        return Ok(c_grid[0]);
    }
    let n = residuals.n();
    if folds < 2 || folds > n {
        return Err(Error::invalid(format!("need 2 <= folds <= n, got folds={folds}, n={n}")));
    }
    let p = residuals.p();
    let base = ThresholdRule { family, ..ThresholdRule::default() };
    let mut losses = vec![T::zero(); c_grid.len()];
    for f in 0..folds {
        let lo = f * n / folds;
        let hi = (f + 1) * n / folds;
        let val_rows: Vec<usize> = (lo..hi).collect();
        let train_rows: Vec<usize> = (0..lo).chain(hi..n).collect();
        let train = residuals.select_rows(&train_rows);
        let val = residuals.select_rows(&val_rows);
        let s_train = sample_cov(&train);
        let s_val = sample_cov(&val);
        let vf = variance_factors(&train, &s_train)?;
        for (loss, &c) in losses.iter_mut().zip(c_grid) {
            let rule = base.with_c_dot(c);
            let est = apply_aft(&s_train, &vf, &rule, train.n(), p, threshold_diagonal);
            *loss += (est.flat() - s_val.flat()).norm_squared();
        }
    }
    let mut best = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l < losses[best] {
            best = i;
        }
    }
    Ok(c_grid[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(family: ThresholdFamily) -> ThresholdRule<f64> {
        ThresholdRule { family, ..ThresholdRule::default() }
    }

    #[test]
    fn threshold_level_arithmetic() {
        let r = rule(ThresholdFamily::Soft);
        let lam = threshold_level(&r, 100, 100);
        let expected = 0.5 * ((100f64.ln() / 100.0).sqrt() + 0.1);
        assert!((lam - expected).abs() < 1e-15);
        assert!((lam - 0.15729).abs() < 1e-5);
        assert_eq!(threshold_level(&r.with_c_dot(0.0), 100, 100), 0.0);
        let mut prev = f64::INFINITY;
        for n in [10, 50, 100, 500, 1000] {
            let l = threshold_level(&r, n, 100);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn soft_shrinkage_closed_form() {
        let r = rule(ThresholdFamily::Soft);
        let lambda = 0.3;
        let scale = 2.0;
        let dir = DMatrix::from_row_slice(2, 2, &[0.6, 0.0, 0.0, 0.8]);
        let block = &dir * (2.0 * scale * lambda);
        let mut sigma = KernelMatrix::zeros(2, 2, 2);
        sigma.set_block(0, 1, &block);
        sigma.set_block(1, 0, &block.transpose());
        let vf = VarianceFactors { theta_iint: DMatrix::from_element(2, 2, scale * scale) };
        let out = apply_aft_at(&sigma, &vf, &r, lambda, false);
        assert!((out.block(0, 1).hs_norm() - scale * lambda).abs() < 1e-12);
        assert!(out.is_symmetric(1e-14));
    }

    #[test]
    fn zero_threshold_is_identity() {
        let mut sigma = KernelMatrix::<f64>::zeros(3, 3, 2);
        for i in 0..6 {
            for j in 0..6 {
                sigma.flat_mut()[(i, j)] = 1.0 / (1.0 + (i + j) as f64);
            }
        }
        let vf = VarianceFactors { theta_iint: DMatrix::from_element(3, 3, 0.7) };
        for fam in [ThresholdFamily::Hard, ThresholdFamily::Soft, ThresholdFamily::Scad, ThresholdFamily::AdaptiveLasso] {
            let out = apply_aft_at(&sigma, &vf, &rule(fam), 0.0, true);
            assert_eq!(out, sigma, "{fam}");
        }
    }

    #[test]
    fn zero_scale_kills_block() {
        let mut sigma = KernelMatrix::<f64>::zeros(2, 2, 1);
        sigma.flat_mut().fill(1.0);
        let vf = VarianceFactors { theta_iint: DMatrix::zeros(2, 2) };
        let out = apply_aft_at(&sigma, &vf, &rule(ThresholdFamily::Hard), 0.1, false);
        assert_eq!(out.flat()[(0, 1)], 0.0);
        assert_eq!(out.flat()[(0, 0)], 1.0);
    }

    #[test]
    fn constant_residuals_have_zero_variance_factors() {
        let coeffs = DMatrix::from_fn(6, 4, |_, c| (c as f64) - 1.5);
        let res = FunctionalPanel::new(6, 2, 2, coeffs).unwrap();
        let s = sample_cov(&res);
        let vf = variance_factors(&res, &s).unwrap();
        assert!(vf.theta_iint.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn plus_minus_one_variance_factor() {
        let res = FunctionalPanel::new(2, 1, 1, DMatrix::from_column_slice(2, 1, &[-1.0, 1.0])).unwrap();
        let s = sample_cov(&res);
        assert_eq!(s.flat()[(0, 0)], 1.0);
        let vf = variance_factors(&res, &s).unwrap();
        assert_eq!(vf.theta_iint[(0, 0)], 0.0);
    }

    #[test]
    fn cv_grid_edge_cases() {
        let res = FunctionalPanel::new(4, 1, 1, DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 2.0, -2.0])).unwrap();
        assert!(cv_select_c(&res, ThresholdFamily::Soft, 2, &[], false).is_err());
        assert_eq!(cv_select_c(&res, ThresholdFamily::Soft, 2, &[0.7], false).unwrap(), 0.7);
        // p = 1 and diagonal untouched: every candidate ties, first wins.
        assert_eq!(cv_select_c(&res, ThresholdFamily::Soft, 2, &[0.3, 0.3, 0.9], false).unwrap(), 0.3);
    }

    #[test]
    fn parse_families() {
        assert_eq!("alasso".parse::<ThresholdFamily>().unwrap(), ThresholdFamily::AdaptiveLasso);
        assert!("lasso".parse::<ThresholdFamily>().is_err());
        assert!(ThresholdRule::<f64>::new(ThresholdFamily::Soft, -1.0).is_err());
    }
}
