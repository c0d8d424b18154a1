//! Functional minimum-variance portfolios and risk evaluation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aft::ThresholdRule;
use crate::basis::{BasisSpec, FunctionalPanel, GridSamples, KernelMatrix};
use crate::covariance::{center, sample_cov};
use crate::digit::digit_estimator;
use crate::error::{Error, Result};
use crate::fpoet::fpoet_estimator;
use crate::inverse::{truncated_inverse, truncated_inverse_sqrt, truncated_spectral};
use crate::scalar::{count, lit, to_f64, Real};
use crate::select::{default_r0, ratio_digit, ratio_fpoet, spectra, DEFAULT_C_R, DEFAULT_EPS0};

/// Residual above which the budget constraint is restored after inversion.
pub const CONSTRAINT_TOL: f64 = 1e-6;

/// `p^{-1/2}`-type normalized norm `d_n^{-1/2} ‖Σ^{-1/2} K Σ^{-1/2}‖_{S,F}`, with
/// `Σ^{-1/2}` truncated at `energy` and `d_n` its retained rank, so that
/// `‖Σ‖_{S,Σ} = 1`.
pub fn weighted_quadratic_norm<T: Real>(k_op: &KernelMatrix<T>, sigma: &KernelMatrix<T>, energy: f64) -> Result<T> {
    if k_op.flat().shape() != sigma.flat().shape() {
        return Err(Error::invalid("operator and covariance shapes differ"));
    }
    let (root, rank) = truncated_inverse_sqrt(sigma, energy)?;
    let m = root.flat() * k_op.flat() * root.flat();
    Ok(m.norm() / count::<T>(rank).sqrt())
}

#[derive(Debug, Clone)]
pub struct PortfolioWeights<T: Real> {
    /// `pK` coefficients of `w(·)`.
    pub w: DVector<T>,
    pub p: usize,
    pub k: usize,
    /// `max_u |1_pᵀ w(u) − 1|` of the closed-form solution, before correction.
    pub constraint_residual: T,
    /// Same quantity after correction.
    pub final_residual: T,
}

impl<T: Real> PortfolioWeights<T> {
    /// `w_i(u_g)` as a `G × p` matrix.
    pub fn on_grid(&self, basis: &BasisSpec<T>) -> DMatrix<T> {
        let vals = basis.values();
        DMatrix::from_fn(basis.grid_len(), self.p, |g, i| {
            (0..self.k).fold(T::zero(), |acc, a| acc + vals[(g, a)] * self.w[i * self.k + a])
        })
    }
}

fn budget_residual<T: Real>(w: &DVector<T>, p: usize, basis: &BasisSpec<T>) -> T {
    let k = basis.dim();
    let total = (0..p).fold(DVector::zeros(k), |acc: DVector<T>, i| acc + w.rows(i * k, k));
    let on_grid = basis.values() * total;
    on_grid.iter().fold(T::zero(), |acc, v| acc.max((*v - T::one()).abs()))
}

/// Weights from a given (pseudo-)inverse `Σ⁻¹`:
/// `w = Σ⁻¹ J H⁻ c`, `J = 1_p ⊗ I_K`, `H = Jᵀ Σ⁻¹ J`, `c` the coefficients of
/// the constant function. `H` is inverted on the leading eigenspace covering
/// `energy` of its spectrum.
pub fn weights_from_inverse<T: Real>(
    sigma_inv: &KernelMatrix<T>,
    basis: &BasisSpec<T>,
    energy: f64,
) -> Result<PortfolioWeights<T>> {
    let (p, k) = (sigma_inv.p_rows(), sigma_inv.k());
    if k != basis.dim() {
        return Err(Error::invalid("covariance and basis dimensions differ"));
    }
    let mut h = DMatrix::zeros(k, k);
    let mut sj = DMatrix::zeros(p * k, k);
    for i in 0..p {
        for j in 0..p {
            let blk = sigma_inv.block_view(i, j);
            let mut rows = sj.rows_mut(i * k, k);
            rows += &blk;
            h += &blk;
        }
    }
    let h_inv = truncated_spectral(&h, energy, |v| T::one() / v)
        .map_err(|_| Error::singular("aggregated precision H is singular"))?
        .matrix;
    let c = basis.constant_coeffs();
    let mut w = sj * (h_inv * c.clone());
    let constraint_residual = budget_residual(&w, p, basis);
    if to_f64(constraint_residual) > CONSTRAINT_TOL {
        let total = (0..p).fold(DVector::zeros(k), |acc: DVector<T>, i| acc + w.rows(i * k, k));
        let shift = (c - total) / count::<T>(p);
        for i in 0..p {
            let mut rows = w.rows_mut(i * k, k);
            rows += &shift;
        }
    }
    let final_residual = budget_residual(&w, p, basis);
    Ok(PortfolioWeights { w, p, k, constraint_residual, final_residual })
}

/// Minimum perceived-risk allocation subject to `w(u)ᵀ 1_p = 1`, with both
/// `Σ̂` and `H` inverted by spectral truncation at `energy`.
pub fn min_variance_weights<T: Real>(
    sigma: &KernelMatrix<T>,
    basis: &BasisSpec<T>,
    energy: f64,
) -> Result<PortfolioWeights<T>> {
    let (inv, _) = truncated_inverse(sigma, energy)?;
    weights_from_inverse(&inv, basis, energy)
}

/// `⟨w, Σ̂(w)⟩`.
pub fn perceived_risk<T: Real>(w: &DVector<T>, sigma: &KernelMatrix<T>) -> Result<T> {
    if w.len() != sigma.flat().nrows() {
        return Err(Error::invalid("weights and covariance dimensions differ"));
    }
    Ok((w.transpose() * sigma.flat() * w)[(0, 0)])
}

/// Realized variance of the portfolio over held-out raw curves:
/// `m⁻¹ Σ_t (Σ_g q_g w(u_g)ᵀ y_t(u_g))²` with quadrature weights `q_g`.
pub fn actual_risk<T: Real>(weights: &PortfolioWeights<T>, basis: &BasisSpec<T>, holdout: &GridSamples<T>) -> Result<T> {
    if holdout.p() != weights.p || !basis.grid_matches(holdout.grid()) {
        return Err(Error::invalid("holdout panel does not match the weights"));
    }
    let m = holdout.n();
    if m == 0 {
        return Ok(T::zero());
    }
    let wg = weights.on_grid(basis);
    let q = basis.quad_weights();
    let g = basis.grid_len();
    let data = holdout.data();
    let mut acc = T::zero();
    for t in 0..m {
        let mut z = T::zero();
        for i in 0..weights.p {
            for gi in 0..g {
                z += q[gi] * wg[(gi, i)] * data[(t, i * g + gi)];
            }
        }
        acc += z * z;
    }
    Ok(acc / count::<T>(m))
}

/// Cumulative intraday returns `100 (log P(u_k) − log P(u_1))`.
pub fn cidr<T: Real>(prices: &GridSamples<T>) -> Result<GridSamples<T>> {
    let (n, p, g) = (prices.n(), prices.p(), prices.grid().len());
    if prices.data().iter().any(|v| !(*v > T::zero())) {
        return Err(Error::invalid("prices must be positive"));
    }
    let hundred = lit::<T>(100.0);
    let mut data = DMatrix::zeros(n, p * g);
    for t in 0..n {
        for i in 0..p {
            let open = prices.value(t, i, 0).ln();
            for gi in 0..g {
                data[(t, i * g + gi)] = if gi == 0 { T::zero() } else { hundred * (prices.value(t, i, gi).ln() - open) };
            }
        }
    }
    GridSamples::new(n, p, prices.grid().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Digit,
    Fpoet,
    Sample,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Digit => "digit",
            EstimatorKind::Fpoet => "fpoet",
            EstimatorKind::Sample => "sample",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digit" => Ok(EstimatorKind::Digit),
            "fpoet" => Ok(EstimatorKind::Fpoet),
            "sample" => Ok(EstimatorKind::Sample),
            other => Err(Error::invalid(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Covariance estimate of a centered panel; `r = None` estimates the number of
/// factors by the eigenvalue-ratio rule. Returns the estimate and the rank used
/// (0 for the sample covariance).
pub fn estimate_covariance<T: Real>(
    panel: &FunctionalPanel<T>,
    kind: EstimatorKind,
    r: Option<usize>,
    rule: &ThresholdRule<T>,
) -> Result<(KernelMatrix<T>, usize)> {
    let (n, p) = (panel.n(), panel.p());
    let pick = |m: EstimatorKind| -> Result<usize> {
        if let Some(r) = r {
            return Ok(r);
        }
        let sp = spectra(panel)?;
        match m {
            EstimatorKind::Digit => ratio_digit(sp.omega.as_slice(), p, lit(DEFAULT_C_R), lit(DEFAULT_EPS0)),
            _ => ratio_fpoet(sp.tau.as_slice(), p, default_r0(n, p), lit(DEFAULT_EPS0)),
        }
    };
    match kind {
        EstimatorKind::Sample => Ok((sample_cov(panel), 0)),
        EstimatorKind::Digit => {
            let r = pick(kind)?;
            Ok((digit_estimator(panel, r, rule)?.0, r))
        }
        EstimatorKind::Fpoet => {
            let r = pick(kind)?;
            Ok((fpoet_estimator(panel, r, rule)?.0, r))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig<T: Real> {
    pub train: usize,
    pub eval: usize,
    pub method: EstimatorKind,
    pub r: Option<usize>,
    pub rule: ThresholdRule<T>,
    pub energy: f64,
}

impl<T: Real> Default for BacktestConfig<T> {
    fn default() -> Self {
        BacktestConfig {
            train: 126,
            eval: 21,
            method: EstimatorKind::Digit,
            r: None,
            rule: ThresholdRule::default(),
            energy: crate::inverse::DEFAULT_ENERGY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRisk {
    pub start: usize,
    pub r_hat: usize,
    pub perceived: f64,
    pub actual: f64,
    pub constraint_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub method: EstimatorKind,
    pub windows: Vec<WindowRisk>,
    pub mean_actual: f64,
}

/// Rolling evaluation: estimate on `train` days of curves, hold the weights
/// for the next `eval` days, then move forward by `eval` days.
pub fn backtest<T: Real>(curves: &GridSamples<T>, basis: &BasisSpec<T>, cfg: &BacktestConfig<T>) -> Result<BacktestReport> {
    if cfg.train < 2 || cfg.eval == 0 {
        return Err(Error::invalid("backtest needs train >= 2 and eval >= 1"));
    }
    let n = curves.n();
    if n < cfg.train + cfg.eval {
        return Err(Error::invalid(format!("{n} days are fewer than one train+eval window")));
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start + cfg.train + cfg.eval <= n {
        let train_rows: Vec<usize> = (start..start + cfg.train).collect();
        let eval_rows: Vec<usize> = (start + cfg.train..start + cfg.train + cfg.eval).collect();
        let panel = center(&basis.project(&curves.select_rows(&train_rows))?.panel)?;
        let (sigma, r_hat) = estimate_covariance(&panel, cfg.method, cfg.r, &cfg.rule)?;
        let weights = min_variance_weights(&sigma, basis, cfg.energy)?;
        let perceived = perceived_risk(&weights.w, &sigma)?;
        let actual = actual_risk(&weights, basis, &curves.select_rows(&eval_rows))?;
        windows.push(WindowRisk {
            start,
            r_hat,
            perceived: to_f64(perceived),
            actual: to_f64(actual),
            constraint_residual: to_f64(weights.final_residual),
        });
        start += cfg.eval;
    }
    let mean_actual = windows.iter().map(|w| w.actual).sum::<f64>() / windows.len() as f64;
    Ok(BacktestReport { method: cfg.method, windows, mean_actual })
}
