//! Inverses of estimated covariance matrix functions and their regularized
//! correlation and precision counterparts.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::KernelMatrix;
use crate::digit::DigitFit;
use crate::error::{Error, Result};
use crate::linalg::{kron_identity, psd_sqrt, spectral_map, sym_eigen_desc, symmetrize};
use crate::scalar::{count, lit, Real};

pub const DEFAULT_ENERGY: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InverseMode {
    Smw,
    Truncated,
}

impl fmt::Display for InverseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InverseMode::Smw => "smw",
            InverseMode::Truncated => "truncated",
        })
    }
}

impl FromStr for InverseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smw" => Ok(InverseMode::Smw),
            "truncated" => Ok(InverseMode::Truncated),
            other => Err(Error::invalid(format!("unknown inverse mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSpec {
    pub mode: InverseMode,
    pub energy: f64,
    /// `None` selects `1e-6 · trace / pK`.
    pub ridge: Option<f64>,
}

impl Default for InverseSpec {
    fn default() -> Self {
        InverseSpec { mode: InverseMode::Truncated, energy: DEFAULT_ENERGY, ridge: None }
    }
}

impl InverseSpec {
    pub fn truncated(energy: f64) -> Self {
        InverseSpec { mode: InverseMode::Truncated, energy, ridge: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return Err(Error::invalid(format!("energy must lie in (0, 1], got {}", self.energy)));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0) {
                return Err(Error::invalid("ridge must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Result of a spectral truncation.
#[derive(Debug, Clone)]
pub struct Truncation<T: Real> {
    pub matrix: DMatrix<T>,
    /// Retained rank `d_n`.
    pub rank: usize,
}

/// Eigenvalues counted as positive: above `dim · ε · λ_max`.
fn positive_floor<T: Real>(lmax: T, dim: usize) -> T {
    lmax * count::<T>(dim.max(1)) * T::default_epsilon()
}

/// Leading eigenpairs covering at least `energy` of the positive spectrum,
/// mapped through `f`.
pub fn truncated_spectral<T: Real>(m: &DMatrix<T>, energy: f64, f: impl Fn(T) -> T) -> Result<Truncation<T>> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::invalid(format!("energy must lie in (0, 1], got {energy}")));
    }
    let (vals, vecs) = sym_eigen_desc(m);
    let lmax = vals.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if !(lmax > T::zero()) {
        return Err(Error::singular("matrix has no positive eigenvalues"));
    }
    let floor = positive_floor(lmax, m.nrows());
    let positive: Vec<T> = vals.iter().copied().take_while(|v| *v > floor).collect();
    let total = positive.iter().fold(T::zero(), |a, b| a + *b);
    let target = lit::<T>(energy) * total * (T::one() - lit(1e-12));
    let mut rank = 0;
    let mut acc = T::zero();
    while rank < positive.len() {
        acc += positive[rank];
        rank += 1;
        if acc >= target {
            break;
        }
    }
    let mut scaled = vecs.columns(0, rank).into_owned();
    for j in 0..rank {
        let s = f(vals[j]);
        scaled.column_mut(j).scale_mut(s);
    }
    let matrix = symmetrize(&(scaled * vecs.columns(0, rank).transpose()));
    Ok(Truncation { matrix, rank })
}

/// `Σ_{i≤d_n} τ_i⁻¹ φ_i φ_iᵀ` with `d_n` the smallest rank reaching `energy`.
pub fn truncated_inverse<T: Real>(m: &KernelMatrix<T>, energy: f64) -> Result<(KernelMatrix<T>, usize)> {
    if !m.is_square() {
        return Err(Error::invalid("truncated inverse needs a square kernel matrix"));
    }
    let t = truncated_spectral(m.flat(), energy, |v| T::one() / v)?;
    Ok((KernelMatrix::square(m.p_rows(), m.k(), t.matrix)?, t.rank))
}

/// Truncated inverse square root `Σ_{i≤d_n} τ_i^{-1/2} φ_i φ_iᵀ`.
pub fn truncated_inverse_sqrt<T: Real>(m: &KernelMatrix<T>, energy: f64) -> Result<(KernelMatrix<T>, usize)> {
    if !m.is_square() {
        return Err(Error::invalid("truncated inverse needs a square kernel matrix"));
    }
    let t = truncated_spectral(m.flat(), energy, |v| T::one() / v.sqrt())?;
    Ok((KernelMatrix::square(m.p_rows(), m.k(), t.matrix)?, t.rank))
}

/// `1e-6 · trace / pK`.
pub fn default_ridge<T: Real>(m: &KernelMatrix<T>) -> T {
    let dim = m.flat().nrows().max(1);
    lit::<T>(1e-6) * m.flat().trace() / count::<T>(dim)
}

fn lu_inverse<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let inv = m.clone().lu().try_inverse().ok_or_else(|| Error::singular(format!("{what} is singular")))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::singular(format!("{what} is numerically singular")));
    }
    Ok(inv)
}

/// Woodbury inverse of `(B ⊗ I_K) Σ_f (B ⊗ I_K)ᵀ + Σ_ε^A`, with `Σ_ε^A`
/// stabilized by `ridge · I` and `Σ_f` inverted by spectral truncation at full
/// energy. `b` may have zero columns.
pub fn smw_inverse_parts<T: Real>(
    b: &DMatrix<T>,
    sigma_f: &KernelMatrix<T>,
    sigma_eps_a: &KernelMatrix<T>,
    ridge: Option<T>,
) -> Result<KernelMatrix<T>> {
    let (p, k) = (sigma_eps_a.p_rows(), sigma_eps_a.k());
    if !sigma_eps_a.is_square() || b.nrows() != p || sigma_f.p_rows() != b.ncols() || (b.ncols() > 0 && sigma_f.k() != k) {
        return Err(Error::invalid("inconsistent shapes for the Woodbury inverse"));
    }
    let ridge = ridge.unwrap_or_else(|| default_ridge(sigma_eps_a));
    if !(ridge >= T::zero()) {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let mut a = sigma_eps_a.flat().clone();
    for i in 0..p * k {
        a[(i, i)] += ridge;
    }
    let a_inv = symmetrize(&lu_inverse(&a, "idiosyncratic covariance")?);
    if b.ncols() == 0 {
        return KernelMatrix::square(p, k, a_inv);
    }
    let (sf_inv, _) = truncated_inverse(sigma_f, 1.0)?;
    let bk = kron_identity(b, k);
    let a_inv_b = &a_inv * &bk;
    let inner = sf_inv.flat() + bk.transpose() * &a_inv_b;
    let inner_inv = lu_inverse(&inner, "inner Woodbury system")?;
    let out = &a_inv - &a_inv_b * inner_inv * a_inv_b.transpose();
    KernelMatrix::square(p, k, symmetrize(&out))
}

/// Woodbury inverse of the DIGIT estimate `B̂ Σ̂_f B̂ᵀ + Σ̂_ε^A`.
pub fn smw_inverse<T: Real>(fit: &DigitFit<T>, sigma_eps_a: &KernelMatrix<T>, ridge: Option<T>) -> Result<KernelMatrix<T>> {
    smw_inverse_parts(&fit.b_hat, &fit.sigma_f_hat, sigma_eps_a, ridge)
}

/// Tikhonov-regularized correlation `Ĉ = (D̂+κI)^{-1/2} Σ̂ (D̂+κI)^{-1/2}` and
/// precision `Θ̂ = D̂^{1/2} (Σ̂+κI)⁻¹ D̂^{1/2}`, with `D̂` the diagonal blocks.
pub fn correlation_pair<T: Real>(sigma: &KernelMatrix<T>, kappa: T) -> Result<(KernelMatrix<T>, KernelMatrix<T>)> {
    if !(kappa > T::zero()) {
        return Err(Error::invalid("kappa must be positive"));
    }
    if !sigma.is_square() {
        return Err(Error::invalid("correlation needs a square kernel matrix"));
    }
    let (p, k) = (sigma.p_rows(), sigma.k());
    let dim = p * k;
    let mut d_inv_half = DMatrix::zeros(dim, dim);
    let mut d_half = DMatrix::zeros(dim, dim);
    for i in 0..p {
        let block = sigma.block_view(i, i).into_owned();
        let shifted = spectral_map(&block, |v| T::one() / (v.max(T::zero()) + kappa).sqrt());
        d_inv_half.view_mut((i * k, i * k), (k, k)).copy_from(&shifted);
        d_half.view_mut((i * k, i * k), (k, k)).copy_from(&psd_sqrt(&block));
    }
    let c = symmetrize(&(&d_inv_half * sigma.flat() * &d_inv_half));
    let mut reg = sigma.flat().clone();
    for i in 0..dim {
        reg[(i, i)] += kappa;
    }
    let reg_inv = lu_inverse(&symmetrize(&reg), "regularized covariance")?;
    let theta = symmetrize(&(&d_half * reg_inv * &d_half));
    Ok((KernelMatrix::square(p, k, c)?, KernelMatrix::square(p, k, theta)?))
}
