//! Number-of-factors estimation by eigenvalue ratios and model choice between
//! the functional-factor (`ffm1`) and scalar-factor (`ffm2`) models by
//! functional information criteria.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::FunctionalPanel;
use crate::digit::gram_omega_panel;
use crate::error::{Error, Result};
use crate::fpoet::mfpca;
use crate::scalar::{count, lit, to_f64, Real};

pub const DEFAULT_EPS0: f64 = 0.01;
pub const DEFAULT_C_R: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Digit,
    Fpoet,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Digit => "digit",
            Method::Fpoet => "fpoet",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digit" => Ok(Method::Digit),
            "fpoet" => Ok(Method::Fpoet),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ffm1,
    Ffm2,
}

/// `⌊0.75 · min(n, p)⌋`, at least 1.
pub fn default_r0(n: usize, p: usize) -> usize {
    ((DEFAULT_C_R * n.min(p) as f64).floor() as usize).max(1)
}

fn ratio_argmin<T: Real>(values: &[T], scale: T, max_r: usize, eps0: T) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("spectrum contains non-finite values"));
    }
    let normalized: Vec<T> = values
        .iter()
        .map(|&v| {
            let x = v / scale;
            if x < eps0 {
                T::zero()
            } else {
                x
            }
        })
        .collect();
    let upper = max_r.min(normalized.len() - 1);
    if upper == 0 {
        return Ok(1);
    }
    let mut best = 1;
    let mut best_ratio = T::max_value().unwrap_or(lit(f64::MAX));
    for r in 1..=upper {
        let (num, den) = (normalized[r], normalized[r - 1]);
        let ratio = if den == T::zero() { T::one() } else { num / den };
        if ratio < best_ratio {
            best_ratio = ratio;
            best = r;
        }
    }
    Ok(best)
}

/// `argmin_{r ≤ ⌊c_r p⌋} λ̂_{r+1}/λ̂_r` over the eigenvalues of `Ω̂` scaled by `p⁻²`.
pub fn ratio_digit<T: Real>(omega_eigenvalues: &[T], p: usize, c_r: T, eps0: T) -> Result<usize> {
    let pp = count::<T>(p);
    let max_r = to_f64(c_r * pp).floor().max(0.0) as usize;
    ratio_argmin(omega_eigenvalues, pp * pp, max_r, eps0)
}

/// `argmin_{r ≤ r0} τ̂_{r+1}/τ̂_r` over the eigenvalues of `Σ̂_y^S` scaled by `p⁻¹`.
pub fn ratio_fpoet<T: Real>(tau_eigenvalues: &[T], p: usize, r0: usize, eps0: T) -> Result<usize> {
    ratio_argmin(tau_eigenvalues, count::<T>(p), r0, eps0)
}

/// Both spectra that the selection procedures need.
#[derive(Debug, Clone)]
pub struct Spectra<T: Real> {
    pub omega: DVector<T>,
    pub omega_vectors: nalgebra::DMatrix<T>,
    pub tau: DVector<T>,
}

pub fn spectra<T: Real>(panel: &FunctionalPanel<T>) -> Result<Spectra<T>> {
    let (omega, omega_vectors) = gram_omega_panel(panel).eigen();
    let tau = mfpca(panel, 0)?.tau;
    Ok(Spectra { omega, omega_vectors, tau })
}

fn check_r<T: Real>(panel: &FunctionalPanel<T>, method: Method, r: usize) -> Result<()> {
    let max = match method {
        Method::Digit => panel.p(),
        Method::Fpoet => panel.n().min(panel.p() * panel.k()),
    };
    if r > max {
        return Err(Error::invalid(format!("r = {r} exceeds {max} for {method}")));
    }
    Ok(())
}

/// `V(r)` from precomputed spectra, for `r = 0..=max_r`.
fn msr_curve<T: Real>(panel: &FunctionalPanel<T>, sp: &Spectra<T>, method: Method, max_r: usize) -> Vec<T> {
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    let total = panel.total_energy();
    let denom = count::<T>(p * n);
    let mut explained = Vec::with_capacity(max_r);
    match method {
        Method::Digit => {
            let slices: Vec<_> = (0..k).map(|a| panel.coefficient_slice(a)).collect();
            for j in 0..max_r {
                let xi = sp.omega_vectors.column(j);
                let e = slices.iter().fold(T::zero(), |acc, ya| acc + (ya * xi).norm_squared());
                explained.push(e);
            }
        }
        Method::Fpoet => {
            let nn = count::<T>(n);
            for j in 0..max_r {
                explained.push(sp.tau[j] * nn);
            }
        }
    }
    let mut out = Vec::with_capacity(max_r + 1);
    let mut acc = total;
    out.push((acc / denom).max(T::zero()));
    for e in explained {
        acc -= e;
        out.push((acc / denom).max(T::zero()));
    }
    out
}

/// Mean squared residual `V(r)` of the fitted model with `r` factors.
pub fn mean_squared_residuals<T: Real>(panel: &FunctionalPanel<T>, method: Method, r: usize) -> Result<T> {
    check_r(panel, method, r)?;
    let sp = spectra(panel)?;
    Ok(msr_curve(panel, &sp, method, r)[r])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    G1,
    G2,
    G3,
}

impl Penalty {
    pub const ALL: [Penalty; 3] = [Penalty::G1, Penalty::G2, Penalty::G3];

    pub fn value(self, p: usize, n: usize) -> f64 {
        let (pf, nf) = (p as f64, n as f64);
        let m = pf.min(nf);
        match self {
            Penalty::G1 => (pf + nf) / (pf * nf) * (pf * nf / (pf + nf)).ln(),
            Penalty::G2 => (pf + nf) / (pf * nf) * m.ln(),
            Penalty::G3 => m.ln() / m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub r_hat_digit: usize,
    pub r_hat_fpoet: usize,
    pub v_digit: f64,
    pub v_fpoet: f64,
    /// Rows: digit, fpoet. Columns: penalties g1, g2, g3.
    pub pc: [[f64; 3]; 2],
    pub ic: [[f64; 3]; 2],
    pub delta_pc: [f64; 3],
    pub delta_ic: [f64; 3],
    pub chosen_model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn report(p: usize, n: usize, r_d: usize, r_f: usize, v_d: f64, v_f: f64) -> SelectionReport {
    let mut pc = [[0.0; 3]; 2];
    let mut ic = [[0.0; 3]; 2];
    for (c, pen) in Penalty::ALL.iter().enumerate() {
        let g = pen.value(p, n);
        for (row, (v, r)) in [(v_d, r_d), (v_f, r_f)].iter().enumerate() {
            pc[row][c] = v + *r as f64 * g;
            ic[row][c] = v.ln() + *r as f64 * g;
        }
    }
    let delta_pc = [0, 1, 2].map(|c| pc[0][c] - pc[1][c]);
    let delta_ic = [0, 1, 2].map(|c| ic[0][c] - ic[1][c]);
    let ic_defined = v_d > 0.0 && v_f > 0.0 && delta_ic.iter().all(|d| d.is_finite());
    let (votes, warning) = if ic_defined {
        (delta_ic.iter().filter(|d| **d < 0.0).count(), None)
    } else {
        (
            delta_pc.iter().filter(|d| **d < 0.0).count(),
            Some("mean squared residual is zero; information criteria undefined, decided by PC".to_string()),
        )
    };
    let chosen_model = if votes >= 2 { Model::Ffm1 } else { Model::Ffm2 };
    SelectionReport { r_hat_digit: r_d, r_hat_fpoet: r_f, v_digit: v_d, v_fpoet: v_f, pc, ic, delta_pc, delta_ic, chosen_model, warning }
}

/// PC/IC values of both models at the given ranks.
pub fn information_criteria<T: Real>(panel: &FunctionalPanel<T>, r_digit: usize, r_fpoet: usize) -> Result<SelectionReport> {
    check_r(panel, Method::Digit, r_digit)?;
    check_r(panel, Method::Fpoet, r_fpoet)?;
    let sp = spectra(panel)?;
    Ok(criteria_from_spectra(panel, &sp, r_digit, r_fpoet))
}

fn criteria_from_spectra<T: Real>(panel: &FunctionalPanel<T>, sp: &Spectra<T>, r_d: usize, r_f: usize) -> SelectionReport {
    let v_d = to_f64(msr_curve(panel, sp, Method::Digit, r_d)[r_d]);
    let v_f = to_f64(msr_curve(panel, sp, Method::Fpoet, r_f)[r_f]);
    report(panel.p(), panel.n(), r_d, r_f, v_d, v_f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub c_r: f64,
    pub eps0: f64,
    pub r0: Option<usize>,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions { c_r: DEFAULT_C_R, eps0: DEFAULT_EPS0, r0: None }
    }
}

/// Ratio-estimated ranks for both models followed by the information criteria
/// at those ranks.
pub fn select<T: Real>(panel: &FunctionalPanel<T>, opts: &SelectOptions) -> Result<SelectionReport> {
    let sp = spectra(panel)?;
    let (n, p) = (panel.n(), panel.p());
    let eps0 = lit::<T>(opts.eps0);
    let r_d = ratio_digit(sp.omega.as_slice(), p, lit(opts.c_r), eps0)?;
    let r0 = opts.r0.unwrap_or_else(|| default_r0(n, p));
    let r_f = ratio_fpoet(sp.tau.as_slice(), p, r0, eps0)?;
    Ok(criteria_from_spectra(panel, &sp, r_d, r_f))
}
