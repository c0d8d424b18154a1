//! Orthonormal basis representation of curves and operator-valued matrices.
//!
//! Every functional object is stored by its coefficients in one orthonormal
//! basis of `L2[0,1]`. Inner products of curves become dot products and the
//! Hilbert–Schmidt norm of a kernel becomes the Frobenius norm of its
//! coefficient block, so all functional matrix norms reduce to finite matrix
//! norms.

mod kernel;
mod panel;

pub use kernel::{apply_kernel, kernel_norm, mercer_eigen, trace_diag, KernelBlock, KernelMatrix, KernelNorm, Mercer};
pub use panel::{inner_product, Curve, FunctionalPanel, GridSamples, VectorFunction};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, to_f64, Real};

/// Tolerance for the discrete orthonormality check performed at construction,
/// relaxed to a multiple of machine epsilon for single precision.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `{1, √2 cos(2πku), √2 sin(2πku), ...}`
    Fourier,
    /// Clamped cubic B-splines, orthonormalized against the quadrature rule.
    BsplineOrthonormalized,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Fourier => f.write_str("fourier"),
            BasisKind::BsplineOrthonormalized => f.write_str("bspline-orthonormalized"),
        }
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(BasisKind::Fourier),
            "bspline" | "bspline-orthonormalized" => Ok(BasisKind::BsplineOrthonormalized),
            other => Err(Error::invalid(format!("unknown basis kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
struct Bspline<T> {
    degree: usize,
    knots: Vec<T>,
    /// Lower-triangular map from raw B-splines to the orthonormal basis.
    transform: DMatrix<T>,
}

/// An orthonormal basis of dimension `K` on `[0,1]` together with the
/// quadrature grid used at the sampling boundary.
#[derive(Debug, Clone)]
pub struct BasisSpec<T: Real> {
    kind: BasisKind,
    k: usize,
    grid: DVector<T>,
    quad_weights: DVector<T>,
    /// `values[(g, k)] = φ_k(grid[g])`
    values: DMatrix<T>,
    bspline: Option<Bspline<T>>,
}

/// JSON form `{kind, K, grid}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisJson {
    pub kind: BasisKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub grid: Vec<f64>,
}

/// Output of [`BasisSpec::project`].
#[derive(Debug, Clone)]
pub struct Projection<T: Real> {
    pub panel: FunctionalPanel<T>,
    /// Relative quadrature-weighted L2 error of reconstructing the samples.
    pub reconstruction_error: T,
}

/// Uniform grid of `g` points on `[0,1]`.
pub fn uniform_grid<T: Real>(g: usize) -> Vec<T> {
    let denom = count::<T>(g.saturating_sub(1).max(1));
    (0..g).map(|i| count::<T>(i) / denom).collect()
}

/// Composite trapezoid weights on a strictly increasing grid.
pub fn trapezoid_weights<T: Real>(grid: &[T]) -> Vec<T> {
    let g = grid.len();
    let half = lit::<T>(0.5);
    (0..g)
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { T::zero() };
            let right = if i + 1 < g { grid[i + 1] - grid[i] } else { T::zero() };
            (left + right) * half
        })
        .collect()
}

/// Value of the `j`-th (0-based) Fourier basis function at `u`.
pub fn fourier_value<T: Real>(j: usize, u: T) -> T {
    if j == 0 {
        return T::one();
    }
    let m = count::<T>((j + 1) / 2);
    let arg = T::two_pi() * m * u;
    let root2 = lit::<T>(2.0).sqrt();
    if j % 2 == 1 {
        root2 * arg.cos()
    } else {
        root2 * arg.sin()
    }
}

fn bspline_knots<T: Real>(k: usize, degree: usize) -> Vec<T> {
    let interior = k - degree - 1;
    let spans = interior + 1;
    let mut knots = vec![T::zero(); degree + 1];
    for i in 1..=interior {
        knots.push(count::<T>(i) / count::<T>(spans));
    }
    knots.extend(std::iter::repeat_n(T::one(), degree + 1));
    knots
}

/// Values of all `knots.len() - degree - 1` B-splines at `u` (Cox–de Boor).
fn bspline_values<T: Real>(knots: &[T], degree: usize, u: T) -> Vec<T> {
    let nbasis = knots.len() - degree - 1;
    let last = knots[knots.len() - 1];
    // Locate span; the right endpoint belongs to the last nonempty span.
    let mut span = degree;
    if u >= last {
        span = nbasis - 1;
    } else {
        while span + 1 < knots.len() - degree - 1 && u >= knots[span + 1] {
            span += 1;
        }
    }
    let mut n = vec![T::zero(); degree + 1];
    n[0] = T::one();
    let mut left = vec![T::zero(); degree + 1];
    let mut right = vec![T::zero(); degree + 1];
    for j in 1..=degree {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = T::zero();
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > T::zero() { n[r] / denom } else { T::zero() };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    let mut out = vec![T::zero(); nbasis];
    for (r, v) in n.into_iter().enumerate() {
        out[span - degree + r] = v;
    }
    out
}

impl<T: Real> BasisSpec<T> {
    /// Builds a basis of dimension `k` on a uniform grid of `g` points.
    pub fn new(kind: BasisKind, k: usize, g: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("basis dimension K must be at least 1"));
        }
        if g < 2 * k + 1 {
            return Err(Error::invalid(format!(
                "grid of {g} points is too coarse for K={k} (need at least {})",
                2 * k + 1
            )));
        }
        Self::on_grid(kind, k, uniform_grid(g))
    }

    /// Builds a basis on an explicit grid. The grid must start at 0, end at 1
    /// and be strictly increasing.
    pub fn on_grid(kind: BasisKind, k: usize, grid: Vec<T>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("basis dimension K must be at least 1"));
        }
        let g = grid.len();
        if g < 2 * k + 1 {
            return Err(Error::invalid(format!(
                "grid of {g} points is too coarse for K={k} (need at least {})",
                2 * k + 1
            )));
        }
        let tol = lit::<T>(1e-12);
        if grid[0].abs() > tol || (grid[g - 1] - T::one()).abs() > tol {
            return Err(Error::invalid("grid must span [0, 1]"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        let weights = trapezoid_weights(&grid);
        let q = DVector::from_vec(weights);

        let (values, bspline) = match kind {
            BasisKind::Fourier => {
                let values = DMatrix::from_fn(g, k, |gi, j| fourier_value(j, grid[gi]));
                (values, None)
            }
            BasisKind::BsplineOrthonormalized => {
                let degree = 3.min(k - 1);
                let knots = bspline_knots::<T>(k, degree);
                let raw = DMatrix::from_fn(g, k, |gi, j| bspline_values(&knots, degree, grid[gi])[j]);
                let weighted = DMatrix::from_fn(g, k, |gi, j| raw[(gi, j)] * q[gi]);
                let gram = raw.transpose() * weighted;
                let chol = gram
                    .cholesky()
                    .ok_or_else(|| Error::invalid("B-spline Gram matrix is singular on this grid"))?;
                let l_inv = chol
                    .l()
                    .try_inverse()
                    .ok_or_else(|| Error::invalid("B-spline Gram factor is singular"))?;
                let values = &raw * l_inv.transpose();
                (values, Some(Bspline { degree, knots, transform: l_inv }))
            }
        };
        let spec = BasisSpec { kind, k, grid: DVector::from_vec(grid), quad_weights: q, values, bspline };
        let err = spec.orthonormality_error();
        let tol = ORTHONORMALITY_TOL.max(1e4 * to_f64(T::default_epsilon()));
        if to_f64(err) > tol {
            return Err(Error::invalid(format!(
                "{kind} basis is not orthonormal on this grid (max |Gram - I| = {:.3e})",
                to_f64(err)
            )));
        }
        Ok(spec)
    }

    pub fn from_json(json: &BasisJson) -> Result<Self> {
        let grid = json.grid.iter().map(|&u| lit::<T>(u)).collect();
        Self::on_grid(json.kind, json.k, grid)
    }

    pub fn to_json(&self) -> BasisJson {
        BasisJson { kind: self.kind, k: self.k, grid: self.grid.iter().map(|&u| to_f64(u)).collect() }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &DVector<T> {
        &self.grid
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn quad_weights(&self) -> &DVector<T> {
        &self.quad_weights
    }

    /// Basis values on the grid, one row per grid point.
    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    /// Evaluates all basis functions at an arbitrary `u ∈ [0,1]`.
    pub fn eval(&self, u: T) -> DVector<T> {
        match (&self.kind, &self.bspline) {
            (BasisKind::Fourier, _) => DVector::from_fn(self.k, |j, _| fourier_value(j, u)),
            (BasisKind::BsplineOrthonormalized, Some(bs)) => {
                let raw = DVector::from_vec(bspline_values(&bs.knots, bs.degree, u));
                &bs.transform * raw
            }
            (BasisKind::BsplineOrthonormalized, None) => unreachable!("B-spline basis without knots"),
        }
    }

    /// Discrete Gram matrix `Φ^T diag(w) Φ`.
    pub fn gram(&self) -> DMatrix<T> {
        let weighted = DMatrix::from_fn(self.grid.len(), self.k, |g, j| self.values[(g, j)] * self.quad_weights[g]);
        self.values.transpose() * weighted
    }

    pub fn orthonormality_error(&self) -> T {
        let gram = self.gram();
        let mut worst = T::zero();
        for i in 0..self.k {
            for j in 0..self.k {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `Φ^T diag(w)`: maps grid samples of one curve to coefficients.
    pub fn analysis_matrix(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.k, self.grid.len(), |j, g| self.values[(g, j)] * self.quad_weights[g])
    }

    /// Coefficients of the constant function 1.
    pub fn constant_coeffs(&self) -> DVector<T> {
        self.values.transpose() * &self.quad_weights
    }

    pub fn grid_matches(&self, other: &[T]) -> bool {
        other.len() == self.grid.len()
            && self.grid.iter().zip(other).all(|(a, b)| (*a - *b).abs() <= lit::<T>(1e-9))
    }

    /// Quadrature projection of grid samples onto the basis.
    pub fn project(&self, samples: &GridSamples<T>) -> Result<Projection<T>> {
        if !self.grid_matches(samples.grid()) {
            return Err(Error::invalid("sample grid does not match the basis grid"));
        }
        let (n, p, g, k) = (samples.n(), samples.p(), self.grid.len(), self.k);
        let analysis = self.analysis_matrix().transpose(); // G × K
        let data = samples.data();
        let mut coeffs = DMatrix::zeros(n, p * k);
        for i in 0..p {
            let block = data.columns(i * g, g) * &analysis;
            coeffs.columns_mut(i * k, k).copy_from(&block);
        }
        let panel = FunctionalPanel::new(n, p, k, coeffs)?;
        let rebuilt = self.evaluate(&panel);
        let mut num = T::zero();
        let mut den = T::zero();
        for i in 0..p {
            for gi in 0..g {
                let w = self.quad_weights[gi];
                for t in 0..n {
                    let s = data[(t, i * g + gi)];
                    let d = s - rebuilt.data()[(t, i * g + gi)];
                    num += w * d * d;
                    den += w * s * s;
                }
            }
        }
        let reconstruction_error = if den > T::zero() { (num / den).sqrt() } else { T::zero() };
        Ok(Projection { panel, reconstruction_error })
    }

    /// Evaluates every curve of a panel on the grid.
    pub fn evaluate(&self, panel: &FunctionalPanel<T>) -> GridSamples<T> {
        let (n, p, k, g) = (panel.n(), panel.p(), panel.k(), self.grid.len());
        assert_eq!(k, self.k, "panel and basis dimensions differ");
        let synth = self.values.transpose(); // K × G
        let mut data = DMatrix::zeros(n, p * g);
        for i in 0..p {
            let block = panel.coeffs().columns(i * k, k) * &synth;
            data.columns_mut(i * g, g).copy_from(&block);
        }
        GridSamples::new(n, p, self.grid.iter().copied().collect(), data).expect("consistent shapes")
    }

    /// Evaluates a single curve on the grid.
    pub fn evaluate_curve(&self, curve: &Curve<T>) -> DVector<T> {
        &self.values * curve.coeffs()
    }
}
