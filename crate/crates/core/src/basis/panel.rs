use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A single curve: its `K` basis coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve<T: Real> {
    coeffs: DVector<T>,
}

impl<T: Real> Curve<T> {
    pub fn new(coeffs: DVector<T>) -> Self {
        Curve { coeffs }
    }

    /// The `j`-th basis function itself.
    pub fn unit(k: usize, j: usize) -> Self {
        let mut coeffs = DVector::zeros(k);
        coeffs[j] = T::one();
        Curve { coeffs }
    }

    pub fn coeffs(&self) -> &DVector<T> {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }
}

/// `⟨f, g⟩ = ∫ f(u) g(u) du`, a dot product in an orthonormal basis.
pub fn inner_product<T: Real>(f: &Curve<T>, g: &Curve<T>) -> Result<T> {
    if f.dim() != g.dim() {
        return Err(Error::invalid(format!("curve dimensions differ: {} vs {}", f.dim(), g.dim())));
    }
    Ok(f.coeffs.dot(&g.coeffs))
}

/// An element of `H^p`, stored as `p` stacked coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFunction<T: Real> {
    p: usize,
    k: usize,
    coeffs: DVector<T>,
}

impl<T: Real> VectorFunction<T> {
    pub fn new(p: usize, k: usize, coeffs: DVector<T>) -> Result<Self> {
        if coeffs.len() != p * k {
            return Err(Error::invalid(format!("expected {} coefficients, got {}", p * k, coeffs.len())));
        }
        Ok(VectorFunction { p, k, coeffs })
    }

    pub fn zeros(p: usize, k: usize) -> Self {
        VectorFunction { p, k, coeffs: DVector::zeros(p * k) }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &DVector<T> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<T> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<T> {
        self.coeffs
    }

    pub fn component(&self, i: usize) -> Curve<T> {
        Curve::new(self.coeffs.rows(i * self.k, self.k).into_owned())
    }

    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.p != other.p || self.k != other.k {
            return Err(Error::invalid("vector functions have different shapes"));
        }
        Ok(self.coeffs.dot(&other.coeffs))
    }

    pub fn norm(&self) -> T {
        self.coeffs.norm()
    }
}

/// An `n × p` panel of curves. Row `t` of `coeffs` holds observation `t`,
/// with series `i` occupying columns `i*K .. (i+1)*K`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalPanel<T: Real> {
    n: usize,
    p: usize,
    k: usize,
    coeffs: DMatrix<T>,
}

impl<T: Real> FunctionalPanel<T> {
    pub fn new(n: usize, p: usize, k: usize, coeffs: DMatrix<T>) -> Result<Self> {
        if coeffs.shape() != (n, p * k) {
            return Err(Error::invalid(format!(
                "panel coefficients have shape {:?}, expected ({n}, {})",
                coeffs.shape(),
                p * k
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("panel contains non-finite coefficients"));
        }
        Ok(FunctionalPanel { n, p, k, coeffs })
    }

    pub fn zeros(n: usize, p: usize, k: usize) -> Self {
        FunctionalPanel { n, p, k, coeffs: DMatrix::zeros(n, p * k) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &DMatrix<T> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DMatrix<T> {
        self.coeffs
    }

    pub fn curve(&self, t: usize, i: usize) -> Curve<T> {
        Curve::new(self.coeffs.view((t, i * self.k), (1, self.k)).transpose().column(0).into_owned())
    }

    pub fn observation(&self, t: usize) -> VectorFunction<T> {
        VectorFunction { p: self.p, k: self.k, coeffs: self.coeffs.row(t).transpose() }
    }

    /// Columns `{i*K + a : i}`, i.e. coefficient `a` of every series (`n × p`).
    pub fn coefficient_slice(&self, a: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.n, self.p, |t, i| self.coeffs[(t, i * self.k + a)])
    }

    /// Panel restricted to the observations in `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let coeffs = self.coeffs.select_rows(rows);
        FunctionalPanel { n: rows.len(), p: self.p, k: self.k, coeffs }
    }

    /// Squared norms `‖y_ti‖²`, an `n × p` matrix.
    pub fn squared_norms(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.n, self.p, |t, i| {
            (0..self.k).fold(T::zero(), |acc, a| {
                let v = self.coeffs[(t, i * self.k + a)];
                acc + v * v
            })
        })
    }

    /// Total squared norm `Σ_t ‖y_t‖²`.
    pub fn total_energy(&self) -> T {
        self.coeffs.norm_squared()
    }
}

/// Raw curves sampled on a common grid: `data[(t, i*G + g)] = y_ti(u_g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples<T: Real> {
    n: usize,
    p: usize,
    grid: Vec<T>,
    data: DMatrix<T>,
}

impl<T: Real> GridSamples<T> {
    pub fn new(n: usize, p: usize, grid: Vec<T>, data: DMatrix<T>) -> Result<Self> {
        if data.shape() != (n, p * grid.len()) {
            return Err(Error::invalid(format!(
                "grid samples have shape {:?}, expected ({n}, {})",
                data.shape(),
                p * grid.len()
            )));
        }
        Ok(GridSamples { n, p, grid, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn value(&self, t: usize, i: usize, g: usize) -> T {
        self.data[(t, i * self.grid.len() + g)]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        GridSamples { n: rows.len(), p: self.p, grid: self.grid.clone(), data: self.data.select_rows(rows) }
    }

    /// Same values on a different (e.g. rescaled) grid of equal length.
    pub fn with_grid(self, grid: Vec<T>) -> Result<Self> {
        if grid.len() != self.grid.len() {
            return Err(Error::invalid("replacement grid has a different length"));
        }
        Ok(GridSamples { grid, ..self })
    }
}
