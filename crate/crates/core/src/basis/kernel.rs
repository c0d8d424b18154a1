use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView};

use super::VectorFunction;
use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, spectral_norm, sym_eigen_desc};
use crate::scalar::{lit, Real};

/// Coefficients of one bivariate kernel `Σ_ij(u,v)` in the tensor basis.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock<T: Real> {
    pub mat: DMatrix<T>,
}

impl<T: Real> KernelBlock<T> {
    /// Hilbert–Schmidt norm; equals the Frobenius norm of the coefficients.
    pub fn hs_norm(&self) -> T {
        self.mat.norm()
    }

    /// `∫ K(u,u) du`.
    pub fn trace(&self) -> T {
        self.mat.trace()
    }
}

/// A `p_rows × p_cols` array of `K × K` kernel blocks, stored as its
/// `p_rows K × p_cols K` flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T: Real> {
    p_rows: usize,
    p_cols: usize,
    k: usize,
    mat: DMatrix<T>,
}

impl<T: Real> KernelMatrix<T> {
    pub fn from_flat(p_rows: usize, p_cols: usize, k: usize, mat: DMatrix<T>) -> Result<Self> {
        if mat.shape() != (p_rows * k, p_cols * k) {
            return Err(Error::invalid(format!(
                "flattened kernel has shape {:?}, expected ({}, {})",
                mat.shape(),
                p_rows * k,
                p_cols * k
            )));
        }
        Ok(KernelMatrix { p_rows, p_cols, k, mat })
    }

    /// Square kernel matrix from a `pK × pK` flattening.
    pub fn square(p: usize, k: usize, mat: DMatrix<T>) -> Result<Self> {
        Self::from_flat(p, p, k, mat)
    }

    pub fn zeros(p_rows: usize, p_cols: usize, k: usize) -> Self {
        KernelMatrix { p_rows, p_cols, k, mat: DMatrix::zeros(p_rows * k, p_cols * k) }
    }

    /// The identity operator on the span of the basis.
    pub fn identity(p: usize, k: usize) -> Self {
        KernelMatrix { p_rows: p, p_cols: p, k, mat: DMatrix::identity(p * k, p * k) }
    }

    pub fn p_rows(&self) -> usize {
        self.p_rows
    }

    pub fn p_cols(&self) -> usize {
        self.p_cols
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_square(&self) -> bool {
        self.p_rows == self.p_cols
    }

    pub fn flat(&self) -> &DMatrix<T> {
        &self.mat
    }

    pub fn flat_mut(&mut self) -> &mut DMatrix<T> {
        &mut self.mat
    }

    pub fn into_flat(self) -> DMatrix<T> {
        self.mat
    }

    pub fn block_view(&self, i: usize, j: usize) -> DMatrixView<'_, T> {
        self.mat.view((i * self.k, j * self.k), (self.k, self.k))
    }

    pub fn block(&self, i: usize, j: usize) -> KernelBlock<T> {
        KernelBlock { mat: self.block_view(i, j).into_owned() }
    }

    pub fn set_block(&mut self, i: usize, j: usize, block: &DMatrix<T>) {
        self.mat.view_mut((i * self.k, j * self.k), (self.k, self.k)).copy_from(block);
    }

    /// Hilbert–Schmidt norms of every block.
    pub fn hs_norms(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.p_rows, self.p_cols, |i, j| self.block_view(i, j).norm())
    }

    pub fn transpose(&self) -> Self {
        KernelMatrix { p_rows: self.p_cols, p_cols: self.p_rows, k: self.k, mat: self.mat.transpose() }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.p_rows != other.p_rows || self.p_cols != other.p_cols || self.k != other.k {
            return Err(Error::invalid(format!(
                "kernel shapes differ: {}x{} (K={}) vs {}x{} (K={})",
                self.p_rows, self.p_cols, self.k, other.p_rows, other.p_cols, other.k
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(KernelMatrix { mat: &self.mat + &other.mat, ..self.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(KernelMatrix { mat: &self.mat - &other.mat, ..self.clone() })
    }

    pub fn scale(&self, s: T) -> Self {
        KernelMatrix { mat: &self.mat * s, ..self.clone() }
    }

    /// Block-symmetry of the flattening, relative to the largest entry.
    pub fn is_symmetric(&self, rel_tol: T) -> bool {
        self.is_square() && is_symmetric(&self.mat, rel_tol)
    }

    /// Smallest eigenvalue of the symmetric part of the flattening.
    pub fn min_eigenvalue(&self) -> T {
        let (vals, _) = sym_eigen_desc(&self.mat);
        vals.iter().copied().reduce(|a, b| a.min(b)).unwrap_or(T::zero())
    }

    pub fn symmetrized(&self) -> Self {
        KernelMatrix { mat: crate::linalg::symmetrize(&self.mat), ..self.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.mat.iter().all(|v| v.is_finite())
    }
}

/// Functional matrix norms built from the block Hilbert–Schmidt norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelNorm {
    /// `max_j Σ_i ‖K_ij‖_S`
    S1,
    /// `max_i Σ_j ‖K_ij‖_S`
    Sinf,
    /// `(Σ_ij ‖K_ij‖_S²)^{1/2}`
    SF,
    /// `max_ij ‖K_ij‖_S`
    Smax,
    /// Operator norm on `H^p`.
    L,
}

impl fmt::Display for KernelNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelNorm::S1 => "S1",
            KernelNorm::Sinf => "Sinf",
            KernelNorm::SF => "SF",
            KernelNorm::Smax => "Smax",
            KernelNorm::L => "L",
        };
        f.write_str(s)
    }
}

impl FromStr for KernelNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1" | "s1" => Ok(KernelNorm::S1),
            "Sinf" | "sinf" => Ok(KernelNorm::Sinf),
            "SF" | "sf" | "frobenius" => Ok(KernelNorm::SF),
            "Smax" | "smax" | "max" => Ok(KernelNorm::Smax),
            "L" | "l" | "operator" => Ok(KernelNorm::L),
            other => Err(Error::invalid(format!("unknown norm `{other}`"))),
        }
    }
}

pub fn kernel_norm<T: Real>(m: &KernelMatrix<T>, which: KernelNorm) -> T {
    match which {
        KernelNorm::L => spectral_norm(m.flat()),
        KernelNorm::SF => m.flat().norm(),
        _ => {
            let hs = m.hs_norms();
            match which {
                KernelNorm::S1 => hs.column_iter().map(|c| c.sum()).fold(T::zero(), |a, b| a.max(b)),
                KernelNorm::Sinf => hs.row_iter().map(|r| r.sum()).fold(T::zero(), |a, b| a.max(b)),
                KernelNorm::Smax => hs.iter().copied().fold(T::zero(), |a, b| a.max(b)),
                KernelNorm::SF | KernelNorm::L => unreachable!(),
            }
        }
    }
}

/// Trace norms `‖K_ii‖_N = ∫ K_ii(u,u) du` of the diagonal blocks.
pub fn trace_diag<T: Real>(m: &KernelMatrix<T>) -> Result<Vec<T>> {
    if !m.is_square() {
        return Err(Error::invalid("trace-diag requires a square kernel matrix"));
    }
    Ok((0..m.p_rows()).map(|i| m.block_view(i, i).trace()).collect())
}

/// Leading eigenpairs of a symmetric kernel matrix.
#[derive(Debug, Clone)]
pub struct Mercer<T: Real> {
    pub eigenvalues: Vec<T>,
    pub eigenfunctions: Vec<VectorFunction<T>>,
}

impl<T: Real> Mercer<T> {
    /// `Σ_i τ_i φ_i φ_i^T`.
    pub fn reconstruct(&self) -> KernelMatrix<T> {
        let (p, k) = match self.eigenfunctions.first() {
            Some(f) => (f.p(), f.k()),
            None => return KernelMatrix::zeros(0, 0, 0),
        };
        let mut mat = DMatrix::zeros(p * k, p * k);
        for (tau, phi) in self.eigenvalues.iter().zip(&self.eigenfunctions) {
            mat.ger(*tau, phi.coeffs(), phi.coeffs(), T::one());
        }
        KernelMatrix { p_rows: p, p_cols: p, k, mat }
    }
}

/// Eigenanalysis of the flattening of a symmetric kernel matrix; returns the
/// `m` leading eigenvalues and eigenfunctions with the largest-magnitude
/// coefficient of each eigenfunction made positive.
pub fn mercer_eigen<T: Real>(m: &KernelMatrix<T>, count: usize) -> Result<Mercer<T>> {
    if !m.is_square() {
        return Err(Error::invalid("Mercer decomposition needs a square kernel matrix"));
    }
    if !m.is_symmetric(lit(1e-9)) {
        return Err(Error::invalid("Mercer decomposition needs a symmetric kernel matrix"));
    }
    let dim = m.p_rows() * m.k();
    if count > dim {
        return Err(Error::invalid(format!("requested {count} eigenpairs from a {dim}-dimensional operator")));
    }
    let (vals, vecs) = sym_eigen_desc(m.flat());
    let eigenvalues = vals.iter().take(count).copied().collect();
    let eigenfunctions = (0..count)
        .map(|j| VectorFunction::new(m.p_rows(), m.k(), vecs.column(j).into_owned()).expect("shape"))
        .collect();
    Ok(Mercer { eigenvalues, eigenfunctions })
}

/// `K(x)(·) = ∫ K(·,u) x(u) du`, blockwise in coefficient space.
pub fn apply_kernel<T: Real>(m: &KernelMatrix<T>, x: &VectorFunction<T>) -> Result<VectorFunction<T>> {
    if x.p() != m.p_cols() || x.k() != m.k() {
        return Err(Error::invalid(format!(
            "cannot apply a {}x{} kernel (K={}) to a {}-vector function (K={})",
            m.p_rows(),
            m.p_cols(),
            m.k(),
            x.p(),
            x.k()
        )));
    }
    VectorFunction::new(m.p_rows(), m.k(), m.flat() * x.coeffs())
}
