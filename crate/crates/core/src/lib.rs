//! Covariance estimation for high-dimensional functional time series with
//! factor structure.
//!
//! Curves live in coefficient space of an orthonormal basis, so a panel of
//! `p` curves over `n` periods is an `n × pK` matrix and a `p × p` matrix of
//! kernels is a `pK × pK` block matrix. Two estimators are provided:
//! [`digit`] (functional-factor model) and [`fpoet`] (scalar-factor model),
//! both followed by adaptive functional thresholding of the idiosyncratic
//! part ([`aft`]).
//!
//! Estimators are generic over the scalar type (`f32` or `f64`); the
//! simulation designs, file formats and Monte Carlo harness work in `f64`.

pub mod aft;
pub mod basis;
pub mod covariance;
pub mod digit;
pub mod error;
pub mod experiment;
pub mod fpoet;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod portfolio;
pub mod scalar;
pub mod select;
pub mod sim;

pub use aft::{ThresholdFamily, ThresholdRule, VarianceFactors};
pub use basis::{BasisKind, BasisSpec, Curve, FunctionalPanel, GridSamples, KernelMatrix, KernelNorm, VectorFunction};
pub use digit::{DigitFit, OmegaMatrix};
pub use error::{Error, Result};
pub use fpoet::FpoetFit;
pub use inverse::{InverseMode, InverseSpec};
pub use portfolio::{EstimatorKind, PortfolioWeights};
pub use scalar::Real;
pub use select::{Method, Model, SelectionReport};
pub use sim::{DgpConfig, GroundTruth};

pub type BasisSpecF64 = BasisSpec<f64>;
pub type BasisSpecF32 = BasisSpec<f32>;
pub type FunctionalPanelF64 = FunctionalPanel<f64>;
pub type FunctionalPanelF32 = FunctionalPanel<f32>;
pub type KernelMatrixF64 = KernelMatrix<f64>;
pub type KernelMatrixF32 = KernelMatrix<f32>;
pub type ThresholdRuleF64 = ThresholdRule<f64>;
pub type ThresholdRuleF32 = ThresholdRule<f32>;
pub type DigitFitF64 = DigitFit<f64>;
pub type FpoetFitF64 = FpoetFit<f64>;
pub type PortfolioWeightsF64 = PortfolioWeights<f64>;
