//! Scalar-on-function regression with penalizedB-spline tensor-product smooths.
//!
//! The crate provides the building blocks for fitting the functional linear
//! model (FLM) and the functional generalized additive model (FGAM) to a
//! scalar response observed with a densely sampled functional predictor, and
//! for testing whether the linear model is adequate:
//!
//! * [`splines`] — B-spline bases, exact derivative penalties, and the
//!   null/range-space transform that turns a penalized smooth into fixed plus
//!   i.i.d. random effects.
//! * [`design`] — quadrature operators, box (row-wise Kronecker) products,
//!   the standard tensor-product design, and the PS-ANOVA design with its
//!   three diagonal random-effect blocks.
//! * [`lmm`] — REML/ML estimation of Gaussian mixed models with up to three
//!   independent variance components.
//! * [`rlrt`] — restricted-likelihood-ratio statistics for a single variance
//!   component and fast spectral simulation of their exact null distribution.
//! * [`fgam`] — model-level fitting (FLM, FGAM by GCV, FGAMM by REML),
//!   prediction, and surface decomposition.
//! * [`hypothesis`] — the linearity tests (Bonferroni, EqualVC, parametric
//!   bootstrap, quasi-oracle), the no-effect test, and the linear-in-t test.
//! * [`sim`] — data generators and the rejection-rate study harness.

pub mod dataset;
pub mod design;
pub mod error;
pub mod fgam;
pub mod hypothesis;
pub mod lmm;
pub mod rlrt;
pub mod seed;
pub mod sim;
pub mod splines;

pub use dataset::FunctionalDataset;
pub use design::{PsAnovaDesign, QuadratureOperator, QuadratureRule, TensorDesign};
pub use error::{Error, Result};
pub use fgam::{FgamFit, SurfaceDecomposition};
pub use hypothesis::{TestMethod, TestOptions, TestResult};
pub use lmm::{FitMethod, MixedModelSpec, VarianceComponentFit};
pub use rlrt::RlrtNullSample;
pub use sim::{RejectionTable, StudyConfig};
pub use splines::{KnotVector, MarginalBasis};
