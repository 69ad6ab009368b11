//! Randomization-based inference for treatment contrasts in a finite
//! population under a general assignment mechanism.
//!
//! The building blocks:
//!
//! * [`population`]: science tables of potential outcomes and contrasts.
//! * [`assignment`]: assignment mechanisms, their probabilities, sampling and
//!   exact support enumeration.
//! * [`estimation`]: linear unbiased estimators and their exact sampling
//!   variance and covariance.
//! * [`qframework`]: the `Q`-matrix family of variance estimators, the SAP
//!   and GA conditions, and minimax choice of `Q`.
//! * [`oracle`]: brute-force expectations over the enumerated support.
//! * [`simulation`]: the Monte-Carlo bias study.
//!
//! Numerical code is generic over [`Scalar`]; the aliases below fix the two
//! scalars used in practice.

pub mod assignment;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod oracle;
pub mod population;
pub mod qframework;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod simulation;

pub use assignment::{Mechanism, Partition};
pub use error::{Error, Result};
pub use num_rational::BigRational;
pub use estimation::Design;
pub use population::{Contrast, PotentialOutcomes};
pub use qframework::QMatrix;
pub use scalar::{Exact, Real, Scalar};

pub type Table64 = PotentialOutcomes<f64>;
pub type ExactTable = PotentialOutcomes<Exact>;
pub type Contrast64 = Contrast<f64>;
pub type ExactContrast = Contrast<Exact>;
pub type Design64 = Design<f64>;
pub type ExactDesign = Design<Exact>;
pub type Q64 = QMatrix<f64>;
pub type ExactQ = QMatrix<Exact>;
