//! Support vector machines for additive models.
//!
//! The crate is organised around five pieces:
//!
//! - [`kernel`]: Gaussian, polynomial and dot kernels plus block-wise sum and
//!   product constructions over a partitioned input space.
//! - [`loss`]: the pinball, ε-insensitive and hinge losses, their shifted
//!   versions, Lipschitz constants and subdifferentials.
//! - [`measure`]: finitely supported probability measures on `X × Y`.
//! - [`svm`]: training of the regularized shifted-risk minimizer on a
//!   measure, prediction, additive decomposition and persistence.
//! - [`robustness`] and [`simlab`]: bias-bound certification, the pinball
//!   Bouligand influence function, and the simulated consistency study.
//!
//! The Gaussian kernel uses `exp(-‖x - x'‖² / γ²)`, i.e. γ is a length
//! scale, not the `exp(-γ‖x - x'‖²)` convention common elsewhere.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernel;
pub mod loss;
pub mod measure;
pub mod oracle;
pub mod robustness;
pub mod rng;
pub mod simlab;
pub mod svm;
pub mod table;

pub use error::{Error, Result};
pub use kernel::{BoundCertificate, CoordRange, KernelKind, KernelSpec, SymMatrix};
pub use loss::{Interval, LossSpec};
pub use measure::{Atom, Dataset, DiscreteMeasure};
pub use robustness::{BiasCurve, BiasRow, HElement};
pub use simlab::{SimSpec, TrendRow, Variant};
pub use svm::{train, SvmModel, TrainOptions, TrainReport};
