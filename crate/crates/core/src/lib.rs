//! Explicit piece-wise sparse polynomial regression.
//!
//! A label `y` is modelled from features `x` in two stages:
//!
//! 1. [`implicit::fit_implicit`] finds a small family of sparse polynomials
//!    `P_1..P_m` such that every training label is close to at least one of
//!    them (the implicit residual `min_k |y − P_k(x)|` is small).
//! 2. [`explicit::fit_explicit`] turns that family into a predictor. Each
//!    voter cuts the feature space into quantile regions of a random
//!    polynomial `π(x − x_c)` and assigns every region its best polynomial;
//!    the model averages the voters.
//!
//! Region and polynomial indices are zero-based throughout.

pub mod data;
pub mod error;
pub mod explicit;
pub mod implicit;
pub mod metrics;
pub mod model_file;
pub mod partition;
pub mod poly;
pub mod real;

pub use data::{load_csv, split_train_test, Dataset, SkippedHead, SynthSpec};
pub use error::{Error, Result};
pub use explicit::{fit_explicit, ExplicitFitConfig, ExplicitModel, PrecisionMeasure, Voter};
pub use implicit::{fit_implicit, implicit_residual, ImplicitFit, ImplicitFitConfig};
pub use model_file::{ModelFile, ModelKind};
pub use partition::PartitioningTriplet;
pub use poly::{monomial_dictionary, Monomial, PolynomialSet, SparsePolynomial, Term};
