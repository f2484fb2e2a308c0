//! Model structures and their design matrices.
//!
//! Categorical terms use sum-to-zero coding, interactions are products of the
//! codings of their factors, and period terms use corner coding with the
//! first observed year as baseline.

mod covariates;
mod design;
mod term;

pub use covariates::{CovariateKey, CovariateSet, CovariateTable, RowCovariates};
pub use design::{build_design, stz_code, Block, DesignLayout, DesignMatrix, Effect, MAX_CONDITION};
pub use term::{builtin_spec, Constraint, Covariate, Factor, ModelSpec, Term};
