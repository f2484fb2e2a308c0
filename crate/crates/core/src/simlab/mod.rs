//! Synthetic panels from known parameters and quadrature oracles.

mod generate;
mod oracle;

pub use generate::{generate, CovariateShape, GeneratorConfig, Synthetic, Truth, TruthCell};
pub use oracle::{cell_log_marginal, oracle_log_evidence, oracle_posterior_1d, GridPosterior, OracleProblem, GRID_POINTS};
