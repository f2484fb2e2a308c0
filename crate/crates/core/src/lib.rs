//! Bayesian Poisson-lognormal models for stratified cancer mortality panels.
//!
//! The crate covers the whole pipeline: panel ingestion, the smoking proxy
//! backcast, the average age-at-diagnosis covariate, declarative model specs,
//! an MCMC engine, DIC and marginal-likelihood model selection, period-effect
//! projection, excess-death measures and a synthetic-data laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aad;
pub mod data;
pub mod error;
pub mod linalg;
pub mod measures;
pub mod mcmc;
pub mod projection;
pub mod selection;
pub mod simlab;
pub mod smoking;
pub mod spec;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/panels.md")]
    mod panels {}
    #[doc = include_str!("../../../book/src/covariates.md")]
    mod covariates {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/projection.md")]
    mod projection {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/simlab.md")]
    mod simlab {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
