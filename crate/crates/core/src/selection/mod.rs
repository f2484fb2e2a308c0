//! Model comparison: DIC, thermodynamic-integration marginal likelihoods and
//! greedy forward selection on Bayes factors.

mod dic;
mod forward;
mod marginal;

pub use dic::{dic, DicReport, MarginalLikelihood, DIC_MC_PAIRS};
pub use forward::{
    evaluate, forward_select, forward_select_with, spec_seed, Evaluation, SelectionConfig, SelectionRow,
    SelectionTrace, StepRecord, TRACE_HEADER,
};
pub use marginal::{log_marginal, thermodynamic_integration, LadderConfig, MarginalEstimate};
