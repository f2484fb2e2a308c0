//! Age standardisation, deprivation gaps, residual diagnostics, excess
//! deaths and diagnosis-delay scenarios.

mod asr;
mod excess;
mod residuals;
mod scenario;

pub use asr::{asr, asr_draws, rd_gap, rd_gap_draws, surface_asr};
pub use excess::{
    ced_from_totals, cumulative_excess, excess_tables, write_ced_csv, CedRow, ExcessReport, ExcessRow, ExcessTable,
    NATIONAL,
};
pub use residuals::{pearson_residual, pearson_residuals, residual_bin, write_heatmap_csv, Residual, RESIDUAL_BINS};
pub use scenario::{apply_delay_scenario, AllocationSchedule, ScenarioConfig};
