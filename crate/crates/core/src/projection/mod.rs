//! Period-effect extrapolation and posterior-predictive mortality surfaces.
//!
//! Non-period effects are frozen at each draw's values; only `κ` moves.

mod kappa;
mod population;
mod surface;

pub use kappa::{extrapolate_kappa, random_walk, KappaProjection};
pub use population::{split_population, DeprivationShares, PopulationProjection};
pub use surface::{
    load_surface_rows, project_rates, project_with_shift, read_surface_rows, write_surface_rows, ProjectionConfig,
    ProjectionSurface, SurfaceRow,
};
