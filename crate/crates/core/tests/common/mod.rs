#![allow(dead_code)]

use mortproj::data::{AgeBand, Cause, Gender, LevelSets, MortalityCell, MortalityPanel};
use mortproj::spec::ModelSpec;

/// A single-year panel with one cell per age group.
pub fn age_panel(cells: &[(u64, f64)]) -> MortalityPanel {
    age_panel_years(cells, 1)
}

/// Age-by-year panel; `cells` cycles across the grid.
pub fn age_panel_years(cells: &[(u64, f64)], n_years: usize) -> MortalityPanel {
    let n_ages = cells.len();
    let levels = LevelSets {
        cause: Cause::Lung,
        genders: vec![Gender::Female],
        years: (2001..2001 + n_years as i32).collect(),
        ages: Some((0..n_ages as u32).map(|a| AgeBand::new(50 + 5 * a, 54 + 5 * a)).collect()),
        regions: None,
        deprivation: false,
    };
    let grid = levels.grid();
    let cells = grid
        .into_iter()
        .enumerate()
        .map(|(i, key)| MortalityCell {
            key,
            deaths: cells[i % n_ages].0,
            exposure: cells[i % n_ages].1,
        })
        .collect();
    MortalityPanel::from_cells(levels, cells).unwrap()
}

pub fn spec(terms: &[&str]) -> ModelSpec {
    ModelSpec::new(
        "test",
        Cause::Lung,
        Gender::Female,
        terms.iter().map(|t| t.parse().unwrap()).collect(),
    )
    .unwrap()
}

/// A small synthetic lung panel and a short fit of its generating spec.
pub fn small_fit(
    seed: u64,
    horizon: usize,
) -> (mortproj::simlab::Synthetic, mortproj::mcmc::PosteriorDraws) {
    use mortproj::mcmc::{sample, PriorSet, SamplerConfig};
    use mortproj::simlab::{generate, GeneratorConfig};
    let cfg = GeneratorConfig {
        seed,
        n_years: 8,
        horizon,
        n_ages: 3,
        n_regions: 2,
        deprivation: false,
        terms: ["intercept", "age", "AAD", "year"].iter().map(|t| t.parse().unwrap()).collect(),
        ..Default::default()
    };
    let syn = generate(&cfg).unwrap();
    let draws = sample(
        &cfg.spec().unwrap(),
        &syn.panel,
        &syn.covariates,
        &PriorSet::default(),
        &SamplerConfig {
            chains: 2,
            iters: 3000,
            burnin: 1500,
            thin: 3,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    (syn, draws)
}
