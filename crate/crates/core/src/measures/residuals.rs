use std::io::Write;

use crate::data::{LevelSets, MortalityPanel, StratumKey};
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::spec::CovariateSet;

/// Display categories with edges at ±1, ±2, ±4; beyond ±4 is one bin each side.
pub const RESIDUAL_BINS: [&str; 7] = ["<-4", "[-4,-2)", "[-2,-1)", "[-1,1)", "[1,2)", "[2,4)", ">=4"];

pub fn residual_bin(r: f64) -> &'static str {
    let idx = match r {
        r if r < -4.0 => 0,
        r if r < -2.0 => 1,
        r if r < -1.0 => 2,
        r if r < 1.0 => 3,
        r if r < 2.0 => 4,
        r if r < 4.0 => 5,
        _ => 6,
    };
    RESIDUAL_BINS[idx]
}

/// `(D − Ê) / sqrt(Ê (1 + Ê (exp(σ²) − 1)))`.
pub fn pearson_residual(deaths: f64, expected: f64, sigma2: f64) -> f64 {
    let var = expected * (1.0 + expected * sigma2.exp_m1());
    (deaths - expected) / var.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub key: StratumKey,
    pub deaths: u64,
    pub expected: f64,
    pub residual: f64,
}

/// Residuals at the posterior-mean fit, `Ê = E exp(μ̂ + σ̂²/2)`.
pub fn pearson_residuals(
    draws: &PosteriorDraws,
    panel: &MortalityPanel,
    covariates: &CovariateSet,
) -> Result<Vec<Residual>> {
    let pm = draws.posterior_mean();
    let beta = draws.beta(&pm);
    let sigma2 = draws.sigma2(&pm);
    draws
        .keys
        .iter()
        .map(|k| {
            let cell = panel
                .get(k)
                .ok_or_else(|| Error::AggregationError(format!("fitted cell {k} missing from panel")))?;
            let row = draws.design_row(covariates, k)?;
            let mu: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
            let expected = cell.exposure * (mu + 0.5 * sigma2).exp();
            Ok(Residual {
                key: *k,
                deaths: cell.deaths,
                expected,
                residual: pearson_residual(cell.deaths as f64, expected, sigma2),
            })
        })
        .collect()
}

/// Long-format heat-map table: one row per cell, facets by region and quintile.
pub fn write_heatmap_csv<W: Write>(residuals: &[Residual], levels: &LevelSets, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "gender",
        "region",
        "deprivation",
        "age_group",
        "year",
        "deaths",
        "expected",
        "residual",
        "residual_display",
        "category",
    ])?;
    for r in residuals {
        let k = &r.key;
        w.write_record([
            k.gender.to_string(),
            levels.region_label(k.region),
            k.deprivation.map_or_else(String::new, |d| (d + 1).to_string()),
            levels.age_label(k.age),
            k.year.to_string(),
            r.deaths.to_string(),
            format!("{:?}", r.expected),
            format!("{:?}", r.residual),
            format!("{:.2}", r.residual),
            residual_bin(r.residual).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
