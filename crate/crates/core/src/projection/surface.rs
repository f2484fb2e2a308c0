use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kappa::{draw_rng, walk_draw, KappaProjection};
use super::population::PopulationProjection;
use crate::data::{LevelSets, StratumKey};
use crate::error::{Error, Result};
use crate::mcmc::{stream_rng, summarise, Interval, PosteriorDraws};
use crate::spec::{CovariateSet, Term};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub seed: u64,
    /// Last projected year.
    pub target_year: i32,
    /// Also emit the anchor year itself, where `κ* = κ_T`.
    pub include_anchor: bool,
}

/// Posterior-predictive rates over the horizon, stored draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSurface {
    pub levels: LevelSets,
    pub keys: Vec<StratumKey>,
    /// Projected exposure per cell when a population was supplied.
    pub exposure: Vec<Option<f64>>,
    pub n_draws: usize,
    /// `theta[d * n_cells + i]`.
    pub theta: Vec<f64>,
    pub kappa: KappaProjection,
    pub config: ProjectionConfig,
}

/// One summarised cell of a surface, in CSV form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub age_group: String,
    pub gender: String,
    pub deprivation: String,
    pub region: String,
    pub year: i32,
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub exposure: Option<f64>,
    pub expected_deaths: Option<f64>,
    /// Display companion: mean rate per 100,000, two decimals.
    pub rate_per_100k: String,
}

pub fn write_surface_rows<W: Write>(rows: &[SurfaceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_surface_rows<R: Read>(reader: R) -> Result<Vec<SurfaceRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_surface_rows(path: impl AsRef<Path>) -> Result<Vec<SurfaceRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_surface_rows(file)
}

impl ProjectionSurface {
    pub fn n_cells(&self) -> usize {
        self.keys.len()
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.keys.iter().map(|k| k.year).collect();
        y.dedup();
        y
    }

    pub fn position(&self, key: &StratumKey) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    /// `θ*` of every cell for draw `d`.
    pub fn draw(&self, d: usize) -> &[f64] {
        let n = self.n_cells();
        &self.theta[d * n..(d + 1) * n]
    }

    pub fn theta_draws(&self, cell: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.theta[d * self.n_cells() + cell]).collect()
    }

    pub fn summary(&self, cell: usize) -> Interval {
        summarise(&self.theta_draws(cell))
    }

    /// `θ* E*` per draw; `None` without exposure.
    pub fn expected_deaths_draws(&self, cell: usize) -> Option<Vec<f64>> {
        let e = self.exposure[cell]?;
        Some(self.theta_draws(cell).into_iter().map(|t| t * e).collect())
    }

    /// Posterior-predictive death counts `D* ~ Poisson(θ* E*)`.
    pub fn predictive_counts(&self, seed: u64) -> Vec<Option<Interval>> {
        (0..self.n_cells())
            .into_par_iter()
            .map(|i| {
                let e = self.exposure[i]?;
                let mut rng = stream_rng(seed, i as u64);
                let counts: Vec<f64> = self
                    .theta_draws(i)
                    .into_iter()
                    .map(|t| {
                        let lambda = t * e;
                        if lambda > 0.0 {
                            Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Some(summarise(&counts))
            })
            .collect()
    }

    pub fn rows(&self) -> Vec<SurfaceRow> {
        (0..self.n_cells())
            .map(|i| {
                let k = &self.keys[i];
                let s = self.summary(i);
                SurfaceRow {
                    age_group: self.levels.age_label(k.age),
                    gender: k.gender.to_string(),
                    deprivation: k.deprivation.map_or_else(String::new, |d| (d + 1).to_string()),
                    region: self.levels.region_label(k.region),
                    year: k.year,
                    mean: s.mean,
                    lo95: s.lo,
                    hi95: s.hi,
                    exposure: self.exposure[i],
                    expected_deaths: self.exposure[i].map(|e| e * s.mean),
                    rate_per_100k: format!("{:.2}", s.mean * 1e5),
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_surface_rows(&self.rows(), out)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Projects the fitted model to `cfg.target_year` with the baseline covariates.
pub fn project_rates(
    draws: &PosteriorDraws,
    covariates: &CovariateSet,
    population: Option<&PopulationProjection>,
    cfg: &ProjectionConfig,
) -> Result<ProjectionSurface> {
    project_with_shift(draws, covariates, population, cfg, |_| 0.0)
}

/// As [`project_rates`], adding `aad_shift(year)` natural years to AAD.
///
/// Draw `d` always uses RNG stream `d` of `cfg.seed`, walk first, then one
/// deviate per cell in key order, so surfaces that share a seed share their
/// innovations.
pub fn project_with_shift<F>(
    draws: &PosteriorDraws,
    covariates: &CovariateSet,
    population: Option<&PopulationProjection>,
    cfg: &ProjectionConfig,
    aad_shift: F,
) -> Result<ProjectionSurface>
where
    F: Fn(i32) -> f64 + Sync,
{
    let layout = &draws.layout;
    let anchor = layout.levels.last_year();
    let steps = cfg.target_year as i64 - anchor as i64;
    if steps < 0 {
        return Err(Error::BadHorizon(steps));
    }
    let first = if cfg.include_anchor || steps == 0 { anchor } else { anchor + 1 };
    let mut horizon = layout.levels.clone();
    horizon.years = (first..=cfg.target_year).collect();
    let keys: Vec<StratumKey> = horizon
        .grid()
        .into_iter()
        .filter(|k| k.gender == layout.spec.gender)
        .collect();
    let needed = layout.covariates();
    let n_beta = draws.n_beta;
    let blocks = draws.rw_blocks();
    // Per cell: static row and the multiplier of each period block.
    let mut statics = Vec::with_capacity(keys.len());
    let mut multipliers = Vec::with_capacity(keys.len());
    for k in &keys {
        let cov = covariates.row(k, &needed, aad_shift(k.year))?;
        let mut row = vec![0.0; n_beta];
        layout.fill_static_row(k, &cov, &mut row)?;
        statics.push(row);
        multipliers.push(
            blocks
                .iter()
                .map(|b| match b.term {
                    Term::PeriodSlope(c) => cov.get(c),
                    _ => 1.0,
                })
                .collect::<Vec<f64>>(),
        );
    }
    let exposure: Vec<Option<f64>> = keys.iter().map(|k| population.and_then(|p| p.get(k))).collect();
    let all: Vec<&[f64]> = draws.iter().collect();
    let per_draw: Vec<(Vec<Vec<f64>>, Vec<f64>)> = all
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = draw_rng(cfg.seed, i);
            let paths = walk_draw(draws, d, steps as usize, &mut rng);
            let beta = draws.beta(d);
            let sd = draws.sigma2(d).sqrt();
            let theta = keys
                .iter()
                .enumerate()
                .map(|(c, k)| {
                    let h = (k.year - anchor) as usize;
                    let mut mu: f64 = statics[c].iter().zip(beta).map(|(x, b)| x * b).sum();
                    for (b, m) in multipliers[c].iter().enumerate() {
                        mu += m * paths[b][h];
                    }
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (mu + sd * e).exp()
                })
                .collect();
            (paths, theta)
        })
        .collect();
    let n_draws = per_draw.len();
    let mut theta = Vec::with_capacity(n_draws * keys.len());
    let mut paths = Vec::with_capacity(n_draws);
    for (p, t) in per_draw {
        paths.push(p);
        theta.extend(t);
    }
    Ok(ProjectionSurface {
        levels: horizon,
        keys,
        exposure,
        n_draws,
        theta,
        kappa: KappaProjection {
            anchor_year: anchor,
            steps: steps as usize,
            paths,
        },
        config: *cfg,
    })
}
