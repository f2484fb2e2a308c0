//! Non-smoker prevalence: quadratic-trend backcast and the lagged lookup used
//! as a smoking proxy in the mortality models.
//!
//! Per gender the prevalence in ten-year age band `a` and year `t` is fitted as
//!
//! ```text
//! NS(a, t) = b0 + b1[a] + b2 s + b3 s^2 + b4[a] s,     s = (t - 2006) / 10
//! ```
//!
//! by ordinary least squares, with `b1` and `b4` under sum-to-zero coding.
//! Years without observations are filled from the fit and clamped to `[0, 1]`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{AgeBand, Gender};
use crate::error::{Error, Result};
use crate::linalg;

/// Years between smoking exposure and the death year it informs.
pub const LAG_YEARS: i32 = 20;

pub const YEAR_CENTRE: f64 = 2006.0;
pub const YEAR_SCALE: f64 = 10.0;

/// Prevalence by (smoking age band, gender, year).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmokingSeries {
    pub bands: Vec<AgeBand>,
    values: BTreeMap<(usize, Gender, i32), f64>,
}

#[derive(Debug, Deserialize)]
struct SmokingRow {
    age_band: String,
    gender: String,
    year: i32,
    ns_rate: f64,
}

impl SmokingSeries {
    pub fn new(bands: Vec<AgeBand>) -> Self {
        Self {
            bands,
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, band: usize, gender: Gender, year: i32, rate: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::SchemaViolation(format!(
                "non-smoker rate {rate} outside [0, 1] (band {band}, {gender}, {year})"
            )));
        }
        if band >= self.bands.len() {
            return Err(Error::SchemaViolation(format!("unknown smoking band {band}")));
        }
        self.values.insert((band, gender, year), rate);
        Ok(())
    }

    pub fn get(&self, band: usize, gender: Gender, year: i32) -> Option<f64> {
        self.values.get(&(band, gender, year)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, Gender, i32), f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    pub fn genders(&self) -> Vec<Gender> {
        let mut g: Vec<Gender> = self.values.keys().map(|k| k.1).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn year_range(&self, gender: Gender) -> Option<(i32, i32)> {
        let mut years = self.values.keys().filter(|k| k.1 == gender).map(|k| k.2);
        let first = years.next()?;
        let (lo, hi) = years.fold((first, first), |(lo, hi), y| (lo.min(y), hi.max(y)));
        Some((lo, hi))
    }

    /// Smoking band whose range contains the mortality band's midpoint.
    pub fn band_for(&self, mortality_band: &AgeBand) -> Option<usize> {
        let mid = mortality_band.midpoint();
        self.bands.iter().position(|b| b.contains(mid))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows: Vec<SmokingRow> = rdr.deserialize().collect::<Result<_, _>>()?;
        let mut bands: Vec<AgeBand> = Vec::new();
        for r in &rows {
            if !bands.iter().any(|b| b.label == r.age_band) {
                bands.push(AgeBand::parse(&r.age_band)?);
            }
        }
        bands.sort_by_key(|b| b.lo);
        let mut series = Self::new(bands);
        for r in rows {
            let band = series
                .bands
                .iter()
                .position(|b| b.label == r.age_band)
                .expect("band registered above");
            series.insert(band, r.gender.parse()?, r.year, r.ns_rate)?;
        }
        Ok(series)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["age_band", "gender", "year", "ns_rate"])?;
        for (&(band, gender, year), &v) in &self.values {
            w.write_record([
                self.bands[band].label.clone(),
                gender.to_string(),
                year.to_string(),
                format!("{v:?}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Coefficients of the backcast in centred/scaled year units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackcastModel {
    pub gender: Gender,
    pub n_bands: usize,
    pub intercept: f64,
    /// Age intercepts, one per band, summing to zero.
    pub age_effects: Vec<f64>,
    pub year_linear: f64,
    pub year_quadratic: f64,
    /// Age-specific year slopes, one per band, summing to zero.
    pub age_slopes: Vec<f64>,
    pub rss: f64,
    pub n_obs: usize,
}

/// The same polynomial expressed in calendar years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalScaleCoefficients {
    pub intercept: f64,
    pub age_effects: Vec<f64>,
    pub year_linear: f64,
    pub year_quadratic: f64,
    pub age_slopes: Vec<f64>,
}

fn scaled_year(year: i32) -> f64 {
    (year as f64 - YEAR_CENTRE) / YEAR_SCALE
}

fn stz_row(level: usize, n_levels: usize) -> Vec<f64> {
    let mut row = vec![0.0; n_levels.saturating_sub(1)];
    if level + 1 == n_levels {
        row.iter_mut().for_each(|v| *v = -1.0);
    } else {
        row[level] = 1.0;
    }
    row
}

fn expand_stz(free: &[f64]) -> Vec<f64> {
    let mut full = free.to_vec();
    full.push(-free.iter().sum::<f64>());
    full
}

impl BackcastModel {
    pub fn predict(&self, band: usize, year: i32) -> f64 {
        let s = scaled_year(year);
        self.intercept
            + self.age_effects[band]
            + self.year_linear * s
            + self.year_quadratic * s * s
            + self.age_slopes[band] * s
    }

    pub fn original_scale(&self) -> OriginalScaleCoefficients {
        let (c, k) = (YEAR_CENTRE, YEAR_SCALE);
        let mut consts = Vec::with_capacity(self.n_bands);
        let mut slopes = Vec::with_capacity(self.n_bands);
        for a in 0..self.n_bands {
            let lin = self.year_linear + self.age_slopes[a];
            consts.push(
                self.intercept + self.age_effects[a] - lin * c / k
                    + self.year_quadratic * c * c / (k * k),
            );
            slopes.push(lin / k - 2.0 * self.year_quadratic * c / (k * k));
        }
        let n = self.n_bands as f64;
        let intercept = consts.iter().sum::<f64>() / n;
        let year_linear = slopes.iter().sum::<f64>() / n;
        OriginalScaleCoefficients {
            intercept,
            age_effects: consts.iter().map(|v| v - intercept).collect(),
            year_linear,
            year_quadratic: self.year_quadratic / (k * k),
            age_slopes: slopes.iter().map(|v| v - year_linear).collect(),
        }
    }
}

/// Least-squares fit of the quadratic-trend prevalence model for one gender.
pub fn fit_backcast(series: &SmokingSeries, gender: Gender) -> Result<BackcastModel> {
    let obs: Vec<((usize, Gender, i32), f64)> =
        series.iter().filter(|((_, g, _), _)| *g == gender).collect();
    let n_bands = series.bands.len();
    if obs.is_empty() || n_bands == 0 {
        return Err(Error::SingularFit(format!("no observations for {gender}")));
    }
    for band in 0..n_bands {
        let mut years: Vec<i32> = obs.iter().filter(|((b, _, _), _)| *b == band).map(|((_, _, y), _)| *y).collect();
        years.dedup();
        if years.len() < 3 {
            return Err(Error::SingularFit(format!(
                "band `{}` has {} distinct years; the quadratic trend needs at least 3",
                series.bands[band].label,
                years.len()
            )));
        }
    }
    let p = 1 + (n_bands - 1) + 2 + (n_bands - 1);
    let mut x = DMatrix::zeros(obs.len(), p);
    let mut y = DVector::zeros(obs.len());
    for (i, ((band, _, year), v)) in obs.iter().enumerate() {
        let s = scaled_year(*year);
        let stz = stz_row(*band, n_bands);
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        row.extend_from_slice(&stz);
        row.push(s);
        row.push(s * s);
        row.extend(stz.iter().map(|v| v * s));
        for (j, val) in row.into_iter().enumerate() {
            x[(i, j)] = val;
        }
        y[i] = *v;
    }
    let beta = linalg::ols(&x, &y)
        .ok_or_else(|| Error::SingularFit(format!("rank-deficient design for {gender}")))?;
    let resid = &y - &x * &beta;
    let k = n_bands - 1;
    Ok(BackcastModel {
        gender,
        n_bands,
        intercept: beta[0],
        age_effects: expand_stz(beta.as_slice()[1..1 + k].as_ref()),
        year_linear: beta[1 + k],
        year_quadratic: beta[2 + k],
        age_slopes: expand_stz(beta.as_slice()[3 + k..3 + 2 * k].as_ref()),
        rss: resid.norm_squared(),
        n_obs: obs.len(),
    })
}

/// Fills `from..=to` for the model's gender: observed values are kept, the
/// rest come from the fit, clamped to `[0, 1]`.
pub fn reconstruct(model: &BackcastModel, observed: &SmokingSeries, from: i32, to: i32) -> SmokingSeries {
    let mut out = SmokingSeries::new(observed.bands.clone());
    for band in 0..model.n_bands {
        for year in from..=to {
            let value = match observed.get(band, model.gender, year) {
                Some(v) => v,
                None => {
                    let raw = model.predict(band, year);
                    let clamped = raw.clamp(0.0, 1.0);
                    if clamped != raw {
                        log::warn!(
                            "backcast non-smoker rate {raw:.4} for band {} {} {year} clamped to {clamped}",
                            observed.bands[band].label,
                            model.gender
                        );
                    }
                    clamped
                }
            };
            out.values.insert((band, model.gender, year), value);
        }
    }
    out
}

/// Fits and reconstructs every gender present in `series`.
pub fn backcast_all(series: &SmokingSeries, from: i32, to: i32) -> Result<SmokingSeries> {
    let mut out = SmokingSeries::new(series.bands.clone());
    for gender in series.genders() {
        let model = fit_backcast(series, gender)?;
        out.values.extend(reconstruct(&model, series, from, to).values);
    }
    Ok(out)
}

/// Non-smoker prevalence twenty years before `death_year` for the smoking
/// band containing the mortality band's midpoint.
pub fn lagged_ns(
    series: &SmokingSeries,
    mortality_band: &AgeBand,
    gender: Gender,
    death_year: i32,
) -> Result<f64> {
    let band = series.band_for(mortality_band).ok_or_else(|| {
        Error::SchemaViolation(format!(
            "no smoking band contains the midpoint of `{}`",
            mortality_band.label
        ))
    })?;
    let year = death_year - LAG_YEARS;
    series
        .get(band, gender, year)
        .ok_or(Error::LagUnavailable { year })
}
