//! Average age-at-diagnosis (AAD) covariate.
//!
//! Yearly AAD is the incidence-weighted mean band midpoint under standard
//! population weights; the model covariate is its exposure-weighted average
//! over diagnosis years.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Gender, IncidenceSurface, LevelSets, MortalityPanel, StandardPopulation, StratumKey};
use crate::error::{Error, Result};

/// Zero-mean, unit-variance transform with its stored moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardiser {
    pub mean: f64,
    pub sd: f64,
}

impl Standardiser {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }

    /// A shift of `delta` natural units expressed in standardised units.
    pub fn shift(&self, delta: f64) -> f64 {
        delta / self.sd
    }
}

/// Standardises over the frame using the population (divide-by-n) standard deviation.
pub fn standardise(values: &[f64], what: &str) -> Result<(Vec<f64>, Standardiser)> {
    if values.is_empty() {
        return Err(Error::DegenerateCovariate(format!("{what}: empty frame")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::DegenerateCovariate(what.to_string()));
    }
    let st = Standardiser { mean, sd };
    Ok((values.iter().map(|&v| st.apply(v)).collect(), st))
}

/// `sum_a m_a λ_a w_a / sum_a λ_a w_a` for one (gender, deprivation, region, year).
///
/// `midpoints` and `std` are aligned with the panel's age groups.
pub fn aad_yearly(
    incidence: &IncidenceSurface,
    std: &StandardPopulation,
    midpoints: &[f64],
    key: StratumKey,
) -> Result<f64> {
    if midpoints.len() != std.weights.len() {
        return Err(Error::StdMismatch(
            "standard population not aligned with age groups".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, (&mid, &w)) in midpoints.iter().zip(&std.weights).enumerate() {
        let k = StratumKey { age: Some(a), ..key };
        let lambda = incidence
            .get(&k)
            .ok_or_else(|| Error::UndefinedAad(format!("no incidence rate for {k}")))?;
        num += mid * lambda * w;
        den += lambda * w;
    }
    if !(den > 0.0) {
        return Err(Error::UndefinedAad(format!("all-zero incidence at {key}")));
    }
    Ok(num / den)
}

/// Exposure-weighted mean of yearly values.
pub fn aad_timeavg(yearly: &[f64], exposures: &[f64]) -> Result<f64> {
    if yearly.is_empty() || yearly.len() != exposures.len() {
        return Err(Error::UndefinedAad("empty or misaligned year set".into()));
    }
    if let Some(e) = exposures.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::UndefinedAad(format!("non-positive exposure {e}")));
    }
    let den: f64 = exposures.iter().sum();
    Ok(yearly.iter().zip(exposures).map(|(a, e)| a * e).sum::<f64>() / den)
}

/// Group key of the time-averaged covariate.
pub type AadGroup = (Gender, Option<usize>, Option<usize>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AadSurface {
    /// Yearly values keyed by (gender, deprivation, region, diagnosis year).
    pub yearly: BTreeMap<(Gender, Option<usize>, Option<usize>, i32), f64>,
    /// Time-averaged values keyed by (gender, deprivation, region).
    pub averaged: BTreeMap<AadGroup, f64>,
}

impl AadSurface {
    /// Computes yearly and averaged AAD for every (gender, deprivation, region)
    /// group of `panel`, over the diagnosis years present in both the incidence
    /// surface and the panel.
    ///
    /// With `region_only`, the averaged value is additionally pooled over
    /// quintiles (exposure-weighted) and stored under `deprivation = None`.
    pub fn build(
        incidence: &IncidenceSurface,
        std: &StandardPopulation,
        panel: &MortalityPanel,
        region_only: bool,
    ) -> Result<Self> {
        let levels = panel.levels();
        let midpoints = levels.age_midpoints();
        let inc_years = incidence.years();
        let years: Vec<i32> = levels
            .years
            .iter()
            .copied()
            .filter(|y| inc_years.contains(y))
            .collect();
        if years.is_empty() {
            return Err(Error::UndefinedAad(
                "no diagnosis years shared by incidence and panel".into(),
            ));
        }
        // E_{g,d,r,t}: summed over ages
        let mut exposure: BTreeMap<(Gender, Option<usize>, Option<usize>, i32), f64> = BTreeMap::new();
        for c in panel.cells() {
            *exposure
                .entry((c.key.gender, c.key.deprivation, c.key.region, c.key.year))
                .or_default() += c.exposure;
        }
        let mut surface = Self::default();
        let groups: Vec<AadGroup> = {
            let mut g: Vec<AadGroup> = exposure.keys().map(|k| (k.0, k.1, k.2)).collect();
            g.dedup();
            g
        };
        let mut group_exposure: BTreeMap<AadGroup, f64> = BTreeMap::new();
        for &(g, d, r) in &groups {
            let mut vals = Vec::with_capacity(years.len());
            let mut wts = Vec::with_capacity(years.len());
            for &t in &years {
                let key = StratumKey::new(None, g, d, r, t);
                let v = aad_yearly(incidence, std, &midpoints, key)?;
                surface.yearly.insert((g, d, r, t), v);
                vals.push(v);
                wts.push(exposure[&(g, d, r, t)]);
            }
            surface.averaged.insert((g, d, r), aad_timeavg(&vals, &wts)?);
            group_exposure.insert((g, d, r), wts.iter().sum());
        }
        if region_only && levels.deprivation {
            let mut pooled: BTreeMap<AadGroup, (f64, f64)> = BTreeMap::new();
            for (&(g, d, r), &v) in &surface.averaged {
                if d.is_some() {
                    let w = group_exposure[&(g, d, r)];
                    let slot = pooled.entry((g, None, r)).or_default();
                    slot.0 += v * w;
                    slot.1 += w;
                }
            }
            for (k, (num, den)) in pooled {
                surface.averaged.insert(k, num / den);
            }
        }
        Ok(surface)
    }

    pub fn get(&self, gender: Gender, deprivation: Option<usize>, region: Option<usize>) -> Option<f64> {
        self.averaged.get(&(gender, deprivation, region)).copied()
    }

    /// Rows `(gender, deprivation, region, year, aad)`; time-averaged values
    /// carry the year `all`.
    pub fn write_csv<W: Write>(&self, levels: &LevelSets, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gender", "deprivation", "region", "year", "aad"])?;
        let dep = |d: Option<usize>| d.map_or_else(String::new, |d| (d + 1).to_string());
        for (&(g, d, r, t), v) in &self.yearly {
            w.write_record([g.to_string(), dep(d), levels.region_label(r), t.to_string(), format!("{v:?}")])?;
        }
        for (&(g, d, r), v) in &self.averaged {
            w.write_record([g.to_string(), dep(d), levels.region_label(r), "all".into(), format!("{v:?}")])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save(&self, levels: &LevelSets, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(levels, std::io::BufWriter::new(file))
    }

    pub fn from_reader<R: Read>(reader: R, levels: &LevelSets) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            gender: String,
            deprivation: Option<String>,
            region: Option<String>,
            year: String,
            aad: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Self::default();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let g: Gender = row.gender.parse()?;
            let d = match row.deprivation.as_deref().filter(|s| !s.is_empty()) {
                Some(q) => match q.parse::<usize>() {
                    Ok(q @ 1..=5) => Some(q - 1),
                    _ => return Err(Error::SchemaViolation(format!("bad quintile `{q}`"))),
                },
                None => None,
            };
            let r = match row.region.as_deref().filter(|s| !s.is_empty()) {
                Some(r) => Some(
                    levels
                        .region_index(r)
                        .ok_or_else(|| Error::SchemaViolation(format!("unknown region `{r}`")))?,
                ),
                None => None,
            };
            if row.year.eq_ignore_ascii_case("all") {
                out.averaged.insert((g, d, r), row.aad);
            } else {
                let t = row
                    .year
                    .parse()
                    .map_err(|_| Error::SchemaViolation(format!("bad year `{}`", row.year)))?;
                out.yearly.insert((g, d, r, t), row.aad);
            }
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>, levels: &LevelSets) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, levels)
    }
}
