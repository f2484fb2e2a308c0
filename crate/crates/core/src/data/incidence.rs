use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::{Gender, LevelSets, StratumKey};
use crate::error::{Error, Result};

/// Fitted incidence rates keyed like panel cells (year is the diagnosis year).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IncidenceSurface {
    rates: BTreeMap<StratumKey, f64>,
}

#[derive(Debug, Deserialize)]
struct IncidenceRow {
    age_group: String,
    gender: String,
    #[serde(default)]
    deprivation: Option<String>,
    #[serde(default)]
    region: Option<String>,
    year: i32,
    lambda_hat: f64,
}

impl IncidenceSurface {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: StratumKey, rate: f64) -> Result<()> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::SchemaViolation(format!("incidence rate {rate} at {key}")));
        }
        self.rates.insert(key, rate);
        Ok(())
    }

    pub fn get(&self, key: &StratumKey) -> Option<f64> {
        self.rates.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.rates.keys().map(|k| k.year).collect();
        y.sort_unstable();
        y.dedup();
        y
    }

    /// Reads `(age_group, gender, deprivation, region, year, lambda_hat)` rows.
    ///
    /// Labels resolve against `levels`; years are not range-checked because
    /// diagnosis years need not coincide with the mortality panel's years.
    pub fn from_reader<R: Read>(reader: R, levels: &LevelSets) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Self::new();
        for row in rdr.deserialize::<IncidenceRow>() {
            let row = row?;
            let age = levels
                .age_index(&row.age_group)
                .ok_or_else(|| Error::SchemaViolation(format!("unknown age group `{}`", row.age_group)))?;
            let gender: Gender = row.gender.parse()?;
            let deprivation = match row.deprivation.as_deref().filter(|s| !s.is_empty()) {
                Some(d) => {
                    let q: usize = d
                        .parse()
                        .map_err(|_| Error::SchemaViolation(format!("bad quintile `{d}`")))?;
                    if !(1..=5).contains(&q) {
                        return Err(Error::SchemaViolation(format!("quintile {q} outside 1..=5")));
                    }
                    Some(q - 1)
                }
                None => None,
            };
            let region = match row.region.as_deref().filter(|s| !s.is_empty()) {
                Some(r) => Some(
                    levels
                        .region_index(r)
                        .ok_or_else(|| Error::SchemaViolation(format!("unknown region `{r}`")))?,
                ),
                None => None,
            };
            out.insert(
                StratumKey::new(Some(age), gender, deprivation, region, row.year),
                row.lambda_hat,
            )?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>, levels: &LevelSets) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, levels)
    }
}
