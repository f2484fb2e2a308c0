use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::data::{Gender, LevelSets, MortalityPanel, StratumKey};
use crate::error::{Error, Result};

/// Projected exposures keyed by stratum-year; deprivation is usually absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationProjection {
    pub exposures: BTreeMap<StratumKey, f64>,
}

#[derive(Debug, Deserialize)]
struct PopRow {
    #[serde(default)]
    age_group: Option<String>,
    gender: String,
    #[serde(default)]
    deprivation: Option<String>,
    #[serde(default)]
    region: Option<String>,
    year: i32,
    exposure: f64,
}

fn label_index(label: Option<&str>, lookup: impl Fn(&str) -> Option<usize>, what: &str) -> Result<Option<usize>> {
    match label.filter(|s| !s.is_empty()) {
        Some(l) => lookup(l)
            .map(Some)
            .ok_or_else(|| Error::SchemaViolation(format!("unknown {what} `{l}`"))),
        None => Ok(None),
    }
}

impl PopulationProjection {
    pub fn insert(&mut self, key: StratumKey, exposure: f64) -> Result<()> {
        if !(exposure > 0.0) || !exposure.is_finite() {
            return Err(Error::BadExposure { key, exposure });
        }
        self.exposures.insert(key, exposure);
        Ok(())
    }

    pub fn get(&self, key: &StratumKey) -> Option<f64> {
        self.exposures.get(key).copied()
    }

    /// Reads `(age_group, gender, [deprivation,] region, year, exposure)` rows.
    pub fn from_reader<R: Read>(reader: R, levels: &LevelSets) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Self::default();
        for row in rdr.deserialize::<PopRow>() {
            let row = row?;
            let gender: Gender = row.gender.parse()?;
            let age = label_index(row.age_group.as_deref(), |l| levels.age_index(l), "age group")?;
            let region = label_index(row.region.as_deref(), |l| levels.region_index(l), "region")?;
            let deprivation = label_index(
                row.deprivation.as_deref(),
                |l| l.parse::<usize>().ok().filter(|q| (1..=5).contains(q)).map(|q| q - 1),
                "quintile",
            )?;
            let key = StratumKey::new(age, gender, deprivation, region, row.year);
            if out.exposures.contains_key(&key) {
                return Err(Error::DuplicateCell(key));
            }
            out.insert(key, row.exposure)?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>, levels: &LevelSets) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, levels)
    }

    pub fn write_csv<W: Write>(&self, levels: &LevelSets, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["age_group", "gender", "deprivation", "region", "year", "exposure"])?;
        for (k, e) in &self.exposures {
            w.write_record([
                levels.age_label(k.age),
                k.gender.to_string(),
                k.deprivation.map_or_else(String::new, |d| (d + 1).to_string()),
                levels.region_label(k.region),
                k.year.to_string(),
                format!("{e:?}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Quintile shares within each (age, gender, region), keyed with `year = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeprivationShares {
    shares: BTreeMap<StratumKey, Vec<f64>>,
}

const SHARE_TOL: f64 = 1e-9;

fn group_key(k: &StratumKey) -> StratumKey {
    StratumKey {
        deprivation: None,
        year: 0,
        ..*k
    }
}

impl DeprivationShares {
    /// Validates that every share vector is non-negative and sums to one.
    pub fn new(shares: BTreeMap<StratumKey, Vec<f64>>) -> Result<Self> {
        for (k, s) in &shares {
            let total: f64 = s.iter().sum();
            if s.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > SHARE_TOL {
                return Err(Error::ShareViolation(format!("{k} (sum {total})")));
            }
        }
        let shares = shares.into_iter().map(|(k, s)| (group_key(&k), s)).collect();
        Ok(Self { shares })
    }

    /// Exposure shares of the panel's quintiles in `year`.
    pub fn from_panel(panel: &MortalityPanel, year: i32) -> Result<Self> {
        let levels = panel.levels();
        if !levels.deprivation {
            return Err(Error::ShareViolation("panel has no deprivation dimension".into()));
        }
        let mut acc: BTreeMap<StratumKey, Vec<f64>> = BTreeMap::new();
        for c in panel.cells().iter().filter(|c| c.key.year == year) {
            let slot = acc.entry(group_key(&c.key)).or_insert_with(|| vec![0.0; 5]);
            slot[c.key.deprivation.expect("deprivation panel")] += c.exposure;
        }
        if acc.is_empty() {
            return Err(Error::ShareViolation(format!("no panel cells in {year}")));
        }
        for s in acc.values_mut() {
            let total: f64 = s.iter().sum();
            s.iter_mut().for_each(|v| *v /= total);
        }
        Self::new(acc)
    }

    pub fn get(&self, key: &StratumKey) -> Option<&[f64]> {
        self.shares.get(&group_key(key)).map(Vec::as_slice)
    }
}

/// `E*_{a,g,d,r,t} = share_{a,g,d,r} × E*_{a,g,r,t}`.
pub fn split_population(pop: &PopulationProjection, shares: &DeprivationShares) -> Result<PopulationProjection> {
    let mut out = PopulationProjection::default();
    for (k, &e) in &pop.exposures {
        if k.deprivation.is_some() {
            return Err(Error::ShareViolation(format!("{k} is already split by quintile")));
        }
        let s = shares
            .get(k)
            .ok_or_else(|| Error::ShareViolation(format!("no base-year shares for {k}")))?;
        for (d, &w) in s.iter().enumerate() {
            out.exposures.insert(StratumKey { deprivation: Some(d), ..*k }, w * e);
        }
    }
    Ok(out)
}
