use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cause, Gender, QUINTILES};
use crate::error::{Error, Result};

/// A five- or ten-year age band. `hi` is inclusive; `None` marks an open band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBand {
    pub label: String,
    pub lo: u32,
    #[serde(default)]
    pub hi: Option<u32>,
    /// Representative age; defaults to `floor((lo + hi) / 2)`, so 75-79 maps to 77.
    #[serde(default)]
    pub midpoint: Option<f64>,
}

impl AgeBand {
    pub fn new(lo: u32, hi: u32) -> Self {
        Self {
            label: format!("{lo}-{hi}"),
            lo,
            hi: Some(hi),
            midpoint: None,
        }
    }

    /// Parses labels such as `45-54`, `85+` or `75 to 79`.
    pub fn parse(label: &str) -> Result<Self> {
        let s = label.trim();
        let bad = || Error::SchemaViolation(format!("cannot parse age band `{label}`"));
        if let Some(lo) = s.strip_suffix('+') {
            let lo = lo.trim().parse().map_err(|_| bad())?;
            return Ok(Self {
                label: s.to_string(),
                lo,
                hi: None,
                midpoint: None,
            });
        }
        let (lo, hi) = s
            .split_once('-')
            .or_else(|| s.split_once(" to "))
            .or_else(|| s.split_once('–'))
            .ok_or_else(bad)?;
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        Ok(Self {
            label: s.to_string(),
            lo,
            hi: Some(hi),
            midpoint: None,
        })
    }

    pub fn midpoint(&self) -> f64 {
        self.midpoint.unwrap_or_else(|| match self.hi {
            Some(hi) => ((self.lo + hi) / 2) as f64,
            None => self.lo as f64 + 2.0,
        })
    }

    pub fn contains(&self, age: f64) -> bool {
        age >= self.lo as f64 && self.hi.is_none_or(|hi| age < hi as f64 + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeprivationCoding {
    #[default]
    None,
    Quintile,
    /// Decile-coded input, merged pairwise into quintiles at load.
    Decile,
}

/// Declares the level sets and label maps of a panel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub cause: Cause,
    pub genders: Vec<Gender>,
    pub first_year: i32,
    pub last_year: i32,
    #[serde(default)]
    pub deprivation: DeprivationCoding,
    /// Region labels in index order; empty means the panel has no region dimension.
    #[serde(default)]
    pub regions: Vec<String>,
    pub ages: Vec<AgeBand>,
}

impl PanelSchema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let schema: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.genders.is_empty() {
            return Err(Error::SchemaViolation("no genders declared".into()));
        }
        if self.last_year < self.first_year {
            return Err(Error::SchemaViolation("last_year precedes first_year".into()));
        }
        if self.ages.is_empty() {
            return Err(Error::SchemaViolation("no age groups declared".into()));
        }
        let mut labels: Vec<&str> = self.ages.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.ages.len() {
            return Err(Error::SchemaViolation("duplicate age labels".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> LevelSets {
        LevelSets {
            cause: self.cause,
            genders: self.genders.clone(),
            years: (self.first_year..=self.last_year).collect(),
            ages: Some(self.ages.clone()),
            regions: (!self.regions.is_empty()).then(|| self.regions.clone()),
            deprivation: self.deprivation != DeprivationCoding::None,
        }
    }
}

/// Level sets frozen at load time (or after aggregation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSets {
    pub cause: Cause,
    pub genders: Vec<Gender>,
    pub years: Vec<i32>,
    pub ages: Option<Vec<AgeBand>>,
    pub regions: Option<Vec<String>>,
    pub deprivation: bool,
}

impl LevelSets {
    pub fn n_ages(&self) -> usize {
        self.ages.as_ref().map_or(0, Vec::len)
    }

    pub fn n_regions(&self) -> usize {
        self.regions.as_ref().map_or(0, Vec::len)
    }

    pub fn n_quintiles(&self) -> usize {
        if self.deprivation {
            QUINTILES
        } else {
            0
        }
    }

    pub fn first_year(&self) -> i32 {
        self.years[0]
    }

    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("non-empty years")
    }

    pub fn age_index(&self, label: &str) -> Option<usize> {
        self.ages
            .as_ref()?
            .iter()
            .position(|a| a.label == label.trim())
    }

    pub fn region_index(&self, label: &str) -> Option<usize> {
        self.regions
            .as_ref()?
            .iter()
            .position(|r| r.eq_ignore_ascii_case(label.trim()))
    }

    pub fn age_label(&self, idx: Option<usize>) -> String {
        match (idx, &self.ages) {
            (Some(i), Some(a)) => a[i].label.clone(),
            _ => String::new(),
        }
    }

    pub fn region_label(&self, idx: Option<usize>) -> String {
        match (idx, &self.regions) {
            (Some(i), Some(r)) => r[i].clone(),
            _ => String::new(),
        }
    }

    pub fn age_midpoints(&self) -> Vec<f64> {
        self.ages
            .as_ref()
            .map(|a| a.iter().map(AgeBand::midpoint).collect())
            .unwrap_or_default()
    }

    /// `[None]` for an absent dimension, otherwise every level index.
    pub fn optional_range(n: usize) -> Vec<Option<usize>> {
        if n == 0 {
            vec![None]
        } else {
            (0..n).map(Some).collect()
        }
    }

    /// Every key of the complete grid, in canonical order.
    pub fn grid(&self) -> Vec<super::StratumKey> {
        let mut keys = Vec::new();
        for &gender in &self.genders {
            for &year in &self.years {
                for region in Self::optional_range(self.n_regions()) {
                    for dep in Self::optional_range(self.n_quintiles()) {
                        for age in Self::optional_range(self.n_ages()) {
                            keys.push(super::StratumKey::new(age, gender, dep, region, year));
                        }
                    }
                }
            }
        }
        keys
    }

    /// Checks that `key` lies inside the declared level sets.
    pub fn contains(&self, key: &super::StratumKey) -> bool {
        let idx_ok = |v: Option<usize>, n: usize| match v {
            None => n == 0,
            Some(i) => i < n,
        };
        self.genders.contains(&key.gender)
            && self.years.contains(&key.year)
            && idx_ok(key.age, self.n_ages())
            && idx_ok(key.region, self.n_regions())
            && idx_ok(key.deprivation, self.n_quintiles())
    }
}
