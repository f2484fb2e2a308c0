use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Covariate;
use crate::aad::{standardise, AadSurface, Standardiser};
use crate::data::{Gender, MortalityPanel, StratumKey};
use crate::error::{Error, Result};
use crate::smoking::{lagged_ns, SmokingSeries};

/// Natural-unit covariate values keyed by the cell fields they vary with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CovariateKey {
    pub gender: Gender,
    pub age: Option<usize>,
    pub deprivation: Option<usize>,
    pub region: Option<usize>,
    pub year: Option<i32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    #[serde(flatten)]
    key: CovariateKey,
    value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableRepr {
    covariate: String,
    pooled_over_deprivation: bool,
    standardiser: Standardiser,
    entries: Vec<Entry>,
}

/// One covariate in natural units plus the moments used to standardise it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct CovariateTable {
    pub covariate: Covariate,
    /// AAD averaged over quintiles: the deprivation level is ignored on lookup.
    pub pooled_over_deprivation: bool,
    pub standardiser: Standardiser,
    values: BTreeMap<CovariateKey, f64>,
}

impl TryFrom<TableRepr> for CovariateTable {
    type Error = Error;

    fn try_from(r: TableRepr) -> Result<Self> {
        Ok(Self {
            covariate: r.covariate.parse()?,
            pooled_over_deprivation: r.pooled_over_deprivation,
            standardiser: r.standardiser,
            values: r.entries.into_iter().map(|e| (e.key, e.value)).collect(),
        })
    }
}

impl From<CovariateTable> for TableRepr {
    fn from(t: CovariateTable) -> Self {
        Self {
            covariate: t.covariate.as_str().to_string(),
            pooled_over_deprivation: t.pooled_over_deprivation,
            standardiser: t.standardiser,
            entries: t
                .values
                .into_iter()
                .map(|(key, value)| Entry { key, value })
                .collect(),
        }
    }
}

impl CovariateTable {
    fn project(&self, key: &StratumKey) -> CovariateKey {
        match self.covariate {
            Covariate::Aad => CovariateKey {
                gender: key.gender,
                age: None,
                deprivation: if self.pooled_over_deprivation {
                    None
                } else {
                    key.deprivation
                },
                region: key.region,
                year: None,
            },
            Covariate::Ns => CovariateKey {
                gender: key.gender,
                age: key.age,
                deprivation: None,
                region: None,
                year: Some(key.year),
            },
        }
    }

    /// Value in natural units.
    pub fn raw(&self, key: &StratumKey) -> Result<f64> {
        self.values.get(&self.project(key)).copied().ok_or_else(|| {
            Error::CovariateGap(format!("{} has no value for {key}", self.covariate.as_str()))
        })
    }

    /// Standardised value.
    pub fn value(&self, key: &StratumKey) -> Result<f64> {
        Ok(self.standardiser.apply(self.raw(key)?))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CovariateKey, f64)> + '_ {
        self.values.iter().map(|(k, v)| (k, *v))
    }

    /// Builds a table from natural-unit values, standardising over the cells of `panel`.
    pub fn from_values(
        covariate: Covariate,
        pooled: bool,
        values: BTreeMap<CovariateKey, f64>,
        panel: &MortalityPanel,
    ) -> Result<Self> {
        let mut table = Self {
            covariate,
            pooled_over_deprivation: pooled,
            standardiser: Standardiser { mean: 0.0, sd: 1.0 },
            values,
        };
        let frame: Vec<f64> = panel
            .cells()
            .iter()
            .map(|c| table.raw(&c.key))
            .collect::<Result<_>>()?;
        let (_, st) = standardise(&frame, covariate.as_str())?;
        table.standardiser = st;
        Ok(table)
    }
}

/// Per-cell values a design row needs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RowCovariates {
    pub aad: f64,
    pub ns: f64,
}

impl RowCovariates {
    pub fn get(&self, c: Covariate) -> f64 {
        match c {
            Covariate::Aad => self.aad,
            Covariate::Ns => self.ns,
        }
    }
}

/// The standardised covariates of a modelling frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateSet {
    pub aad: Option<CovariateTable>,
    pub ns: Option<CovariateTable>,
}

impl CovariateSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Time-averaged AAD for every cell of `panel`, standardised over its cells.
    pub fn with_aad(mut self, surface: &AadSurface, panel: &MortalityPanel, region_only: bool) -> Result<Self> {
        let mut values = BTreeMap::new();
        for c in panel.cells() {
            let dep = if region_only { None } else { c.key.deprivation };
            let v = surface.get(c.key.gender, dep, c.key.region).ok_or_else(|| {
                Error::UndefinedAad(format!("no averaged AAD for {}", c.key))
            })?;
            values.insert(
                CovariateKey {
                    gender: c.key.gender,
                    age: None,
                    deprivation: dep,
                    region: c.key.region,
                    year: None,
                },
                v,
            );
        }
        self.aad = Some(CovariateTable::from_values(Covariate::Aad, region_only, values, panel)?);
        Ok(self)
    }

    /// Lagged non-smoker prevalence for the panel's years and on through
    /// `through_year`. Horizon years past the series' lag coverage hold the last
    /// available value; panel years must be covered.
    pub fn with_ns(mut self, series: &SmokingSeries, panel: &MortalityPanel, through_year: i32) -> Result<Self> {
        let levels = panel.levels();
        let ages = levels
            .ages
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("NS needs an age dimension".into()))?;
        let last = through_year.max(levels.last_year());
        let mut values = BTreeMap::new();
        for &gender in &levels.genders {
            for (a, band) in ages.iter().enumerate() {
                let mut held = None;
                for year in levels.first_year()..=last {
                    let v = match lagged_ns(series, band, gender, year) {
                        Ok(v) => v,
                        Err(Error::LagUnavailable { .. })
                            if year > levels.last_year() && held.is_some() =>
                        {
                            held.expect("checked")
                        }
                        Err(e) if year > levels.last_year() => {
                            log::debug!("NS horizon stops before {year}: {e}");
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                    held = Some(v);
                    values.insert(
                        CovariateKey {
                            gender,
                            age: Some(a),
                            deprivation: None,
                            region: None,
                            year: Some(year),
                        },
                        v,
                    );
                }
            }
        }
        self.ns = Some(CovariateTable::from_values(Covariate::Ns, false, values, panel)?);
        Ok(self)
    }

    pub fn table(&self, c: Covariate) -> Option<&CovariateTable> {
        match c {
            Covariate::Aad => self.aad.as_ref(),
            Covariate::Ns => self.ns.as_ref(),
        }
    }

    /// Standardised values for `key`, with `aad_shift` natural years added to AAD.
    ///
    /// Only covariates in `needed` are looked up; the rest stay zero.
    pub fn row(&self, key: &StratumKey, needed: &[Covariate], aad_shift: f64) -> Result<RowCovariates> {
        let mut out = RowCovariates::default();
        for &c in needed {
            let table = self.table(c).ok_or_else(|| {
                Error::CovariateGap(format!("covariate {} not supplied", c.as_str()))
            })?;
            let shift = if c == Covariate::Aad { aad_shift } else { 0.0 };
            let v = table.standardiser.apply(table.raw(key)? + shift);
            match c {
                Covariate::Aad => out.aad = v,
                Covariate::Ns => out.ns = v,
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("covariates serialise")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}
