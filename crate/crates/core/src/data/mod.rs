//! Panel data: stratum keys, level sets, mortality panels, the standard
//! population and fitted incidence surfaces.
//!
//! Every level is carried as a zero-based ordinal index into the level set
//! declared by a [`PanelSchema`]. Deprivation index 0 is quintile 1 (most
//! deprived). A dimension that has been aggregated away is `None`.

mod incidence;
mod panel;
mod schema;
mod stdpop;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use incidence::IncidenceSurface;
pub use panel::{crude_rate, MortalityCell, MortalityPanel};
pub use schema::{AgeBand, DeprivationCoding, LevelSets, PanelSchema};
pub use stdpop::StandardPopulation;

use crate::error::Error;

pub const QUINTILES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" | "women" => Ok(Gender::Female),
            "male" | "m" | "men" => Ok(Gender::Male),
            other => Err(Error::SchemaViolation(format!("unknown gender `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    Lung,
    Breast,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Lung => "lung",
            Cause::Breast => "breast",
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lung" | "lc" => Ok(Cause::Lung),
            "breast" | "bc" => Ok(Cause::Breast),
            other => Err(Error::SchemaViolation(format!("unknown cause `{other}`"))),
        }
    }
}

/// A dimension that may be summed out of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    AgeGroup,
    Deprivation,
    Region,
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "age" | "age_group" => Ok(Dimension::AgeGroup),
            "deprivation" | "income" | "quintile" => Ok(Dimension::Deprivation),
            "region" => Ok(Dimension::Region),
            other => Err(Error::SchemaViolation(format!("unknown dimension `{other}`"))),
        }
    }
}

/// Key of one stratum-year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub age: Option<usize>,
    pub gender: Gender,
    pub deprivation: Option<usize>,
    pub region: Option<usize>,
    pub year: i32,
}

impl StratumKey {
    pub fn new(
        age: Option<usize>,
        gender: Gender,
        deprivation: Option<usize>,
        region: Option<usize>,
        year: i32,
    ) -> Self {
        Self {
            age,
            gender,
            deprivation,
            region,
            year,
        }
    }

    pub fn without(mut self, dim: Dimension) -> Self {
        match dim {
            Dimension::AgeGroup => self.age = None,
            Dimension::Deprivation => self.deprivation = None,
            Dimension::Region => self.region = None,
        }
        self
    }

    pub fn with_year(mut self, year: i32) -> Self {
        self.year = year;
        self
    }

    fn order_tuple(&self) -> (Gender, i32, Option<usize>, Option<usize>, Option<usize>) {
        (self.gender, self.year, self.region, self.deprivation, self.age)
    }
}

/// Cells sort by (gender, year, region, deprivation, age).
impl Ord for StratumKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_tuple().cmp(&other.order_tuple())
    }
}

impl PartialOrd for StratumKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |i| i.to_string());
        write!(
            f,
            "(age={}, gender={}, deprivation={}, region={}, year={})",
            opt(self.age),
            self.gender,
            opt(self.deprivation),
            opt(self.region),
            self.year
        )
    }
}
