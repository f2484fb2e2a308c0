use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Cause;
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::projection::{project_with_shift, PopulationProjection, ProjectionConfig, ProjectionSurface};
use crate::spec::{Covariate, CovariateSet};

/// Cumulative fraction of a delay realised by each projection year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSchedule {
    pub values: BTreeMap<i32, f64>,
}

const SCHEDULE_TOL: f64 = 1e-12;

impl AllocationSchedule {
    pub fn new(values: BTreeMap<i32, f64>) -> Result<Self> {
        let s = Self { values };
        s.validate()?;
        Ok(s)
    }

    /// Nothing in `first`, 60% by the next year, then linear steps to 85%
    /// over years 3–6, 95% over years 7–11 and 100% over years 12–18.
    pub fn default_from(first: i32) -> Self {
        let mut v = BTreeMap::new();
        v.insert(first, 0.0);
        v.insert(first + 1, 0.60);
        let mut put = |start: i32, n: i32, from: f64, to: f64| {
            for k in 1..=n {
                v.insert(start + k - 1, from + (to - from) * k as f64 / n as f64);
            }
        };
        put(first + 2, 4, 0.60, 0.85);
        put(first + 6, 5, 0.85, 0.95);
        put(first + 11, 7, 0.95, 1.0);
        Self { values: v }
    }

    pub fn validate(&self) -> Result<()> {
        let vals: Vec<f64> = self.values.values().copied().collect();
        let (Some(&first), Some(&last)) = (vals.first(), vals.last()) else {
            return Err(Error::BadConfig("empty allocation schedule".into()));
        };
        if !(first >= 0.0) {
            return Err(Error::BadConfig(format!("schedule starts at {first}")));
        }
        if vals.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::BadConfig("schedule must be non-decreasing".into()));
        }
        if (last - 1.0).abs() > SCHEDULE_TOL {
            return Err(Error::BadConfig(format!("schedule ends at {last}, not 1")));
        }
        Ok(())
    }

    /// Fraction realised in `year`: zero before the schedule, one after it.
    pub fn at(&self, year: i32) -> f64 {
        match self.values.range(..=year).next_back() {
            Some((_, &v)) => v,
            None => 0.0,
        }
    }

    /// Year-on-year increments, starting from zero before the first year.
    pub fn increments(&self) -> Vec<(i32, f64)> {
        let mut prev = 0.0;
        self.values
            .iter()
            .map(|(&y, &v)| {
                let inc = v - prev;
                prev = v;
                (y, inc)
            })
            .collect()
    }

    /// Reads `year,fraction` rows.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            year: i32,
            fraction: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut values = BTreeMap::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            values.insert(row.year, row.fraction);
        }
        Self::new(values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub delay_months: f64,
    pub schedule: AllocationSchedule,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay_months >= 0.0) || !self.delay_months.is_finite() {
            return Err(Error::BadConfig(format!("delay {} months", self.delay_months)));
        }
        self.schedule.validate()
    }

    /// AAD shift in years for `year`.
    pub fn shift(&self, year: i32) -> f64 {
        self.delay_months / 12.0 * self.schedule.at(year)
    }
}

/// Re-projects the baseline with AAD raised by the realised delay.
///
/// `projection` must be the baseline's configuration; sharing its seed gives
/// the scenario the baseline's random innovations.
pub fn apply_delay_scenario(
    draws: &PosteriorDraws,
    covariates: &CovariateSet,
    population: Option<&PopulationProjection>,
    projection: &ProjectionConfig,
    scenario: &ScenarioConfig,
) -> Result<ProjectionSurface> {
    let spec = &draws.layout.spec;
    if spec.cause != Cause::Lung {
        return Err(Error::ScenarioUnsupported(format!(
            "delay scenarios apply to lung cancer models, not {}",
            spec.cause
        )));
    }
    if !spec.uses(Covariate::Aad) {
        return Err(Error::ScenarioUnsupported(format!("spec `{}` has no AAD term", spec.name)));
    }
    scenario.validate()?;
    project_with_shift(draws, covariates, population, projection, |y| scenario.shift(y))
}
