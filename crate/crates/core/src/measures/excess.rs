use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dimension, MortalityPanel, StratumKey};
use crate::error::{Error, Result};
use crate::mcmc::{summarise, Interval};
use crate::projection::{ProjectionSurface, SurfaceRow};

/// Label of the all-regions row of a CED table.
pub const NATIONAL: &str = "England";

/// Registered against expected deaths over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CedRow {
    pub area: String,
    pub gender: String,
    pub registered: f64,
    pub expected: f64,
    pub excess: f64,
    pub ratio: f64,
    pub excess_display: String,
    pub ratio_display: String,
}

pub fn ced_from_totals(area: &str, gender: &str, registered: f64, expected: f64) -> CedRow {
    let excess = registered - expected;
    let ratio = registered / expected;
    CedRow {
        area: area.to_string(),
        gender: gender.to_string(),
        registered,
        expected,
        excess,
        ratio,
        excess_display: format!("{excess:.2}"),
        ratio_display: format!("{ratio:.2}"),
    }
}

/// CED per (gender, region) over `first..=last`, plus a national row per gender.
///
/// `baseline` rows are summed over age and deprivation; every observed
/// (gender, region, year) must have baseline expected deaths.
pub fn cumulative_excess(
    observed: &MortalityPanel,
    baseline: &[SurfaceRow],
    first: i32,
    last: i32,
) -> Result<Vec<CedRow>> {
    let levels = observed.levels();
    let mut expected: BTreeMap<(String, String, i32), f64> = BTreeMap::new();
    for r in baseline.iter().filter(|r| (first..=last).contains(&r.year)) {
        let e = r
            .expected_deaths
            .ok_or_else(|| Error::AggregationError(format!("baseline row for {} lacks expected deaths", r.year)))?;
        *expected.entry((r.gender.clone(), r.region.clone(), r.year)).or_default() += e;
    }
    let mut registered: BTreeMap<(String, String, i32), f64> = BTreeMap::new();
    for c in observed.cells().iter().filter(|c| (first..=last).contains(&c.key.year)) {
        let k = (c.key.gender.to_string(), levels.region_label(c.key.region), c.key.year);
        *registered.entry(k).or_default() += c.deaths as f64;
    }
    if registered.is_empty() {
        return Err(Error::AggregationError(format!("no observed deaths in {first}-{last}")));
    }
    let mut by_area: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for (k, d) in &registered {
        let e = expected.get(k).ok_or_else(|| {
            Error::AggregationError(format!(
                "baseline has no {} / region `{}` / {} (granularity mismatch)",
                k.0, k.1, k.2
            ))
        })?;
        let slot = by_area.entry((k.0.clone(), k.1.clone())).or_default();
        slot.0 += d;
        slot.1 += e;
    }
    let mut out = Vec::new();
    let mut national: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for ((g, area), (d, e)) in &by_area {
        let slot = national.entry(g.clone()).or_default();
        slot.0 += d;
        slot.1 += e;
        if levels.regions.is_some() {
            out.push(ced_from_totals(area, g, *d, *e));
        }
    }
    for (g, (d, e)) in national {
        out.push(ced_from_totals(NATIONAL, &g, d, e));
    }
    Ok(out)
}

pub fn write_ced_csv<W: Write>(rows: &[CedRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Which excess table a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExcessTable {
    /// Excess deaths per stratum-year.
    #[serde(rename = "ED")]
    Ed,
    /// Excess rate by age and year.
    #[serde(rename = "EAM")]
    Eam,
    /// Excess rate by region and year.
    #[serde(rename = "ERM")]
    Erm,
    /// Excess rate by quintile and year.
    #[serde(rename = "EDM")]
    Edm,
    /// National excess deaths per year.
    #[serde(rename = "national")]
    National,
    /// National excess deaths summed over the horizon.
    #[serde(rename = "cumulative")]
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessRow {
    pub table: ExcessTable,
    pub age_group: String,
    pub gender: String,
    pub deprivation: String,
    pub region: String,
    pub year: Option<i32>,
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcessReport {
    pub rows: Vec<ExcessRow>,
}

impl ExcessReport {
    pub fn table(&self, t: ExcessTable) -> impl Iterator<Item = &ExcessRow> {
        self.rows.iter().filter(move |r| r.table == t)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Draw-wise excess of `scenario` over `baseline`: ED per stratum-year and
/// EAM / ERM / EDM rates, with national yearly and cumulative totals.
pub fn excess_tables(scenario: &ProjectionSurface, baseline: &ProjectionSurface) -> Result<ExcessReport> {
    if scenario.keys != baseline.keys || scenario.n_draws != baseline.n_draws {
        return Err(Error::AggregationError("scenario and baseline surfaces differ in keys or draws".into()));
    }
    let n = baseline.n_draws;
    let levels = &baseline.levels;
    let mut ed_draws = Vec::with_capacity(baseline.n_cells());
    let mut exposure = Vec::with_capacity(baseline.n_cells());
    for i in 0..baseline.n_cells() {
        let e = match (baseline.exposure[i], scenario.exposure[i]) {
            (Some(a), Some(b)) if a == b => a,
            _ => {
                return Err(Error::AggregationError(format!(
                    "exposure missing or inconsistent at {}",
                    baseline.keys[i]
                )))
            }
        };
        let s = scenario.theta_draws(i);
        let b = baseline.theta_draws(i);
        ed_draws.push(s.iter().zip(&b).map(|(x, y)| (x - y) * e).collect::<Vec<f64>>());
        exposure.push(e);
    }
    let row = |table: ExcessTable, k: &StratumKey, year: Option<i32>, iv: Interval| ExcessRow {
        table,
        age_group: k.age.map_or_else(String::new, |a| levels.age_label(Some(a))),
        gender: k.gender.to_string(),
        deprivation: k.deprivation.map_or_else(String::new, |d| (d + 1).to_string()),
        region: k.region.map_or_else(String::new, |r| levels.region_label(Some(r))),
        year,
        mean: iv.mean,
        lo95: iv.lo,
        hi95: iv.hi,
    };
    let mut rows = Vec::new();
    for (i, k) in baseline.keys.iter().enumerate() {
        rows.push(row(ExcessTable::Ed, k, Some(k.year), summarise(&ed_draws[i])));
    }
    let group = |keep: Option<Dimension>, by_year: bool| {
        let mut acc: BTreeMap<StratumKey, (Vec<f64>, f64)> = BTreeMap::new();
        for (i, k) in baseline.keys.iter().enumerate() {
            let mut g = *k;
            for d in [Dimension::AgeGroup, Dimension::Deprivation, Dimension::Region] {
                if Some(d) != keep {
                    g = g.without(d);
                }
            }
            if !by_year {
                g.year = 0;
            }
            let slot = acc.entry(g).or_insert_with(|| (vec![0.0; n], 0.0));
            for (s, v) in slot.0.iter_mut().zip(&ed_draws[i]) {
                *s += v;
            }
            slot.1 += exposure[i];
        }
        acc
    };
    let rate_tables = [
        (ExcessTable::Eam, Dimension::AgeGroup),
        (ExcessTable::Erm, Dimension::Region),
        (ExcessTable::Edm, Dimension::Deprivation),
    ];
    for (table, dim) in rate_tables {
        let applicable = match dim {
            Dimension::AgeGroup => levels.ages.is_some(),
            Dimension::Region => levels.regions.is_some(),
            Dimension::Deprivation => levels.deprivation,
        };
        if !applicable {
            continue;
        }
        for (k, (sums, e)) in group(Some(dim), true) {
            let rates: Vec<f64> = sums.iter().map(|s| s / e).collect();
            rows.push(row(table, &k, Some(k.year), summarise(&rates)));
        }
    }
    for (k, (sums, _)) in group(None, true) {
        rows.push(row(ExcessTable::National, &k, Some(k.year), summarise(&sums)));
    }
    for (k, (sums, _)) in group(None, false) {
        rows.push(row(ExcessTable::Cumulative, &k, None, summarise(&sums)));
    }
    Ok(ExcessReport { rows })
}
