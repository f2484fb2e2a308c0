use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AgeBand, Dimension, DeprivationCoding, Gender, LevelSets, PanelSchema, StratumKey,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MortalityCell {
    pub key: StratumKey,
    pub deaths: u64,
    pub exposure: f64,
}

impl MortalityCell {
    pub fn crude_rate(&self) -> f64 {
        crude_rate(self)
    }
}

/// Observed death rate `D / E`.
pub fn crude_rate(cell: &MortalityCell) -> f64 {
    cell.deaths as f64 / cell.exposure
}

/// A complete rectangular grid of cells over frozen level sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityPanel {
    levels: LevelSets,
    cells: Vec<MortalityCell>,
    index: HashMap<StratumKey, usize>,
}

#[derive(Debug, Deserialize)]
struct PanelRow {
    #[serde(default)]
    age_group: Option<String>,
    gender: String,
    #[serde(default)]
    deprivation: Option<String>,
    #[serde(default)]
    region: Option<String>,
    year: i32,
    deaths: f64,
    exposure: f64,
}

impl MortalityPanel {
    /// Builds a panel from cells, checking completeness against `levels`.
    pub fn from_cells(levels: LevelSets, cells: Vec<MortalityCell>) -> Result<Self> {
        let mut by_key: BTreeMap<StratumKey, MortalityCell> = BTreeMap::new();
        for cell in cells {
            if !levels.contains(&cell.key) {
                return Err(Error::SchemaViolation(format!(
                    "cell {} outside declared level sets",
                    cell.key
                )));
            }
            if !(cell.exposure > 0.0) || !cell.exposure.is_finite() {
                return Err(Error::BadExposure {
                    key: cell.key,
                    exposure: cell.exposure,
                });
            }
            if cell.deaths as f64 > cell.exposure {
                return Err(Error::SchemaViolation(format!(
                    "deaths {} exceed exposure {} at {}",
                    cell.deaths, cell.exposure, cell.key
                )));
            }
            if by_key.insert(cell.key, cell).is_some() {
                return Err(Error::DuplicateCell(cell.key));
            }
        }
        let grid = levels.grid();
        if grid.len() != by_key.len() {
            let missing = grid
                .iter()
                .find(|k| !by_key.contains_key(k))
                .copied()
                .expect("size mismatch implies a missing key");
            return Err(Error::GridIncomplete(missing));
        }
        let mut ordered = Vec::with_capacity(grid.len());
        for key in grid {
            match by_key.remove(&key) {
                Some(c) => ordered.push(c),
                None => return Err(Error::GridIncomplete(key)),
            }
        }
        let index = ordered.iter().enumerate().map(|(i, c)| (c.key, i)).collect();
        Ok(Self {
            levels,
            cells: ordered,
            index,
        })
    }

    pub fn load(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, schema)
    }

    pub fn from_reader<R: Read>(reader: R, schema: &PanelSchema) -> Result<Self> {
        schema.validate()?;
        let levels = schema.levels();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for required in ["gender", "year", "deaths", "exposure"] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::SchemaViolation(format!("missing column `{required}`")));
            }
        }
        let mut acc: BTreeMap<StratumKey, (f64, f64, u32)> = BTreeMap::new();
        for row in rdr.deserialize::<PanelRow>() {
            let row = row?;
            let key = parse_key(&levels, schema.deprivation, &row)?;
            if row.deaths < 0.0 || row.deaths.fract() != 0.0 {
                return Err(Error::SchemaViolation(format!(
                    "deaths must be a non-negative integer, got {} at {key}",
                    row.deaths
                )));
            }
            if !(row.exposure > 0.0) {
                return Err(Error::BadExposure {
                    key,
                    exposure: row.exposure,
                });
            }
            let slot = acc.entry(key).or_insert((0.0, 0.0, 0));
            slot.0 += row.deaths;
            slot.1 += row.exposure;
            slot.2 += 1;
        }
        let expected_rows = if schema.deprivation == DeprivationCoding::Decile { 2 } else { 1 };
        let mut cells = Vec::with_capacity(acc.len());
        for (key, (deaths, exposure, rows)) in acc {
            if rows > expected_rows {
                return Err(Error::DuplicateCell(key));
            }
            if rows < expected_rows {
                return Err(Error::GridIncomplete(key));
            }
            cells.push(MortalityCell {
                key,
                deaths: deaths as u64,
                exposure,
            });
        }
        Self::from_cells(levels, cells)
    }

    pub fn levels(&self) -> &LevelSets {
        &self.levels
    }

    pub fn cells(&self) -> &[MortalityCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, key: &StratumKey) -> Option<&MortalityCell> {
        self.index.get(key).map(|&i| &self.cells[i])
    }

    pub fn position(&self, key: &StratumKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn total_deaths(&self) -> u64 {
        self.cells.iter().map(|c| c.deaths).sum()
    }

    pub fn total_exposure(&self) -> f64 {
        self.cells.iter().map(|c| c.exposure).sum()
    }

    pub fn has(&self, dim: Dimension) -> bool {
        match dim {
            Dimension::AgeGroup => self.levels.ages.is_some(),
            Dimension::Deprivation => self.levels.deprivation,
            Dimension::Region => self.levels.regions.is_some(),
        }
    }

    /// Sums deaths and exposures over the dropped dimensions.
    pub fn aggregate(&self, drop: &[Dimension]) -> Result<Self> {
        let drop: BTreeSet<Dimension> = drop.iter().copied().collect();
        for &dim in &drop {
            if !self.has(dim) {
                return Err(Error::SchemaViolation(format!(
                    "panel has no {dim:?} dimension to drop"
                )));
            }
        }
        let mut levels = self.levels.clone();
        for &dim in &drop {
            match dim {
                Dimension::AgeGroup => levels.ages = None,
                Dimension::Deprivation => levels.deprivation = false,
                Dimension::Region => levels.regions = None,
            }
        }
        let mut acc: BTreeMap<StratumKey, (u64, f64)> = BTreeMap::new();
        for cell in &self.cells {
            let key = drop.iter().fold(cell.key, |k, &d| k.without(d));
            let slot = acc.entry(key).or_insert((0, 0.0));
            slot.0 += cell.deaths;
            slot.1 += cell.exposure;
        }
        let cells = acc
            .into_iter()
            .map(|(key, (deaths, exposure))| MortalityCell {
                key,
                deaths,
                exposure,
            })
            .collect();
        Self::from_cells(levels, cells)
    }

    /// Restricts the panel to a contiguous year window.
    pub fn years(&self, first: i32, last: i32) -> Result<Self> {
        let mut levels = self.levels.clone();
        levels.years.retain(|y| (first..=last).contains(y));
        if levels.years.is_empty() {
            return Err(Error::SchemaViolation(format!(
                "no years in window {first}..={last}"
            )));
        }
        let cells = self
            .cells
            .iter()
            .filter(|c| (first..=last).contains(&c.key.year))
            .copied()
            .collect();
        Self::from_cells(levels, cells)
    }

    /// The cells of one gender.
    pub fn gender(&self, gender: Gender) -> Result<Self> {
        if !self.levels.genders.contains(&gender) {
            return Err(Error::SchemaViolation(format!("panel has no {gender} cells")));
        }
        let levels = LevelSets {
            genders: vec![gender],
            ..self.levels.clone()
        };
        let cells = self.cells.iter().filter(|c| c.key.gender == gender).copied().collect();
        Self::from_cells(levels, cells)
    }

    /// Schema describing this panel as it would be re-read from [`write_csv`](Self::write_csv).
    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            cause: self.levels.cause,
            genders: self.levels.genders.clone(),
            first_year: self.levels.first_year(),
            last_year: self.levels.last_year(),
            deprivation: if self.levels.deprivation {
                DeprivationCoding::Quintile
            } else {
                DeprivationCoding::None
            },
            regions: self.levels.regions.clone().unwrap_or_default(),
            ages: self.levels.ages.clone().unwrap_or_else(|| {
                vec![AgeBand {
                    label: "all".into(),
                    lo: 0,
                    hi: None,
                    midpoint: None,
                }]
            }),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["age_group", "gender", "deprivation", "region", "year", "deaths", "exposure"])?;
        for c in &self.cells {
            w.write_record([
                self.levels.age_label(c.key.age),
                c.key.gender.to_string(),
                c.key.deprivation.map_or_else(String::new, |d| (d + 1).to_string()),
                self.levels.region_label(c.key.region),
                c.key.year.to_string(),
                c.deaths.to_string(),
                format!("{:?}", c.exposure),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn parse_key(levels: &LevelSets, coding: DeprivationCoding, row: &PanelRow) -> Result<StratumKey> {
    let gender: Gender = row.gender.parse()?;
    if !levels.genders.contains(&gender) {
        return Err(Error::SchemaViolation(format!("undeclared gender {gender}")));
    }
    if !levels.years.contains(&row.year) {
        return Err(Error::SchemaViolation(format!("year {} outside panel range", row.year)));
    }
    let age = match (&levels.ages, row.age_group.as_deref()) {
        (Some(_), Some(label)) if !label.is_empty() => Some(
            levels
                .age_index(label)
                .ok_or_else(|| Error::SchemaViolation(format!("unknown age group `{label}`")))?,
        ),
        (Some(_), _) => return Err(Error::SchemaViolation("missing age_group".into())),
        (None, _) => None,
    };
    let region = match (&levels.regions, row.region.as_deref()) {
        (Some(_), Some(label)) if !label.is_empty() => Some(
            levels
                .region_index(label)
                .ok_or_else(|| Error::SchemaViolation(format!("unknown region `{label}`")))?,
        ),
        (Some(_), _) => return Err(Error::SchemaViolation("missing region".into())),
        (None, _) => None,
    };
    let deprivation = match coding {
        DeprivationCoding::None => None,
        DeprivationCoding::Quintile | DeprivationCoding::Decile => {
            let raw = row
                .deprivation
                .as_deref()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::SchemaViolation("missing deprivation".into()))?;
            let level: usize = raw
                .parse()
                .map_err(|_| Error::SchemaViolation(format!("bad deprivation level `{raw}`")))?;
            let max = if coding == DeprivationCoding::Decile { 10 } else { 5 };
            if !(1..=max).contains(&level) {
                return Err(Error::SchemaViolation(format!(
                    "deprivation level {level} outside 1..={max}"
                )));
            }
            // deciles (1,2) -> quintile 1, (3,4) -> 2, ...
            Some(if coding == DeprivationCoding::Decile {
                (level - 1) / 2
            } else {
                level - 1
            })
        }
    };
    Ok(StratumKey::new(age, gender, deprivation, region, row.year))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Cause;

    fn schema(dep: DeprivationCoding) -> PanelSchema {
        PanelSchema {
            cause: Cause::Lung,
            genders: vec![Gender::Female],
            first_year: 2001,
            last_year: 2002,
            deprivation: dep,
            regions: vec!["North".into(), "South".into()],
            ages: vec![AgeBand::parse("60-64").unwrap(), AgeBand::parse("65-69").unwrap()],
        }
    }

    fn csv_2x2x2x2(exposure_override: Option<f64>) -> String {
        let mut s = String::from("age_group,gender,deprivation,region,year,deaths,exposure\n");
        let mut first = true;
        for age in ["60-64", "65-69"] {
            for dep in [1, 2] {
                for region in ["North", "South"] {
                    for year in [2001, 2002] {
                        let e = match (first, exposure_override) {
                            (true, Some(v)) => v,
                            _ => 1000.0,
                        };
                        first = false;
                        s.push_str(&format!("{age},female,{dep},{region},{year},3,{e}\n"));
                    }
                }
            }
        }
        s
    }

    fn small_schema() -> PanelSchema {
        let mut s = schema(DeprivationCoding::Quintile);
        s.deprivation = DeprivationCoding::Quintile;
        s
    }

    #[test]
    fn zero_exposure_is_rejected() {
        // quintile schema demands five levels, so use a custom two-level check via
        // BadExposure which fires before completeness.
        let err = MortalityPanel::from_reader(csv_2x2x2x2(Some(0.0)).as_bytes(), &small_schema())
            .unwrap_err();
        assert!(matches!(err, Error::BadExposure { .. }), "{err}");
    }

    #[test]
    fn incomplete_quintile_grid() {
        let err =
            MortalityPanel::from_reader(csv_2x2x2x2(None).as_bytes(), &small_schema()).unwrap_err();
        assert!(matches!(err, Error::GridIncomplete(_)), "{err}");
    }

    #[test]
    fn crude_rates() {
        let key = StratumKey::new(Some(0), Gender::Female, None, Some(0), 2001);
        let c = MortalityCell {
            key,
            deaths: 50,
            exposure: 100_000.0,
        };
        assert_eq!(crude_rate(&c), 5.0e-4);
        let c0 = MortalityCell {
            key,
            deaths: 0,
            exposure: 1000.0,
        };
        assert_eq!(crude_rate(&c0), 0.0);
    }

    #[test]
    fn unknown_region_is_schema_violation() {
        let text = "age_group,gender,region,year,deaths,exposure\n60-64,female,Mars,2001,1,10\n";
        let err =
            MortalityPanel::from_reader(text.as_bytes(), &schema(DeprivationCoding::None)).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation(_)), "{err}");
    }
}
