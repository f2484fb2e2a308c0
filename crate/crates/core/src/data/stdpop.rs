use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AgeBand;
use crate::error::{Error, Result};

const ESP2013_CSV: &str = include_str!("../../data/esp2013.csv");

/// Standard population counts, one weight per age group of a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardPopulation {
    pub bands: Vec<AgeBand>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct StdRow {
    age_band: String,
    lo: u32,
    hi: Option<u32>,
    weight: f64,
}

impl StandardPopulation {
    pub fn new(bands: Vec<AgeBand>, weights: Vec<f64>) -> Result<Self> {
        if bands.len() != weights.len() {
            return Err(Error::StdMismatch("bands and weights differ in length".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::StdMismatch(format!("non-positive weight {w}")));
        }
        Ok(Self { bands, weights })
    }

    /// The European Standard Population 2013 in five-year bands (shipped data file).
    pub fn esp2013() -> Self {
        Self::from_reader(ESP2013_CSV.as_bytes()).expect("bundled ESP 2013 table parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut bands = Vec::new();
        let mut weights = Vec::new();
        for row in rdr.deserialize::<StdRow>() {
            let row = row?;
            bands.push(AgeBand {
                label: row.age_band,
                lo: row.lo,
                hi: row.hi,
                midpoint: None,
            });
            weights.push(row.weight);
        }
        Self::new(bands, weights)
    }

    /// Re-bins onto `targets` by summing every source band that lies inside a target band.
    ///
    /// A target band whose edges do not coincide with source band edges is a
    /// coverage gap.
    pub fn for_bands(&self, targets: &[AgeBand]) -> Result<Self> {
        let mut weights = Vec::with_capacity(targets.len());
        for t in targets {
            let mut covered_lo = None;
            let mut covered_hi: Option<Option<u32>> = None;
            let mut w = 0.0;
            for (b, &bw) in self.bands.iter().zip(&self.weights) {
                let inside = b.lo >= t.lo
                    && match (b.hi, t.hi) {
                        (Some(bh), Some(th)) => bh <= th,
                        (_, None) => true,
                        (None, Some(_)) => false,
                    };
                if inside {
                    w += bw;
                    covered_lo = Some(covered_lo.map_or(b.lo, |lo: u32| lo.min(b.lo)));
                    covered_hi = Some(match covered_hi {
                        None => b.hi,
                        Some(prev) => match (prev, b.hi) {
                            (Some(p), Some(h)) => Some(p.max(h)),
                            _ => None,
                        },
                    });
                }
            }
            if covered_lo != Some(t.lo) || covered_hi != Some(t.hi) {
                return Err(Error::StdMismatch(format!(
                    "band `{}` does not align with the standard population bands",
                    t.label
                )));
            }
            weights.push(w);
        }
        Self::new(targets.to_vec(), weights)
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn esp_sums_to_one_hundred_thousand() {
        let esp = StandardPopulation::esp2013();
        assert_eq!(esp.bands.len(), 20);
        assert_eq!(esp.total(), 100_000.0);
    }

    #[test]
    fn rebinning_to_lung_bands() {
        let esp = StandardPopulation::esp2013();
        let mut bands = vec![AgeBand::parse("45-54").unwrap()];
        for lo in (55..=85).step_by(5) {
            bands.push(AgeBand::new(lo, lo + 4));
        }
        let lc = esp.for_bands(&bands).unwrap();
        assert_eq!(lc.weights[0], 14_000.0);
        assert_eq!(lc.weights[7], 1_500.0);
    }

    #[test]
    fn misaligned_band_is_a_gap() {
        let esp = StandardPopulation::esp2013();
        let err = esp.for_bands(&[AgeBand::new(47, 51)]).unwrap_err();
        assert!(matches!(err, Error::StdMismatch(_)));
    }
}
