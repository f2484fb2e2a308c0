use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AgeBand, Cause, Gender, LevelSets, MortalityCell, MortalityPanel, StratumKey};
use crate::error::{Error, Result};
use crate::mcmc::stream_rng;
use crate::spec::{Covariate, CovariateKey, CovariateSet, CovariateTable, DesignLayout, ModelSpec, Term};

/// Natural-unit distribution of a synthetic covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateShape {
    pub mean: f64,
    pub sd: f64,
    /// Change per year; only used for year-varying covariates.
    #[serde(default)]
    pub trend: f64,
}

/// Everything needed to simulate one synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub cause: Cause,
    pub gender: Gender,
    pub first_year: i32,
    pub n_years: usize,
    /// Extra years simulated beyond the panel as held-out truth.
    pub horizon: usize,
    pub n_ages: usize,
    pub first_age: u32,
    pub n_regions: usize,
    pub deprivation: bool,
    /// Typical person-years per cell.
    pub exposure: f64,
    /// Exposures are `exposure × exp(U(-spread, spread))`.
    pub exposure_spread: f64,
    pub terms: Vec<Term>,
    pub intercept: f64,
    /// True free coefficients by term label; unspecified terms draw `N(0, coef_sd²)`.
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub coef_sd: f64,
    pub sigma2: f64,
    /// Drift per period term, in spec order.
    pub psi: Vec<f64>,
    pub sigma2_kappa: Vec<f64>,
    pub aad: CovariateShape,
    pub ns: CovariateShape,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            cause: Cause::Lung,
            gender: Gender::Female,
            first_year: 2001,
            n_years: 10,
            horizon: 0,
            n_ages: 4,
            first_age: 55,
            n_regions: 3,
            deprivation: true,
            exposure: 1e5,
            exposure_spread: 0.5,
            terms: ["intercept", "age", "region", "deprivation", "AAD", "year"]
                .iter()
                .map(|t| t.parse().expect("valid label"))
                .collect(),
            intercept: -7.0,
            coefficients: BTreeMap::new(),
            coef_sd: 0.2,
            sigma2: 0.01,
            psi: vec![-0.01],
            sigma2_kappa: vec![0.0005],
            aad: CovariateShape {
                mean: 72.0,
                sd: 1.5,
                trend: 0.0,
            },
            ns: CovariateShape {
                mean: 0.7,
                sd: 0.05,
                trend: 0.005,
            },
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("generator config serialises")
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        ModelSpec::new("synthetic", self.cause, self.gender, self.terms.clone())
    }

    pub fn levels(&self) -> LevelSets {
        LevelSets {
            cause: self.cause,
            genders: vec![self.gender],
            years: (self.first_year..self.first_year + self.n_years as i32).collect(),
            ages: (self.n_ages > 0).then(|| {
                (0..self.n_ages as u32)
                    .map(|a| AgeBand::new(self.first_age + 5 * a, self.first_age + 5 * a + 4))
                    .collect()
            }),
            regions: (self.n_regions > 0).then(|| (1..=self.n_regions).map(|r| format!("R{r}")).collect()),
            deprivation: self.deprivation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if self.n_years == 0 {
            return bad("n_years must be positive".into());
        }
        if !(self.exposure > 0.0) || !(self.exposure_spread >= 0.0) {
            return bad("exposures must be positive".into());
        }
        if !(self.sigma2 >= 0.0) || self.sigma2_kappa.iter().any(|v| !(*v >= 0.0)) {
            return bad("variances must be non-negative".into());
        }
        let n_period = self.terms.iter().filter(|t| t.is_period()).count();
        if self.psi.len() != n_period || self.sigma2_kappa.len() != n_period {
            return bad(format!("need psi and sigma2_kappa for each of {n_period} period terms"));
        }
        let finite = [self.intercept, self.coef_sd, self.aad.mean, self.aad.sd, self.ns.mean, self.ns.sd];
        if finite.iter().chain(self.coefficients.values().flatten()).any(|v| !v.is_finite()) {
            return bad("non-finite generator value".into());
        }
        Ok(())
    }
}

/// A simulated cell's true location and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthCell {
    pub key: StratumKey,
    pub exposure: f64,
    pub mu: f64,
    pub theta: f64,
}

/// The parameters behind a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    /// Free coefficients in design order; period columns hold the observed-year path.
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub psi: Vec<f64>,
    pub sigma2_kappa: Vec<f64>,
    /// Full period paths over observed and horizon years, starting at zero.
    pub kappa: Vec<Vec<f64>>,
    pub cells: Vec<TruthCell>,
    /// Held-out horizon cells.
    pub future: Vec<TruthCell>,
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub panel: MortalityPanel,
    pub covariates: CovariateSet,
    pub truth: Truth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Simulates covariates, a random-walk period path, latent rates and Poisson deaths.
pub fn generate(cfg: &GeneratorConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let levels = cfg.levels();
    let mut rng = stream_rng(cfg.seed, 0);
    let last_year = levels.last_year() + cfg.horizon as i32;

    let mut exposure_rng = stream_rng(cfg.seed, 1);
    let mut exposure_of = BTreeMap::new();
    let mut keys_all = Vec::new();
    for year in levels.first_year()..=last_year {
        let lv = LevelSets {
            years: vec![year],
            ..levels.clone()
        };
        for key in lv.grid() {
            let u: f64 = exposure_rng.random_range(-1.0..=1.0);
            exposure_of.insert(key, cfg.exposure * (u * cfg.exposure_spread).exp());
            keys_all.push(key);
        }
    }

    let frame_cells: Vec<MortalityCell> = levels
        .grid()
        .into_iter()
        .map(|key| MortalityCell {
            key,
            deaths: 0,
            exposure: exposure_of[&key],
        })
        .collect();
    let frame = MortalityPanel::from_cells(levels.clone(), frame_cells)?;

    let mut covariates = CovariateSet::new();
    let mut cov_rng = stream_rng(cfg.seed, 2);
    if spec.uses(Covariate::Aad) {
        let mut values = BTreeMap::new();
        for region in LevelSets::optional_range(levels.n_regions()) {
            for dep in LevelSets::optional_range(levels.n_quintiles()) {
                let v = cfg.aad.mean + cfg.aad.sd * normal(&mut cov_rng);
                values.insert(
                    CovariateKey {
                        gender: cfg.gender,
                        age: None,
                        deprivation: dep,
                        region,
                        year: None,
                    },
                    v,
                );
            }
        }
        covariates.aad = Some(CovariateTable::from_values(Covariate::Aad, false, values, &frame)?);
    }
    if spec.uses(Covariate::Ns) {
        let mut values = BTreeMap::new();
        for age in LevelSets::optional_range(levels.n_ages()) {
            let base = cfg.ns.mean + cfg.ns.sd * normal(&mut cov_rng);
            for year in levels.first_year()..=last_year {
                let v = base
                    + cfg.ns.trend * (year - levels.first_year()) as f64
                    + 0.2 * cfg.ns.sd * normal(&mut cov_rng);
                values.insert(
                    CovariateKey {
                        gender: cfg.gender,
                        age,
                        deprivation: None,
                        region: None,
                        year: Some(year),
                    },
                    v,
                );
            }
        }
        covariates.ns = Some(CovariateTable::from_values(Covariate::Ns, false, values, &frame)?);
    }

    let layout = DesignLayout::new(&spec, &levels)?;
    let mut beta = vec![0.0; layout.n_cols()];
    let mut kappa = Vec::new();
    let mut period_idx = 0;
    for b in &layout.blocks {
        let label = b.term.to_string();
        if b.term.is_period() {
            let (psi, s2k) = (cfg.psi[period_idx], cfg.sigma2_kappa[period_idx]);
            let mut path = vec![0.0];
            for _ in 1..(levels.years.len() + cfg.horizon) {
                let prev = *path.last().expect("non-empty");
                path.push(prev + psi + s2k.sqrt() * normal(&mut rng));
            }
            beta[b.range()].copy_from_slice(&path[1..levels.years.len()]);
            kappa.push(path);
            period_idx += 1;
        } else if b.term == Term::Intercept {
            beta[b.start] = cfg.intercept;
        } else if let Some(v) = cfg.coefficients.get(&label) {
            if v.len() != b.len {
                return Err(Error::BadConfig(format!(
                    "term `{label}` needs {} coefficients, got {}",
                    b.len,
                    v.len()
                )));
            }
            beta[b.range()].copy_from_slice(v);
        } else {
            for j in b.range() {
                beta[j] = cfg.coef_sd * normal(&mut rng);
            }
        }
    }

    let needed = layout.covariates();
    let sigma = cfg.sigma2.sqrt();
    let mut row = vec![0.0; layout.n_cols()];
    let mut cells = Vec::new();
    let mut truth_cells = Vec::new();
    let mut future = Vec::new();
    for key in keys_all {
        let cov = covariates.row(&key, &needed, 0.0)?;
        layout.fill_static_row(&key, &cov, &mut row)?;
        let mut mu: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
        let t = (key.year - levels.first_year()) as usize;
        for (p, b) in layout.period_blocks().enumerate() {
            let mult = match b.term {
                Term::PeriodSlope(c) => cov.get(c),
                _ => 1.0,
            };
            mu += kappa[p][t] * mult;
        }
        let theta = (mu + sigma * normal(&mut rng)).exp();
        let e = exposure_of[&key];
        let tc = TruthCell {
            key,
            exposure: e,
            mu,
            theta,
        };
        if key.year <= levels.last_year() {
            let deaths = Poisson::new(theta * e)
                .map_err(|err| Error::BadConfig(format!("Poisson mean {}: {err}", theta * e)))?
                .sample(&mut rng) as u64;
            cells.push(MortalityCell {
                key,
                deaths,
                exposure: e,
            });
            truth_cells.push(tc);
        } else {
            future.push(tc);
        }
    }
    let panel = MortalityPanel::from_cells(levels, cells)?;
    Ok(Synthetic {
        panel,
        covariates,
        truth: Truth {
            names: layout.names.clone(),
            spec,
            beta,
            sigma2: cfg.sigma2,
            psi: cfg.psi.clone(),
            sigma2_kappa: cfg.sigma2_kappa.clone(),
            kappa,
            cells: truth_cells,
            future,
        },
    })
}
