use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Covariate, CovariateSet, ModelSpec, RowCovariates, Term};
use crate::data::{LevelSets, MortalityPanel, StratumKey};
use crate::error::{Error, Result};
use crate::linalg;

/// Designs with a larger condition number are treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e10;

/// Sum-to-zero coding of `level` out of `n`: a unit vector, or all `-1` for the last level.
pub fn stz_code(level: usize, n: usize) -> Vec<f64> {
    let mut row = vec![0.0; n - 1];
    if level + 1 == n {
        row.fill(-1.0);
    } else {
        row[level] = 1.0;
    }
    row
}

/// The contiguous columns owned by one term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub term: Term,
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Reconstructed level effects of one term.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Scalar(f64),
    /// One value per factor level, summing to zero.
    Levels(Vec<f64>),
    /// Row-major `rows x cols` table whose rows and columns each sum to zero.
    Grid { rows: usize, cols: usize, values: Vec<f64> },
    /// One value per observed year, zero in the first.
    Path(Vec<f64>),
}

/// Column layout of a spec over a set of levels; maps any key to a design row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub spec: ModelSpec,
    pub levels: LevelSets,
    pub blocks: Vec<Block>,
    pub names: Vec<String>,
}

impl DesignLayout {
    pub fn new(spec: &ModelSpec, levels: &LevelSets) -> Result<Self> {
        spec.validate()?;
        spec.check_levels(levels)?;
        let n_years = levels.years.len();
        let mut blocks = Vec::with_capacity(spec.terms.len());
        let mut names = Vec::new();
        for &term in &spec.terms {
            let start = names.len();
            let label = term.to_string();
            match term {
                Term::Intercept | Term::Slope(_) => names.push(label),
                Term::Main(f) | Term::FactorSlope(f, _) => {
                    for l in 0..f.n_levels(levels) - 1 {
                        names.push(format!("{label}[{}]", f.level_label(levels, l)));
                    }
                }
                Term::FactorInteraction(a, b) => {
                    for i in 0..a.n_levels(levels) - 1 {
                        for j in 0..b.n_levels(levels) - 1 {
                            names.push(format!(
                                "{label}[{},{}]",
                                a.level_label(levels, i),
                                b.level_label(levels, j)
                            ));
                        }
                    }
                }
                Term::Period | Term::PeriodSlope(_) => {
                    for &y in &levels.years[1..n_years.max(1)] {
                        names.push(format!("{label}[{y}]"));
                    }
                }
            }
            blocks.push(Block {
                term,
                start,
                len: names.len() - start,
            });
        }
        Ok(Self {
            spec: spec.clone(),
            levels: levels.clone(),
            blocks,
            names,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn years(&self) -> &[i32] {
        &self.levels.years
    }

    pub fn block(&self, term: &Term) -> Option<&Block> {
        self.blocks.iter().find(|b| b.term == *term)
    }

    pub fn period_blocks(&self) -> impl Iterator<Item = &Block> + '_ {
        self.blocks.iter().filter(|b| b.term.is_period())
    }

    pub fn covariates(&self) -> Vec<Covariate> {
        self.spec.covariates()
    }

    /// Fills the design row of `key`. Period columns stay zero for years
    /// outside the observed range.
    pub fn fill_row(&self, key: &StratumKey, cov: &RowCovariates, out: &mut [f64]) -> Result<()> {
        self.fill(key, cov, true, out)
    }

    /// The row without any period columns: the time-invariant part of `μ`.
    pub fn fill_static_row(&self, key: &StratumKey, cov: &RowCovariates, out: &mut [f64]) -> Result<()> {
        self.fill(key, cov, false, out)
    }

    fn fill(&self, key: &StratumKey, cov: &RowCovariates, period: bool, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.n_cols());
        out.fill(0.0);
        let level = |f: super::Factor| {
            f.level_of(key).ok_or_else(|| {
                Error::InvalidSpec(format!("cell {key} has no {} level", f.as_str()))
            })
        };
        let year_idx = self.levels.years.iter().position(|&y| y == key.year);
        for b in &self.blocks {
            let cols = &mut out[b.range()];
            match b.term {
                Term::Intercept => cols[0] = 1.0,
                Term::Slope(c) => cols[0] = cov.get(c),
                Term::Main(f) => cols.copy_from_slice(&stz_code(level(f)?, f.n_levels(&self.levels))),
                Term::FactorSlope(f, c) => {
                    let v = cov.get(c);
                    for (o, s) in cols.iter_mut().zip(stz_code(level(f)?, f.n_levels(&self.levels))) {
                        *o = s * v;
                    }
                }
                Term::FactorInteraction(fa, fb) => {
                    let ca = stz_code(level(fa)?, fa.n_levels(&self.levels));
                    let cb = stz_code(level(fb)?, fb.n_levels(&self.levels));
                    for (i, &va) in ca.iter().enumerate() {
                        for (j, &vb) in cb.iter().enumerate() {
                            cols[i * cb.len() + j] = va * vb;
                        }
                    }
                }
                Term::Period | Term::PeriodSlope(_) => {
                    if let (true, Some(t)) = (period, year_idx) {
                        if t > 0 {
                            cols[t - 1] = match b.term {
                                Term::PeriodSlope(c) => cov.get(c),
                                _ => 1.0,
                            };
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Level effects implied by the free coefficients `beta`, one per term.
    pub fn effects(&self, beta: &[f64]) -> Vec<(Term, Effect)> {
        self.blocks
            .iter()
            .map(|b| {
                let free = &beta[b.range()];
                let effect = match b.term {
                    Term::Intercept | Term::Slope(_) => Effect::Scalar(free[0]),
                    Term::Main(f) | Term::FactorSlope(f, _) => {
                        let n = f.n_levels(&self.levels);
                        Effect::Levels((0..n).map(|l| dot(&stz_code(l, n), free)).collect())
                    }
                    Term::FactorInteraction(fa, fb) => {
                        let (na, nb) = (fa.n_levels(&self.levels), fb.n_levels(&self.levels));
                        let mut values = Vec::with_capacity(na * nb);
                        for i in 0..na {
                            let ca = stz_code(i, na);
                            for j in 0..nb {
                                let cb = stz_code(j, nb);
                                let mut v = 0.0;
                                for (p, &va) in ca.iter().enumerate() {
                                    for (q, &vb) in cb.iter().enumerate() {
                                        v += va * vb * free[p * cb.len() + q];
                                    }
                                }
                                values.push(v);
                            }
                        }
                        Effect::Grid {
                            rows: na,
                            cols: nb,
                            values,
                        }
                    }
                    Term::Period | Term::PeriodSlope(_) => {
                        let mut path = vec![0.0];
                        path.extend_from_slice(free);
                        Effect::Path(path)
                    }
                };
                (b.term, effect)
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense design over the cells of one gender, in panel order.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub layout: DesignLayout,
    /// Positions of the rows in the source panel.
    pub rows: Vec<usize>,
    pub keys: Vec<StratumKey>,
    pub covariates: Vec<RowCovariates>,
    pub x: DMatrix<f64>,
    pub condition_number: f64,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }
}

pub fn build_design(spec: &ModelSpec, panel: &MortalityPanel, covariates: &CovariateSet) -> Result<DesignMatrix> {
    let layout = DesignLayout::new(spec, panel.levels())?;
    let needed = layout.covariates();
    let rows: Vec<usize> = panel
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.key.gender == spec.gender)
        .map(|(i, _)| i)
        .collect();
    let p = layout.n_cols();
    let mut x = DMatrix::zeros(rows.len(), p);
    let mut keys = Vec::with_capacity(rows.len());
    let mut covs = Vec::with_capacity(rows.len());
    let mut buf = vec![0.0; p];
    for (r, &i) in rows.iter().enumerate() {
        let key = panel.cells()[i].key;
        let cov = covariates.row(&key, &needed, 0.0)?;
        layout.fill_row(&key, &cov, &mut buf)?;
        for (c, &v) in buf.iter().enumerate() {
            x[(r, c)] = v;
        }
        keys.push(key);
        covs.push(cov);
    }
    if rows.len() < p {
        return Err(Error::SpecSingular(format!(
            "{} rows for {p} free parameters",
            rows.len()
        )));
    }
    let condition_number = linalg::condition_number(&x);
    if !(condition_number < MAX_CONDITION) {
        return Err(Error::SpecSingular(format!(
            "condition number {condition_number:.3e} for `{}`",
            spec.name
        )));
    }
    Ok(DesignMatrix {
        layout,
        rows,
        keys,
        covariates: covs,
        x,
        condition_number,
    })
}
