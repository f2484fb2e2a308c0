use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{split_rhat, ess, Acceptance, Diagnostics, PoissonLognormal, PriorSet, SamplerConfig};
use crate::data::StratumKey;
use crate::error::{Error, Result};
use crate::spec::{Block, CovariateSet, DesignLayout, DesignMatrix};

/// Posterior mean and central 95% credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarise(values: &[f64]) -> Interval {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Interval {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        lo: quantile(&v, 0.025),
        hi: quantile(&v, 0.975),
    }
}

/// Stored draws of one chain, row-major by draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// `n_draws × n_params`: coefficients, `σ²`, drifts, walk variances.
    pub values: Vec<f64>,
    /// Poisson log-likelihood at each stored draw's latent rates.
    pub loglik: Vec<f64>,
    /// `n_draws × n_cells` latent log-rates when requested.
    pub latent: Option<Vec<f64>>,
    pub acceptance: Acceptance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DrawsHeader {
    format: String,
    n_chains: usize,
    n_draws: usize,
    columns: Vec<String>,
    n_beta: usize,
    n_rw: usize,
    n_cells: usize,
    latent: bool,
    keys: Vec<StratumKey>,
    layout: DesignLayout,
    config: SamplerConfig,
    priors: PriorSet,
    diagnostics: Diagnostics,
    convergence_warning: bool,
    acceptance: Vec<Acceptance>,
}

const FORMAT: &str = "f64-le-columnar";

/// Thinned post-burn-in draws of all chains plus diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub layout: DesignLayout,
    /// Names of all stored scalars.
    pub names: Vec<String>,
    pub n_beta: usize,
    pub n_rw: usize,
    /// Cell keys of the design rows, in order.
    pub keys: Vec<StratumKey>,
    pub config: SamplerConfig,
    pub priors: PriorSet,
    pub chains: Vec<ChainDraws>,
    pub diagnostics: Diagnostics,
    /// Set when the largest R̂ exceeds the configured threshold.
    pub convergence_warning: bool,
}

impl PosteriorDraws {
    pub(crate) fn assemble(
        design: &DesignMatrix,
        model: &PoissonLognormal,
        priors: PriorSet,
        config: SamplerConfig,
        chains: Vec<ChainDraws>,
    ) -> Self {
        let layout = design.layout.clone();
        let rw_names: Vec<String> = layout
            .period_blocks()
            .filter(|b| b.len > 0)
            .map(|b| b.term.to_string())
            .collect();
        debug_assert_eq!(rw_names.len(), model.rw.len());
        let mut names = layout.names.clone();
        names.push("sigma2".into());
        names.extend(rw_names.iter().map(|t| format!("psi[{t}]")));
        names.extend(rw_names.iter().map(|t| format!("sigma2_kappa[{t}]")));
        let mut draws = Self {
            n_beta: layout.n_cols(),
            n_rw: rw_names.len(),
            layout,
            names,
            keys: design.keys.clone(),
            config,
            priors,
            chains,
            diagnostics: Diagnostics::default(),
            convergence_warning: false,
        };
        draws.refresh_diagnostics();
        draws
    }

    /// Recomputes R̂, ESS and the convergence flag.
    pub fn refresh_diagnostics(&mut self) {
        let cols: Vec<Vec<Vec<f64>>> = (0..self.n_params()).map(|j| self.column(j)).collect();
        let rhat = (self.chains.len() >= 2).then(|| {
            cols.iter()
                .map(|c| {
                    let refs: Vec<&[f64]> = c.iter().map(Vec::as_slice).collect();
                    split_rhat(&refs).unwrap_or(f64::NAN)
                })
                .collect::<Vec<f64>>()
        });
        let ess_v = cols
            .iter()
            .map(|c| {
                let refs: Vec<&[f64]> = c.iter().map(Vec::as_slice).collect();
                ess(&refs)
            })
            .collect();
        let n = self.chains.len() as f64;
        let avg = |f: fn(&Acceptance) -> f64| self.chains.iter().map(|c| f(&c.acceptance)).sum::<f64>() / n;
        self.diagnostics = Diagnostics {
            names: self.names.clone(),
            rhat,
            ess: ess_v,
            acceptance: Acceptance {
                latent: avg(|a| a.latent),
                coefficients: avg(|a| a.coefficients),
                sigma2: avg(|a| a.sigma2),
            },
        };
        let worst = self.diagnostics.max_rhat();
        self.convergence_warning = worst.is_some_and(|r| r > self.config.rhat_threshold);
        if self.convergence_warning {
            log::warn!(
                "convergence warning: max R-hat {:.3} exceeds {}",
                worst.unwrap_or(f64::NAN),
                self.config.rhat_threshold
            );
        }
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_cells(&self) -> usize {
        self.keys.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.loglik.len())
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.loglik.len()).sum()
    }

    pub fn draw(&self, chain: usize, k: usize) -> &[f64] {
        let q = self.n_params();
        &self.chains[chain].values[k * q..(k + 1) * q]
    }

    /// All draws, chain by chain.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let q = self.n_params();
        self.chains.iter().flat_map(move |c| c.values.chunks_exact(q))
    }

    /// Latent log-rates of every draw, chain by chain, when stored.
    pub fn latent(&self) -> Option<impl Iterator<Item = &[f64]> + '_> {
        let n = self.n_cells();
        if self.chains.iter().any(|c| c.latent.is_none()) {
            return None;
        }
        Some(
            self.chains
                .iter()
                .flat_map(move |c| c.latent.as_deref().unwrap_or(&[]).chunks_exact(n)),
        )
    }

    pub fn loglik(&self) -> impl Iterator<Item = f64> + '_ {
        self.chains.iter().flat_map(|c| c.loglik.iter().copied())
    }

    /// One scalar's draws, per chain.
    pub fn column(&self, j: usize) -> Vec<Vec<f64>> {
        let q = self.n_params();
        self.chains
            .iter()
            .map(|c| c.values.iter().skip(j).step_by(q).copied().collect())
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn beta<'a>(&self, draw: &'a [f64]) -> &'a [f64] {
        &draw[..self.n_beta]
    }

    pub fn sigma2(&self, draw: &[f64]) -> f64 {
        draw[self.n_beta]
    }

    pub fn psi(&self, draw: &[f64], block: usize) -> f64 {
        draw[self.n_beta + 1 + block]
    }

    pub fn sigma2_kappa(&self, draw: &[f64], block: usize) -> f64 {
        draw[self.n_beta + 1 + self.n_rw + block]
    }

    /// Period blocks carrying a random walk, in storage order.
    pub fn rw_blocks(&self) -> Vec<Block> {
        self.layout.period_blocks().filter(|b| b.len > 0).cloned().collect()
    }

    /// Full period path of block `block` for one draw, starting at zero.
    pub fn kappa_path(&self, draw: &[f64], block: usize) -> Vec<f64> {
        let b = &self.rw_blocks()[block];
        let mut path = vec![0.0];
        path.extend_from_slice(&draw[b.range()]);
        path
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_params()];
        for d in self.iter() {
            for (a, v) in m.iter_mut().zip(d) {
                *a += v;
            }
        }
        let n = self.n_draws() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn summary(&self, j: usize) -> Interval {
        let v: Vec<f64> = self.iter().map(|d| d[j]).collect();
        summarise(&v)
    }

    /// Design row of any key, including years outside the fit when period columns are zero.
    pub fn design_row(&self, covariates: &CovariateSet, key: &StratumKey) -> Result<Vec<f64>> {
        let cov = covariates.row(key, &self.layout.covariates(), 0.0)?;
        let mut row = vec![0.0; self.n_beta];
        self.layout.fill_row(key, &cov, &mut row)?;
        Ok(row)
    }

    /// Per-draw `exp(μ + σ²/2)` for `key`.
    pub fn fitted_rate_draws(&self, covariates: &CovariateSet, key: &StratumKey) -> Result<Vec<f64>> {
        let row = self.design_row(covariates, key)?;
        Ok(self
            .iter()
            .map(|d| {
                let mu: f64 = row.iter().zip(self.beta(d)).map(|(x, b)| x * b).sum();
                (mu + 0.5 * self.sigma2(d)).exp()
            })
            .collect())
    }

    /// Posterior mean and 95% interval of the fitted rate `exp(μ + σ²/2)`.
    pub fn fitted_rate(&self, covariates: &CovariateSet, key: &StratumKey) -> Result<Interval> {
        Ok(summarise(&self.fitted_rate_draws(covariates, key)?))
    }

    /// Writes `draws.bin` (little-endian f64, one column after another, each
    /// column chain by chain) and `draws.json`; latent rates go to `latent.bin`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n_draws = self.draws_per_chain();
        if self.chains.iter().any(|c| c.loglik.len() != n_draws) {
            return Err(Error::BadConfig("chains hold different draw counts".into()));
        }
        let mut columns = self.names.clone();
        columns.push("loglik".into());
        let header = DrawsHeader {
            format: FORMAT.into(),
            n_chains: self.n_chains(),
            n_draws,
            columns,
            n_beta: self.n_beta,
            n_rw: self.n_rw,
            n_cells: self.n_cells(),
            latent: self.latent().is_some(),
            keys: self.keys.clone(),
            layout: self.layout.clone(),
            config: self.config.clone(),
            priors: self.priors.clone(),
            diagnostics: self.diagnostics.clone(),
            convergence_warning: self.convergence_warning,
            acceptance: self.chains.iter().map(|c| c.acceptance).collect(),
        };
        let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Parse(e.to_string()))?;
        let hpath = dir.join("draws.json");
        fs::write(&hpath, json).map_err(|e| Error::io(&hpath, e))?;

        let bpath = dir.join("draws.bin");
        let mut w = BufWriter::new(fs::File::create(&bpath).map_err(|e| Error::io(&bpath, e))?);
        let io = |e| Error::io(&bpath, e);
        for j in 0..self.n_params() {
            for c in self.column(j) {
                for v in c {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
            }
        }
        for c in &self.chains {
            for v in &c.loglik {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;

        if header.latent {
            let lpath = dir.join("latent.bin");
            let mut w = BufWriter::new(fs::File::create(&lpath).map_err(|e| Error::io(&lpath, e))?);
            let n = self.n_cells();
            for i in 0..n {
                for c in &self.chains {
                    let l = c.latent.as_ref().expect("checked");
                    for k in 0..n_draws {
                        w.write_all(&l[k * n + i].to_le_bytes()).map_err(|e| Error::io(&lpath, e))?;
                    }
                }
            }
            w.flush().map_err(|e| Error::io(&lpath, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let hpath = dir.join("draws.json");
        let text = fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;
        let h: DrawsHeader = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if h.format != FORMAT {
            return Err(Error::Parse(format!("unknown draws format `{}`", h.format)));
        }
        let (m, n, q) = (h.n_chains, h.n_draws, h.columns.len() - 1);
        let cols = read_f64s(&dir.join("draws.bin"), (q + 1) * m * n)?;
        let mut chains: Vec<ChainDraws> = (0..m)
            .map(|c| ChainDraws {
                values: vec![0.0; n * q],
                loglik: cols[(q * m + c) * n..(q * m + c + 1) * n].to_vec(),
                latent: None,
                acceptance: h.acceptance.get(c).copied().unwrap_or_default(),
            })
            .collect();
        for j in 0..q {
            for (c, chain) in chains.iter_mut().enumerate() {
                for k in 0..n {
                    chain.values[k * q + j] = cols[(j * m + c) * n + k];
                }
            }
        }
        if h.latent {
            let cells = h.n_cells;
            let lat = read_f64s(&dir.join("latent.bin"), cells * m * n)?;
            for (c, chain) in chains.iter_mut().enumerate() {
                let mut l = vec![0.0; n * cells];
                for i in 0..cells {
                    for k in 0..n {
                        l[k * cells + i] = lat[(i * m + c) * n + k];
                    }
                }
                chain.latent = Some(l);
            }
        }
        let mut names = h.columns;
        names.pop();
        Ok(Self {
            layout: h.layout,
            names,
            n_beta: h.n_beta,
            n_rw: h.n_rw,
            keys: h.keys,
            config: h.config,
            priors: h.priors,
            chains,
            diagnostics: h.diagnostics,
            convergence_warning: h.convergence_warning,
        })
    }
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::with_capacity(expected * 8);
    BufReader::new(fs::File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Parse(format!(
            "{}: expected {} values, found {} bytes",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.125), 1.5);
        let s = summarise(&[2.0; 10]);
        assert_eq!((s.mean, s.lo, s.hi), (2.0, 2.0, 2.0));
    }
}
