use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MortalityPanel;
use crate::error::{Error, Result};
use crate::mcmc::{stream_rng, PoissonLognormal, PriorSet, TemperedSampler};
use crate::spec::{build_design, CovariateSet, ModelSpec};

/// Power-posterior ladder settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderConfig {
    /// Temperatures are `(i / rungs)^power` for `i = 0..=rungs`.
    pub rungs: usize,
    pub power: f64,
    /// Retained draws per rung, summed over chains.
    pub draws_per_rung: usize,
    /// Sweeps discarded at each rung after the temperature moves.
    pub burnin_per_rung: usize,
    /// Sweeps discarded before the first rung.
    pub initial_burnin: usize,
    pub chains: usize,
    pub seed: u64,
    pub noncentred: bool,
    /// Batches for the batch-means standard error at each rung.
    pub batches: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            rungs: 30,
            power: 5.0,
            draws_per_rung: 2000,
            burnin_per_rung: 200,
            initial_burnin: 1000,
            chains: 4,
            seed: 0,
            noncentred: true,
            batches: 20,
        }
    }
}

impl LadderConfig {
    pub fn temperatures(&self) -> Vec<f64> {
        (0..=self.rungs)
            .map(|i| (i as f64 / self.rungs as f64).powf(self.power))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.rungs == 0 || self.chains == 0 || self.batches < 2 {
            return Err(Error::BadConfig("ladder needs rungs, chains and two or more batches".into()));
        }
        if self.draws_per_rung < self.chains * self.batches {
            return Err(Error::BadConfig(format!(
                "{} draws per rung cannot fill {} batches on {} chains",
                self.draws_per_rung, self.batches, self.chains
            )));
        }
        if !(self.power > 0.0) {
            return Err(Error::BadConfig("ladder power must be positive".into()));
        }
        Ok(())
    }
}

/// Thermodynamic-integration estimate of `log p(D)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub log_marginal: f64,
    /// Monte-Carlo standard error from per-rung batch means.
    pub se: f64,
    pub temperatures: Vec<f64>,
    /// `E_t[log p(D | ·)]` at each temperature.
    pub mean_log_lik: Vec<f64>,
    pub rung_se: Vec<f64>,
}

fn batch_means_var(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var_batch = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    var_batch / batches as f64
}

/// Power-posterior thermodynamic integration with warm starts and the trapezoid rule.
///
/// Chains climb the ladder independently; every rung keeps
/// `draws_per_rung / chains` sweeps per chain.
pub fn thermodynamic_integration<S: TemperedSampler>(sampler: &S, cfg: &LadderConfig) -> Result<MarginalEstimate> {
    cfg.validate()?;
    let temps = cfg.temperatures();
    let per_chain = cfg.draws_per_rung / cfg.chains;
    let batches_per_chain = (cfg.batches / cfg.chains).max(2);
    let traces: Vec<Vec<Vec<f64>>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| -> Result<Vec<Vec<f64>>> {
            let mut rng = stream_rng(cfg.seed, c as u64);
            let mut state = sampler.init_state(c, &mut rng)?;
            for _ in 0..cfg.initial_burnin {
                sampler.sweep(&mut state, temps[0], true, &mut rng);
            }
            let mut out = Vec::with_capacity(temps.len());
            for &t in &temps {
                sampler.reset_adaptation(&mut state);
                for _ in 0..cfg.burnin_per_rung {
                    sampler.sweep(&mut state, t, true, &mut rng);
                }
                let mut ll = Vec::with_capacity(per_chain);
                for _ in 0..per_chain {
                    sampler.sweep(&mut state, t, false, &mut rng);
                    ll.push(sampler.log_likelihood(&state));
                }
                out.push(ll);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut mean_log_lik = Vec::with_capacity(temps.len());
    let mut rung_var = Vec::with_capacity(temps.len());
    for r in 0..temps.len() {
        let chain_means: Vec<f64> = traces
            .iter()
            .map(|t| t[r].iter().sum::<f64>() / t[r].len() as f64)
            .collect();
        let m = chain_means.iter().sum::<f64>() / chain_means.len() as f64;
        let v = traces
            .iter()
            .map(|t| batch_means_var(&t[r], batches_per_chain))
            .sum::<f64>()
            / (cfg.chains * cfg.chains) as f64;
        if !m.is_finite() {
            return Err(Error::MarginalUnstable(format!("non-finite mean log-likelihood at t = {}", temps[r])));
        }
        mean_log_lik.push(m);
        rung_var.push(v);
    }
    for r in 1..temps.len() {
        let drop = mean_log_lik[r - 1] - mean_log_lik[r];
        let tol = 5.0 * (rung_var[r - 1] + rung_var[r]).sqrt() + 1e-9 * mean_log_lik[r].abs();
        if drop > tol {
            return Err(Error::MarginalUnstable(format!(
                "expected log-likelihood falls by {drop:.3} between t = {:.3e} and t = {:.3e}",
                temps[r - 1],
                temps[r]
            )));
        }
    }
    let mut log_marginal = 0.0;
    let mut var = 0.0;
    let mut weights = vec![0.0; temps.len()];
    for r in 1..temps.len() {
        let h = temps[r] - temps[r - 1];
        log_marginal += 0.5 * h * (mean_log_lik[r - 1] + mean_log_lik[r]);
        weights[r - 1] += 0.5 * h;
        weights[r] += 0.5 * h;
    }
    for (w, v) in weights.iter().zip(&rung_var) {
        var += w * w * v;
    }
    Ok(MarginalEstimate {
        log_marginal,
        se: var.sqrt(),
        temperatures: temps,
        mean_log_lik,
        rung_se: rung_var.iter().map(|v| v.sqrt()).collect(),
    })
}

/// `log p(D | spec)` for the Poisson-lognormal model.
pub fn log_marginal(
    spec: &ModelSpec,
    panel: &MortalityPanel,
    covariates: &CovariateSet,
    priors: &PriorSet,
    cfg: &LadderConfig,
) -> Result<MarginalEstimate> {
    let design = build_design(spec, panel, covariates)?;
    let model = PoissonLognormal::new(&design, panel, priors, None, cfg.noncentred)?;
    thermodynamic_integration(&model, cfg)
}
