//! Posterior sampling for Poisson-lognormal models with random-walk period effects.
//!
//! Each sweep updates, in order: the latent log-rates cell by cell (adaptive
//! random-walk Metropolis), the coefficients jointly (exact Gaussian Gibbs),
//! each coefficient again together with the latent rates it moves
//! (non-centred Metropolis), `σ²` (inverse-gamma Gibbs, then a non-centred
//! rescaling move), and per period block the drift `ψ` and walk variance
//! `σ²_κ` (Gibbs). Latent log-rates live in `[-30, 0]`.

mod diagnostics;
mod draws;
mod model;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{ess, split_rhat, Acceptance, Diagnostics};
pub use draws::{quantile, summarise, ChainDraws, Interval, PosteriorDraws};
pub use model::{ChainState, PoissonLognormal, RwBlock, Z_MAX, Z_MIN};

use crate::data::MortalityPanel;
use crate::error::{Error, Result};
use crate::spec::{build_design, CovariateSet, DesignMatrix, ModelSpec};

/// Hyperparameters of the coefficient, variance and random-walk priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSet {
    pub beta_mean: f64,
    pub beta_var: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub kappa_shape: f64,
    pub kappa_scale: f64,
    pub psi_mean: f64,
    /// `σ²_ψ = σ²_κ / psi_divisor`; defaults to the number of observed years minus one.
    pub psi_divisor: Option<f64>,
}

impl Default for PriorSet {
    fn default() -> Self {
        Self {
            beta_mean: 0.0,
            beta_var: 1e4,
            sigma2_shape: 1.0,
            sigma2_scale: 0.1,
            kappa_shape: 1.0,
            kappa_scale: 0.001,
            psi_mean: 0.0,
            psi_divisor: None,
        }
    }
}

impl PriorSet {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta_var", self.beta_var),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_scale", self.sigma2_scale),
            ("kappa_shape", self.kappa_shape),
            ("kappa_scale", self.kappa_scale),
            ("psi_divisor", self.psi_divisor.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::BadConfig(format!("prior {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Holds `σ²` at this value instead of sampling it.
    pub fixed_sigma2: Option<f64>,
    /// Power applied to the Poisson likelihood.
    pub temperature: f64,
    /// Keep the latent log-rates of every stored draw.
    pub store_latent: bool,
    pub noncentred: bool,
    pub rhat_threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iters: 20_000,
            burnin: 10_000,
            thin: 10,
            seed: 0,
            fixed_sigma2: None,
            temperature: 1.0,
            store_latent: false,
            noncentred: true,
            rhat_threshold: 1.1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::BadConfig("at least one chain required".into()));
        }
        if self.iters <= self.burnin {
            return Err(Error::BadConfig(format!(
                "iters ({}) must exceed burnin ({})",
                self.iters, self.burnin
            )));
        }
        if self.thin == 0 || self.thin > self.iters - self.burnin {
            return Err(Error::BadConfig(format!("thin {} leaves no draws", self.thin)));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(Error::BadConfig(format!("temperature {} outside [0, 1]", self.temperature)));
        }
        if let Some(s) = self.fixed_sigma2 {
            if !(s > 0.0) {
                return Err(Error::BadConfig(format!("fixed sigma2 {s} must be positive")));
            }
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A sampler whose likelihood can be raised to a power in `[0, 1]`.
pub trait TemperedSampler: Sync {
    type State: Clone + Send;

    fn init_state(&self, chain: usize, rng: &mut ChaCha8Rng) -> Result<Self::State>;

    /// One full sweep targeting `likelihood^temperature × prior`.
    fn sweep(&self, state: &mut Self::State, temperature: f64, adapt: bool, rng: &mut ChaCha8Rng);

    /// Untempered log-likelihood at the current state.
    fn log_likelihood(&self, state: &Self::State) -> f64;

    /// Restarts proposal adaptation, e.g. when the temperature changes.
    fn reset_adaptation(&self, _state: &mut Self::State) {}
}

/// Draws from the posterior of `spec` fitted to `panel`.
pub fn sample(
    spec: &ModelSpec,
    panel: &MortalityPanel,
    covariates: &CovariateSet,
    priors: &PriorSet,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let design = build_design(spec, panel, covariates)?;
    sample_design(&design, panel, priors, config)
}

pub fn sample_design(
    design: &DesignMatrix,
    panel: &MortalityPanel,
    priors: &PriorSet,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let model = PoissonLognormal::new(design, panel, priors, config.fixed_sigma2, config.noncentred)?;
    let chains: Vec<ChainDraws> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&model, c, config))
        .collect::<Result<_>>()?;
    Ok(PosteriorDraws::assemble(design, &model, priors.clone(), config.clone(), chains))
}

fn run_chain(model: &PoissonLognormal, chain: usize, cfg: &SamplerConfig) -> Result<ChainDraws> {
    let mut rng = stream_rng(cfg.seed, chain as u64);
    let mut s = model.init_state(chain, &mut rng)?;
    let q = model.n_coef() + 1 + 2 * model.rw.len();
    let n_keep = cfg.draws_per_chain();
    let mut out = ChainDraws {
        values: Vec::with_capacity(n_keep * q),
        loglik: Vec::with_capacity(n_keep),
        latent: cfg.store_latent.then(|| Vec::with_capacity(n_keep * model.n_cells())),
        acceptance: Acceptance::default(),
    };
    for it in 0..cfg.iters {
        if it == cfg.burnin {
            s.counts = Default::default();
        }
        model.sweep(&mut s, cfg.temperature, it < cfg.burnin, &mut rng);
        if it >= cfg.burnin && (it - cfg.burnin + 1).is_multiple_of(cfg.thin) && out.loglik.len() < n_keep {
            out.values.extend_from_slice(&s.beta);
            out.values.push(s.sigma2);
            out.values.extend_from_slice(&s.psi);
            out.values.extend_from_slice(&s.sigma2_kappa);
            out.loglik.push(model.log_likelihood(&s));
            if let Some(l) = out.latent.as_mut() {
                l.extend_from_slice(&s.z);
            }
        }
    }
    let (latent, coefficients, sigma2) = s.counts.rates();
    out.acceptance = Acceptance {
        latent,
        coefficients,
        sigma2,
    };
    Ok(out)
}
