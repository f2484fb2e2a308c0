use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::data::MortalityPanel;
use crate::error::{Error, Result};
use crate::mcmc::{stream_rng, PosteriorDraws, Z_MAX, Z_MIN};
use crate::spec::CovariateSet;

/// Antithetic pairs per cell in the Monte-Carlo likelihood.
pub const DIC_MC_PAIRS: usize = 32;
const DIC_MC_SEED: u64 = 0x0D1C;

/// Observed-data log-likelihood with the lognormal layer integrated by
/// antithetic Monte Carlo on a fixed set of normal deviates.
pub struct MarginalLikelihood {
    deaths: Vec<f64>,
    exposure: Vec<f64>,
    log_factorial: Vec<f64>,
    eps: Vec<f64>,
}

impl MarginalLikelihood {
    pub fn new(deaths: Vec<f64>, exposure: Vec<f64>) -> Self {
        let mut rng = stream_rng(DIC_MC_SEED, 0);
        let half: Vec<f64> = (0..DIC_MC_PAIRS).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eps = half.iter().copied().chain(half.iter().map(|e| -e)).collect();
        Self {
            log_factorial: deaths.iter().map(|&d| ln_gamma(d + 1.0)).collect(),
            deaths,
            exposure,
            eps,
        }
    }

    /// `log f(D | μ, σ²)` summed over cells.
    pub fn log_lik(&self, mu: &[f64], sigma2: f64) -> f64 {
        let sigma = sigma2.sqrt();
        let mut total = 0.0;
        let mut terms = vec![0.0; self.eps.len()];
        for (i, &mu_i) in mu.iter().enumerate() {
            let (d, e) = (self.deaths[i], self.exposure[i]);
            for (t, &eps) in terms.iter_mut().zip(&self.eps) {
                let z = mu_i + sigma * eps;
                *t = if (Z_MIN..=Z_MAX).contains(&z) {
                    d * z - e * z.exp()
                } else {
                    f64::NEG_INFINITY
                };
            }
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = terms.iter().map(|t| (t - m).exp()).sum::<f64>() / terms.len() as f64;
            total += m + mean.ln() + d * e.ln() - self.log_factorial[i];
        }
        total
    }
}

/// Components of the deviance information criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DicReport {
    pub dic: f64,
    /// Posterior mean of the log-likelihood.
    pub mean_log_lik: f64,
    /// Log-likelihood at the posterior mean of `(β, σ²)`.
    pub plugin_log_lik: f64,
    /// Effective number of parameters, `2 (plugin − mean)`.
    pub p_d: f64,
}

/// `DIC = −4 E[log f(D | β)] + 2 log f(D | β̂)` with `β̂` the posterior mean.
pub fn dic(draws: &PosteriorDraws, panel: &MortalityPanel, covariates: &CovariateSet) -> Result<DicReport> {
    let rows: Vec<Vec<f64>> = draws
        .keys
        .iter()
        .map(|k| draws.design_row(covariates, k))
        .collect::<Result<_>>()?;
    let mut deaths = Vec::with_capacity(rows.len());
    let mut exposure = Vec::with_capacity(rows.len());
    for k in &draws.keys {
        let c = panel
            .get(k)
            .ok_or_else(|| Error::DicFailure(format!("cell {k} missing from panel")))?;
        deaths.push(c.deaths as f64);
        exposure.push(c.exposure);
    }
    let lik = MarginalLikelihood::new(deaths, exposure);
    let mu_of = |beta: &[f64]| -> Vec<f64> {
        rows.iter()
            .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    };
    let all: Vec<&[f64]> = draws.iter().collect();
    let per_draw: Vec<f64> = all
        .par_iter()
        .map(|d| lik.log_lik(&mu_of(draws.beta(d)), draws.sigma2(d)))
        .collect();
    let mean_log_lik = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
    let pm = draws.posterior_mean();
    let plugin_log_lik = lik.log_lik(&mu_of(draws.beta(&pm)), draws.sigma2(&pm));
    let dic = -4.0 * mean_log_lik + 2.0 * plugin_log_lik;
    if !dic.is_finite() {
        return Err(Error::DicFailure(format!(
            "non-finite likelihood (mean {mean_log_lik}, plug-in {plugin_log_lik})"
        )));
    }
    Ok(DicReport {
        dic,
        mean_log_lik,
        plugin_log_lik,
        p_d: 2.0 * (plugin_log_lik - mean_log_lik),
    })
}
