//! Blocked Metropolis-within-Gibbs sampler for the Poisson-lognormal model.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::{PriorSet, TemperedSampler};
use crate::data::MortalityPanel;
use crate::error::{Error, Result};
use crate::spec::DesignMatrix;

/// Support of the latent log-rates.
pub const Z_MIN: f64 = -30.0;
pub const Z_MAX: f64 = 0.0;

const TARGET_ACCEPT: f64 = 0.44;
const INIT_SIGMA2: f64 = 0.01;
const INIT_SIGMA2_KAPPA: f64 = 0.01;
const INIT_JITTER_SD: f64 = 0.05;

/// Columns of one random-walk (period) block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RwBlock {
    pub start: usize,
    pub len: usize,
}

/// Mutable state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub psi: Vec<f64>,
    pub sigma2_kappa: Vec<f64>,
    z_logstep: Vec<f64>,
    beta_logstep: Vec<f64>,
    sigma_logstep: f64,
    adapt_iter: usize,
    pub(crate) counts: AcceptCounts,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct AcceptCounts {
    pub z: (u64, u64),
    pub beta: (u64, u64),
    pub sigma: (u64, u64),
}

impl AcceptCounts {
    pub fn rates(&self) -> (f64, f64, f64) {
        let r = |(a, n): (u64, u64)| if n == 0 { f64::NAN } else { a as f64 / n as f64 };
        (r(self.z), r(self.beta), r(self.sigma))
    }
}

/// Precomputed data and structure for sampling one design.
#[derive(Debug, Clone)]
pub struct PoissonLognormal {
    pub deaths: Vec<f64>,
    pub exposure: Vec<f64>,
    /// `Σ log D! − D log E`, the constant part of the likelihood.
    log_lik_offset: f64,
    /// Row-wise nonzeros of the design.
    rows: Vec<Vec<(usize, f64)>>,
    /// Column-wise nonzeros of the design.
    cols: Vec<Vec<(usize, f64)>>,
    xtx: DMatrix<f64>,
    pub rw: Vec<RwBlock>,
    in_rw: Vec<bool>,
    pub priors: PriorSet,
    psi_divisor: f64,
    pub fixed_sigma2: Option<f64>,
    pub noncentred: bool,
    x: DMatrix<f64>,
}

impl PoissonLognormal {
    pub fn new(
        design: &DesignMatrix,
        panel: &MortalityPanel,
        priors: &PriorSet,
        fixed_sigma2: Option<f64>,
        noncentred: bool,
    ) -> Result<Self> {
        priors.validate()?;
        let cells = panel.cells();
        let deaths: Vec<f64> = design.rows.iter().map(|&i| cells[i].deaths as f64).collect();
        let exposure: Vec<f64> = design.rows.iter().map(|&i| cells[i].exposure).collect();
        let x = design.x.clone();
        let (n, p) = x.shape();
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); p];
        for i in 0..n {
            for j in 0..p {
                let v = x[(i, j)];
                if v != 0.0 {
                    rows[i].push((j, v));
                    cols[j].push((i, v));
                }
            }
        }
        let rw: Vec<RwBlock> = design
            .layout
            .period_blocks()
            .filter(|b| b.len > 0)
            .map(|b| RwBlock {
                start: b.start,
                len: b.len,
            })
            .collect();
        let mut in_rw = vec![false; p];
        for b in &rw {
            in_rw[b.start..b.start + b.len].fill(true);
        }
        let n_years = design.layout.years().len();
        let psi_divisor = priors.psi_divisor.unwrap_or((n_years as f64 - 1.0).max(1.0));
        Ok(Self {
            log_lik_offset: deaths
                .iter()
                .zip(&exposure)
                .map(|(&d, &e)| ln_gamma(d + 1.0) - d * e.ln())
                .sum(),
            deaths,
            exposure,
            rows,
            cols,
            xtx: x.transpose() * &x,
            rw,
            in_rw,
            priors: priors.clone(),
            psi_divisor,
            fixed_sigma2,
            noncentred,
            x,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.deaths.len()
    }

    pub fn n_coef(&self) -> usize {
        self.cols.len()
    }

    fn mu_of(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * beta[j]).sum())
            .collect()
    }

    #[inline]
    fn cell_loglik(&self, i: usize, z: f64) -> f64 {
        self.deaths[i] * z - self.exposure[i] * z.exp()
    }

    /// Poisson log-likelihood of the data given latent log-rates.
    pub fn log_likelihood_at(&self, z: &[f64]) -> f64 {
        z.iter()
            .enumerate()
            .map(|(i, &zi)| self.cell_loglik(i, zi))
            .sum::<f64>()
            - self.log_lik_offset
    }

    /// Prior precision and linear term of the coefficients given RW hyperparameters.
    fn beta_prior(&self, psi: &[f64], sigma2_kappa: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.n_coef();
        let mut prec = DMatrix::zeros(p, p);
        let mut lin = DVector::zeros(p);
        for j in 0..p {
            if !self.in_rw[j] {
                prec[(j, j)] = 1.0 / self.priors.beta_var;
                lin[j] = self.priors.beta_mean / self.priors.beta_var;
            }
        }
        for (b, blk) in self.rw.iter().enumerate() {
            let tau = 1.0 / sigma2_kappa[b];
            let s = blk.start;
            let m = blk.len;
            for k in 0..m {
                prec[(s + k, s + k)] += if k + 1 < m { 2.0 * tau } else { tau };
                if k + 1 < m {
                    prec[(s + k, s + k + 1)] -= tau;
                    prec[(s + k + 1, s + k)] -= tau;
                }
            }
            lin[s + m - 1] += psi[b] * tau;
        }
        (prec, lin)
    }

    fn increments(beta: &[f64], blk: RwBlock) -> Vec<f64> {
        let path = &beta[blk.start..blk.start + blk.len];
        let mut prev = 0.0;
        path.iter()
            .map(|&k| {
                let d = k - prev;
                prev = k;
                d
            })
            .collect()
    }

    fn sample_inv_gamma(shape: f64, scale: f64, rng: &mut ChaCha8Rng) -> f64 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        scale / g
    }

    fn ln_inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
        -(shape + 1.0) * x.ln() - scale / x
    }

    fn update_z(&self, s: &mut ChainState, t: f64, adapt: bool, rng: &mut ChaCha8Rng) {
        let inv2s = 0.5 / s.sigma2;
        let gain = adapt_gain(s.adapt_iter);
        for i in 0..s.z.len() {
            let z = s.z[i];
            let zp = z + s.z_logstep[i].exp() * rng.sample::<f64, _>(StandardNormal);
            let accepted = if (Z_MIN..=Z_MAX).contains(&zp) {
                let m = s.mu[i];
                let log_r = t * (self.cell_loglik(i, zp) - self.cell_loglik(i, z))
                    - ((zp - m).powi(2) - (z - m).powi(2)) * inv2s;
                log_r >= 0.0 || rng.random::<f64>().ln() < log_r
            } else {
                false
            };
            if accepted {
                s.z[i] = zp;
            }
            s.counts.z.1 += 1;
            s.counts.z.0 += accepted as u64;
            if adapt {
                s.z_logstep[i] += gain * (accepted as u8 as f64 - TARGET_ACCEPT);
            }
        }
    }

    /// Exact draw of `β | z, σ², ψ, σ²_κ`.
    pub fn gibbs_beta(&self, s: &mut ChainState, rng: &mut ChaCha8Rng) {
        let (mut q, mut b) = self.beta_prior(&s.psi, &s.sigma2_kappa);
        let inv = 1.0 / s.sigma2;
        q += &self.xtx * inv;
        for (j, col) in self.cols.iter().enumerate() {
            b[j] += col.iter().map(|&(i, v)| v * s.z[i]).sum::<f64>() * inv;
        }
        let chol = Cholesky::new(q).expect("coefficient precision is positive definite");
        let mean = chol.solve(&b);
        let w = DVector::from_iterator(
            mean.len(),
            (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        let dev = chol
            .l()
            .transpose()
            .solve_upper_triangular(&w)
            .expect("triangular factor is non-singular");
        s.beta = (mean + dev).iter().copied().collect();
        s.mu = self.mu_of(&s.beta);
    }

    /// Moves one coefficient together with every latent log-rate it touches,
    /// holding the latent residuals `z - μ` fixed.
    fn noncentred_beta(&self, s: &mut ChainState, t: f64, adapt: bool, rng: &mut ChaCha8Rng) {
        let (prec, lin) = self.beta_prior(&s.psi, &s.sigma2_kappa);
        let gain = adapt_gain(s.adapt_iter);
        for j in 0..self.n_coef() {
            let step = s.beta_logstep[j].exp() * rng.sample::<f64, _>(StandardNormal);
            let col = &self.cols[j];
            let mut in_support = true;
            let mut dll = 0.0;
            for &(i, v) in col {
                let zp = s.z[i] + v * step;
                if !(Z_MIN..=Z_MAX).contains(&zp) {
                    in_support = false;
                    break;
                }
                dll += self.cell_loglik(i, zp) - self.cell_loglik(i, s.z[i]);
            }
            let accepted = in_support && {
                let pb: f64 = (0..self.n_coef()).map(|k| prec[(j, k)] * s.beta[k]).sum();
                let dprior = -0.5 * (2.0 * step * pb + step * step * prec[(j, j)]) + lin[j] * step;
                let log_r = t * dll + dprior;
                log_r >= 0.0 || rng.random::<f64>().ln() < log_r
            };
            if accepted {
                s.beta[j] += step;
                for &(i, v) in col {
                    s.z[i] += v * step;
                    s.mu[i] += v * step;
                }
            }
            s.counts.beta.1 += 1;
            s.counts.beta.0 += accepted as u64;
            if adapt {
                s.beta_logstep[j] += gain * (accepted as u8 as f64 - TARGET_ACCEPT);
            }
        }
    }

    /// Exact draw of `σ² | z, β`.
    pub fn gibbs_sigma2(&self, s: &mut ChainState, rng: &mut ChaCha8Rng) {
        let ss: f64 = s.z.iter().zip(&s.mu).map(|(z, m)| (z - m).powi(2)).sum();
        let shape = self.priors.sigma2_shape + 0.5 * s.z.len() as f64;
        let scale = self.priors.sigma2_scale + 0.5 * ss;
        s.sigma2 = Self::sample_inv_gamma(shape, scale, rng);
    }

    /// Rescales the latent residuals with a log-scale move on `σ²`.
    fn noncentred_sigma2(&self, s: &mut ChainState, t: f64, adapt: bool, rng: &mut ChaCha8Rng) {
        let step = s.sigma_logstep.exp() * rng.sample::<f64, _>(StandardNormal);
        let sp = s.sigma2 * step.exp();
        let ratio = (sp / s.sigma2).sqrt();
        let mut zp = Vec::with_capacity(s.z.len());
        let mut dll = 0.0;
        let mut in_support = true;
        for i in 0..s.z.len() {
            let v = s.mu[i] + ratio * (s.z[i] - s.mu[i]);
            if !(Z_MIN..=Z_MAX).contains(&v) {
                in_support = false;
                break;
            }
            dll += self.cell_loglik(i, v) - self.cell_loglik(i, s.z[i]);
            zp.push(v);
        }
        let (a, b) = (self.priors.sigma2_shape, self.priors.sigma2_scale);
        let accepted = in_support && {
            let log_r = t * dll + Self::ln_inv_gamma(sp, a, b) - Self::ln_inv_gamma(s.sigma2, a, b) + step;
            log_r >= 0.0 || rng.random::<f64>().ln() < log_r
        };
        if accepted {
            s.z = zp;
            s.sigma2 = sp;
        }
        s.counts.sigma.1 += 1;
        s.counts.sigma.0 += accepted as u64;
        if adapt {
            s.sigma_logstep += adapt_gain(s.adapt_iter) * (accepted as u8 as f64 - TARGET_ACCEPT);
        }
    }

    fn gibbs_walk(&self, s: &mut ChainState, rng: &mut ChaCha8Rng) {
        let c = self.psi_divisor;
        for (b, &blk) in self.rw.iter().enumerate() {
            let inc = Self::increments(&s.beta, blk);
            let n = inc.len() as f64;
            let prec = (n + c) / s.sigma2_kappa[b];
            let mean = (inc.iter().sum::<f64>() + c * self.priors.psi_mean) / (n + c);
            s.psi[b] = mean + rng.sample::<f64, _>(StandardNormal) / prec.sqrt();
            let psi = s.psi[b];
            let ss: f64 = inc.iter().map(|d| (d - psi).powi(2)).sum();
            let shape = self.priors.kappa_shape + 0.5 * (n + 1.0);
            let scale = self.priors.kappa_scale + 0.5 * ss + 0.5 * c * (psi - self.priors.psi_mean).powi(2);
            s.sigma2_kappa[b] = Self::sample_inv_gamma(shape, scale, rng);
        }
    }

    /// Ridge-weighted least squares of log crude rates on the non-period columns.
    fn initial_beta(&self) -> Result<Vec<f64>> {
        let p = self.n_coef();
        let y: Vec<f64> = self
            .deaths
            .iter()
            .zip(&self.exposure)
            .map(|(d, e)| ((d + 0.5) / e).ln())
            .collect();
        let w: Vec<f64> = self.deaths.iter().map(|d| d + 0.5).collect();
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, vj) in row {
                if self.in_rw[j] {
                    continue;
                }
                rhs[j] += w[i] * vj * y[i];
                for &(k, vk) in row {
                    if !self.in_rw[k] {
                        a[(j, k)] += w[i] * vj * vk;
                    }
                }
            }
        }
        let ridge = 1e-8 * (0..p).map(|j| a[(j, j)]).fold(0.0, f64::max).max(1.0);
        for j in 0..p {
            a[(j, j)] += if self.in_rw[j] { 1.0 } else { ridge };
        }
        let chol = Cholesky::new(a)
            .ok_or_else(|| Error::InitFailure("initial least-squares system is singular".into()))?;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }

    pub fn log_posterior(&self, s: &ChainState, t: f64) -> f64 {
        let (prec, lin) = self.beta_prior(&s.psi, &s.sigma2_kappa);
        let b = DVector::from_column_slice(&s.beta);
        let prior_beta = -0.5 * (b.transpose() * &prec * &b)[(0, 0)] + lin.dot(&b);
        let ss: f64 = s.z.iter().zip(&s.mu).map(|(z, m)| (z - m).powi(2)).sum();
        let latent = -0.5 * ss / s.sigma2 - 0.5 * s.z.len() as f64 * s.sigma2.ln();
        t * self.log_likelihood_at(&s.z)
            + latent
            + prior_beta
            + Self::ln_inv_gamma(s.sigma2, self.priors.sigma2_shape, self.priors.sigma2_scale)
    }

    /// Design matrix used by this sampler.
    pub fn design_x(&self) -> &DMatrix<f64> {
        &self.x
    }
}

fn adapt_gain(iter: usize) -> f64 {
    (1.0 + iter as f64).powf(-0.6)
}

impl TemperedSampler for PoissonLognormal {
    type State = ChainState;

    fn init_state(&self, chain: usize, rng: &mut ChaCha8Rng) -> Result<ChainState> {
        let _ = chain;
        let mut beta = self.initial_beta()?;
        for (j, b) in beta.iter_mut().enumerate() {
            if self.in_rw[j] {
                *b = 0.0;
            } else {
                *b += INIT_JITTER_SD * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mu = self.mu_of(&beta);
        let z: Vec<f64> = mu.iter().map(|m| m.clamp(Z_MIN + 1e-6, Z_MAX - 1e-6)).collect();
        let sigma2 = self.fixed_sigma2.unwrap_or(INIT_SIGMA2);
        let n_rw = self.rw.len();
        let z_logstep = z
            .iter()
            .zip(&self.exposure)
            .map(|(&zi, &e)| (2.4 / (e * zi.exp() + 1.0 / sigma2).sqrt()).ln())
            .collect();
        let beta_logstep = self
            .cols
            .iter()
            .map(|col| {
                let info: f64 = col.iter().map(|&(i, v)| v * v * self.exposure[i] * z[i].exp()).sum();
                (2.4 / (info + 1e-4).sqrt()).ln()
            })
            .collect();
        let state = ChainState {
            sigma_logstep: (2.4 * (2.0 / z.len() as f64).sqrt()).ln(),
            z,
            mu,
            beta,
            sigma2,
            psi: vec![self.priors.psi_mean; n_rw],
            sigma2_kappa: vec![INIT_SIGMA2_KAPPA; n_rw],
            z_logstep,
            beta_logstep,
            adapt_iter: 0,
            counts: AcceptCounts::default(),
        };
        let lp = self.log_posterior(&state, 1.0);
        if !lp.is_finite() {
            return Err(Error::InitFailure(format!("log-posterior {lp} at chain {chain} start")));
        }
        Ok(state)
    }

    fn sweep(&self, s: &mut ChainState, t: f64, adapt: bool, rng: &mut ChaCha8Rng) {
        self.update_z(s, t, adapt, rng);
        self.gibbs_beta(s, rng);
        if self.noncentred {
            self.noncentred_beta(s, t, adapt, rng);
        }
        if self.fixed_sigma2.is_none() {
            self.gibbs_sigma2(s, rng);
            if self.noncentred {
                self.noncentred_sigma2(s, t, adapt, rng);
            }
        }
        self.gibbs_walk(s, rng);
        if adapt {
            s.adapt_iter += 1;
        }
    }

    fn log_likelihood(&self, s: &ChainState) -> f64 {
        self.log_likelihood_at(&s.z)
    }

    fn reset_adaptation(&self, s: &mut ChainState) {
        s.adapt_iter = 10;
        s.counts = AcceptCounts::default();
    }
}
