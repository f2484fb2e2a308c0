use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mcmc::{Z_MAX, Z_MIN};

pub const GRID_POINTS: usize = 10_000;
const INNER_POINTS: usize = 401;
const MAX_WIDENINGS: usize = 3;
/// Log-density drop that counts as negligible at the grid edges.
const EDGE_DROP: f64 = 30.0;

/// Cells sharing one log-rate coefficient `β`, with `z_i ~ N(β, σ²)` on `[-30, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProblem {
    /// `(deaths, exposure)` per cell.
    pub cells: Vec<(u64, f64)>,
    pub sigma2: f64,
    pub prior_mean: f64,
    /// Infinite for a flat prior.
    pub prior_var: f64,
}

/// A normalised density on an even grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub step: f64,
}

impl GridPosterior {
    /// Normalises `exp(log_density)` on `GRID_POINTS` points spanning `[lo, hi]`.
    pub fn from_log_density(lo: f64, hi: f64, log_density: impl Fn(f64) -> f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::OracleFailure(format!("empty grid [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|k| lo + k as f64 * step).collect();
        let logp: Vec<f64> = grid.iter().map(|&x| log_density(x)).collect();
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::OracleFailure("density vanishes on the grid".into()));
        }
        let mut density: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let mass = step * (density.iter().sum::<f64>() - 0.5 * (density[0] + density[GRID_POINTS - 1]));
        density.iter_mut().for_each(|p| *p /= mass);
        Ok(Self { grid, density, step })
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.density).map(|(x, p)| x * p).sum::<f64>() * self.step
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        (self.grid.iter().zip(&self.density).map(|(x, p)| (x - m).powi(2) * p).sum::<f64>() * self.step).sqrt()
    }

    pub fn mode(&self) -> f64 {
        let i = (0..self.density.len())
            .max_by(|&a, &b| self.density[a].total_cmp(&self.density[b]))
            .expect("non-empty grid");
        self.grid[i]
    }

    /// Cumulative distribution by the trapezoid rule, linear between nodes.
    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, h) = (self.grid[0], self.step);
        if x <= lo {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 1..self.grid.len() {
            let seg = 0.5 * h * (self.density[i - 1] + self.density[i]);
            if x < self.grid[i] {
                let frac = (x - self.grid[i - 1]) / h;
                let d_x = self.density[i - 1] + frac * (self.density[i] - self.density[i - 1]);
                return acc + 0.5 * (x - self.grid[i - 1]) * (self.density[i - 1] + d_x);
            }
            acc += seg;
        }
        1.0
    }

    /// Kolmogorov-Smirnov distance to an empirical sample.
    pub fn ks_distance(&self, sample: &[f64]) -> f64 {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = self.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    /// `KL(self ‖ q)` for a log-density `q`.
    pub fn kl_to(&self, log_q: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.density)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&x, &p)| p * (p.ln() - log_q(x)))
            .sum::<f64>()
            * self.step
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log ∫ Poisson(D | E e^z) N(z; β, σ²) dz` over the latent support.
pub fn cell_log_marginal(deaths: u64, exposure: f64, beta: f64, sigma2: f64) -> f64 {
    let d = deaths as f64;
    let log_pois = |z: f64| d * z + d * exposure.ln() - exposure * z.exp() - ln_gamma(d + 1.0);
    if sigma2 == 0.0 {
        return if (Z_MIN..=Z_MAX).contains(&beta) {
            log_pois(beta)
        } else {
            f64::NEG_INFINITY
        };
    }
    // Newton for the mode of the log-concave integrand.
    let mut z = beta.clamp(Z_MIN, Z_MAX);
    for _ in 0..100 {
        let g = d - exposure * z.exp() - (z - beta) / sigma2;
        let h = exposure * z.exp() + 1.0 / sigma2;
        let next = (z + g / h).clamp(Z_MIN, Z_MAX);
        if (next - z).abs() < 1e-12 {
            z = next;
            break;
        }
        z = next;
    }
    let width = 12.0 / (exposure * z.exp() + 1.0 / sigma2).sqrt();
    let (lo, hi) = ((z - width).max(Z_MIN), (z + width).min(Z_MAX));
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    let h = (hi - lo) / (INNER_POINTS - 1) as f64;
    let norm = -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let terms: Vec<f64> = (0..INNER_POINTS)
        .map(|k| {
            let zk = lo + k as f64 * h;
            let w: f64 = if k == 0 || k == INNER_POINTS - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w.ln() + log_pois(zk) + norm - (zk - beta).powi(2) / (2.0 * sigma2)
        })
        .collect();
    log_sum_exp(&terms) + (h / 3.0).ln()
}

/// Quadrature posterior of the shared coefficient on a 10⁴-point grid.
///
/// The grid is widened up to three times while the density is not
/// negligible at its edges.
pub fn oracle_posterior_1d(problem: &OracleProblem) -> Result<GridPosterior> {
    posterior_grid(problem).map(|(g, _)| g)
}

fn posterior_grid(problem: &OracleProblem) -> Result<(GridPosterior, f64)> {
    if problem.cells.is_empty() || problem.cells.len() > 5 {
        return Err(Error::OracleFailure("oracle takes one to five cells".into()));
    }
    let d: f64 = problem.cells.iter().map(|c| c.0 as f64).sum();
    let e: f64 = problem.cells.iter().map(|c| c.1).sum();
    let n = problem.cells.len() as f64;
    let lik_prec = 1.0 / (1.0 / (d + 0.5) + problem.sigma2 / n);
    let prior_prec = if problem.prior_var.is_finite() { 1.0 / problem.prior_var } else { 0.0 };
    let lik_mean = ((d + 0.5) / e).ln();
    let centre = (lik_prec * lik_mean + prior_prec * problem.prior_mean) / (lik_prec + prior_prec);
    let mut half = 12.0 / (lik_prec + prior_prec).sqrt();
    for _ in 0..=MAX_WIDENINGS {
        let lo = centre - half;
        let step = 2.0 * half / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|k| lo + k as f64 * step).collect();
        let logp: Vec<f64> = grid
            .iter()
            .map(|&b| {
                let prior = if prior_prec > 0.0 {
                    -0.5 * (b - problem.prior_mean).powi(2) * prior_prec
                } else {
                    0.0
                };
                prior
                    + problem
                        .cells
                        .iter()
                        .map(|&(dd, ee)| cell_log_marginal(dd, ee, b, problem.sigma2))
                        .sum::<f64>()
            })
            .collect();
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::OracleFailure("density vanishes on the grid".into()));
        }
        let edge = logp[0].max(logp[GRID_POINTS - 1]);
        if edge > max - EDGE_DROP {
            half *= 2.0;
            continue;
        }
        let mut density: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let mass: f64 = step
            * (density.iter().sum::<f64>() - 0.5 * (density[0] + density[GRID_POINTS - 1]));
        density.iter_mut().for_each(|p| *p /= mass);
        return Ok((GridPosterior { grid, density, step }, max + mass.ln()));
    }
    Err(Error::OracleFailure(format!(
        "posterior not contained after {MAX_WIDENINGS} widenings"
    )))
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `log p(D)` when the prior on each latent is `N(β, σ²)` conditioned to
/// `[-30, 0]`, i.e. the evidence of the model the sampler targets.
///
/// Requires a proper prior.
pub fn oracle_log_evidence(problem: &OracleProblem) -> Result<f64> {
    if !problem.prior_var.is_finite() {
        return Err(Error::OracleFailure("evidence needs a proper prior".into()));
    }
    let (_, log_mass) = posterior_grid(problem)?;
    let v = problem.prior_var;
    let log_prior_norm = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
    let n = problem.cells.len() as f64;
    let sd = problem.sigma2.sqrt();
    let prior_pdf = |b: f64| (log_prior_norm - 0.5 * (b - problem.prior_mean).powi(2) / v).exp();
    let log_box = if sd == 0.0 {
        let s = v.sqrt();
        (normal_cdf((Z_MAX - problem.prior_mean) / s) - normal_cdf((Z_MIN - problem.prior_mean) / s)).ln()
    } else {
        let (lo, hi) = (Z_MIN - 12.0 * sd, Z_MAX + 12.0 * sd);
        let k = GRID_POINTS + 1;
        let h = (hi - lo) / (k - 1) as f64;
        let total: f64 = (0..k)
            .map(|i| {
                let b = lo + i as f64 * h;
                let w = if i == 0 || i == k - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let p = normal_cdf((Z_MAX - b) / sd) - normal_cdf((Z_MIN - b) / sd);
                w * prior_pdf(b) * p.powf(n)
            })
            .sum();
        (total * h / 3.0).ln()
    };
    Ok(log_mass + log_prior_norm - log_box)
}
