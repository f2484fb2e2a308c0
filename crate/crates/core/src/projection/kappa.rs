use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcmc::{stream_rng, PosteriorDraws};

/// `κ*_h = κ*_{h−1} + ψ + ε_h`, `ε_h ~ N(0, σ²_κ)`, for `h = 1..=steps`.
///
/// Element 0 of the result is the anchor itself.
pub fn random_walk<R: Rng + ?Sized>(anchor: f64, psi: f64, sigma2_kappa: f64, steps: usize, rng: &mut R) -> Vec<f64> {
    let sd = sigma2_kappa.sqrt();
    let mut path = Vec::with_capacity(steps + 1);
    path.push(anchor);
    let mut k = anchor;
    for _ in 0..steps {
        let e: f64 = StandardNormal.sample(rng);
        k += psi + sd * e;
        path.push(k);
    }
    path
}

/// Extrapolated period effects, one walk per draw and period block.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaProjection {
    /// Last observed year; index 0 of every path.
    pub anchor_year: i32,
    pub steps: usize,
    /// `paths[draw][block]` has `steps + 1` values starting at the anchor.
    pub paths: Vec<Vec<Vec<f64>>>,
}

impl KappaProjection {
    pub fn years(&self) -> Vec<i32> {
        (0..=self.steps as i32).map(|h| self.anchor_year + h).collect()
    }

    /// `κ*` of `block` in `year` for one draw.
    pub fn value(&self, draw: usize, block: usize, year: i32) -> Option<f64> {
        let h = usize::try_from(year - self.anchor_year).ok()?;
        self.paths[draw][block].get(h).copied()
    }
}

/// Per-draw RNG stream; the walk consumes it first, so later deviates line up
/// across runs that share `seed`.
pub(crate) fn draw_rng(seed: u64, draw: usize) -> rand_chacha::ChaCha8Rng {
    stream_rng(seed, draw as u64)
}

pub(crate) fn walk_draw(
    draws: &PosteriorDraws,
    draw: &[f64],
    steps: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<f64>> {
    (0..draws.n_rw)
        .map(|b| {
            let anchor = *draws.kappa_path(draw, b).last().expect("path starts at zero");
            random_walk(anchor, draws.psi(draw, b), draws.sigma2_kappa(draw, b), steps, rng)
        })
        .collect()
}

/// Re-anchors each draw's walk at its last observed `κ` and simulates `steps` years ahead.
pub fn extrapolate_kappa(draws: &PosteriorDraws, steps: i64, seed: u64) -> Result<KappaProjection> {
    if steps < 0 {
        return Err(Error::BadHorizon(steps));
    }
    let steps = steps as usize;
    let all: Vec<&[f64]> = draws.iter().collect();
    let paths = all
        .par_iter()
        .enumerate()
        .map(|(i, d)| walk_draw(draws, d, steps, &mut draw_rng(seed, i)))
        .collect();
    Ok(KappaProjection {
        anchor_year: draws.layout.levels.last_year(),
        steps,
        paths,
    })
}
