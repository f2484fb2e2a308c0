use std::collections::BTreeMap;

use crate::data::{Dimension, StandardPopulation, StratumKey};
use crate::error::{Error, Result};
use crate::mcmc::{summarise, Interval};
use crate::projection::ProjectionSurface;

/// `Σ_a w_a θ_a / Σ_a w_a`; `rates` align with the standard population's bands.
pub fn asr(rates: &[f64], std: &StandardPopulation) -> Result<f64> {
    if rates.len() != std.weights.len() {
        return Err(Error::StdMismatch(format!(
            "{} rates against {} standard bands",
            rates.len(),
            std.weights.len()
        )));
    }
    let num: f64 = rates.iter().zip(&std.weights).map(|(r, w)| r * w).sum();
    Ok(num / std.total())
}

/// Draw-wise ASR from `rate_draws[a][d]`.
pub fn asr_draws(rate_draws: &[Vec<f64>], std: &StandardPopulation) -> Result<Vec<f64>> {
    if rate_draws.len() != std.weights.len() {
        return Err(Error::StdMismatch(format!(
            "{} age groups against {} standard bands",
            rate_draws.len(),
            std.weights.len()
        )));
    }
    let n = rate_draws.first().map_or(0, Vec::len);
    if rate_draws.iter().any(|r| r.len() != n) {
        return Err(Error::AggregationError("ragged rate draws".into()));
    }
    (0..n)
        .map(|d| {
            let rates: Vec<f64> = rate_draws.iter().map(|r| r[d]).collect();
            asr(&rates, std)
        })
        .collect()
}

/// `(ASR_q1 − ASR_q5) / ASR_q1`.
pub fn rd_gap(asr_q1: f64, asr_q5: f64) -> Result<f64> {
    if asr_q1 == 0.0 {
        return Err(Error::UndefinedRd);
    }
    Ok((asr_q1 - asr_q5) / asr_q1)
}

pub fn rd_gap_draws(asr_q1: &[f64], asr_q5: &[f64]) -> Result<Interval> {
    if asr_q1.len() != asr_q5.len() || asr_q1.is_empty() {
        return Err(Error::AggregationError("RD draws misaligned".into()));
    }
    let gaps: Vec<f64> = asr_q1
        .iter()
        .zip(asr_q5)
        .map(|(&a, &b)| rd_gap(a, b))
        .collect::<Result<_>>()?;
    Ok(summarise(&gaps))
}

/// Per-draw ASR of a surface for each group left after removing age and `drop`.
///
/// Rates of dropped dimensions are pooled with projected exposures as weights.
/// Keys of the result have `age = None` and `None` in every dropped dimension.
pub fn surface_asr(
    surface: &ProjectionSurface,
    std: &StandardPopulation,
    drop: &[Dimension],
) -> Result<BTreeMap<StratumKey, Vec<f64>>> {
    let n_ages = surface.levels.n_ages().max(1);
    if std.weights.len() != n_ages {
        return Err(Error::StdMismatch(format!(
            "surface has {n_ages} age groups, standard population {}",
            std.weights.len()
        )));
    }
    let pooling = !drop.is_empty();
    // (group, age) -> (Σ θE per draw, Σ E)
    let mut acc: BTreeMap<(StratumKey, usize), (Vec<f64>, f64)> = BTreeMap::new();
    for (i, k) in surface.keys.iter().enumerate() {
        let mut g = k.without(Dimension::AgeGroup);
        for &d in drop {
            g = g.without(d);
        }
        let e = match (pooling, surface.exposure[i]) {
            (_, Some(e)) => e,
            (false, None) => 1.0,
            (true, None) => {
                return Err(Error::AggregationError(format!("pooling {k} needs projected exposure")));
            }
        };
        let slot = acc
            .entry((g, k.age.unwrap_or(0)))
            .or_insert_with(|| (vec![0.0; surface.n_draws], 0.0));
        for (s, t) in slot.0.iter_mut().zip(surface.theta_draws(i)) {
            *s += t * e;
        }
        slot.1 += e;
    }
    let mut by_group: BTreeMap<StratumKey, Vec<Option<Vec<f64>>>> = BTreeMap::new();
    for ((g, a), (sums, e)) in acc {
        let rates = sums.into_iter().map(|s| s / e).collect();
        by_group.entry(g).or_insert_with(|| vec![None; n_ages])[a] = Some(rates);
    }
    by_group
        .into_iter()
        .map(|(g, ages)| {
            let rates: Vec<Vec<f64>> = ages
                .into_iter()
                .enumerate()
                .map(|(a, r)| r.ok_or_else(|| Error::StdMismatch(format!("{g} lacks age group {a}"))))
                .collect::<Result<_>>()?;
            Ok((g, asr_draws(&rates, std)?))
        })
        .collect()
}
