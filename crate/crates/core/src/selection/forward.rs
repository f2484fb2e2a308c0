use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dic::dic;
use super::marginal::{log_marginal, LadderConfig};
use crate::data::MortalityPanel;
use crate::error::{Error, Result};
use crate::mcmc::{sample, PriorSet, SamplerConfig};
use crate::spec::{CovariateSet, ModelSpec, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Acceptance threshold on the Bayes factor against the incumbent.
    pub threshold: f64,
    /// Mains first, then interactions among accepted mains.
    pub two_stage: bool,
    pub seed: u64,
    pub ladder: LadderConfig,
    pub priors: PriorSet,
    /// Sampler for the DIC column; `None` leaves DIC empty.
    pub dic_sampler: Option<SamplerConfig>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            two_stage: false,
            seed: 0,
            ladder: LadderConfig::default(),
            priors: PriorSet::default(),
            dic_sampler: None,
        }
    }
}

/// Score of one fitted spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub log_marginal: f64,
    pub se: f64,
    pub dic: Option<f64>,
}

/// One accepted step; the first row is the null model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub term: Option<Term>,
    pub stage: usize,
    pub log_bayes_factor: Option<f64>,
    pub log_marginal: f64,
    pub se: f64,
    pub diff: Option<f64>,
    pub dic: Option<f64>,
}

impl SelectionRow {
    pub fn bayes_factor(&self) -> Option<f64> {
        self.log_bayes_factor.map(f64::exp)
    }
}

/// Everything scored at one step, in candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: usize,
    pub scored: Vec<(Term, Evaluation)>,
    /// Candidates whose design was singular or aliased.
    pub skipped: Vec<(Term, String)>,
    pub accepted: Option<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub rows: Vec<SelectionRow>,
    pub steps: Vec<StepRecord>,
    pub selected: ModelSpec,
}

pub const TRACE_HEADER: [&str; 8] = [
    "variable added",
    "Bayes factor",
    "marginal likelihood",
    "diff. in marginal likelihood",
    "DIC",
    "stage",
    "se",
    "log Bayes factor",
];

fn fmt_bf(log_bf: f64) -> String {
    let bf = log_bf.exp();
    if bf.is_infinite() {
        "Inf".into()
    } else if bf >= 1e6 {
        format!("{bf:.3e}")
    } else {
        format!("{bf:.2}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

impl SelectionTrace {
    pub fn accepted_terms(&self) -> Vec<Term> {
        self.rows.iter().filter_map(|r| r.term).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.term.map(|t| t.to_string()).unwrap_or_else(|| "null".into()),
                r.log_bayes_factor.map(fmt_bf).unwrap_or_default(),
                format!("{:.2}", r.log_marginal),
                fmt_opt(r.diff),
                fmt_opt(r.dic),
                r.stage.to_string(),
                format!("{:.3}", r.se),
                r.log_bayes_factor.map(|v| format!("{v:.4}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// Seed for one spec: depends on the run seed and the spec's term set only.
pub fn spec_seed(seed: u64, spec: &ModelSpec) -> u64 {
    let mut labels: Vec<String> = spec.terms.iter().map(|t| t.to_string()).collect();
    labels.sort();
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in labels.join("+").bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Scores `spec` by thermodynamic integration and, optionally, DIC.
pub fn evaluate(
    spec: &ModelSpec,
    panel: &MortalityPanel,
    covariates: &CovariateSet,
    cfg: &SelectionConfig,
) -> Result<Evaluation> {
    let seed = spec_seed(cfg.seed, spec);
    let ladder = LadderConfig { seed, ..cfg.ladder.clone() };
    let m = log_marginal(spec, panel, covariates, &cfg.priors, &ladder)?;
    let dic = match &cfg.dic_sampler {
        Some(s) => {
            let s = SamplerConfig { seed, ..s.clone() };
            let draws = sample(spec, panel, covariates, &cfg.priors, &s)?;
            Some(dic(&draws, panel, covariates)?.dic)
        }
        None => None,
    };
    Ok(Evaluation {
        log_marginal: m.log_marginal,
        se: m.se,
        dic,
    })
}

/// Greedy forward selection with the Poisson-lognormal evaluator.
pub fn forward_select(
    candidates: &[Term],
    null: &ModelSpec,
    panel: &MortalityPanel,
    covariates: &CovariateSet,
    cfg: &SelectionConfig,
) -> Result<SelectionTrace> {
    forward_select_with(candidates, null, cfg, |spec| evaluate(spec, panel, covariates, cfg))
}

fn stage_allows(stage: usize, two_stage: bool, term: &Term, incumbent: &ModelSpec) -> bool {
    if !two_stage {
        return true;
    }
    match stage {
        1 => !term.is_interaction(),
        _ => term.is_interaction() && term.parents().iter().all(|p| incumbent.contains(p)),
    }
}

/// Greedy forward selection with a caller-supplied evaluator.
///
/// Candidates whose evaluation returns `SpecSingular` are skipped; any other
/// error aborts the run.
pub fn forward_select_with<F>(candidates: &[Term], null: &ModelSpec, cfg: &SelectionConfig, eval: F) -> Result<SelectionTrace>
where
    F: Fn(&ModelSpec) -> Result<Evaluation> + Sync,
{
    if !(cfg.threshold > 0.0) {
        return Err(Error::BadConfig(format!("threshold {} must be positive", cfg.threshold)));
    }
    let log_threshold = cfg.threshold.ln();
    let base = eval(null)?;
    let mut rows = vec![SelectionRow {
        term: None,
        stage: 0,
        log_bayes_factor: None,
        log_marginal: base.log_marginal,
        se: base.se,
        diff: None,
        dic: base.dic,
    }];
    let mut steps = Vec::new();
    let mut incumbent = null.clone();
    let mut current = base;
    let mut stage = 1;
    let last_stage = if cfg.two_stage { 2 } else { 1 };
    while stage <= last_stage {
        let pool: Vec<Term> = candidates
            .iter()
            .copied()
            .filter(|t| !incumbent.contains(t) && stage_allows(stage, cfg.two_stage, t, &incumbent))
            .collect();
        if pool.is_empty() {
            stage += 1;
            continue;
        }
        let results: Vec<(Term, Result<Evaluation>)> = pool
            .par_iter()
            .map(|&t| (t, incumbent.with_term(t).and_then(|s| eval(&s))))
            .collect();
        let mut record = StepRecord {
            stage,
            scored: Vec::new(),
            skipped: Vec::new(),
            accepted: None,
        };
        for (t, r) in results {
            match r {
                Ok(e) => record.scored.push((t, e)),
                Err(Error::SpecSingular(msg)) => record.skipped.push((t, msg)),
                Err(e) => return Err(e),
            }
        }
        let best = record
            .scored
            .iter()
            .max_by(|a, b| a.1.log_marginal.total_cmp(&b.1.log_marginal))
            .map(|x| x.1);
        let choice = best.and_then(|b| {
            record
                .scored
                .iter()
                .find(|(_, e)| {
                    let tied = b.log_marginal - e.log_marginal <= (b.se.powi(2) + e.se.powi(2)).sqrt();
                    let passes = e.log_marginal - current.log_marginal > log_threshold;
                    e.log_marginal == b.log_marginal || (tied && passes)
                })
                .copied()
        });
        match choice {
            Some((t, e)) if e.log_marginal - current.log_marginal > log_threshold => {
                let diff = e.log_marginal - current.log_marginal;
                rows.push(SelectionRow {
                    term: Some(t),
                    stage,
                    log_bayes_factor: Some(diff),
                    log_marginal: e.log_marginal,
                    se: e.se,
                    diff: Some(diff),
                    dic: e.dic,
                });
                incumbent = incumbent.with_term(t)?;
                current = e;
                record.accepted = Some(t);
                steps.push(record);
            }
            _ => {
                steps.push(record);
                stage += 1;
            }
        }
    }
    Ok(SelectionTrace {
        rows,
        steps,
        selected: incumbent,
    })
}
