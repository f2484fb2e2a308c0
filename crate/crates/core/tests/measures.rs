mod common;

use std::collections::BTreeMap;

use mortproj::data::{AgeBand, Cause, Gender, StandardPopulation};
use mortproj::mcmc::{sample, stream_rng, PriorSet, SamplerConfig};
use mortproj::measures::{
    apply_delay_scenario, asr, asr_draws, ced_from_totals, excess_tables, pearson_residual, pearson_residuals,
    rd_gap, rd_gap_draws, residual_bin, write_heatmap_csv, AllocationSchedule, ExcessTable, ScenarioConfig,
};
use mortproj::projection::{project_rates, PopulationProjection, ProjectionConfig};
use mortproj::simlab::{generate, GeneratorConfig};
use mortproj::Error;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn std_pop(weights: &[f64]) -> StandardPopulation {
    let bands = (0..weights.len() as u32).map(|a| AgeBand::new(40 + 5 * a, 44 + 5 * a)).collect();
    StandardPopulation::new(bands, weights.to_vec()).unwrap()
}

#[test]
fn asr_examples() {
    let esp = std_pop(&[7000.0, 7000.0, 6500.0, 6000.0, 5500.0, 5000.0, 4000.0, 2500.0]);
    assert!((asr(&[3.2e-4; 8], &esp).unwrap() - 3.2e-4).abs() < 1e-18);
    assert!((asr(&[4e-4, 8e-4], &std_pop(&[1.0, 3.0])).unwrap() - 7e-4).abs() < 1e-18);
    let mut rng = stream_rng(2, 0);
    let rates: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 1e-3).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (w, r) in esp.weights.iter().zip(&rates) {
        num += w * r;
        den += w;
    }
    assert!((asr(&rates, &esp).unwrap() - num / den).abs() < 1e-18);
    assert!(matches!(asr(&rates[..7], &esp), Err(Error::StdMismatch(_))));
    let per_age: Vec<Vec<f64>> = rates.iter().map(|&r| vec![r, 2.0 * r]).collect();
    let d = asr_draws(&per_age, &esp).unwrap();
    assert!((d[1] - 2.0 * d[0]).abs() < 1e-15);
}

#[test]
fn rd_examples() {
    assert_eq!(rd_gap(5e-4, 5e-4).unwrap(), 0.0);
    assert_eq!(rd_gap(2e-4, 1e-4).unwrap(), 0.5);
    assert!(matches!(rd_gap(0.0, 1e-4), Err(Error::UndefinedRd)));
    let q1 = [4e-4, 5e-4, 6e-4, 5.5e-4];
    let q5 = [2e-4, 3e-4, 3.5e-4, 2.5e-4];
    let iv = rd_gap_draws(&q1, &q5).unwrap();
    let oracle: f64 = q1.iter().zip(&q5).map(|(a, b)| (a - b) / a).sum::<f64>() / 4.0;
    assert!((iv.mean - oracle).abs() < 1e-15);
}

#[test]
fn residual_examples_and_bins() {
    assert_eq!(pearson_residual(42.0, 42.0, 0.3), 0.0);
    assert!((pearson_residual(110.0, 100.0, 0.0) - 1.0).abs() < 1e-12);
    let cases = [(-5.0, "<-4"), (-4.0, "[-4,-2)"), (-1.5, "[-2,-1)"), (0.0, "[-1,1)"), (1.0, "[1,2)"), (3.9, "[2,4)"), (4.0, ">=4"), (40.0, ">=4")];
    for (r, bin) in cases {
        assert_eq!(residual_bin(r), bin, "{r}");
    }
}

#[test]
fn residuals_calibrate_on_simulated_cells() {
    let mut rng = stream_rng(8, 0);
    let sigma2: f64 = 0.02;
    let n = 10_000;
    let rs: Vec<f64> = (0..n)
        .map(|i| {
            let mu = -7.5 + 0.5 * ((i % 40) as f64 / 40.0);
            let e = 2e4 + 1e3 * (i % 17) as f64;
            let theta = (mu + Normal::new(0.0, sigma2.sqrt()).unwrap().sample(&mut rng)).exp();
            let d = Poisson::new(theta * e).unwrap().sample(&mut rng);
            pearson_residual(d, e * (mu + sigma2 / 2.0).exp(), sigma2)
        })
        .collect();
    let m = rs.iter().sum::<f64>() / n as f64;
    let v = rs.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!(m.abs() < 0.05 && (0.8..=1.2).contains(&v), "mean {m} var {v}");
}

#[test]
fn ced_identities() {
    let r = ced_from_totals("England", "female", 35250.0, 36511.51);
    assert!((r.excess + 1261.51).abs() < 1e-9);
    assert_eq!(r.ratio_display, "0.97");
    assert_eq!(r.excess_display, "-1261.51");
    let same = ced_from_totals("London", "male", 812.0, 812.0);
    assert_eq!((same.excess, same.ratio), (0.0, 1.0));
}

#[test]
fn schedule_default_shape() {
    let s = AllocationSchedule::default_from(2019);
    assert_eq!(s.at(2018), 0.0);
    assert_eq!(s.at(2019), 0.0);
    assert_eq!(s.at(2020), 0.60);
    assert!((s.at(2024) - 0.85).abs() < 1e-12);
    assert!((s.at(2029) - 0.95).abs() < 1e-12);
    assert_eq!(s.at(2036), 1.0);
    assert_eq!(s.at(2050), 1.0);
    let total: f64 = s.increments().iter().map(|x| x.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
    s.validate().unwrap();
    let cfg = ScenarioConfig { delay_months: 1.0, schedule: s };
    // one month is 1/12 year; 60% of it is 0.05 years
    assert!((cfg.shift(2020) - 0.05).abs() < 1e-15);
    let bad = AllocationSchedule::new(BTreeMap::from([(2019, 0.5), (2020, 0.4), (2021, 1.0)]));
    assert!(matches!(bad, Err(Error::BadConfig(_))));
}

fn lung_with_aad(seed: u64, cause: Cause) -> (mortproj::simlab::Synthetic, mortproj::mcmc::PosteriorDraws) {
    let cfg = GeneratorConfig {
        seed,
        cause,
        n_years: 8,
        n_ages: 3,
        n_regions: 3,
        deprivation: false,
        terms: ["intercept", "age", "AAD", "year"].iter().map(|t| t.parse().unwrap()).collect(),
        coefficients: BTreeMap::from([("AAD".to_string(), vec![0.3])]),
        ..Default::default()
    };
    let syn = generate(&cfg).unwrap();
    let draws = sample(
        &cfg.spec().unwrap(),
        &syn.panel,
        &syn.covariates,
        &PriorSet::default(),
        &SamplerConfig { chains: 2, iters: 3000, burnin: 1500, thin: 3, seed, ..Default::default() },
    )
    .unwrap();
    (syn, draws)
}

#[test]
fn delay_scenarios() {
    let (syn, draws) = lung_with_aad(5, Cause::Lung);
    let last = syn.panel.levels().last_year();
    let mut pop = PopulationProjection::default();
    for c in syn.panel.cells().iter().filter(|c| c.key.year == last) {
        for h in 1..=8 {
            pop.insert(c.key.with_year(last + h), c.exposure).unwrap();
        }
    }
    let pcfg = ProjectionConfig { seed: 12, target_year: last + 8, include_anchor: false };
    let base = project_rates(&draws, &syn.covariates, Some(&pop), &pcfg).unwrap();
    let schedule = AllocationSchedule::default_from(last + 1);
    let run = |months: f64| {
        let sc = ScenarioConfig { delay_months: months, schedule: schedule.clone() };
        apply_delay_scenario(&draws, &syn.covariates, Some(&pop), &pcfg, &sc).unwrap()
    };
    let null = run(0.0);
    assert_eq!(null.theta, base.theta);
    let report = excess_tables(&null, &base).unwrap();
    assert!(report.rows.iter().all(|r| r.mean == 0.0 && r.lo95 == 0.0 && r.hi95 == 0.0));

    let mut totals = Vec::new();
    for months in [1.0, 3.0, 6.0] {
        let rep = excess_tables(&run(months), &base).unwrap();
        let national: Vec<_> = rep.table(ExcessTable::National).collect();
        for r in &national {
            let y = r.year.unwrap();
            if schedule.at(y) == 0.0 {
                assert_eq!(r.mean, 0.0, "{y}");
            } else {
                assert!(r.mean > 0.0, "{months} months, {y}: {}", r.mean);
            }
        }
        // additivity: strata sum to the national figure
        let ed_sum: f64 = rep.table(ExcessTable::Ed).map(|r| r.mean).sum();
        let nat_sum: f64 = national.iter().map(|r| r.mean).sum();
        assert!((ed_sum - nat_sum).abs() < 1e-9 * nat_sum.abs().max(1.0));
        let cum = rep.table(ExcessTable::Cumulative).next().unwrap().mean;
        assert!((cum - nat_sum).abs() < 1e-9 * nat_sum.abs());
        // exposure-weighted regional rates reproduce the national rate
        for r in &national {
            let y = r.year.unwrap();
            let e_year: f64 = (0..base.n_cells()).filter(|&i| base.keys[i].year == y).map(|i| base.exposure[i].unwrap()).sum();
            let weighted: f64 = rep
                .table(ExcessTable::Erm)
                .filter(|x| x.year == Some(y))
                .map(|x| {
                    let e: f64 = (0..base.n_cells())
                        .filter(|&i| base.keys[i].year == y && base.levels.region_label(base.keys[i].region) == x.region)
                        .map(|i| base.exposure[i].unwrap())
                        .sum();
                    x.mean * e
                })
                .sum();
            assert!((weighted / e_year - r.mean / e_year).abs() < 1e-9 * (r.mean / e_year).abs().max(1e-15));
        }
        totals.push(cum);
    }
    assert!(totals[0] < totals[1] && totals[1] < totals[2], "{totals:?}");

    let (bsyn, bdraws) = lung_with_aad(6, Cause::Breast);
    let sc = ScenarioConfig { delay_months: 3.0, schedule };
    let r = apply_delay_scenario(&bdraws, &bsyn.covariates, None, &pcfg, &sc);
    assert!(matches!(r, Err(Error::ScenarioUnsupported(_))));
}

#[test]
fn hand_built_eam() {
    use mortproj::data::{LevelSets, StratumKey};
    use mortproj::projection::{KappaProjection, ProjectionSurface};
    let levels = LevelSets {
        cause: Cause::Lung,
        genders: vec![Gender::Female],
        years: vec![2025],
        ages: Some(vec![AgeBand::new(60, 64), AgeBand::new(65, 69)]),
        regions: None,
        deprivation: false,
    };
    let keys: Vec<StratumKey> = levels.grid();
    let exposure = [1e5, 5e4];
    let surface = |deaths: [f64; 2]| ProjectionSurface {
        levels: levels.clone(),
        keys: keys.clone(),
        exposure: exposure.iter().map(|&e| Some(e)).collect(),
        n_draws: 1,
        theta: deaths.iter().zip(exposure).map(|(d, e)| d / e).collect(),
        kappa: KappaProjection { anchor_year: 2024, steps: 1, paths: vec![vec![]] },
        config: ProjectionConfig { seed: 0, target_year: 2025, include_anchor: false },
    };
    let rep = excess_tables(&surface([110.0, 55.0]), &surface([100.0, 50.0])).unwrap();
    let eam: Vec<f64> = rep.table(ExcessTable::Eam).map(|r| r.mean).collect();
    assert_eq!(eam.len(), 2);
    assert!(eam.iter().all(|v| (v - 1e-4).abs() < 1e-15), "{eam:?}");
    let ed: Vec<f64> = rep.table(ExcessTable::Ed).map(|r| r.mean).collect();
    assert!((ed[0] - 10.0).abs() < 1e-9 && (ed[1] - 5.0).abs() < 1e-9);
}

#[test]
fn residual_table_from_fit() {
    let (syn, draws) = common::small_fit(2, 0);
    let res = pearson_residuals(&draws, &syn.panel, &syn.covariates).unwrap();
    assert_eq!(res.len(), syn.panel.len());
    let m = res.iter().map(|r| r.residual).sum::<f64>() / res.len() as f64;
    assert!(m.abs() < 0.5);
    let mut out = Vec::new();
    write_heatmap_csv(&res, syn.panel.levels(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), res.len() + 1);
}

mod properties {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, proptest, ProptestConfig, Strategy};

    fn weights() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1.0f64..1e4, 1..12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn uniform_rate_asr(w in weights(), c in 1e-7f64..1e-2) {
            let v = asr(&vec![c; w.len()], &std_pop(&w)).unwrap();
            prop_assert!((v - c).abs() <= 1e-9 * c);
        }

        #[test]
        fn asr_weight_scale_invariance(w in weights(), k in 1e-3f64..1e3, seed in any::<u64>()) {
            let mut rng = stream_rng(seed, 0);
            let rates: Vec<f64> = (0..w.len()).map(|_| rng.random::<f64>() * 1e-3).collect();
            let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
            let (a, b) = (asr(&rates, &std_pop(&w)).unwrap(), asr(&rates, &std_pop(&scaled)).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300));
        }

        #[test]
        fn rd_scale_invariance(q1 in 1e-6f64..1e-2, q5 in 0.0f64..1e-2, k in 1e-3f64..1e3) {
            let (a, b) = (rd_gap(q1, q5).unwrap(), rd_gap(k * q1, k * q5).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
