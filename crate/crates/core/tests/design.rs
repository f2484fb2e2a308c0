use std::collections::BTreeMap;

use mortproj::data::{AgeBand, Cause, Gender, LevelSets, MortalityCell, MortalityPanel};
use mortproj::linalg;
use mortproj::spec::{
    build_design, builtin_spec, CovariateKey, CovariateSet, CovariateTable, Covariate, Effect,
    Factor, ModelSpec, Term,
};
use mortproj::Error;
use nalgebra::{DMatrix, DVector};

fn levels(n_ages: usize, n_regions: usize, dep: bool, years: std::ops::RangeInclusive<i32>) -> LevelSets {
    LevelSets {
        cause: Cause::Lung,
        genders: vec![Gender::Female],
        years: years.collect(),
        ages: Some((0..n_ages as u32).map(|a| AgeBand::new(45 + 5 * a, 49 + 5 * a)).collect()),
        regions: (n_regions > 0).then(|| (0..n_regions).map(|r| format!("R{r}")).collect()),
        deprivation: dep,
    }
}

fn panel(levels: LevelSets) -> MortalityPanel {
    let cells = levels
        .grid()
        .into_iter()
        .enumerate()
        .map(|(i, key)| MortalityCell {
            key,
            deaths: (i % 17) as u64,
            exposure: 1e4 + i as f64,
        })
        .collect();
    MortalityPanel::from_cells(levels, cells).unwrap()
}

fn aad_table(panel: &MortalityPanel) -> CovariateSet {
    let mut values = BTreeMap::new();
    for c in panel.cells() {
        let k = c.key;
        values.insert(
            CovariateKey {
                gender: k.gender,
                age: None,
                deprivation: k.deprivation,
                region: k.region,
                year: None,
            },
            70.0 + (1.3 * k.region.unwrap_or(0) as f64 + 0.7 * k.deprivation.unwrap_or(0) as f64).sin(),
        );
    }
    CovariateSet {
        aad: Some(CovariateTable::from_values(Covariate::Aad, false, values, panel).unwrap()),
        ns: None,
    }
}

fn spec(terms: &[&str]) -> ModelSpec {
    ModelSpec::new(
        "t",
        Cause::Lung,
        Gender::Female,
        terms.iter().map(|t| t.parse().unwrap()).collect(),
    )
    .unwrap()
}

#[test]
fn eight_age_levels_give_seven_columns() {
    let p = panel(levels(8, 0, false, 2001..=2002));
    let d = build_design(&spec(&["intercept", "age", "year"]), &p, &CovariateSet::new()).unwrap();
    assert_eq!(d.layout.block(&Term::Main(Factor::Age)).unwrap().len, 7);
    assert_eq!(d.n_rows(), p.len());
}

#[test]
fn eighteen_years_give_seventeen_period_columns() {
    let p = panel(levels(2, 0, false, 2001..=2018));
    let d = build_design(&spec(&["intercept", "year"]), &p, &CovariateSet::new()).unwrap();
    let b = d.layout.block(&Term::Period).unwrap();
    assert_eq!(b.len, 17);
    assert_eq!(d.layout.names[b.start], "year[2002]");
    let beta: Vec<f64> = (0..d.n_cols()).map(|i| 0.1 * i as f64).collect();
    let effects = d.layout.effects(&beta);
    let Effect::Path(path) = &effects[1].1 else { panic!() };
    assert_eq!(path.len(), 18);
    assert_eq!(path[0], 0.0);
}

#[test]
fn reconstructed_effects_sum_to_zero() {
    let p = panel(levels(4, 3, true, 2001..=2004));
    let covs = aad_table(&p);
    let s = builtin_spec(Cause::Lung, Gender::Male).unwrap();
    let s = ModelSpec::new(
        "no-ns",
        Cause::Lung,
        Gender::Female,
        s.terms.into_iter().filter(|t| *t != Term::Slope(Covariate::Ns)).collect(),
    )
    .unwrap();
    let d = build_design(&s, &p, &covs).unwrap();
    assert!(d.condition_number.is_finite());
    let beta: Vec<f64> = (0..d.n_cols()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    for (term, effect) in d.layout.effects(&beta) {
        match effect {
            Effect::Levels(v) => assert!(v.iter().sum::<f64>().abs() < 1e-10, "{term}"),
            Effect::Grid { rows, cols, values } => {
                for i in 0..rows {
                    let s: f64 = values[i * cols..(i + 1) * cols].iter().sum();
                    assert!(s.abs() < 1e-10, "{term} row {i}");
                }
                for j in 0..cols {
                    let s: f64 = (0..rows).map(|i| values[i * cols + j]).sum();
                    assert!(s.abs() < 1e-10, "{term} col {j}");
                }
            }
            Effect::Path(v) => assert_eq!(v[0], 0.0),
            Effect::Scalar(_) => {}
        }
    }
}

#[test]
fn design_is_deterministic() {
    let p = panel(levels(4, 3, true, 2001..=2004));
    let covs = aad_table(&p);
    let s = spec(&["intercept", "age", "region", "AAD", "year", "year:AAD", "region:AAD"]);
    let a = build_design(&s, &p, &covs).unwrap();
    let b = build_design(&s, &p, &covs).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.condition_number, b.condition_number);
}

#[test]
fn aliased_covariate_is_singular() {
    // AAD varies by region only, so region:AAD plus region plus AAD is fine but
    // an AAD constant within region makes region:AAD alias the region main effect.
    let p = panel(levels(3, 3, false, 2001..=2003));
    let mut values = BTreeMap::new();
    for c in p.cells() {
        let k = c.key;
        values.insert(
            CovariateKey { gender: k.gender, age: None, deprivation: None, region: k.region, year: None },
            60.0 + k.region.unwrap() as f64,
        );
    }
    let covs = CovariateSet {
        aad: Some(CovariateTable::from_values(Covariate::Aad, false, values, &p).unwrap()),
        ns: None,
    };
    let s = spec(&["intercept", "region", "AAD", "region:AAD", "year"]);
    assert!(matches!(build_design(&s, &p, &covs), Err(Error::SpecSingular(_))));
}

/// Least-squares oracle on a 2x2x2 grid: the constrained fit's reconstructed
/// effects equal the centred effects of an unconstrained dummy fit.
#[test]
fn two_by_two_by_two_matches_dummy_oracle() {
    let p = panel(levels(2, 2, false, 2001..=2002));
    let s = spec(&["intercept", "age", "region", "year"]);
    let d = build_design(&s, &p, &CovariateSet::new()).unwrap();
    let y: Vec<f64> = (0..p.len()).map(|i| ((i * 37 % 11) as f64).sin() + 0.3 * i as f64).collect();
    let y = DVector::from_vec(y);
    let beta = linalg::ols(&d.x, &y).unwrap();
    let fitted = &d.x * &beta;

    // Unconstrained: intercept, 2 age dummies, 2 region dummies, 2 year dummies.
    let n = p.len();
    let mut z = DMatrix::zeros(n, 7);
    for (i, c) in p.cells().iter().enumerate() {
        z[(i, 0)] = 1.0;
        z[(i, 1 + c.key.age.unwrap())] = 1.0;
        z[(i, 3 + c.key.region.unwrap())] = 1.0;
        z[(i, 5 + (c.key.year - 2001) as usize)] = 1.0;
    }
    let svd = z.clone().svd(true, true);
    let g = svd.solve(&y, 1e-12).unwrap();
    let fitted_oracle = &z * &g;
    for i in 0..n {
        assert!((fitted[i] - fitted_oracle[i]).abs() < 1e-10);
    }
    let effects = d.layout.effects(beta.as_slice());
    let Effect::Levels(age) = &effects[1].1 else { panic!() };
    let centred = |a: f64, b: f64| ((a - b) / 2.0, (b - a) / 2.0);
    let (a0, a1) = centred(g[1], g[2]);
    assert!((age[0] - a0).abs() < 1e-10 && (age[1] - a1).abs() < 1e-10);
    let Effect::Levels(region) = &effects[2].1 else { panic!() };
    let (r0, r1) = centred(g[3], g[4]);
    assert!((region[0] - r0).abs() < 1e-10 && (region[1] - r1).abs() < 1e-10);
    let Effect::Path(kappa) = &effects[3].1 else { panic!() };
    assert!((kappa[1] - (g[6] - g[5])).abs() < 1e-10);
}

#[test]
fn factor_missing_from_panel_is_invalid() {
    let p = panel(levels(3, 0, false, 2001..=2002));
    let s = spec(&["intercept", "region", "year"]);
    assert!(matches!(build_design(&s, &p, &CovariateSet::new()), Err(Error::InvalidSpec(_))));
}

#[test]
fn covariate_set_json_round_trip() {
    let p = panel(levels(2, 2, true, 2001..=2002));
    let covs = aad_table(&p);
    let back = CovariateSet::from_json(&covs.to_json()).unwrap();
    assert_eq!(covs, back);
    let st = covs.aad.as_ref().unwrap();
    let z: Vec<f64> = p.cells().iter().map(|c| st.value(&c.key).unwrap()).collect();
    let m = z.iter().sum::<f64>() / z.len() as f64;
    let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / z.len() as f64;
    assert!(m.abs() < 1e-10 && (v.sqrt() - 1.0).abs() < 1e-10);
}
