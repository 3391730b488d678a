//! Model builders and property checks shared by the property suite and the
//! acceptance harness.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use treatfair::expr::{constant, noise, var};
use treatfair::metrics::{audit, ttd, ttd_e, ttd_e_multi, ttd_multi, Aggregator, Delta, DisparityConfig, Statistic};
use treatfair::mitigation::{build_fair_dataset, risk_cdf, risk_scores, TreatmentPolicy};
use treatfair::noise::NoiseSpec;
use treatfair::schema::{ColumnSpec, FeatureSchema, Kind, Role};
use treatfair::scm::{DoSet, InterventionPlan, Mechanism, Scm};
use treatfair::synth::{self, SynthConfig};

pub const EXACT: f64 = 1e-9;

/// Coefficients of a small model affine in every noise term.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub p_s: f64,
    /// S → X
    pub a: f64,
    /// X → Z1
    pub b: f64,
    /// S → Z1
    pub c: f64,
    /// S → Z2
    pub g: f64,
    /// Z1 → Y
    pub w: f64,
}

pub fn affine_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        ColumnSpec::new("S", Role::Sensitive, Kind::Binary),
        ColumnSpec::new("X", Role::Covariate, Kind::Continuous),
        ColumnSpec::new("Z1", Role::Treatment, Kind::Continuous),
        ColumnSpec::new("Z2", Role::Treatment, Kind::Continuous),
        ColumnSpec::new("Y", Role::Outcome, Kind::Binary),
    ])
    .unwrap()
}

pub fn affine_model(p: Affine) -> Scm {
    Scm::new(
        affine_schema(),
        vec![
            Mechanism::closed_form("S", noise()),
            Mechanism::closed_form("X", p.a * var("S") + noise()),
            Mechanism::closed_form("Z1", p.c * var("S") + p.b * var("X") + noise()),
            Mechanism::closed_form("Z2", 0.5 * var("Z1") + p.g * var("S") + noise()),
            Mechanism::threshold("Y", var("X") - p.w * var("Z1") + noise(), constant(0.0)),
        ],
        vec![
            NoiseSpec::Bernoulli { p: p.p_s },
            NoiseSpec::Gaussian { mean: 0.0, variance: 1.0 },
            NoiseSpec::Gaussian { mean: 1.0, variance: 4.0 },
            NoiseSpec::Gaussian { mean: 0.0, variance: 0.25 },
            NoiseSpec::Logistic { location: 0.0, scale: 1.0 },
        ],
    )
    .unwrap()
}

pub fn affine_params() -> impl Strategy<Value = Affine> {
    (0.2..0.8f64, -3.0..3.0f64, -2.0..2.0f64, -3.0..3.0f64, -3.0..3.0f64, -1.0..1.0f64)
        .prop_map(|(p_s, a, b, c, g, w)| Affine { p_s, a, b, c, g, w })
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, tol: f64) -> Result<(), TestCaseError> {
    prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
    Ok(())
}

/// `predict(abduct(x)) = x` on sampled rows of affine and synthetic oracle models.
pub fn abduction_round_trip(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>(), any::<bool>()), |(p, seed, synthetic)| {
        let m = if synthetic {
            synth::build_oracle(&SynthConfig::balanced()).unwrap()
        } else {
            affine_model(p)
        };
        for row in m.sample(40, seed).unwrap().rows() {
            let back = m.predict(&m.abduct(&row).unwrap(), &DoSet::new());
            for (a, b) in back.0.iter().zip(&row.0) {
                close(*a, *b, EXACT)?;
            }
        }
        Ok(())
    })
}

/// The empty intervention and `do(S = s^F)` both return the factual row.
pub fn factual_intervention_consistency(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>()), |(p, seed)| {
        let m = affine_model(p);
        for row in m.sample(30, seed).unwrap().rows() {
            let same = m.counterfactual(&row, &DoSet::new()).unwrap();
            let self_do = m.counterfactual(&row, &DoSet::new().set(0, row.0[0])).unwrap();
            for j in 0..row.0.len() {
                close(same.0[j], row.0[j], EXACT)?;
                close(self_do.0[j], row.0[j], EXACT)?;
            }
        }
        Ok(())
    })
}

/// A one-stage plan is the plain counterfactual.
pub fn single_stage_plan(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>(), -2.0..2.0f64), |(p, seed, x)| {
        let m = affine_model(p);
        for row in m.sample(30, seed).unwrap().rows() {
            for d in [DoSet::new().set(0, 1.0 - row.0[0]), DoSet::new().set(1, x)] {
                let plain = m.counterfactual(&row, &d).unwrap();
                let staged = m.path_specific_counterfactual(&row, &InterventionPlan::single(&d)).unwrap();
                prop_assert_eq!(plain, staged);
            }
        }
        Ok(())
    })
}

/// Without any path from S to Z, every disparity is zero.
pub fn null_path_zero_disparity(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>()), |(p, seed)| {
        let m = affine_model(Affine { a: 0.0, c: 0.0, g: 0.0, ..p });
        let d = m.sample(80, seed).unwrap();
        let present = d.support(0);
        prop_assume!(present.len() == 2);
        let r = audit(&d, &m, &DisparityConfig::new("S", 0.0, 1.0)).unwrap();
        for t in &r.treatments {
            for v in [t.ttd.mean, t.ttd.median, t.dtd.mean, t.dtd.median] {
                close(v, 0.0, EXACT)?;
            }
        }
        for e in &r.effects {
            prop_assert!(e.ttd_e.is_none_or(|v| v == 0.0));
            prop_assert!(e.dtd_e.is_none_or(|v| v == 0.0));
        }
        Ok(())
    })
}

/// Mean TTD and DTD flip sign with the group pair when mechanisms are affine in S.
pub fn affine_antisymmetry(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>()), |(p, seed)| {
        let m = affine_model(p);
        let d = m.sample(80, seed).unwrap();
        prop_assume!(d.support(0).len() == 2);
        let fwd = audit(&d, &m, &DisparityConfig::new("S", 0.0, 1.0).with_statistic(Statistic::Mean)).unwrap();
        let back = audit(&d, &m, &DisparityConfig::new("S", 1.0, 0.0).with_statistic(Statistic::Mean)).unwrap();
        for (f, b) in fwd.treatments.iter().zip(&back.treatments) {
            close(f.ttd.value, -b.ttd.value, 1e-8)?;
            close(f.dtd.value, -b.dtd.value, 1e-8)?;
        }
        Ok(())
    })
}

/// DTD is the same on every non-empty subset of the audited group.
pub fn dtd_subset_invariance(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>(), prop::collection::vec(any::<bool>(), 80)), |(p, seed, keep)| {
        let m = affine_model(p);
        let d = m.sample(80, seed).unwrap();
        prop_assume!(d.support(0).len() == 2);
        let full = audit(&d, &m, &DisparityConfig::new("S", 0.0, 1.0)).unwrap();
        let rows: Vec<usize> = (0..80).filter(|&i| keep[i] || d.column(0)[i] == 1.0).collect();
        let sub = d.subset(&rows);
        prop_assume!(!sub.rows_where(0, 0.0).is_empty());
        let part = audit(&sub, &m, &DisparityConfig::new("S", 0.0, 1.0)).unwrap();
        for (a, b) in full.treatments.iter().zip(&part.treatments) {
            close(a.dtd.mean, b.dtd.mean, EXACT)?;
            close(a.dtd.median, b.dtd.median, EXACT)?;
        }
        Ok(())
    })
}

/// Multi-sensitive aggregates on one binary column equal the single-column metrics.
pub fn multi_binary_reduction(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>()), |(p, seed)| {
        let m = affine_model(p);
        let d = m.sample(60, seed).unwrap();
        prop_assume!(d.support(0).len() == 2);
        let cfg = DisparityConfig::new("S", 0.0, 1.0).with_statistic(Statistic::Mean).with_delta(Delta::AbsDifference);
        let single = ttd(&d, &m, &cfg).unwrap();
        for agg in [Aggregator::Avg, Aggregator::Max] {
            let multi = ttd_multi(&d, &m, &cfg.clone().with_aggregator(agg)).unwrap();
            for (a, b) in single.iter().zip(&multi) {
                close(*a, *b, EXACT)?;
            }
        }
        let e = ttd_e_multi(&d, &m, &cfg.clone().with_aggregator(Aggregator::Max)).unwrap();
        for (a, b) in e.iter().zip(ttd_e(&d, &m, &cfg).unwrap()) {
            prop_assert_eq!(a.is_some(), b.is_some());
            close(a.unwrap_or(0.0), b.unwrap_or(0.0), EXACT)?;
        }
        Ok(())
    })
}

/// Risk CDFs are non-decreasing, bounded, and reach 1.
pub fn cdf_monotone(cases: u32) -> Result<(), String> {
    run(cases, prop::collection::vec(0.0..=1.0f64, 1..200), |scores| {
        let cdf = risk_cdf(&scores);
        prop_assert_eq!(cdf.len(), 101);
        for w in cdf.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 <= w[1].1);
        }
        prop_assert!(cdf.iter().all(|(_, f)| (0.0..=1.0).contains(f)));
        prop_assert_eq!(cdf[100].1, 1.0);
        Ok(())
    })
}

/// D^fair keeps size, column order, S and X, and every advantaged row.
pub fn fair_dataset_preservation(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>()), |(p, seed)| {
        let m = affine_model(p);
        let d = m.sample(60, seed).unwrap();
        prop_assume!(d.support(0).len() == 2);
        let f = build_fair_dataset(&d, &m, "S", 0.0, 1.0).unwrap();
        prop_assert_eq!(f.data.n_rows(), d.n_rows());
        prop_assert_eq!(f.data.schema(), d.schema());
        prop_assert_eq!(f.data.output_order(), d.output_order());
        prop_assert_eq!(f.data.column(0), d.column(0));
        prop_assert_eq!(f.data.column(1), d.column(1));
        for i in d.rows_where(0, 1.0) {
            prop_assert_eq!(f.data.row(i), d.row(i));
        }
        Ok(())
    })
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

/// Reports, D^fair and risk scores do not depend on the worker count.
pub fn thread_count_invariance(cases: u32) -> Result<(), String> {
    run(cases, (affine_params(), any::<u64>()), |(p, seed)| {
        let m = affine_model(p);
        let d = m.sample(120, seed).unwrap();
        prop_assume!(d.support(0).len() == 2);
        let cfg = DisparityConfig::new("S", 0.0, 1.0);
        let policy = TreatmentPolicy::empirical("S", 1.0, seed).with_sample_count(16);
        let job = || {
            (
                audit(&d, &m, &cfg).unwrap(),
                build_fair_dataset(&d, &m, "S", 0.0, 1.0).unwrap().data,
                risk_scores(&d, &m, &policy, &d).unwrap(),
                d.clone(),
            )
        };
        let one = with_threads(1, job);
        let many = with_threads(4, job);
        prop_assert_eq!(&one.0, &many.0);
        prop_assert_eq!(&one.1, &many.1);
        prop_assert_eq!(&one.2, &many.2);
        prop_assert_eq!(with_threads(1, || m.sample(50, seed).unwrap()), with_threads(3, || m.sample(50, seed).unwrap()));
        Ok(())
    })
}

/// Every property with its name.
pub fn all_properties() -> Vec<(&'static str, fn(u32) -> Result<(), String>)> {
    vec![
        ("abduction round-trip", abduction_round_trip),
        ("empty/factual intervention consistency", factual_intervention_consistency),
        ("single-stage plan equals counterfactual", single_stage_plan),
        ("null path gives zero disparity", null_path_zero_disparity),
        ("affine antisymmetry of mean TTD/DTD", affine_antisymmetry),
        ("DTD subset invariance", dtd_subset_invariance),
        ("multi-sensitive binary reduction", multi_binary_reduction),
        ("CDF monotonicity", cdf_monotone),
        ("D^fair preservation", fair_dataset_preservation),
        ("thread-count invariance", thread_count_invariance),
    ]
}
