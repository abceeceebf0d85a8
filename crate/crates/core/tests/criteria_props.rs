use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use rsl_core::criteria::{
    check_wkb, classify_trend, verdict, CriteriaOutcome, Model, PlateauConfig, Rule, Trend,
    TrendConfig,
};
use rsl_core::outcome::{consistent, Boundedness, Stability};
use rsl_core::problem::find;
use rsl_core::quad::Tolerance;
use rsl_core::{CriteriaConfig, FuncTrace, Grid};

fn sampled(f: impl Fn(f64) -> f64, t_end: f64) -> FuncTrace {
    let g = Arc::new(Grid::uniform(0.0, t_end, 1500).unwrap());
    let v = g.points().iter().map(|&t| f(t)).collect();
    FuncTrace::from_samples(g, v).unwrap()
}

fn run(id: &str, lambda: Option<f64>, t_end: Option<f64>) -> CriteriaOutcome {
    let mut p = find(id).unwrap();
    if let Some(l) = lambda {
        p = p.with_param("lambda", Complex64::new(l, 0.0));
    }
    let horizon = t_end.unwrap_or(p.t_end);
    verdict(&p, horizon, &CriteriaConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Adding a constant moves no slope, so divergence verdicts survive it.
    #[test]
    fn divergence_is_shift_invariant(
        slope in -3.0f64..3.0,
        amp in 0.0f64..2.0,
        freq in 0.2f64..4.0,
        shift in -50.0f64..50.0,
        t_end in 20.0f64..80.0,
    ) {
        let cfg = TrendConfig::default();
        let f = move |t: f64| slope * t + amp * (freq * t).sin();
        let base = classify_trend(&sampled(f, t_end), &cfg).verdict;
        let moved = classify_trend(&sampled(move |t| f(t) + shift, t_end), &cfg).verdict;
        if matches!(base, Trend::DivergesToMinusInf | Trend::DivergesToPlusInf) {
            prop_assert_eq!(base, moved);
        }
        if matches!(moved, Trend::DivergesToMinusInf | Trend::DivergesToPlusInf) {
            prop_assert_eq!(base, moved);
        }
    }

    /// A divergence verdict needs all window slopes on one side of zero.
    #[test]
    fn divergence_means_uniform_slope_sign(
        slope in -1.0f64..1.0,
        amp in 0.0f64..5.0,
        freq in 0.05f64..2.0,
        t_end in 10.0f64..80.0,
    ) {
        let est = classify_trend(&sampled(move |t| slope * t + amp * (freq * t).sin(), t_end), &TrendConfig::default());
        match est.verdict {
            Trend::DivergesToPlusInf => prop_assert!(est.windows.iter().all(|w| w.slope > 0.0)),
            Trend::DivergesToMinusInf => prop_assert!(est.windows.iter().all(|w| w.slope < 0.0)),
            _ => {}
        }
    }
}

/// The dispatch table, pointwise `r1 <= r2`, and consistency of the outcomes.
#[test]
fn catalog_outcomes_are_sound() {
    let cases: [(&str, Option<f64>); 7] = [
        ("ex2.1", Some(1.0)),
        ("ex2.1", Some(-0.5)),
        ("ex2.2", Some(1.0)),
        ("ex2.2", Some(-0.5)),
        ("ex2.3", None),
        ("const-coeff", None),
        ("wkb-ok", None),
    ];
    for (id, lambda) in cases {
        let out = run(id, lambda, None);
        let tag = format!("{id} {lambda:?}");
        for (a, b) in out.r1.values().iter().zip(out.r2.values()) {
            assert!(a <= b, "{tag}: r1 {a} > r2 {b}");
        }

        let c = &out.conditions;
        let v = &out.verdict;
        let a = c.positivity.holds;
        let first = a && (c.monotone_growth.holds || c.integrable_deviation.holds);
        let second = a && (c.integrable_deviation.holds || c.monotone_log_derivative.holds);
        let both = a && c.decaying_log_derivative.holds;
        assert_eq!(v.applied.contains(&Rule::R1Boundedness), first, "{tag}");
        assert_eq!(v.applied.contains(&Rule::R2Stability), second, "{tag}");
        assert_eq!(
            v.applied.contains(&Rule::DecayingLogDerivative),
            both,
            "{tag}"
        );
        if v.boundedness.is_known() {
            assert!(first || both, "{tag}: boundedness without a rule");
        }
        if v.stability.is_known() {
            assert!(second || both, "{tag}: stability without a rule");
        }

        assert!(consistent(v.boundedness, v.stability), "{tag}: {:?}", v);
        if v.stability == Stability::AsymptoticallyStable {
            assert_eq!(v.boundedness, Boundedness::AllVanish, "{tag}");
        }
        if v.stability == Stability::LiapunovStable {
            assert!(
                matches!(
                    v.boundedness,
                    Boundedness::AllBounded | Boundedness::AllVanish
                ),
                "{tag}"
            );
        }
        if matches!(
            v.r2_trend.verdict,
            Trend::BoundedAbove | Trend::DivergesToMinusInf
        ) {
            assert!(
                matches!(
                    v.r1_trend.verdict,
                    Trend::BoundedAbove | Trend::DivergesToMinusInf
                ),
                "{tag}: r2 bounded above, r1 {:?}",
                v.r1_trend.verdict
            );
        }
    }
}

#[test]
fn ex21_satisfies_positivity_and_monotone_growth() {
    let out = run("ex2.1", Some(1.0), Some(40.0));
    assert!(out.conditions.positivity.holds);
    assert!(
        out.conditions.monotone_growth.holds,
        "{:?}",
        out.conditions.monotone_growth
    );
    assert!(out.r1.interpolate(12.0).unwrap() < out.r1.values()[0]);
}

#[test]
fn ex22_satisfies_positivity_and_integrable_deviation() {
    let out = run("ex2.2", Some(1.0), Some(60.0));
    assert!(out.conditions.positivity.holds);
    assert!(
        out.conditions.integrable_deviation.holds,
        "{:?}",
        out.conditions.integrable_deviation
    );
    assert_eq!(out.verdict.r2_trend.verdict, Trend::DivergesToMinusInf);
}

#[test]
fn quartic_wkb_integral_converges() {
    let p = find("wkb-ok").unwrap();
    let m = Model::new(&p, 1000.0, 12.0, Tolerance::default()).unwrap();
    let w = check_wkb(&m, 1000.0, 12.0, &PlateauConfig::default()).unwrap();
    assert!(w.convergent, "{:?}", w);
    assert!(w.cutoff.is_none());
    assert_eq!(*w.horizons.last().unwrap(), 1000.0);
}
