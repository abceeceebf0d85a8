use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsl_core::quad::{self, Tolerance};
use rsl_core::{catalog, eval_grid, parse, BindOptions, Binder, Expr, Grid, Params};

fn bind_eval(e: &Expr, params: &Params, t_max: f64, t: f64) -> Complex64 {
    let mut b = Binder::new(params.clone(), BindOptions::new(t_max)).unwrap();
    b.bind(e).unwrap().eval(t).unwrap()
}

#[test]
fn linear_coefficient_at_two() {
    let p = rsl_core::problem::find("ex2.1").unwrap();
    assert_eq!(
        bind_eval(&p.p, &p.params, 3.0, 2.0),
        Complex64::new(2.0, 0.0)
    );
}

#[test]
fn ex21_discriminant_at_five_against_quadrature() {
    let p = rsl_core::problem::find("ex2.1").unwrap();
    let d = p.discriminant_expr().unwrap();
    let v = bind_eval(&d, &p.params, 6.0, 5.0);
    let oracle = quad::integrate(
        |s: f64| Ok(s.exp().sin().powi(2)),
        1.0,
        5.0,
        Tolerance::new(1e-14, 1e-12),
    )
    .unwrap()
    .value;
    assert!((5.0..=9.0).contains(&v.re));
    assert!(
        (v.re - (5.0 + oracle)).abs() < 1e-8,
        "{} vs {}",
        v.re,
        5.0 + oracle
    );
    assert!(v.im.abs() < 1e-12);
}

#[test]
fn q2_derivative_matches_finite_differences() {
    let p = rsl_core::problem::find("ex2.2").unwrap();
    let dq = p.q.differentiate().unwrap();
    let mut b = Binder::new(p.params.clone(), BindOptions::new(11.0)).unwrap();
    let q = b.bind(&p.q).unwrap();
    let dq = b.bind(&dq).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    for _ in 0..50 {
        let t: f64 = rng.gen_range(1.0 + h..10.0);
        let fd = (q.eval(t + h).unwrap() - q.eval(t - h).unwrap()) / (2.0 * h);
        let exact = dq.eval(t).unwrap();
        assert!(
            (exact - fd).norm() <= 1e-6 * (1.0 + exact.norm()),
            "t = {t}: {exact} vs {fd}"
        );
    }
}

#[test]
fn eval_grid_of_oscillatory_cumint() {
    let e = parse("cumint(sin(exp(t))^2)", 1.0).unwrap();
    let mut b = Binder::new(Params::new(), BindOptions::new(6.0)).unwrap();
    let f = b.bind(&e).unwrap();
    let grid = Arc::new(Grid::uniform(1.0, 6.0, 200).unwrap());
    let tr = eval_grid(&f, grid, Tolerance::new(1e-14, 1e-10), 1e-10).unwrap();
    let oracle = quad::integrate(
        |s: f64| Ok(s.exp().sin().powi(2)),
        1.0,
        6.0,
        Tolerance::new(1e-15, 1e-13),
    )
    .unwrap()
    .value;
    let last = tr.last();
    assert!((0.0..=5.0).contains(&last));
    assert!((last - oracle).abs() < 1e-8);
}

#[test]
fn eval_grid_of_constant() {
    let mut b = Binder::new(Params::new(), BindOptions::new(3.0)).unwrap();
    let f = b.bind(&Expr::real(4.0)).unwrap();
    let grid = Arc::new(Grid::new(vec![1.0, 2.0, 3.0]).unwrap());
    let tr = eval_grid(&f, grid, Tolerance::default(), 1e-10).unwrap();
    assert_eq!(tr.values(), &[4.0, 4.0, 4.0]);
}

#[test]
fn grid_refinement_changes_cumulative_little() {
    let e = parse("sin(t)^2/t + cos(ln(t))", 1.0).unwrap();
    let mut b = Binder::new(Params::new(), BindOptions::new(50.0)).unwrap();
    let f = b.bind(&e).unwrap();
    let tol = Tolerance::new(1e-14, 1e-10);
    let coarse = eval_grid(
        &f,
        Arc::new(Grid::uniform(1.0, 50.0, 100).unwrap()),
        tol,
        1e-10,
    )
    .unwrap();
    let fine = eval_grid(
        &f,
        Arc::new(Grid::uniform(1.0, 50.0, 200).unwrap()),
        tol,
        1e-10,
    )
    .unwrap();
    for i in 0..coarse.values().len() {
        let diff = (coarse.cumulative()[i] - fine.cumulative()[2 * i]).abs();
        assert!(diff < 10.0 * 1e-10 * 200.0, "{diff}");
    }
}

#[test]
fn catalog_discriminants_stay_real_for_complex_parameters() {
    for p in catalog() {
        let mut p = p;
        for name in p.param_slots() {
            if name == "lambda" || name == "mu" || name == "a" {
                p = p.with_param(&name, Complex64::new(0.8, -0.6));
            }
        }
        let d = p.discriminant_expr().unwrap();
        let mut opts = BindOptions::new(11.0);
        opts.decompositions = p.decompositions.clone();
        let mut b = Binder::new(p.params.clone(), opts).unwrap();
        let d = b.bind(&d).unwrap();
        for k in 0..=40 {
            let t = p.t0 + 10.0 * k as f64 / 40.0;
            let z = d.eval(t).unwrap();
            if p.id == "const-coeff" {
                continue;
            }
            assert!(
                z.im.abs() <= 1e-9 * (1.0 + z.re.abs()),
                "{} at {t}: {z}",
                p.id
            );
        }
    }
}

#[test]
fn catalog_rules_are_recorded() {
    let all = catalog();
    let rule = |id: &str| {
        all.iter()
            .find(|p| p.id == id)
            .and_then(|p| p.verdict_rule.as_ref())
            .map(|r| r.text().to_string())
            .unwrap()
    };
    assert!(rule("ex2.1").contains("Re lambda > 0"));
    assert!(rule("ex2.2").contains("asymptotically stable"));
    assert!(rule("ex2.3").contains("sqrt(alpha)"));
}

fn arb_integrand() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(-3.0f64..3.0).prop_map(Expr::real), Just(Expr::t()),];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::product),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            (inner, 1i32..3).prop_map(|(e, n)| Expr::powi(e, n)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The derivative of a running integral is its integrand, as trees and as numbers.
    #[test]
    fn derivative_of_cumint_is_integrand(f in arb_integrand(), t in 1.0f64..3.0) {
        let c = Expr::cumint(f.clone(), 1.0);
        let d = c.differentiate().unwrap();
        prop_assert_eq!(&d, &f);
        let params = Params::new();
        let a = bind_eval(&d, &params, 3.0, t);
        let b = bind_eval(&f, &params, 3.0, t);
        prop_assert!((a - b).norm() <= 1e-10 * (1.0 + b.norm()));
    }
}
