//! Equation instances and the built-in catalog.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bind::Decomposition;
use crate::error::{Error, Result};
use crate::expr::{Expr, Params};
use crate::outcome::{Boundedness, Stability};
use crate::parse::parse;

/// A recorded claim about an equation's solutions. `None` means no claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub boundedness: Option<Boundedness>,
    pub stability: Option<Stability>,
}

impl Claim {
    pub const fn new(boundedness: Option<Boundedness>, stability: Option<Stability>) -> Self {
        Claim {
            boundedness,
            stability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Value(f64),
    /// Square root of the real part of a parameter.
    SqrtOf(String),
}

/// How the expected outcome depends on the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VerdictRule {
    /// `Re param > threshold` gives `above`, otherwise `at_or_below`.
    ReThreshold {
        param: String,
        threshold: Threshold,
        above: Claim,
        at_or_below: Claim,
        text: String,
    },
    /// `φ'' + aφ' + bφ = 0` with constant `a`, `b`, decided by the
    /// characteristic roots.
    ConstantCoefficients {
        p: String,
        q: String,
        text: String,
    },
    Fixed {
        claim: Claim,
        text: String,
    },
}

impl VerdictRule {
    pub fn text(&self) -> &str {
        match self {
            VerdictRule::ReThreshold { text, .. }
            | VerdictRule::ConstantCoefficients { text, .. }
            | VerdictRule::Fixed { text, .. } => text,
        }
    }

    /// The critical value of the threshold parameter, if the rule has one.
    pub fn critical_value(&self, params: &Params) -> Result<Option<(String, f64)>> {
        match self {
            VerdictRule::ReThreshold {
                param, threshold, ..
            } => Ok(Some((param.clone(), threshold_value(threshold, params)?))),
            _ => Ok(None),
        }
    }

    pub fn claim(&self, params: &Params) -> Result<Claim> {
        match self {
            VerdictRule::ReThreshold {
                param,
                threshold,
                above,
                at_or_below,
                ..
            } => {
                let v = lookup(params, param)?.re;
                Ok(if v > threshold_value(threshold, params)? {
                    *above
                } else {
                    *at_or_below
                })
            }
            VerdictRule::ConstantCoefficients { p, q, .. } => {
                let a = lookup(params, p)?;
                let b = lookup(params, q)?;
                Ok(constant_coefficient_claim(a, b))
            }
            VerdictRule::Fixed { claim, .. } => Ok(*claim),
        }
    }
}

fn lookup(params: &Params, name: &str) -> Result<Complex64> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| Error::UnboundParameter(name.to_string()))
}

fn threshold_value(th: &Threshold, params: &Params) -> Result<f64> {
    match th {
        Threshold::Value(v) => Ok(*v),
        Threshold::SqrtOf(name) => Ok(lookup(params, name)?.re.max(0.0).sqrt()),
    }
}

/// Outcome for constant coefficients from the roots of `r² + ar + b`.
pub fn constant_coefficient_claim(a: Complex64, b: Complex64) -> Claim {
    let disc = (a * a - 4.0 * b).sqrt();
    let r1 = (-a + disc) / 2.0;
    let r2 = (-a - disc) / 2.0;
    let top = r1.re.max(r2.re);
    let repeated = (r1 - r2).norm() <= 1e-12 * (1.0 + r1.norm());
    if top < 0.0 {
        Claim::new(
            Some(Boundedness::AllVanish),
            Some(Stability::AsymptoticallyStable),
        )
    } else if top > 0.0 || repeated {
        Claim::new(
            Some(Boundedness::UnboundedSolutionExists),
            Some(Stability::Unstable),
        )
    } else {
        Claim::new(
            Some(Boundedness::AllBounded),
            Some(Stability::LiapunovStable),
        )
    }
}

/// JSON form of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub id: String,
    pub p: String,
    pub q: String,
    pub t0: f64,
    #[serde(default)]
    pub params: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decompositions: Vec<Decomposition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_rule: Option<VerdictRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub id: String,
    pub p: Expr,
    pub q: Expr,
    pub t0: f64,
    pub params: Params,
    pub decompositions: Vec<Decomposition>,
    pub verdict_rule: Option<VerdictRule>,
    /// Suggested analysis horizon.
    pub t_end: f64,
    /// Suggested horizon for direct integration.
    pub oracle_t_end: f64,
    /// Known limitations attached to every analysis of this problem.
    pub notes: Vec<String>,
    p_src: String,
    q_src: String,
}

impl Problem {
    pub fn from_doc(doc: ProblemDoc) -> Result<Self> {
        if !doc.t0.is_finite() {
            return Err(Error::InvalidConfig("t0 must be finite".into()));
        }
        let p = parse(&doc.p, doc.t0)?;
        let q = parse(&doc.q, doc.t0)?;
        let params = doc
            .params
            .iter()
            .map(|(k, v)| (k.clone(), Complex64::new(v[0], v[1])))
            .collect();
        Ok(Problem {
            id: doc.id,
            p,
            q,
            t0: doc.t0,
            params,
            decompositions: doc.decompositions,
            verdict_rule: doc.verdict_rule,
            t_end: doc.t_end.unwrap_or(doc.t0 + 40.0),
            oracle_t_end: doc.oracle_t_end.or(doc.t_end).unwrap_or(doc.t0 + 40.0),
            notes: doc.notes,
            p_src: doc.p,
            q_src: doc.q,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Problem::from_doc(serde_json::from_str(s)?)
    }

    pub fn to_doc(&self) -> ProblemDoc {
        ProblemDoc {
            id: self.id.clone(),
            p: self.p_src.clone(),
            q: self.q_src.clone(),
            t0: self.t0,
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), [v.re, v.im]))
                .collect(),
            decompositions: self.decompositions.clone(),
            verdict_rule: self.verdict_rule.clone(),
            t_end: Some(self.t_end),
            oracle_t_end: Some(self.oracle_t_end),
            notes: self.notes.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    /// Parameter names used by `p` and `q`.
    pub fn param_slots(&self) -> Vec<String> {
        let mut v = self.p.params();
        v.extend(self.q.params());
        v.sort();
        v.dedup();
        v
    }

    pub fn with_param(mut self, name: &str, value: Complex64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    /// Fails if a parameter used by `p` or `q` has no value.
    pub fn check_bound(&self) -> Result<()> {
        match self
            .param_slots()
            .into_iter()
            .find(|n| !self.params.contains_key(n))
        {
            Some(n) => Err(Error::UnboundParameter(n)),
            None => Ok(()),
        }
    }

    /// `2p' + p² − 4q`, with parameters left symbolic.
    pub fn discriminant_expr(&self) -> Result<Expr> {
        let dp = self.p.differentiate()?;
        Ok(Expr::real(2.0) * dp + Expr::powi(self.p.clone(), 2) - Expr::real(4.0) * self.q.clone())
    }

    pub fn claim(&self) -> Result<Option<Claim>> {
        self.verdict_rule
            .as_ref()
            .map(|r| r.claim(&self.params))
            .transpose()
    }
}

fn real(v: f64) -> [f64; 2] {
    [v, 0.0]
}

fn doc(id: &str, p: &str, q: &str, t0: f64, params: &[(&str, f64)], t_end: f64) -> ProblemDoc {
    ProblemDoc {
        id: id.into(),
        p: p.into(),
        q: q.into(),
        t0,
        params: params
            .iter()
            .map(|&(k, v)| (k.to_string(), real(v)))
            .collect(),
        decompositions: Vec::new(),
        verdict_rule: None,
        t_end: Some(t_end),
        oracle_t_end: None,
        notes: Vec::new(),
    }
}

use Boundedness as B;
use Stability as S;

/// Built-in problems.
pub fn catalog() -> Vec<Problem> {
    let mut ex21 = doc(
        "ex2.1",
        "lambda*t",
        "lambda/2 + lambda^2*t^2/4 - t/4 - cumint(sin(exp(t))^2)/4",
        1.0,
        &[("lambda", 1.0)],
        40.0,
    );
    ex21.oracle_t_end = Some(20.0);
    ex21.decompositions.push(Decomposition {
        integrand: "sin(exp(t))^2".into(),
        lower: 1.0,
        trend: 0.5,
        remainder_bound: 0.25,
    });
    ex21.verdict_rule = Some(VerdictRule::ReThreshold {
        param: "lambda".into(),
        threshold: Threshold::Value(0.0),
        above: Claim::new(Some(B::AllVanish), None),
        at_or_below: Claim::new(Some(B::UnboundedSolutionExists), Some(S::Unstable)),
        text:
            "Re lambda > 0 => all solutions vanish; Re lambda <= 0 => unbounded solution (unstable)"
                .into(),
    });

    let mut ex22 = doc(
        "ex2.2",
        "lambda*t^2",
        "lambda*t + lambda^2*t^4/4 - t^2/4 - cumint(sin(exp(t)))^2/4",
        1.0,
        &[("lambda", 1.0)],
        60.0,
    );
    ex22.oracle_t_end = Some(30.0);
    ex22.decompositions.push(Decomposition {
        integrand: "sin(exp(t))".into(),
        lower: 1.0,
        trend: 0.0,
        remainder_bound: 0.5,
    });
    ex22.verdict_rule = Some(VerdictRule::ReThreshold {
        param: "lambda".into(),
        threshold: Threshold::Value(0.0),
        above: Claim::new(Some(B::AllVanish), Some(S::AsymptoticallyStable)),
        at_or_below: Claim::new(Some(B::UnboundedSolutionExists), Some(S::Unstable)),
        text: "Re lambda > 0 => asymptotically stable; Re lambda <= 0 => unstable".into(),
    });

    let mut ex23 = doc(
        "ex2.3",
        "lambda + mu*sin(t)",
        "mu*cos(t)/2 + (lambda + mu*sin(t))^2/4 - (alpha + beta*cos(ln(t)) + gamma*cumint(sin(t)^2/t))/4",
        1.0,
        &[("lambda", 3.0), ("mu", 1.0), ("alpha", 4.0), ("beta", 1.0), ("gamma", 1.0)],
        300.0,
    );
    ex23.oracle_t_end = Some(100.0);
    ex23.verdict_rule = Some(VerdictRule::ReThreshold {
        param: "lambda".into(),
        threshold: Threshold::SqrtOf("alpha".into()),
        above: Claim::new(Some(B::AllVanish), Some(S::AsymptoticallyStable)),
        at_or_below: Claim::new(Some(B::UnboundedSolutionExists), Some(S::Unstable)),
        text:
            "limit of r1, r2 is -inf if Re lambda > sqrt(alpha), +inf if Re lambda <= sqrt(alpha)"
                .into(),
    });
    ex23.notes.push(
        "D contains gamma*cumint(sin(t)^2/t) ~ (gamma/2) ln t, so sqrt(D) eventually exceeds any fixed \
         Re lambda when gamma > 0; the recorded rule may reverse beyond the analysed horizon"
            .into(),
    );

    let mut cc = doc(
        "const-coeff",
        "a",
        "b",
        0.0,
        &[("a", 3.0), ("b", 2.0)],
        20.0,
    );
    cc.verdict_rule = Some(VerdictRule::ConstantCoefficients {
        p: "a".into(),
        q: "b".into(),
        text: "characteristic roots of r^2 + a r + b".into(),
    });

    let mut wkb = doc("wkb-ok", "0", "-t^4/4", 1.0, &[], 8.0);
    wkb.verdict_rule = Some(VerdictRule::Fixed {
        claim: Claim::new(Some(B::UnboundedSolutionExists), Some(S::Unstable)),
        text: "D = t^4; solutions grow like exp(t^3/6)".into(),
    });

    let mut harmonic = doc("harmonic", "0", "omega^2", 0.0, &[("omega", 1.0)], 20.0);
    harmonic.verdict_rule = Some(VerdictRule::Fixed {
        claim: Claim::new(Some(B::AllBounded), Some(S::LiapunovStable)),
        text: "D = -4 omega^2 < 0; solutions are cos and sin".into(),
    });

    [ex21, ex22, ex23, cc, wkb, harmonic]
        .into_iter()
        .map(|d| Problem::from_doc(d).expect("catalog entries parse"))
        .collect()
}

pub fn find(id: &str) -> Result<Problem> {
    catalog()
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::UnknownProblem(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bind::{BindOptions, Binder};
    use crate::quad::{self, Tolerance};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn catalog_ids() {
        let ids: Vec<String> = catalog().into_iter().map(|p| p.id).collect();
        for id in [
            "ex2.1",
            "ex2.2",
            "ex2.3",
            "const-coeff",
            "wkb-ok",
            "harmonic",
        ] {
            assert!(ids.iter().any(|x| x == id), "{id}");
        }
        for p in catalog() {
            p.check_bound().unwrap();
        }
    }

    #[test]
    fn p1_value() {
        let p = find("ex2.1").unwrap();
        let mut params = Params::new();
        params.insert("lambda".into(), c(1.0));
        assert_eq!(p.p.eval_direct(&params, 2.0).unwrap(), c(2.0));
    }

    #[test]
    fn recorded_rules() {
        let p = find("ex2.1").unwrap();
        assert_eq!(p.claim().unwrap().unwrap().boundedness, Some(B::AllVanish));
        let p = p.with_param("lambda", c(0.0));
        assert_eq!(
            p.claim().unwrap().unwrap().boundedness,
            Some(B::UnboundedSolutionExists)
        );
        let p = find("ex2.2").unwrap();
        assert_eq!(
            p.claim().unwrap().unwrap().stability,
            Some(S::AsymptoticallyStable)
        );
        let p = find("ex2.3").unwrap();
        let rule = p.verdict_rule.as_ref().unwrap();
        assert_eq!(rule.critical_value(&p.params).unwrap().unwrap().1, 2.0);
        let p = p.with_param("lambda", c(1.5));
        assert_eq!(p.claim().unwrap().unwrap().stability, Some(S::Unstable));
    }

    #[test]
    fn constant_coefficient_rule() {
        let cl = constant_coefficient_claim(c(3.0), c(2.0));
        assert_eq!(cl.stability, Some(S::AsymptoticallyStable));
        let cl = constant_coefficient_claim(c(0.0), c(1.0));
        assert_eq!(cl.stability, Some(S::LiapunovStable));
        let cl = constant_coefficient_claim(c(0.0), c(0.0));
        assert_eq!(cl.stability, Some(S::Unstable));
        let cl = constant_coefficient_claim(c(-1.0), c(1.0));
        assert_eq!(cl.boundedness, Some(B::UnboundedSolutionExists));
    }

    #[test]
    fn json_round_trip() {
        for p in catalog() {
            let back = Problem::from_json(&p.to_json().unwrap()).unwrap();
            assert_eq!(back, p);
        }
        let p = Problem::from_json(r#"{"id":"x","p":"0","q":"-1","t0":0}"#).unwrap();
        assert!(p.params.is_empty());
    }

    #[test]
    fn discriminant_closed_forms() {
        let params = |l: Complex64| {
            let mut m = Params::new();
            m.insert("lambda".into(), l);
            m
        };
        let sin2 = |s: f64| s.exp().sin().powi(2);
        let tol = Tolerance::new(1e-15, 1e-12);
        for l in [c(1.0), Complex64::new(0.5, 0.7), c(-2.0)] {
            let d = find("ex2.1").unwrap().discriminant_expr().unwrap();
            for t in [1.0, 2.5, 5.0] {
                let z = d.eval_direct(&params(l), t).unwrap();
                let oracle = t + quad::integrate(|s| Ok(sin2(s)), 1.0, t, tol).unwrap().value;
                assert!((z.re - oracle).abs() < 1e-9 * (1.0 + oracle), "{l} {t}");
                assert!(z.im.abs() < 1e-9 * (1.0 + z.re.abs()));
            }
            let d = find("ex2.2").unwrap().discriminant_expr().unwrap();
            for t in [1.0, 3.0, 4.5] {
                let z = d.eval_direct(&params(l), t).unwrap();
                let c = quad::integrate(|s: f64| Ok(s.exp().sin()), 1.0, t, tol)
                    .unwrap()
                    .value;
                let oracle = t * t + c * c;
                assert!((z.re - oracle).abs() < 1e-9 * (1.0 + oracle));
                assert!(z.im.abs() < 1e-9 * (1.0 + z.re.abs()));
            }
        }
        let d = find("const-coeff").unwrap().discriminant_expr().unwrap();
        let p = find("const-coeff").unwrap();
        assert_eq!(d.eval_direct(&p.params, 3.0).unwrap(), c(1.0));
    }

    #[test]
    fn ex23_discriminant_at_100() {
        let p = find("ex2.3").unwrap();
        let d = p.discriminant_expr().unwrap();
        let mut b = Binder::new(p.params.clone(), BindOptions::new(100.0)).unwrap();
        let bound = b.bind(&d).unwrap();
        let tol = Tolerance::new(1e-15, 1e-13);
        let integral = quad::integrate(|s: f64| Ok(s.sin().powi(2) / s), 1.0, 100.0, tol)
            .unwrap()
            .value;
        let oracle = 4.0 + (100f64).ln().cos() + integral;
        let z = bound.eval(100.0).unwrap();
        assert!((z.re - oracle).abs() < 1e-6, "{} vs {oracle}", z.re);
    }

    #[test]
    fn decompositions_hold_on_feasible_range() {
        for p in catalog() {
            for d in &p.decompositions {
                let f = parse(&d.integrand, d.lower).unwrap();
                let mut acc = 0.0;
                let mut a = d.lower;
                while a < 11.0 {
                    let b = a + 0.25;
                    acc += quad::integrate(
                        |s| f.eval_direct(&Params::new(), s).map(|z| z.re),
                        a,
                        b,
                        Tolerance::default(),
                    )
                    .unwrap()
                    .value;
                    let dev = (acc - d.trend * (b - d.lower)).abs();
                    assert!(dev <= d.remainder_bound, "{} at {b}: {dev}", p.id);
                    a = b;
                }
            }
        }
    }
}
