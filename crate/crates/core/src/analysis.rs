//! End-to-end analysis of one problem: criteria, direct integration and the
//! comparison with the recorded outcome.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, ConditionReport, CriteriaConfig, CriteriaOutcome, Verdict};
use crate::error::{Error, Result};
use crate::oracle::{
    self, Coefficients, EmpiricalVerdict, IdentityReport, OracleConfig, SubstitutionReport,
};
use crate::outcome::{Boundedness, Stability};
use crate::problem::{self, Claim, Problem, ProblemDoc};

pub const SCHEMA: u32 = 1;

/// Everything that determines a report. Omitted fields take defaults, and
/// the resolved values are echoed back in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Catalog id. Ignored when `inline` is set.
    pub problem: Option<String>,
    pub inline: Option<ProblemDoc>,
    /// Parameter overrides as `[re, im]`.
    pub params: BTreeMap<String, [f64; 2]>,
    pub t_end: Option<f64>,
    pub oracle_t_end: Option<f64>,
    pub criteria: CriteriaConfig,
    pub oracle: OracleConfig,
    /// Run the identity and substitution checks on the criteria grid.
    pub identities: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            problem: None,
            inline: None,
            params: BTreeMap::new(),
            t_end: None,
            oracle_t_end: None,
            criteria: CriteriaConfig::default(),
            oracle: OracleConfig::default(),
            identities: true,
        }
    }
}

impl AnalysisConfig {
    pub fn for_problem(id: &str) -> Self {
        AnalysisConfig {
            problem: Some(id.to_string()),
            ..Default::default()
        }
    }

    pub fn with_param(mut self, name: &str, value: Complex64) -> Self {
        self.params.insert(name.to_string(), [value.re, value.im]);
        self
    }

    /// Loads the problem, applies parameter overrides and fills in horizons.
    pub fn resolve(&self) -> Result<(Problem, AnalysisConfig)> {
        let mut problem = match (&self.inline, &self.problem) {
            (Some(doc), _) => Problem::from_doc(doc.clone())?,
            (None, Some(id)) => problem::find(id)?,
            (None, None) => return Err(Error::InvalidConfig("no problem given".into())),
        };
        for (k, v) in &self.params {
            problem = problem.with_param(k, Complex64::new(v[0], v[1]));
        }
        problem.check_bound()?;
        let mut cfg = self.clone();
        cfg.problem = Some(problem.id.clone());
        cfg.t_end = Some(self.t_end.unwrap_or(problem.t_end));
        cfg.oracle_t_end = Some(self.oracle_t_end.unwrap_or(problem.oracle_t_end));
        cfg.validate(problem.t0)?;
        Ok((problem, cfg))
    }

    fn validate(&self, t0: f64) -> Result<()> {
        let c = &self.criteria;
        let o = &self.oracle;
        let positive = [
            ("criteria.grid_intervals", c.grid_intervals as f64),
            ("criteria.root.tol", c.root.tol),
            ("criteria.root.t1_candidates", c.root.t1_candidates as f64),
            ("criteria.root.sup_safety", c.root.sup_safety),
            ("criteria.trend.delta", c.trend.delta),
            ("criteria.trend.Delta", c.trend.big_delta),
            ("criteria.trend.band", c.trend.band),
            ("criteria.trend.windows", c.trend.windows as f64),
            ("criteria.trend.warmup", c.trend.warmup),
            ("criteria.plateau.plateau", c.plateau.plateau),
            ("criteria.plateau.wkb_rel_tol", c.plateau.wkb_rel_tol),
            ("criteria.plateau.wkb_levels", c.plateau.wkb_levels as f64),
            ("criteria.plateau.wkb_cap", c.plateau.wkb_cap),
            ("criteria.quad_tol.rel", c.quad_tol.rel),
            ("criteria.t_osc", c.t_osc),
            ("oracle.tol", o.tol),
            ("oracle.grid_intervals", o.grid_intervals as f64),
            ("oracle.plateau", o.plateau),
            ("oracle.vanish", o.vanish),
            ("oracle.t_osc", o.t_osc),
            ("oracle.quad_tol.rel", o.quad_tol.rel),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if c.plateau.epsilon_menu.is_empty()
            || c.plateau
                .epsilon_menu
                .iter()
                .any(|e| !(*e > 0.0 && *e <= 0.5))
        {
            return Err(Error::InvalidConfig(
                "criteria.plateau.epsilon_menu must lie in (0, 1/2]".into(),
            ));
        }
        for (name, t) in [("t_end", self.t_end), ("oracle_t_end", self.oracle_t_end)] {
            let t = t.unwrap_or(f64::NAN);
            if !(t > t0) || !t.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {t} must exceed t0 = {t0}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Match,
    Mismatch,
    /// No recorded outcome for this problem.
    NotApplicable,
    /// The criteria returned Unknown for a component with a recorded outcome.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimComparison {
    pub status: ClaimStatus,
    pub claim: Option<Claim>,
    pub rule: Option<String>,
}

/// Compares a verdict with a recorded claim, component by component.
pub fn compare_claim(claim: Option<Claim>, b: Boundedness, s: Stability) -> ClaimStatus {
    let Some(c) = claim else {
        return ClaimStatus::NotApplicable;
    };
    let mut status = ClaimStatus::Match;
    let mut any = false;
    if let Some(cb) = c.boundedness {
        any = true;
        if b == Boundedness::Unknown {
            status = ClaimStatus::Undetermined;
        } else if b != cb {
            return ClaimStatus::Mismatch;
        }
    }
    if let Some(cs) = c.stability {
        any = true;
        if s == Stability::Unknown {
            status = ClaimStatus::Undetermined;
        } else if s != cs {
            return ClaimStatus::Mismatch;
        }
    }
    if any {
        status
    } else {
        ClaimStatus::NotApplicable
    }
}

/// Whether criteria and direct integration agree. Components the criteria
/// left Unknown are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub boundedness: Option<bool>,
    pub stability: Option<bool>,
}

impl Agreement {
    pub fn new(v: &Verdict, e: &EmpiricalVerdict) -> Self {
        Agreement {
            boundedness: (v.boundedness != Boundedness::Unknown)
                .then(|| v.boundedness == e.boundedness),
            stability: (v.stability != Stability::Unknown).then(|| v.stability == e.stability),
        }
    }

    /// No component disagrees.
    pub fn holds(&self) -> bool {
        self.boundedness != Some(false) && self.stability != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityFindings {
    pub phi0_max_rel_deviation: f64,
    pub phi0_compared_until: f64,
    pub checks: IdentityReport,
    pub substitution: SubstitutionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ReportError {
    fn from(e: &Error) -> Self {
        ReportError {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub config: AnalysisConfig,
    pub problem: ProblemDoc,
    /// Set when the criteria could not run; `conditions` and `verdict` are
    /// then absent.
    pub error: Option<ReportError>,
    pub conditions: Option<ConditionReport>,
    pub verdict: Option<Verdict>,
    pub oracle: Option<EmpiricalVerdict>,
    pub oracle_error: Option<ReportError>,
    pub agreement: Option<Agreement>,
    pub identities: Option<IdentityFindings>,
    pub identities_error: Option<ReportError>,
    #[serde(rename = "paper_verdict")]
    pub recorded_claim: ClaimComparison,
    /// Only filled in on request, so reports stay reproducible byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn identity_findings(
    problem: &Problem,
    out: &CriteriaOutcome,
    cfg: &AnalysisConfig,
) -> Result<IdentityFindings> {
    let t_end = out.model.t_end;
    let c = Coefficients::new(problem, t_end, cfg.criteria.t_osc, cfg.criteria.quad_tol)?;
    let tol = cfg.oracle.tol;
    let phi0 = oracle::phi0_via_root(&c, &out.root, tol)?;
    let checks = oracle::identity_checks(&c, &out.root, &phi0, &out.r1, &out.r2)?;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let substitution = oracle::substitution_check(&c, Arc::clone(&out.grid), one, zero, tol)?;
    Ok(IdentityFindings {
        phi0_max_rel_deviation: phi0.max_rel_deviation,
        phi0_compared_until: phi0.compared_until,
        checks,
        substitution,
    })
}

/// Runs the full pipeline.
///
/// Errors are returned only for bad configuration and for integrator
/// failures in the criteria; a theory-inapplicable problem still yields a
/// report with `error` set.
pub fn analyze(config: &AnalysisConfig, timing: bool) -> Result<AnalysisReport> {
    let start = Instant::now();
    let (problem, cfg) = config.resolve()?;
    let t_end = cfg.t_end.expect("resolved");
    let oracle_t_end = cfg.oracle_t_end.expect("resolved");

    let (outcome, error) = match criteria::verdict(&problem, t_end, &cfg.criteria) {
        Ok(o) => (Some(o), None),
        Err(e) if e.is_theory_inapplicable() => (None, Some(ReportError::from(&e))),
        Err(e) => return Err(e),
    };
    let (oracle, oracle_error) =
        match oracle::fundamental_growth(&problem, oracle_t_end, &cfg.oracle) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(ReportError::from(&e))),
        };
    let (identities, identities_error) = match (&outcome, cfg.identities) {
        (Some(o), true) => match identity_findings(&problem, o, &cfg) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(ReportError::from(&e))),
        },
        _ => (None, None),
    };
    let verdict = outcome.as_ref().map(|o| o.verdict.clone());
    let claim = problem.claim()?;
    let status = match &verdict {
        Some(v) => compare_claim(claim, v.boundedness, v.stability),
        None if claim.is_some() => ClaimStatus::Undetermined,
        None => ClaimStatus::NotApplicable,
    };
    let agreement = match (&verdict, &oracle) {
        (Some(v), Some(e)) => Some(Agreement::new(v, e)),
        _ => None,
    };
    Ok(AnalysisReport {
        schema: SCHEMA,
        config: cfg,
        problem: problem.to_doc(),
        error,
        conditions: outcome.map(|o| o.conditions),
        verdict,
        oracle,
        oracle_error,
        agreement,
        identities,
        identities_error,
        recorded_claim: ClaimComparison {
            status,
            claim,
            rule: problem.verdict_rule.as_ref().map(|r| r.text().to_string()),
        },
        wall_time_s: timing.then(|| start.elapsed().as_secs_f64()),
    })
}

/// One line of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: [f64; 2],
    pub boundedness: Option<Boundedness>,
    pub stability: Option<Stability>,
    pub oracle_boundedness: Option<Boundedness>,
    pub oracle_stability: Option<Stability>,
    #[serde(rename = "paper_verdict")]
    pub claim_status: Option<ClaimStatus>,
    pub error: Option<ReportError>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "param,re,im,boundedness,stability,oracle_boundedness,oracle_stability,paper_verdict,error";

    pub fn csv_line(&self) -> String {
        fn opt<T: Serialize>(v: &Option<T>) -> String {
            match v {
                Some(x) => serde_json::to_value(x)
                    .ok()
                    .and_then(|j| j.as_str().map(str::to_string))
                    .unwrap_or_default(),
                None => String::new(),
            }
        }
        let err = self
            .error
            .as_ref()
            .map(|e| e.kind.clone())
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.param,
            self.value[0],
            self.value[1],
            opt(&self.boundedness),
            opt(&self.stability),
            opt(&self.oracle_boundedness),
            opt(&self.oracle_stability),
            opt(&self.claim_status),
            err
        )
    }
}

/// Analyzes `base` with `param` set to `value`. Failures land in the row.
pub fn sweep_row(base: &AnalysisConfig, param: &str, value: Complex64) -> SweepRow {
    let mut cfg = base.clone().with_param(param, value);
    cfg.identities = false;
    let mut row = SweepRow {
        param: param.to_string(),
        value: [value.re, value.im],
        boundedness: None,
        stability: None,
        oracle_boundedness: None,
        oracle_stability: None,
        claim_status: None,
        error: None,
    };
    match analyze(&cfg, false) {
        Ok(r) => {
            row.boundedness = r.verdict.as_ref().map(|v| v.boundedness);
            row.stability = r.verdict.as_ref().map(|v| v.stability);
            row.oracle_boundedness = r.oracle.as_ref().map(|v| v.boundedness);
            row.oracle_stability = r.oracle.as_ref().map(|v| v.stability);
            row.claim_status = Some(r.recorded_claim.status);
            row.error = r.error;
        }
        Err(e) => row.error = Some(ReportError::from(&e)),
    }
    row
}

/// Checks that `param` occurs in the problem selected by `base`.
pub fn check_sweep_param(base: &AnalysisConfig, param: &str) -> Result<()> {
    let (problem, _) = base.resolve()?;
    if problem.param_slots().iter().any(|p| p == param) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "parameter `{param}` does not occur in problem `{}`",
            problem.id
        )))
    }
}
