//! Hypothesis checks on the discriminant, the functionals `r1`, `r2`, their
//! asymptotic trends, and the resulting verdict.
//!
//! With `D = 2p' + p² − 4q`:
//!
//! ```text
//! r1(t) = ∫_{t0}^t (√D − Re p) − ½ ln D(t)
//! r2(t) = r1(t) + 2 ln(1 + |p(t) − √D(t)|)
//! ```
//!
//! When `D > 0` and either `D` is nondecreasing with `D'/D^(3/2−ε)` bounded,
//! or `D ≥ ε`, `D'/D` bounded and `∫ ρ_{D/4} |D'| / D^(3/2) < ∞`, all solutions
//! are bounded (vanish) iff `r1` is bounded above (tends to −∞). When `D > 0`
//! and either the second group above holds or `D` is nondecreasing with
//! `D'/D` bounded, the equation is Liapunov (asymptotically) stable iff `r2`
//! is bounded above (tends to −∞). A third group, `D ≥ ε`,
//! `|D'|/D ≤ c (1 + t − t0)^(−α)` and `∫ dτ / (√D (1 + τ − t0)^(2α)) < ∞`,
//! enables both conclusions.
//!
//! "Bounded" and "convergent" are judged on a finite horizon: a running
//! supremum or partial integral is accepted when it grows by less than a
//! relative `plateau` over the last doubling of the horizon.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bind::{BindOptions, Binder, BoundExpr};
use crate::error::{Error, Result};
use crate::outcome::{consistent, Boundedness, Stability};
use crate::problem::Problem;
use crate::quad::{self, Tolerance};
use crate::riccati::{differential_root, RootOptions, RootTrace};
use crate::trace::{cumulative_integral, FuncTrace, Grid, SmoothFunction};

/// Allowed `|Im D| / (1 + |Re D|)`.
pub const DISCRIMINANT_IMAG_TOL: f64 = 1e-9;

/// A problem with parameters bound and the derivatives it needs compiled.
#[derive(Debug, Clone)]
pub struct Model {
    pub problem: Problem,
    pub t_end: f64,
    pub p: BoundExpr,
    pub dp: BoundExpr,
    pub q: BoundExpr,
    pub d: BoundExpr,
    pub dd: BoundExpr,
    pub ddd: BoundExpr,
}

impl Model {
    pub fn new(problem: &Problem, t_end: f64, t_osc: f64, quad_tol: Tolerance) -> Result<Self> {
        problem.check_bound()?;
        if !(t_end > problem.t0) || !t_end.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "horizon {t_end} must exceed t0 = {}",
                problem.t0
            )));
        }
        let mut opts = BindOptions::new(t_end);
        opts.t_osc = t_osc;
        opts.quad_tol = quad_tol;
        opts.decompositions = problem.decompositions.clone();
        let mut b = Binder::new(problem.params.clone(), opts)?;
        let d = problem.discriminant_expr()?;
        let dd = d.differentiate()?;
        let ddd = dd.differentiate()?;
        Ok(Model {
            problem: problem.clone(),
            t_end,
            p: b.bind(&problem.p)?,
            dp: b.bind(&problem.p.differentiate()?)?,
            q: b.bind(&problem.q)?,
            d: b.bind(&d)?,
            dd: b.bind(&dd)?,
            ddd: b.bind(&ddd)?,
        })
    }

    pub fn t0(&self) -> f64 {
        self.problem.t0
    }

    pub fn p_at(&self, t: f64) -> Result<Complex64> {
        self.p.eval(t)
    }

    pub fn q_at(&self, t: f64) -> Result<Complex64> {
        self.q.eval(t)
    }

    fn real(e: &BoundExpr, t: f64) -> Result<f64> {
        let z = e.eval(t)?;
        if z.im.abs() > DISCRIMINANT_IMAG_TOL * (1.0 + z.re.abs()) {
            return Err(Error::ComplexDiscriminant { t, im: z.im });
        }
        Ok(z.re)
    }

    /// `D(t)`, required to be real.
    pub fn disc(&self, t: f64) -> Result<f64> {
        Self::real(&self.d, t)
    }

    pub fn disc_d1(&self, t: f64) -> Result<f64> {
        Self::real(&self.dd, t)
    }

    pub fn disc_d2(&self, t: f64) -> Result<f64> {
        Self::real(&self.ddd, t)
    }

    /// `D(t)`, required to be real and positive.
    pub fn disc_positive(&self, t: f64) -> Result<f64> {
        let v = self.disc(t)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::NonPositiveDiscriminant { t, value: v })
        }
    }

    /// `D/4` as a smooth function.
    pub fn quarter_disc(&self) -> QuarterDisc<'_> {
        QuarterDisc(self)
    }
}

pub struct QuarterDisc<'a>(&'a Model);

impl SmoothFunction for QuarterDisc<'_> {
    fn value(&self, t: f64) -> Result<f64> {
        Ok(self.0.disc_positive(t)? / 4.0)
    }

    fn derivative(&self, t: f64) -> Result<f64> {
        Ok(self.0.disc_d1(t)? / 4.0)
    }
}

/// Samples `D` on the grid. Fails on the first non-real value.
pub fn discriminant(model: &Model, grid: Arc<Grid>) -> Result<FuncTrace> {
    let v = grid
        .points()
        .iter()
        .map(|&t| model.disc(t))
        .collect::<Result<Vec<_>>>()?;
    FuncTrace::from_samples(grid, v)
}

/// `(r1, r2)` on the grid.
pub fn r_functions(
    model: &Model,
    grid: Arc<Grid>,
    tol: Tolerance,
) -> Result<(FuncTrace, FuncTrace)> {
    let integral = cumulative_integral(
        |t| Ok(model.disc_positive(t)?.sqrt() - model.p_at(t)?.re),
        &grid,
        tol,
    )?;
    let mut r1 = Vec::with_capacity(grid.len());
    let mut r2 = Vec::with_capacity(grid.len());
    for (i, &t) in grid.points().iter().enumerate() {
        let d = model.disc_positive(t)?;
        let a = integral[i] - 0.5 * d.ln();
        let gap = (model.p_at(t)? - d.sqrt()).norm();
        r1.push(a);
        r2.push(a + 2.0 * gap.ln_1p());
    }
    Ok((
        FuncTrace::with_cumulative(Arc::clone(&grid), r1, vec![0.0; grid.len()])?,
        FuncTrace::with_cumulative(Arc::clone(&grid), r2, vec![0.0; grid.len()])?,
    ))
}

/// True when `full` exceeds `half` by less than `rel · |half|`.
pub fn plateau(half: f64, full: f64, rel: f64) -> bool {
    if !full.is_finite() || !half.is_finite() {
        return false;
    }
    full - half <= rel * half.abs()
}

/// Index of the grid point halving the horizon.
fn half_index(grid: &Grid) -> usize {
    grid.floor_index(grid.t0() + 0.5 * (grid.t_end() - grid.t0()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    /// Slope threshold per unit `t`.
    pub delta: f64,
    /// Required total change over the tail for a divergence verdict.
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    /// Largest oscillation band accepted as bounded.
    pub band: f64,
    pub windows: usize,
    /// The horizon must be at least four times this long.
    pub warmup: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            delta: 1e-3,
            big_delta: 2.0,
            band: 10.0,
            windows: 8,
            warmup: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    BoundedAbove,
    DivergesToMinusInf,
    DivergesToPlusInf,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendWindow {
    pub start: f64,
    pub end: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendEstimate {
    pub verdict: Trend,
    pub windows: Vec<TrendWindow>,
    pub total_change: f64,
    /// Max minus min over the tail.
    pub band: f64,
    pub horizon: [f64; 2],
}

fn ls_slope(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in t.iter().zip(v) {
        num += (a - mt) * (b - mv);
        den += (a - mt) * (a - mt);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Classifies the behaviour of a trace from its tail `[t0 + (T − t0)/2, T]`.
///
/// Divergence needs every window slope beyond `±delta` in the same direction
/// and a total tail change beyond `big_delta`. Boundedness needs the tail to
/// stay within `band` and its maximum over the second half of the tail not to
/// exceed the maximum over the first half by more than `delta` per unit `t`;
/// window slopes may then take either sign, as for an oscillation.
pub fn classify_trend(f: &FuncTrace, cfg: &TrendConfig) -> TrendEstimate {
    let t = f.times();
    let v = f.values();
    let (t0, tn) = (t[0], *t.last().unwrap());
    let start = t0 + 0.5 * (tn - t0);
    let i0 = f.grid().floor_index(start);
    let tail_t = &t[i0..];
    let tail_v = &v[i0..];
    let nw = cfg.windows.max(1);
    let width = (tn - t[i0]) / nw as f64;
    let mut windows = Vec::with_capacity(nw);
    for k in 0..nw {
        let a = t[i0] + width * k as f64;
        let b = if k + 1 == nw { tn } else { a + width };
        let lo = tail_t.partition_point(|&x| x < a);
        let hi = tail_t.partition_point(|&x| x <= b);
        let (wt, wv): (Vec<f64>, Vec<f64>) = if hi - lo >= 2 {
            (tail_t[lo..hi].to_vec(), tail_v[lo..hi].to_vec())
        } else {
            let fa = f.interpolate(a).unwrap_or(tail_v[0]);
            let fb = f.interpolate(b).unwrap_or(*tail_v.last().unwrap());
            (vec![a, b], vec![fa, fb])
        };
        windows.push(TrendWindow {
            start: a,
            end: b,
            slope: ls_slope(&wt, &wv),
        });
    }
    let total_change = tail_v[tail_v.len() - 1] - tail_v[0];
    let hi = tail_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail_v.iter().cloned().fold(f64::INFINITY, f64::min);
    let band = hi - lo;
    let mid = tail_t.partition_point(|&x| x < 0.5 * (t[i0] + tn));
    let first_max = tail_v[..mid.max(1)]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let second_max = tail_v[mid.min(tail_v.len() - 1)..]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    let all_finite = tail_v.iter().all(|x| x.is_finite());
    let verdict = if !all_finite || tn - t0 < 4.0 * cfg.warmup {
        Trend::Inconclusive
    } else if windows.iter().all(|w| w.slope < -cfg.delta) && total_change < -cfg.big_delta {
        Trend::DivergesToMinusInf
    } else if windows.iter().all(|w| w.slope > cfg.delta) && total_change > cfg.big_delta {
        Trend::DivergesToPlusInf
    } else if band <= cfg.band && second_max <= first_max + cfg.delta * (tn - t[i0]) {
        Trend::BoundedAbove
    } else {
        Trend::Inconclusive
    };
    TrendEstimate {
        verdict,
        windows,
        total_change,
        band,
        horizon: [t0, tn],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauConfig {
    /// Largest relative growth over the last horizon doubling still read as
    /// "bounded" or "convergent".
    pub plateau: f64,
    pub epsilon_menu: Vec<f64>,
    /// Relative tolerance for the WKB integral.
    pub wkb_rel_tol: f64,
    /// Number of nested horizons for the WKB partial sums.
    pub wkb_levels: usize,
    /// Extra horizon cap for the WKB integral of problems with oscillatory
    /// cumulative integrals, whose cost grows like `e^t`.
    pub wkb_cap: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            plateau: 0.01,
            epsilon_menu: vec![0.5, 0.25, 0.1, 0.05],
            wkb_rel_tol: 1e-3,
            wkb_levels: 6,
            wkb_cap: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positivity {
    pub holds: bool,
    pub min_d: f64,
    pub min_d_at: f64,
    pub max_im_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTrial {
    pub epsilon: f64,
    pub sup_half: f64,
    pub sup_full: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneGrowth {
    pub holds: bool,
    pub nondecreasing: bool,
    /// Largest relative drop of `D` below its running maximum.
    pub nondecreasing_violation: f64,
    pub min_d_prime: f64,
    pub epsilon: Option<f64>,
    pub sup_ratio: Option<f64>,
    pub trials: Vec<EpsilonTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrableDeviation {
    pub holds: bool,
    pub epsilon_lower_bound: f64,
    pub sup_log_derivative: f64,
    pub log_derivative_bounded: bool,
    pub rho_integral_half: f64,
    pub rho_integral_tail: f64,
    pub rho_integral_converges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneLogDerivative {
    pub holds: bool,
    pub nondecreasing: bool,
    pub nondecreasing_violation: f64,
    pub sup_log_derivative: f64,
    pub log_derivative_bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTrial {
    pub alpha: f64,
    pub c_half: f64,
    pub c: f64,
    pub integral_half: f64,
    pub integral_tail: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayingLogDerivative {
    pub holds: bool,
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub fitted_alpha: Option<f64>,
    pub integral_tail: Option<f64>,
    pub trials: Vec<AlphaTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WkbReport {
    pub horizons: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub convergent: bool,
    /// Horizon actually used when it was cut short of the analysis horizon.
    pub cutoff: Option<f64>,
}

impl WkbReport {
    /// Relative growth of the partial sums over each horizon doubling.
    pub fn growth(&self) -> Vec<f64> {
        self.partial_sums
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    #[serde(rename = "A")]
    pub positivity: Positivity,
    #[serde(rename = "B")]
    pub monotone_growth: MonotoneGrowth,
    #[serde(rename = "C")]
    pub integrable_deviation: IntegrableDeviation,
    #[serde(rename = "D_cond")]
    pub monotone_log_derivative: MonotoneLogDerivative,
    #[serde(rename = "cor21")]
    pub decaying_log_derivative: DecayingLogDerivative,
    #[serde(rename = "wkb14")]
    pub wkb: WkbReport,
}

fn trapezoid_cumulative(t: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    out.push(0.0);
    let mut acc = 0.0;
    for i in 1..t.len() {
        acc += 0.5 * (v[i] + v[i - 1]) * (t[i] - t[i - 1]);
        out.push(acc);
    }
    out
}

fn max_upto(v: &[f64], i: usize) -> f64 {
    v[..=i].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Checks every hypothesis group on the sampled `D`, `D'` and the
/// differential root of `D/4`. `wkb` is computed separately by [`check_wkb`].
pub fn check_conditions(
    d: &FuncTrace,
    d_prime: &[f64],
    root: &RootTrace,
    max_im_d: f64,
    wkb: WkbReport,
    cfg: &PlateauConfig,
) -> ConditionReport {
    let t = d.times();
    let dv = d.values();
    let n = t.len();
    let t0 = t[0];
    let h = half_index(d.grid());

    let (imin, min_d) = dv
        .iter()
        .cloned()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, x)| if x < acc.1 { (i, x) } else { acc },
        );
    let positivity = Positivity {
        holds: min_d > 0.0 && max_im_d <= DISCRIMINANT_IMAG_TOL,
        min_d,
        min_d_at: t[imin],
        max_im_d,
    };

    let mut violation: f64 = 0.0;
    let mut run = f64::NEG_INFINITY;
    for &x in dv {
        run = run.max(x);
        violation = violation.max((run - x) / run.abs().max(1.0));
    }
    let min_d_prime = d_prime.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = d_prime.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let nondecreasing = violation <= 1e-10 && min_d_prime >= -1e-12 * (1.0 + scale);

    let log_derivative: Vec<f64> = d_prime.iter().zip(dv).map(|(a, b)| a.abs() / b).collect();
    let sup_ld_half = max_upto(&log_derivative, h);
    let sup_ld = max_upto(&log_derivative, n - 1);
    let ld_bounded = positivity.holds && plateau(sup_ld_half, sup_ld, cfg.plateau);

    let mut trials = Vec::new();
    let mut chosen = None;
    if positivity.holds {
        for &eps in &cfg.epsilon_menu {
            let r: Vec<f64> = d_prime
                .iter()
                .zip(dv)
                .map(|(a, b)| a.abs() / b.powf(1.5 - eps))
                .collect();
            let (sh, sf) = (max_upto(&r, h), max_upto(&r, n - 1));
            let bounded = plateau(sh, sf, cfg.plateau);
            trials.push(EpsilonTrial {
                epsilon: eps,
                sup_half: sh,
                sup_full: sf,
                bounded,
            });
            if bounded && chosen.is_none() {
                chosen = Some((eps, sf));
            }
        }
    }
    let monotone_growth = MonotoneGrowth {
        holds: positivity.holds && nondecreasing && chosen.is_some(),
        nondecreasing,
        nondecreasing_violation: violation,
        min_d_prime,
        epsilon: chosen.map(|c| c.0),
        sup_ratio: chosen.map(|c| c.1),
        trials,
    };

    let (ri_half, ri_full) = if positivity.holds {
        let integrand: Vec<f64> = (0..n)
            .map(|i| root.rho_upper[i] * d_prime[i].abs() / dv[i].powf(1.5))
            .collect();
        let c = trapezoid_cumulative(t, &integrand);
        (c[h], c[n - 1])
    } else {
        (f64::NAN, f64::NAN)
    };
    let ri_conv = plateau(ri_half, ri_full, cfg.plateau);
    let integrable_deviation = IntegrableDeviation {
        holds: positivity.holds && ld_bounded && ri_conv,
        epsilon_lower_bound: min_d,
        sup_log_derivative: sup_ld,
        log_derivative_bounded: ld_bounded,
        rho_integral_half: ri_half,
        rho_integral_tail: ri_full,
        rho_integral_converges: ri_conv,
    };

    let monotone_log_derivative = MonotoneLogDerivative {
        holds: positivity.holds && nondecreasing && ld_bounded,
        nondecreasing,
        nondecreasing_violation: violation,
        sup_log_derivative: sup_ld,
        log_derivative_bounded: ld_bounded,
    };

    let decaying_log_derivative = if positivity.holds {
        fit_decay(t, t0, dv, &log_derivative, h, cfg)
    } else {
        DecayingLogDerivative {
            holds: false,
            c: None,
            alpha: None,
            fitted_alpha: None,
            integral_tail: None,
            trials: Vec::new(),
        }
    };

    ConditionReport {
        positivity,
        monotone_growth,
        integrable_deviation,
        monotone_log_derivative,
        decaying_log_derivative,
        wkb,
    }
}

/// Fits `|D'|/D ≤ c (1 + t − t0)^(−α)` from the right-tail supremum envelope
/// and tests the accompanying integral for each candidate `α`.
fn fit_decay(
    t: &[f64],
    t0: f64,
    dv: &[f64],
    ld: &[f64],
    h: usize,
    cfg: &PlateauConfig,
) -> DecayingLogDerivative {
    let n = t.len();
    let mut envelope = vec![0.0; n];
    let mut run: f64 = 0.0;
    for i in (0..n).rev() {
        run = run.max(ld[i]);
        envelope[i] = run;
    }
    let fitted = if envelope.iter().all(|&e| e == 0.0) {
        Some(1.0)
    } else {
        let (xs, ys): (Vec<f64>, Vec<f64>) = (h..n)
            .filter(|&i| envelope[i] > 0.0)
            .map(|i| ((1.0 + t[i] - t0).ln(), envelope[i].ln()))
            .unzip();
        if xs.len() >= 2 {
            Some(-ls_slope(&xs, &ys))
        } else {
            None
        }
    };
    let mut trials = Vec::new();
    let mut best = None;
    if let Some(a) = fitted.filter(|a| *a > 0.0) {
        for alpha in [a, 0.9 * a, 0.75 * a, 0.5 * a] {
            let weighted: Vec<f64> = (0..n)
                .map(|i| ld[i] * (1.0 + t[i] - t0).powf(alpha))
                .collect();
            let (c_half, c) = (max_upto(&weighted, h), max_upto(&weighted, n - 1));
            let integrand: Vec<f64> = (0..n)
                .map(|i| 1.0 / (dv[i].sqrt() * (1.0 + t[i] - t0).powf(2.0 * alpha)))
                .collect();
            let cum = trapezoid_cumulative(t, &integrand);
            let holds = plateau(c_half, c, cfg.plateau) && plateau(cum[h], cum[n - 1], cfg.plateau);
            trials.push(AlphaTrial {
                alpha,
                c_half,
                c,
                integral_half: cum[h],
                integral_tail: cum[n - 1],
                holds,
            });
            if holds && best.is_none() {
                best = Some((c, alpha, cum[n - 1]));
            }
        }
    }
    DecayingLogDerivative {
        holds: best.is_some(),
        c: best.map(|b| b.0),
        alpha: best.map(|b| b.1),
        fitted_alpha: fitted,
        integral_tail: best.map(|b| b.2),
        trials,
    }
}

/// `|36 D''/D^(3/2) − 5 D'^2/D^(5/2)|`.
pub fn wkb_integrand(model: &Model, t: f64) -> Result<f64> {
    let d = model.disc(t)?;
    if d <= 0.0 {
        return Err(Error::DomainError {
            func: "D^(-3/2)",
            t,
            re: d,
            im: 0.0,
        });
    }
    let d1 = model.disc_d1(t)?;
    let d2 = model.disc_d2(t)?;
    Ok((36.0 * d2 / d.powf(1.5) - 5.0 * d1 * d1 / d.powf(2.5)).abs())
}

/// Partial integrals of the WKB integrand on nested horizons
/// `t0 + (T − t0)/2^k`, `k = levels, …, 0`. For problems whose integrals are
/// continued by their trend, `T` is capped at the oscillation cutoff and at
/// `wkb_cap`.
pub fn check_wkb(model: &Model, t_end: f64, t_osc: f64, cfg: &PlateauConfig) -> Result<WkbReport> {
    let t0 = model.t0();
    let limit = t_osc.min(cfg.wkb_cap);
    let cut = !model.problem.decompositions.is_empty() && t_end > limit;
    let top = if cut { limit } else { t_end };
    let levels = cfg.wkb_levels.max(1);
    let horizons: Vec<f64> = (0..=levels)
        .rev()
        .map(|k| t0 + (top - t0) / 2f64.powi(k as i32))
        .collect();
    let tol = Tolerance::new(1e-300, cfg.wkb_rel_tol);
    let mut partial_sums = Vec::with_capacity(horizons.len());
    let mut acc = quad::integrate(|s| wkb_integrand(model, s), t0, horizons[0], tol)?.value;
    partial_sums.push(acc);
    for w in horizons.windows(2) {
        let mut a = w[0];
        while a < w[1] {
            let b = (a + 0.25).min(w[1]);
            acc += quad::integrate(|s| wkb_integrand(model, s), a, b, tol)?.value;
            a = b;
        }
        partial_sums.push(acc);
    }
    let k = partial_sums.len();
    let convergent = plateau(partial_sums[k - 2], partial_sums[k - 1], cfg.plateau);
    Ok(WkbReport {
        horizons,
        partial_sums,
        convergent,
        cutoff: cut.then_some(top),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Positivity with monotone growth or integrable deviation; decides
    /// boundedness from `r1`.
    R1Boundedness,
    /// Positivity with integrable deviation or monotone log-derivative;
    /// decides stability from `r2`.
    R2Stability,
    /// Positivity with a decaying log-derivative; decides both.
    DecayingLogDerivative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub boundedness: Boundedness,
    pub stability: Stability,
    pub applied: Vec<Rule>,
    pub r1_trend: TrendEstimate,
    pub r2_trend: TrendEstimate,
    pub caveats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriteriaConfig {
    pub grid_intervals: usize,
    pub root: RootOptions,
    pub trend: TrendConfig,
    pub plateau: PlateauConfig,
    pub quad_tol: Tolerance,
    pub t_osc: f64,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        CriteriaConfig {
            grid_intervals: 4000,
            root: RootOptions::default(),
            trend: TrendConfig::default(),
            plateau: PlateauConfig::default(),
            quad_tol: Tolerance::default(),
            t_osc: 12.0,
        }
    }
}

/// Everything computed by [`verdict`].
#[derive(Debug, Clone)]
pub struct CriteriaOutcome {
    pub model: Model,
    pub grid: Arc<Grid>,
    pub d: FuncTrace,
    pub d_prime: Vec<f64>,
    pub root: RootTrace,
    pub r1: FuncTrace,
    pub r2: FuncTrace,
    pub conditions: ConditionReport,
    pub verdict: Verdict,
}

fn boundedness_from(t: Trend) -> Boundedness {
    match t {
        Trend::BoundedAbove => Boundedness::AllBounded,
        Trend::DivergesToMinusInf => Boundedness::AllVanish,
        Trend::DivergesToPlusInf => Boundedness::UnboundedSolutionExists,
        Trend::Inconclusive => Boundedness::Unknown,
    }
}

fn stability_from(t: Trend) -> Stability {
    match t {
        Trend::BoundedAbove => Stability::LiapunovStable,
        Trend::DivergesToMinusInf => Stability::AsymptoticallyStable,
        Trend::DivergesToPlusInf => Stability::Unstable,
        Trend::Inconclusive => Stability::Unknown,
    }
}

/// Maps condition groups and trends to a verdict.
pub fn dispatch(c: &ConditionReport, r1: TrendEstimate, r2: TrendEstimate) -> Verdict {
    let a = c.positivity.holds;
    let first = a && (c.monotone_growth.holds || c.integrable_deviation.holds);
    let second = a && (c.integrable_deviation.holds || c.monotone_log_derivative.holds);
    let both = a && c.decaying_log_derivative.holds;
    let mut applied = Vec::new();
    if first {
        applied.push(Rule::R1Boundedness);
    }
    if second {
        applied.push(Rule::R2Stability);
    }
    if both {
        applied.push(Rule::DecayingLogDerivative);
    }
    let boundedness = if first || both {
        boundedness_from(r1.verdict)
    } else {
        Boundedness::Unknown
    };
    let stability = if second || both {
        stability_from(r2.verdict)
    } else {
        Stability::Unknown
    };
    let mut caveats = vec![format!(
        "limits judged on [{}, {}] by window slopes and a {}% plateau rule",
        r1.horizon[0],
        r1.horizon[1],
        100.0 * 0.01
    )];
    if !(first || second || both) {
        caveats.push("no hypothesis group holds on this horizon".into());
    }
    if r1.verdict == Trend::Inconclusive && (first || both) {
        caveats.push("trend of r1 is inconclusive on this horizon".into());
    }
    if r2.verdict == Trend::Inconclusive && (second || both) {
        caveats.push("trend of r2 is inconclusive on this horizon".into());
    }
    if matches!(r2.verdict, Trend::BoundedAbove | Trend::DivergesToMinusInf)
        && !matches!(r1.verdict, Trend::BoundedAbove | Trend::DivergesToMinusInf)
    {
        caveats.push("r2 is bounded above but r1 is not, although r1 <= r2".into());
    }
    if !consistent(boundedness, stability) {
        caveats.push(format!(
            "inconsistent outcomes {boundedness:?} / {stability:?}"
        ));
    }
    Verdict {
        boundedness,
        stability,
        applied,
        r1_trend: r1,
        r2_trend: r2,
        caveats,
    }
}

/// Full criteria pipeline on `[t0, t_end]`.
pub fn verdict(problem: &Problem, t_end: f64, cfg: &CriteriaConfig) -> Result<CriteriaOutcome> {
    let model = Model::new(problem, t_end, cfg.t_osc, cfg.quad_tol)?;
    let grid = Arc::new(Grid::log_stretched(problem.t0, t_end, cfg.grid_intervals)?);
    let mut max_im: f64 = 0.0;
    let mut dv = Vec::with_capacity(grid.len());
    let mut d_prime = Vec::with_capacity(grid.len());
    for &t in grid.points() {
        let z = model.d.eval(t)?;
        let r = z.im.abs() / (1.0 + z.re.abs());
        if r > DISCRIMINANT_IMAG_TOL {
            return Err(Error::ComplexDiscriminant { t, im: z.im });
        }
        max_im = max_im.max(r);
        if z.re <= 0.0 {
            return Err(Error::NonPositiveDiscriminant { t, value: z.re });
        }
        dv.push(z.re);
        d_prime.push(model.disc_d1(t)?);
    }
    let d = FuncTrace::from_samples(Arc::clone(&grid), dv)?;
    let root = differential_root(&model.quarter_disc(), Arc::clone(&grid), &cfg.root)?;
    let (r1, r2) = r_functions(&model, Arc::clone(&grid), cfg.quad_tol)?;
    let wkb = check_wkb(&model, t_end, cfg.t_osc, &cfg.plateau)?;
    let conditions = check_conditions(&d, &d_prime, &root, max_im, wkb, &cfg.plateau);
    let mut v = dispatch(
        &conditions,
        classify_trend(&r1, &cfg.trend),
        classify_trend(&r2, &cfg.trend),
    );
    v.caveats[0] = format!(
        "limits judged on [{}, {}] by window slopes and a {}% plateau rule",
        problem.t0,
        t_end,
        100.0 * cfg.plateau.plateau
    );
    if v.r1_trend.verdict == Trend::DivergesToMinusInf {
        let h = half_index(&grid);
        let rm = d.running_max();
        let d_bounded = plateau(rm[h], *rm.last().unwrap(), cfg.plateau.plateau);
        let re_p: Vec<f64> = grid
            .points()
            .iter()
            .map(|&t| model.p_at(t).map(|z| z.re.abs()))
            .collect::<Result<_>>()?;
        let p_bounded = plateau(
            max_upto(&re_p, h),
            max_upto(&re_p, re_p.len() - 1),
            cfg.plateau.plateau,
        );
        if !d_bounded && p_bounded {
            v.caveats.push(
                "D keeps growing while Re p stays bounded: sqrt(D) may overtake Re p beyond the \
                 horizon and reverse the trend of r1"
                    .into(),
            );
        }
    }
    v.caveats.extend(problem.notes.iter().cloned());
    Ok(CriteriaOutcome {
        model,
        grid,
        d,
        d_prime,
        root,
        r1,
        r2,
        conditions,
        verdict: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::find;

    fn trace(f: impl Fn(f64) -> f64, t0: f64, t1: f64) -> FuncTrace {
        let g = Arc::new(Grid::uniform(t0, t1, 2000).unwrap());
        let v = g.points().iter().map(|&t| f(t)).collect();
        FuncTrace::from_samples(g, v).unwrap()
    }

    #[test]
    fn trend_examples() {
        let cfg = TrendConfig::default();
        assert_eq!(
            classify_trend(&trace(|t| -t, 0.0, 40.0), &cfg).verdict,
            Trend::DivergesToMinusInf
        );
        assert_eq!(
            classify_trend(&trace(|t| t, 0.0, 40.0), &cfg).verdict,
            Trend::DivergesToPlusInf
        );
        assert_eq!(
            classify_trend(&trace(f64::sin, 0.0, 40.0), &cfg).verdict,
            Trend::BoundedAbove
        );
        assert_eq!(
            classify_trend(&trace(|_| 3.0, 0.0, 40.0), &cfg).verdict,
            Trend::BoundedAbove
        );
        assert_eq!(
            classify_trend(&trace(|t| 30.0 * t.sin(), 0.0, 40.0), &cfg).verdict,
            Trend::Inconclusive
        );
        assert_eq!(
            classify_trend(&trace(|t| -t, 0.0, 2.0), &cfg).verdict,
            Trend::Inconclusive
        );
    }

    #[test]
    fn constant_problem_discriminant() {
        let p = Problem::from_json(r#"{"id":"c","p":"0","q":"-1","t0":0}"#).unwrap();
        let m = Model::new(&p, 5.0, 12.0, Tolerance::default()).unwrap();
        let g = Arc::new(Grid::uniform(0.0, 5.0, 5).unwrap());
        assert!(discriminant(&m, g)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 4.0));
    }

    #[test]
    fn linear_r1_for_constant_coefficients() {
        let p = find("const-coeff").unwrap();
        let m = Model::new(&p, 20.0, 12.0, Tolerance::default()).unwrap();
        let g = Arc::new(Grid::uniform(0.0, 20.0, 40).unwrap());
        let (r1, r2) = r_functions(&m, g, Tolerance::default()).unwrap();
        for (t, v) in r1.times().iter().zip(r1.values()) {
            assert!((v + 2.0 * t).abs() < 1e-12);
        }
        for (a, b) in r1.values().iter().zip(r2.values()) {
            assert!((b - a - 2.0 * 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_discriminant_rejected() {
        let p = Problem::from_json(r#"{"id":"c","p":"i*t","q":"-t^2","t0":0}"#).unwrap();
        let r = verdict(&p, 10.0, &CriteriaConfig::default());
        assert!(matches!(r, Err(Error::ComplexDiscriminant { .. })));
        let p = find("harmonic").unwrap();
        let r = verdict(&p, 10.0, &CriteriaConfig::default());
        assert!(matches!(r, Err(Error::NonPositiveDiscriminant { .. })));
    }

    #[test]
    fn plateau_rule() {
        assert!(plateau(1.0, 1.005, 0.01));
        assert!(!plateau(1.0, 1.02, 0.01));
        assert!(plateau(0.0, 0.0, 0.01));
        assert!(!plateau(1.0, f64::INFINITY, 0.01));
    }
}
