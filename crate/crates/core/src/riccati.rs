//! The differential root of a positive function and the quantities built
//! from it.
//!
//! For `x > 0` the differential root `y` solves `y' + y² = x` with
//! `y(t0) = √x(t0)`. It stays within `ρ_x(t)` of `√x(t)`, where `ρ_x` is the
//! infimum over `t1 ∈ [t0, t]` of
//!
//! ```text
//! R(t1; t) = (1 + √x(t0)(t1 − t0)) / (1 + √x(t0)(t − t0))
//!            · exp(−∫_{t1}^t √x) · sup_{[t0,t1]} g + sup_{[t1,t]} g
//! ```
//!
//! with `g = |(√x)'| / √x = |x'| / (2x)`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::trace::{FuncTrace, Grid, SmoothFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootOptions {
    pub tol: f64,
    pub t1_candidates: usize,
    /// Multiplier applied to sampled suprema of `g`, which only estimate the
    /// true suprema from below.
    pub sup_safety: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            tol: 1e-10,
            t1_candidates: 32,
            sup_safety: 1.05,
        }
    }
}

/// Range maxima of `g` over unions of grid intervals.
#[derive(Debug, Clone)]
pub struct DeviationBound {
    grid: Arc<Grid>,
    sqrt_x0: f64,
    safety: f64,
    g: Vec<f64>,
    /// `sup_{[t0, t_i]} g` from samples.
    prefix_max: Vec<f64>,
    /// `levels[k][i]` = max of interval maxima `i .. i + 2^k`.
    levels: Vec<Vec<f64>>,
    /// `∫_{t0}^{t_i} √x`.
    cum_sqrt: Vec<f64>,
}

impl DeviationBound {
    fn new(
        grid: Arc<Grid>,
        sqrt_x0: f64,
        safety: f64,
        g: Vec<f64>,
        g_mid: &[f64],
        cum_sqrt: Vec<f64>,
    ) -> Self {
        let n = g.len() - 1;
        let interval_max: Vec<f64> = (0..n).map(|i| g[i].max(g[i + 1]).max(g_mid[i])).collect();
        let mut prefix_max = Vec::with_capacity(n + 1);
        prefix_max.push(g[0]);
        for i in 0..n {
            prefix_max.push(prefix_max[i].max(interval_max[i]));
        }
        let mut levels = vec![interval_max];
        let mut width = 1;
        while 2 * width <= n {
            let prev = levels.last().unwrap();
            let next: Vec<f64> = (0..=n - 2 * width)
                .map(|i| prev[i].max(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        DeviationBound {
            grid,
            sqrt_x0,
            safety,
            g,
            prefix_max,
            levels,
            cum_sqrt,
        }
    }

    /// Sampled `g = |x'|/(2x)` at the grid points.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Running sup of `g` from `t0`, as sampled.
    pub fn running_sup(&self) -> &[f64] {
        &self.prefix_max
    }

    pub fn cumulative_sqrt(&self) -> &[f64] {
        &self.cum_sqrt
    }

    /// Max of `g` over grid intervals `i .. j` (`i < j`).
    fn intervals_max(&self, i: usize, j: usize) -> f64 {
        let len = j - i;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let lv = &self.levels[k];
        lv[i].max(lv[j - (1 << k)])
    }

    fn range_max(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.g[i]
        } else {
            self.intervals_max(i, j)
        }
    }

    /// `R(t_{i1}; t_i)` for grid indices `i1 ≤ i`.
    pub fn r_upper_at(&self, i1: usize, i: usize) -> f64 {
        let t = self.grid.points();
        let t0 = t[0];
        let ratio = (1.0 + self.sqrt_x0 * (t[i1] - t0)) / (1.0 + self.sqrt_x0 * (t[i] - t0));
        let damp = (-(self.cum_sqrt[i] - self.cum_sqrt[i1])).exp();
        self.safety * (ratio * damp * self.prefix_max[i1] + self.range_max(i1, i))
    }

    /// `R(t1; t)` for arbitrary `t0 ≤ t1 ≤ t ≤ t_end`. Off-grid arguments are
    /// widened to the enclosing grid intervals, which can only enlarge the
    /// result.
    pub fn r_upper(&self, t1: f64, t: f64) -> Result<f64> {
        let (lo, hi) = (self.grid.t0(), self.grid.t_end());
        if !(lo <= t1 && t1 <= t && t <= hi) {
            return Err(Error::OutOfRange {
                t: if t1 < lo { t1 } else { t },
                lo,
                hi,
            });
        }
        let p = self.grid.points();
        let a = self.grid.floor_index(t1);
        let b = self.grid.floor_index(t);
        if p[a] == t1 && p[b] == t {
            return Ok(self.r_upper_at(a, b));
        }
        let a_up = if p[a] == t1 { a } else { a + 1 };
        let b_up = if p[b] == t { b } else { b + 1 };
        let sup_head = self.prefix_max[a_up];
        let sup_tail = if a == b_up {
            self.g[a]
        } else {
            self.intervals_max(a, b_up)
        };
        let integral = if a_up <= b {
            self.cum_sqrt[b] - self.cum_sqrt[a_up]
        } else {
            0.0
        };
        let t0 = p[0];
        let ratio = (1.0 + self.sqrt_x0 * (t1 - t0)) / (1.0 + self.sqrt_x0 * (t - t0));
        Ok(self.safety * (ratio * (-integral).exp() * sup_head + sup_tail))
    }

    /// Grid indices of the log-spaced `t1` candidates for `t_i`; always
    /// includes `0` and `i`.
    pub fn candidates(&self, i: usize, count: usize) -> Vec<usize> {
        let p = self.grid.points();
        let t0 = p[0];
        let span = (1.0 + p[i] - t0).ln();
        let n = count.max(2);
        let mut out: Vec<usize> = (0..n)
            .map(|k| {
                let t1 = t0 + (span * k as f64 / (n - 1) as f64).exp_m1();
                nearest_index(p, t1).min(i)
            })
            .collect();
        out[0] = 0;
        out[n - 1] = i;
        out.dedup();
        out
    }

    /// Minimum of `R(t1; t_i)` over the candidate set.
    pub fn rho_upper_at(&self, i: usize, count: usize) -> f64 {
        self.candidates(i, count)
            .into_iter()
            .map(|i1| self.r_upper_at(i1, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum of `R(t1; t)` over log-spaced `t1 ∈ [t0, t]`.
    pub fn rho_upper(&self, t: f64, count: usize) -> Result<f64> {
        let t0 = self.grid.t0();
        let span = (1.0 + t - t0).ln();
        let n = count.max(2);
        let mut best = f64::INFINITY;
        for k in 0..n {
            let t1 = if k == n - 1 {
                t
            } else {
                (t0 + (span * k as f64 / (n - 1) as f64).exp_m1()).min(t)
            };
            best = best.min(self.r_upper(t1, t)?);
        }
        Ok(best)
    }
}

fn nearest_index(p: &[f64], t: f64) -> usize {
    let i = p.partition_point(|&x| x <= t);
    if i == 0 {
        0
    } else if i == p.len() || t - p[i - 1] <= p[i] - t {
        i - 1
    } else {
        i
    }
}

/// Differential root sampled on a grid, with `√x`, the `ρ` bound and `Q`.
#[derive(Debug, Clone)]
pub struct RootTrace {
    pub grid: Arc<Grid>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sqrt_x: Vec<f64>,
    pub rho_upper: Vec<f64>,
    /// `Q(t) = ∫_{t0}^t (y − √x) + ¼ ln x(t)`.
    pub q: Vec<f64>,
    /// `∫_{t0}^t (y − √x)`.
    pub deviation_integral: Vec<f64>,
    pub bound: DeviationBound,
    pub options: RootOptions,
}

impl RootTrace {
    pub fn sup_cache(&self) -> &[f64] {
        self.bound.running_sup()
    }

    pub fn q_trace(&self) -> Result<FuncTrace> {
        FuncTrace::from_samples(Arc::clone(&self.grid), self.q.clone())
    }

    pub fn y_trace(&self) -> Result<FuncTrace> {
        FuncTrace::from_samples(Arc::clone(&self.grid), self.y.clone())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,y,sqrt_x,rho_upper,Q")?;
        for (i, t) in self.grid.points().iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                t, self.y[i], self.sqrt_x[i], self.rho_upper[i], self.q[i]
            )?;
        }
        Ok(())
    }
}

fn positive<X: SmoothFunction + ?Sized>(x: &X, t: f64) -> Result<f64> {
    let v = x.value(t)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::NonPositiveInput { t, value: v })
    }
}

/// Solves `y' = x − y²`, `y(t0) = √x(t0)`, on `grid`.
pub fn differential_root<X: SmoothFunction + ?Sized>(
    x: &X,
    grid: Arc<Grid>,
    opts: &RootOptions,
) -> Result<RootTrace> {
    if !(opts.tol > 0.0) || opts.t1_candidates == 0 || !(opts.sup_safety >= 1.0) {
        return Err(Error::InvalidConfig(format!("root options {opts:?}")));
    }
    let p = grid.points();
    let mut xs = Vec::with_capacity(p.len());
    let mut g = Vec::with_capacity(p.len());
    for &t in p {
        let v = positive(x, t)?;
        xs.push(v);
        g.push(x.derivative(t)?.abs() / (2.0 * v));
    }
    let mut g_mid = Vec::with_capacity(p.len() - 1);
    for w in p.windows(2) {
        let m = 0.5 * (w[0] + w[1]);
        g_mid.push(x.derivative(m)?.abs() / (2.0 * positive(x, m)?));
    }

    let sqrt_x0 = xs[0].sqrt();
    // State: y, ∫(y − √x), ∫√x.
    let rhs = |t: f64, s: &[f64; 3]| -> Result<[f64; 3]> {
        let v = positive(x, t)?;
        let r = v.sqrt();
        Ok([v - s[0] * s[0], s[0] - r, r])
    };
    let out = ode::integrate(rhs, p, [sqrt_x0, 0.0, 0.0], &OdeOptions::with_tol(opts.tol))?;
    if let Some(t) = out.escaped_at {
        return Err(Error::StepSizeUnderflow { t, h: 0.0 });
    }

    let sqrt_x: Vec<f64> = xs.iter().map(|v| v.sqrt()).collect();
    let mut y: Vec<f64> = out.states.iter().map(|s| s[0].max(0.0)).collect();
    y[0] = sqrt_x0;
    let deviation_integral: Vec<f64> = out.states.iter().map(|s| s[1]).collect();
    let cum_sqrt: Vec<f64> = out.states.iter().map(|s| s[2]).collect();
    let q = deviation_integral
        .iter()
        .zip(&xs)
        .map(|(u, v)| u + 0.25 * v.ln())
        .collect();

    let bound = DeviationBound::new(
        Arc::clone(&grid),
        sqrt_x0,
        opts.sup_safety,
        g,
        &g_mid,
        cum_sqrt,
    );
    let rho_upper = (0..p.len())
        .map(|i| bound.rho_upper_at(i, opts.t1_candidates))
        .collect();
    Ok(RootTrace {
        grid,
        x: xs,
        y,
        sqrt_x,
        rho_upper,
        q,
        deviation_integral,
        bound,
        options: *opts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub holds: bool,
    /// First grid point where `y1 < y0 − tol`, with both values.
    pub first_violation: Option<(f64, f64, f64)>,
    pub min_gap: f64,
    /// Set when the solution for `x1` could not be continued; the comparison
    /// hypothesis (a global solution) then fails.
    pub finite_escape: Option<f64>,
}

/// Integrates `y' + y² = x` from `y0_init` and `y' + y² = x1` from `y1_init`
/// and checks `y1 ≥ y0 − tol` on the grid.
pub fn comparison_check<X0, X1>(
    x: &X0,
    x1: &X1,
    grid: &Grid,
    y0_init: f64,
    y1_init: f64,
    tol: f64,
) -> Result<ComparisonReport>
where
    X0: SmoothFunction + ?Sized,
    X1: SmoothFunction + ?Sized,
{
    if y1_init < y0_init {
        return Err(Error::InvalidConfig("y1(t0) < y0(t0)".into()));
    }
    for &t in grid.points() {
        if x1.value(t)? < x.value(t)? {
            return Err(Error::InvalidConfig(format!("x1 < x at t = {t}")));
        }
    }
    let opts = OdeOptions {
        rtol: tol * 1e-2,
        atol: tol * 1e-2,
        escape: 1e100,
        ..Default::default()
    };
    let p = grid.points();
    let y0 = ode::integrate(
        |t, s: &[f64; 1]| Ok([x.value(t)? - s[0] * s[0]]),
        p,
        [y0_init],
        &opts,
    )?;
    let y1 = ode::integrate(
        |t, s: &[f64; 1]| Ok([x1.value(t)? - s[0] * s[0]]),
        p,
        [y1_init],
        &opts,
    );
    let y1 = match y1 {
        Ok(o) if o.escaped_at.is_none() => o,
        Ok(o) => return Ok(escaped(o.escaped_at.unwrap())),
        Err(Error::StepSizeUnderflow { t, .. }) => return Ok(escaped(t)),
        Err(e) => return Err(e),
    };
    let mut report = ComparisonReport {
        holds: true,
        first_violation: None,
        min_gap: f64::INFINITY,
        finite_escape: y0.escaped_at,
    };
    for (i, t) in p.iter().enumerate().take(y0.states.len()) {
        let (a, b) = (y0.states[i][0], y1.states[i][0]);
        report.min_gap = report.min_gap.min(b - a);
        if b < a - tol && report.first_violation.is_none() {
            report.holds = false;
            report.first_violation = Some((*t, a, b));
        }
    }
    Ok(report)
}

fn escaped(t: f64) -> ComparisonReport {
    ComparisonReport {
        holds: false,
        first_violation: None,
        min_gap: f64::NAN,
        finite_escape: Some(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::FnPair;

    fn lin() -> FnPair<impl Fn(f64) -> f64, impl Fn(f64) -> f64> {
        FnPair {
            f: |t: f64| t,
            df: |_| 1.0,
        }
    }

    #[test]
    fn constant_is_fixed_point() {
        let x = FnPair {
            f: |_| 9.0,
            df: |_| 0.0,
        };
        let grid = Arc::new(Grid::log_stretched(0.0, 50.0, 200).unwrap());
        let r = differential_root(&x, grid, &RootOptions::default()).unwrap();
        assert!(r.y.iter().all(|&v| v == 3.0));
        assert!(r.rho_upper.iter().all(|&v| v == 0.0));
        assert!(r.q.iter().all(|&v| (v - 0.5 * 3f64.ln()).abs() < 1e-14));
    }

    #[test]
    fn r_upper_hand_value() {
        let grid = Arc::new(Grid::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let exact = RootOptions {
            sup_safety: 1.0,
            ..Default::default()
        };
        let r = differential_root(&lin(), Arc::clone(&grid), &exact).unwrap();
        assert!((r.bound.r_upper(4.0, 4.0).unwrap() - 0.625).abs() < 1e-15);
        let r = differential_root(&lin(), grid, &RootOptions::default()).unwrap();
        assert!((r.bound.r_upper(4.0, 4.0).unwrap() - 0.65625).abs() < 1e-15);
    }

    #[test]
    fn off_grid_r_upper_is_wider() {
        let grid = Arc::new(Grid::log_stretched(1.0, 20.0, 40).unwrap());
        let r = differential_root(&lin(), Arc::clone(&grid), &RootOptions::default()).unwrap();
        let p = grid.points();
        let on = r.bound.r_upper(p[10], p[30]).unwrap();
        let off = r.bound.r_upper(p[10] + 1e-3, p[30] - 1e-3).unwrap();
        assert!(off >= on * 0.999);
        assert!(r.bound.r_upper(5.0, 2.0).is_err());
    }

    #[test]
    fn linear_x_against_tight_reference() {
        let grid = Arc::new(Grid::log_stretched(1.0, 100.0, 400).unwrap());
        let a = differential_root(&lin(), Arc::clone(&grid), &RootOptions::default()).unwrap();
        let tight = RootOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let b = differential_root(&lin(), grid, &tight).unwrap();
        for i in 0..a.y.len() {
            assert!((a.y[i] - b.y[i]).abs() < 1e-8);
            assert!(a.y[i] <= a.sqrt_x[i] + 1e-8);
            assert!((a.y[i] - a.sqrt_x[i]).abs() <= a.rho_upper[i] + 1e-6 * (1.0 + a.sqrt_x[i]));
        }
        assert_eq!(a.q[0], 0.0);
    }

    #[test]
    fn rejects_non_positive_input() {
        let x = FnPair {
            f: |t: f64| 2.0 - t,
            df: |_| -1.0,
        };
        let grid = Arc::new(Grid::uniform(0.0, 3.0, 6).unwrap());
        assert!(matches!(
            differential_root(&x, grid, &RootOptions::default()),
            Err(Error::NonPositiveInput { .. })
        ));
    }

    #[test]
    fn comparison_fixed_points() {
        let grid = Grid::uniform(0.0, 10.0, 50).unwrap();
        let one = FnPair {
            f: |_| 1.0,
            df: |_| 0.0,
        };
        let four = FnPair {
            f: |_| 4.0,
            df: |_| 0.0,
        };
        let rep = comparison_check(&one, &four, &grid, 1.0, 2.0, 1e-8).unwrap();
        assert!(rep.holds);
        assert!((rep.min_gap - 1.0).abs() < 1e-12);
        let rep = comparison_check(&one, &one, &grid, 1.0, 1.0, 1e-8).unwrap();
        assert!(rep.holds && rep.min_gap.abs() < 2e-8);
        assert!(comparison_check(&four, &one, &grid, 1.0, 2.0, 1e-8).is_err());
    }

    #[test]
    fn csv_header() {
        let grid = Arc::new(Grid::uniform(1.0, 2.0, 2).unwrap());
        let r = differential_root(&lin(), grid, &RootOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,y,sqrt_x,rho_upper,Q\n1,1,1,"));
        assert_eq!(s.lines().count(), 4);
    }
}
