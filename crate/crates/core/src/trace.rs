//! Sample grids, sampled functions and real-valued function handles.

use std::sync::Arc;

use serde::Serialize;

use crate::bind::BoundExpr;
use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Strictly increasing sample points starting at `t0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite point".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Grid { points })
    }

    pub fn uniform(t0: f64, t_end: f64, intervals: usize) -> Result<Self> {
        let n = intervals.max(1);
        let h = (t_end - t0) / n as f64;
        let mut pts: Vec<f64> = (0..=n).map(|i| t0 + h * i as f64).collect();
        pts[n] = t_end;
        Grid::new(pts)
    }

    /// `t_i = t0 + (1 + t_end − t0)^(i/n) − 1`: dense near `t0`, spacing
    /// growing linearly with `t`.
    pub fn log_stretched(t0: f64, t_end: f64, intervals: usize) -> Result<Self> {
        if !(t_end > t0) {
            return Err(Error::InvalidGrid(format!("t_end {t_end} <= t0 {t0}")));
        }
        let n = intervals.max(1);
        let span = (1.0 + t_end - t0).ln();
        let mut pts: Vec<f64> = (0..=n)
            .map(|i| t0 + (span * i as f64 / n as f64).exp_m1())
            .collect();
        pts[0] = t0;
        pts[n] = t_end;
        Grid::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.points[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Index `i` of the interval `[t_i, t_{i+1}]` containing `t`.
    pub fn locate(&self, t: f64) -> Result<usize> {
        let (lo, hi) = (self.t0(), self.t_end());
        if t < lo || t > hi {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let i = self.points.partition_point(|&x| x <= t);
        Ok(i.saturating_sub(1).min(self.points.len() - 2))
    }

    /// Index of the last grid point `≤ t`.
    pub fn floor_index(&self, t: f64) -> usize {
        self.points.partition_point(|&x| x <= t).saturating_sub(1)
    }
}

/// A real function with a derivative, evaluable anywhere on its range.
pub trait SmoothFunction: Send + Sync {
    fn value(&self, t: f64) -> Result<f64>;
    fn derivative(&self, t: f64) -> Result<f64>;
}

/// Real part of a bound expression, with its symbolic derivative.
#[derive(Debug, Clone)]
pub struct RealExpr {
    f: BoundExpr,
    df: BoundExpr,
    imag_tol: f64,
}

impl RealExpr {
    /// `imag_tol` bounds `|Im f| / (1 + |Re f|)`.
    pub fn new(f: BoundExpr, df: BoundExpr, imag_tol: f64) -> Self {
        RealExpr { f, df, imag_tol }
    }

    pub fn expr(&self) -> &BoundExpr {
        &self.f
    }

    pub fn derivative_expr(&self) -> &BoundExpr {
        &self.df
    }

    fn real(&self, e: &BoundExpr, t: f64) -> Result<f64> {
        let z = e.eval(t)?;
        if z.im.abs() > self.imag_tol * (1.0 + z.re.abs()) {
            return Err(Error::DomainError {
                func: "real part",
                t,
                re: z.re,
                im: z.im,
            });
        }
        Ok(z.re)
    }
}

impl SmoothFunction for RealExpr {
    fn value(&self, t: f64) -> Result<f64> {
        self.real(&self.f, t)
    }

    fn derivative(&self, t: f64) -> Result<f64> {
        self.real(&self.df, t)
    }
}

/// A smooth function given by closures.
pub struct FnPair<F, G> {
    pub f: F,
    pub df: G,
}

impl<F, G> SmoothFunction for FnPair<F, G>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
{
    fn value(&self, t: f64) -> Result<f64> {
        Ok((self.f)(t))
    }

    fn derivative(&self, t: f64) -> Result<f64> {
        Ok((self.df)(t))
    }
}

impl<T: SmoothFunction + ?Sized> SmoothFunction for &T {
    fn value(&self, t: f64) -> Result<f64> {
        (**self).value(t)
    }

    fn derivative(&self, t: f64) -> Result<f64> {
        (**self).derivative(t)
    }
}

/// Samples of a real function on a shared grid, with its running integral
/// from `t0` and running extrema.
#[derive(Debug, Clone, Serialize)]
pub struct FuncTrace {
    #[serde(skip)]
    grid: Arc<Grid>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
    running_max: Vec<f64>,
    running_min: Vec<f64>,
    /// Largest `|Im f| / (1 + |Re f|)` seen while sampling.
    imag_residue: f64,
}

impl FuncTrace {
    /// Trace from samples; the running integral uses the trapezoid rule.
    pub fn from_samples(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let t = grid.points();
        if values.len() != t.len() {
            return Err(Error::InvalidGrid(format!(
                "{} samples for {} points",
                values.len(),
                t.len()
            )));
        }
        let mut cumulative = Vec::with_capacity(t.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 1..t.len() {
            acc += 0.5 * (values[i] + values[i - 1]) * (t[i] - t[i - 1]);
            cumulative.push(acc);
        }
        Ok(Self::assemble(grid, values, cumulative, 0.0))
    }

    /// Trace from samples and an already computed running integral.
    pub fn with_cumulative(
        grid: Arc<Grid>,
        values: Vec<f64>,
        cumulative: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != grid.len() || cumulative.len() != grid.len() {
            return Err(Error::InvalidGrid("length mismatch".into()));
        }
        Ok(Self::assemble(grid, values, cumulative, 0.0))
    }

    fn assemble(
        grid: Arc<Grid>,
        values: Vec<f64>,
        cumulative: Vec<f64>,
        imag_residue: f64,
    ) -> Self {
        let mut running_max = Vec::with_capacity(values.len());
        let mut running_min = Vec::with_capacity(values.len());
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for &v in &values {
            hi = hi.max(v);
            lo = lo.min(v);
            running_max.push(hi);
            running_min.push(lo);
        }
        FuncTrace {
            grid,
            values,
            cumulative,
            running_max,
            running_min,
            imag_residue,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn running_max(&self) -> &[f64] {
        &self.running_max
    }

    pub fn running_min(&self) -> &[f64] {
        &self.running_min
    }

    pub fn imag_residue(&self) -> f64 {
        self.imag_residue
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Linear interpolation between samples.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        let i = self.grid.locate(t)?;
        let p = self.grid.points();
        let w = (t - p[i]) / (p[i + 1] - p[i]);
        Ok(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<FuncTrace> {
        let v = self
            .times()
            .iter()
            .zip(&self.values)
            .map(|(&t, &x)| f(t, x))
            .collect();
        FuncTrace::from_samples(Arc::clone(&self.grid), v)
    }
}

/// Samples `f` on `grid` and integrates it interval by interval with
/// adaptive Gauss–Kronrod quadrature. `imag_tol` bounds the accepted
/// imaginary residue relative to `1 + |Re f|`; larger residues are errors.
pub fn eval_grid(
    f: &BoundExpr,
    grid: Arc<Grid>,
    tol: Tolerance,
    imag_tol: f64,
) -> Result<FuncTrace> {
    let t = grid.points().to_vec();
    let mut values = Vec::with_capacity(t.len());
    let mut residue: f64 = 0.0;
    for &s in &t {
        let z = f.eval(s)?;
        let r = z.im.abs() / (1.0 + z.re.abs());
        if r > imag_tol {
            return Err(Error::DomainError {
                func: "real part",
                t: s,
                re: z.re,
                im: z.im,
            });
        }
        residue = residue.max(r);
        values.push(z.re);
    }
    let cumulative = cumulative_integral(|s| f.eval(s).map(|z| z.re), &grid, tol)?;
    Ok(FuncTrace::assemble(grid, values, cumulative, residue))
}

/// Running integral of `f` from `grid[0]` to every grid point, by adaptive
/// quadrature on each interval.
pub fn cumulative_integral<F>(mut f: F, grid: &Grid, tol: Tolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut out = Vec::with_capacity(grid.len());
    out.push(0.0);
    let mut acc = 0.0;
    for w in grid.points().windows(2) {
        acc += quad::integrate(&mut f, w[0], w[1], tol)?.value;
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bind::{BindOptions, Binder};
    use crate::expr::{Expr, Params};

    fn bind(e: &Expr, t_max: f64) -> BoundExpr {
        Binder::new(Params::new(), BindOptions::new(t_max))
            .unwrap()
            .bind(e)
            .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![1.0]).is_err());
        assert!(Grid::new(vec![1.0, 1.0]).is_err());
        assert!(Grid::new(vec![1.0, f64::NAN]).is_err());
        let g = Grid::log_stretched(1.0, 100.0, 50).unwrap();
        assert_eq!(g.t0(), 1.0);
        assert_eq!(g.t_end(), 100.0);
        assert_eq!(g.locate(100.0).unwrap(), 49);
        assert_eq!(g.locate(1.0).unwrap(), 0);
        assert!(g.locate(0.5).is_err());
    }

    #[test]
    fn constant_trace() {
        let g = Arc::new(Grid::new(vec![1.0, 2.0, 3.0]).unwrap());
        let tr = eval_grid(&bind(&Expr::real(4.0), 3.0), g, Tolerance::default(), 1e-10).unwrap();
        assert_eq!(tr.values(), &[4.0, 4.0, 4.0]);
        assert!((tr.cumulative()[2] - 8.0).abs() < 1e-13);
    }

    #[test]
    fn cumulative_is_exact_for_oscillatory_integrand() {
        let f = Expr::powi(Expr::sin(Expr::exp(Expr::t())), 2);
        let g = Arc::new(Grid::uniform(1.0, 6.0, 40).unwrap());
        let tr = eval_grid(&bind(&f, 6.0), g, Tolerance::default(), 1e-10).unwrap();
        let direct = quad::integrate(
            |s: f64| Ok((s.exp().sin()).powi(2)),
            1.0,
            6.0,
            Tolerance::new(1e-15, 1e-13),
        )
        .unwrap()
        .value;
        assert!((tr.cumulative()[40] - direct).abs() < 1e-8);
    }

    #[test]
    fn running_extrema_and_interpolation() {
        let g = Arc::new(Grid::uniform(0.0, 4.0, 4).unwrap());
        let tr = FuncTrace::from_samples(g, vec![0.0, 2.0, 1.0, 3.0, -1.0]).unwrap();
        assert_eq!(tr.running_max(), &[0.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(tr.running_min(), &[0.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(tr.interpolate(1.5).unwrap(), 1.5);
        assert_eq!(tr.cumulative()[1], 1.0);
    }

    #[test]
    fn rejects_complex_values() {
        let e = Expr::Const(num_complex::Complex64::new(1.0, 1.0));
        let g = Arc::new(Grid::uniform(0.0, 1.0, 2).unwrap());
        assert!(eval_grid(&bind(&e, 1.0), g, Tolerance::default(), 1e-10).is_err());
    }
}
