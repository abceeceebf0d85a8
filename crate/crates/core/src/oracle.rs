//! Direct integration of `φ'' + pφ' + qφ = 0` as ground truth.
//!
//! Everything here works from `p` and `q` alone. Empirical verdicts never
//! look at criteria output, so agreement between the two is a real check.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bind::{BindOptions, Binder, BoundExpr};
use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::outcome::{Boundedness, Stability};
use crate::problem::Problem;
use crate::quad::{self, Tolerance};
use crate::riccati::RootTrace;
use crate::trace::{FuncTrace, Grid};

/// `p`, `p'` and `q` bound for direct integration.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub t0: f64,
    pub p: BoundExpr,
    pub dp: BoundExpr,
    pub q: BoundExpr,
}

impl Coefficients {
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
        Ok(Coefficients {
            t0: problem.t0,
            p: b.bind(&problem.p)?,
            dp: b.bind(&problem.p.differentiate()?)?,
            q: b.bind(&problem.q)?,
        })
    }

    /// `2p' + p² − 4q`, evaluated numerically.
    pub fn disc(&self, t: f64) -> Result<Complex64> {
        let p = self.p.eval(t)?;
        Ok(2.0 * self.dp.eval(t)? + p * p - 4.0 * self.q.eval(t)?)
    }

    fn rhs(&self, t: f64, s: &[f64; 4]) -> Result<[f64; 4]> {
        let phi = Complex64::new(s[0], s[1]);
        let dphi = Complex64::new(s[2], s[3]);
        let dd = -self.p.eval(t)? * dphi - self.q.eval(t)? * phi;
        Ok([s[2], s[3], dd.re, dd.im])
    }
}

/// A solution sampled on a grid. Shorter than the grid if it escaped.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionTrace {
    #[serde(skip)]
    pub grid: Arc<Grid>,
    pub phi: Vec<Complex64>,
    pub dphi: Vec<Complex64>,
    pub initial: (Complex64, Complex64),
    pub tol: f64,
    pub escaped_at: Option<f64>,
}

impl SolutionTrace {
    pub fn times(&self) -> &[f64] {
        &self.grid.points()[..self.phi.len()]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re_phi,im_phi,re_dphi,im_dphi")?;
        for ((t, f), d) in self.times().iter().zip(&self.phi).zip(&self.dphi) {
            writeln!(w, "{},{},{},{},{}", t, f.re, f.im, d.re, d.im)?;
        }
        Ok(())
    }
}

/// Integrates from `(phi0, dphi0)` at the first grid point.
pub fn integrate_linear(
    c: &Coefficients,
    grid: Arc<Grid>,
    phi0: Complex64,
    dphi0: Complex64,
    tol: f64,
) -> Result<SolutionTrace> {
    let y0 = [phi0.re, phi0.im, dphi0.re, dphi0.im];
    let out = ode::integrate(
        |t, s| c.rhs(t, s),
        grid.points(),
        y0,
        &OdeOptions::with_tol(tol),
    )?;
    let phi = out
        .states
        .iter()
        .map(|s| Complex64::new(s[0], s[1]))
        .collect();
    let dphi = out
        .states
        .iter()
        .map(|s| Complex64::new(s[2], s[3]))
        .collect();
    Ok(SolutionTrace {
        grid,
        phi,
        dphi,
        initial: (phi0, dphi0),
        tol,
        escaped_at: out.escaped_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub tol: f64,
    pub grid_intervals: usize,
    /// Relative growth of the running sup between the half horizon and the
    /// horizon below which it counts as settled.
    pub plateau: f64,
    /// Final norm below `vanish` times the sup counts as decay.
    pub vanish: f64,
    pub t_osc: f64,
    pub quad_tol: Tolerance,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            tol: 1e-10,
            grid_intervals: 2000,
            plateau: 0.01,
            vanish: 1e-3,
            t_osc: 12.0,
            quad_tol: Tolerance::new(1e-13, 1e-10),
        }
    }
}

/// Measured growth of one norm over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormGrowth {
    pub sup_half: f64,
    pub sup: f64,
    /// Sup over the second half of the horizon.
    pub tail_sup: f64,
    pub last: f64,
    /// Least-squares slope of `ln‖·‖` against `t` over the second half.
    pub exponent: f64,
    pub plateaued: bool,
    pub vanished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalVerdict {
    pub boundedness: Boundedness,
    pub stability: Stability,
    /// `max |φ|` over both basis solutions.
    pub solutions: NormGrowth,
    /// Max absolute entry of the fundamental matrix.
    pub fundamental: NormGrowth,
    pub growth_exponent: f64,
    pub horizon: f64,
    /// Where integration stopped, if a solution blew up.
    pub escaped_at: Option<f64>,
}

/// Both basis solutions on a uniform grid over `[t0, t_end]`.
pub fn fundamental_matrix(
    c: &Coefficients,
    t_end: f64,
    cfg: &OracleConfig,
) -> Result<(SolutionTrace, SolutionTrace)> {
    let grid = Arc::new(Grid::uniform(c.t0, t_end, cfg.grid_intervals)?);
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let a = integrate_linear(c, Arc::clone(&grid), one, zero, cfg.tol)?;
    let b = integrate_linear(c, grid, zero, one, cfg.tol)?;
    Ok((a, b))
}

fn norm_growth(times: &[f64], norms: &[f64], cfg: &OracleConfig) -> NormGrowth {
    let n = norms.len();
    let t0 = times[0];
    let t_last = times[n - 1];
    let half_t = t0 + 0.5 * (t_last - t0);
    let half = times.partition_point(|&t| t <= half_t).max(1);
    let sup_half = norms[..half].iter().cloned().fold(0.0, f64::max);
    let sup = norms.iter().cloned().fold(0.0, f64::max);
    let tail_sup = norms[half - 1..].iter().cloned().fold(0.0, f64::max);

    let pts: Vec<(f64, f64)> = (half - 1..n)
        .filter(|&i| norms[i] > 0.0)
        .map(|i| (times[i], norms[i].ln()))
        .collect();
    let exponent = slope(&pts);
    let last = norms[n - 1];
    NormGrowth {
        sup_half,
        sup,
        tail_sup,
        last,
        exponent,
        plateaued: sup <= sup_half * (1.0 + cfg.plateau),
        vanished: last < cfg.vanish * sup,
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Classifies from the two basis solutions.
pub fn empirical_verdict(
    a: &SolutionTrace,
    b: &SolutionTrace,
    cfg: &OracleConfig,
) -> EmpiricalVerdict {
    let n = a.phi.len().min(b.phi.len());
    let times = &a.times()[..n];
    let sol: Vec<f64> = (0..n)
        .map(|i| a.phi[i].norm().max(b.phi[i].norm()))
        .collect();
    let full: Vec<f64> = (0..n)
        .map(|i| sol[i].max(a.dphi[i].norm()).max(b.dphi[i].norm()))
        .collect();
    let solutions = norm_growth(times, &sol, cfg);
    let fundamental = norm_growth(times, &full, cfg);
    let escaped_at = match (a.escaped_at, b.escaped_at) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    };

    let (boundedness, stability) = if escaped_at.is_some() {
        (Boundedness::UnboundedSolutionExists, Stability::Unstable)
    } else {
        let bd = if solutions.vanished {
            Boundedness::AllVanish
        } else if solutions.plateaued {
            Boundedness::AllBounded
        } else if solutions.exponent > 0.0 {
            Boundedness::UnboundedSolutionExists
        } else {
            Boundedness::Unknown
        };
        let st = if fundamental.vanished {
            Stability::AsymptoticallyStable
        } else if fundamental.plateaued {
            Stability::LiapunovStable
        } else if fundamental.exponent > 0.0 {
            Stability::Unstable
        } else {
            Stability::Unknown
        };
        (bd, st)
    };
    EmpiricalVerdict {
        boundedness,
        stability,
        solutions,
        fundamental,
        growth_exponent: fundamental.exponent,
        horizon: times[n - 1],
        escaped_at,
    }
}

/// Integrates both basis solutions of `problem` on `[t0, t_end]` and classifies.
pub fn fundamental_growth(
    problem: &Problem,
    t_end: f64,
    cfg: &OracleConfig,
) -> Result<EmpiricalVerdict> {
    let c = Coefficients::new(problem, t_end, cfg.t_osc, cfg.quad_tol)?;
    let (a, b) = fundamental_matrix(&c, t_end, cfg)?;
    Ok(empirical_verdict(&a, &b, cfg))
}

/// `φ₀` built from the differential root of `D/4`, next to a direct solve.
#[derive(Debug, Clone, Serialize)]
pub struct Phi0Report {
    /// `φ₀` and `φ₀'` from the root.
    pub from_root: SolutionTrace,
    /// `ln|φ₀|`, kept separately because `φ₀` may leave floating range.
    pub log_abs: Vec<f64>,
    /// The same solution by direct integration.
    pub direct: SolutionTrace,
    /// Over grid points where `|φ₀|` is above the integrator's absolute floor.
    pub max_rel_deviation: f64,
    /// Last grid time included in the comparison.
    pub compared_until: f64,
}

/// Values below this multiple of the tolerance are integrator noise.
const NOISE_FLOOR: f64 = 1e3;

/// `φ₀ = exp ∫(y − p/2)` on the root's grid, with `y` the root of `D/4`.
pub fn phi0_via_root(c: &Coefficients, root: &RootTrace, tol: f64) -> Result<Phi0Report> {
    let grid = Arc::clone(&root.grid);
    let pts = grid.points();
    let t0 = pts[0];
    let d0 = c.disc(t0)?;
    if !(d0.re > 0.0) {
        return Err(Error::NonPositiveDiscriminant {
            t: t0,
            value: d0.re,
        });
    }
    let qtol = Tolerance::new(1e-14, tol);
    let mut half_p = Vec::with_capacity(pts.len());
    let mut acc = Complex64::new(0.0, 0.0);
    half_p.push(acc);
    for w in pts.windows(2) {
        acc += quad::integrate(|s| c.p.eval(s), w[0], w[1], qtol)?.value * 0.5;
        half_p.push(acc);
    }
    let mut phi = Vec::with_capacity(pts.len());
    let mut dphi = Vec::with_capacity(pts.len());
    let mut log_abs = Vec::with_capacity(pts.len());
    for (i, &t) in pts.iter().enumerate() {
        // ∫y comes exactly from the root's own quadrature of y − √x and √x.
        let int_y = root.deviation_integral[i] + root.bound.cumulative_sqrt()[i];
        let expo = Complex64::new(int_y, 0.0) - half_p[i];
        let f = if i == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            expo.exp()
        };
        let slope = root.y[i] - 0.5 * c.p.eval(t)?;
        phi.push(f);
        dphi.push(slope * f);
        log_abs.push(if i == 0 { 0.0 } else { expo.re });
    }
    let init = (phi[0], dphi[0]);
    let direct = integrate_linear(c, Arc::clone(&grid), init.0, init.1, tol)?;
    let mut max_rel_deviation: f64 = 0.0;
    let mut compared_until = t0;
    for (i, z) in direct.phi.iter().enumerate() {
        if phi[i].norm() <= NOISE_FLOOR * tol {
            continue;
        }
        let dev = (z - phi[i]).norm() / phi[i].norm();
        max_rel_deviation = max_rel_deviation.max(dev);
        compared_until = pts[i];
    }
    if direct.escaped_at.is_some() {
        max_rel_deviation = f64::INFINITY;
    }
    Ok(Phi0Report {
        from_root: SolutionTrace {
            grid,
            phi,
            dphi,
            initial: init,
            tol,
            escaped_at: None,
        },
        log_abs,
        direct,
        max_rel_deviation,
        compared_until,
    })
}

/// Pointwise inequality outcome. `worst_margin` is `rhs − lhs` at its
/// minimum, measured relative to the right side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub holds: bool,
    pub worst_margin: f64,
    pub at: f64,
}

impl InequalityCheck {
    fn new() -> Self {
        InequalityCheck {
            holds: true,
            worst_margin: f64::INFINITY,
            at: f64::NAN,
        }
    }

    fn record(&mut self, t: f64, margin: f64, slack: f64) {
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
            self.at = t;
        }
        if !(margin >= -slack) {
            self.holds = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    /// Mean of `|φ₀| exp(−Q − r1/2)` over the grid.
    pub ratio_constant: f64,
    /// Its coefficient of variation.
    pub ratio_cv: f64,
    pub ratio_constant_holds: bool,
    /// `|φ₀'| ≤ ρ|φ₀| + ½(1 + |p − √D|)|φ₀|`.
    pub local_derivative_bound: InequalityCheck,
    /// `|φ₀'| ≤ ρ|φ₀| + exp(Q + r2/2)`.
    pub derivative_bound: InequalityCheck,
    /// `exp(r2) ≤ exp(−2Q)(2|φ₀'| + (1 + ρ)|φ₀|)`.
    pub r2_bound: InequalityCheck,
}

pub const IDENTITY_SLACK: f64 = 1e-6;
pub const RATIO_CV_MAX: f64 = 1e-6;

/// Checks the identities tying `φ₀` to `Q`, `r1`, `r2` and `ρ`.
///
/// All comparisons run in the log domain divided through by `|φ₀|`, so
/// traces that over- or underflow still compare.
pub fn identity_checks(
    c: &Coefficients,
    root: &RootTrace,
    phi0: &Phi0Report,
    r1: &FuncTrace,
    r2: &FuncTrace,
) -> Result<IdentityReport> {
    let pts = root.grid.points();
    let n = pts.len();
    if r1.values().len() != n || r2.values().len() != n || phi0.log_abs.len() != n {
        return Err(Error::InvalidGrid("traces must share the root grid".into()));
    }
    let mut ratios = Vec::with_capacity(n);
    let mut local = InequalityCheck::new();
    let mut deriv = InequalityCheck::new();
    let mut r2b = InequalityCheck::new();
    let slack_log = IDENTITY_SLACK.ln_1p();
    for (i, &t) in pts.iter().enumerate() {
        let ln_phi = phi0.log_abs[i];
        let q = root.q[i];
        let rho = root.rho_upper[i];
        let p = c.p.eval(t)?;
        let sqrt_d = 2.0 * root.sqrt_x[i];
        let ratio_deriv = (root.y[i] - 0.5 * p).norm();
        let gap = (p - sqrt_d).norm();

        ratios.push((ln_phi - q - 0.5 * r1.values()[i]).exp());

        let rhs = rho + 0.5 * (1.0 + gap);
        local.record(t, (rhs - ratio_deriv) / rhs, IDENTITY_SLACK);

        let rhs = rho + (q + 0.5 * r2.values()[i] - ln_phi).exp();
        deriv.record(t, (rhs - ratio_deriv) / rhs, IDENTITY_SLACK);

        let lhs = r2.values()[i];
        let rhs = -2.0 * q + ln_phi + (2.0 * ratio_deriv + 1.0 + rho).ln();
        r2b.record(t, rhs - lhs, slack_log);
    }
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let cv = var.sqrt() / mean.abs();
    Ok(IdentityReport {
        ratio_constant: mean,
        ratio_cv: cv,
        ratio_constant_holds: cv < RATIO_CV_MAX,
        local_derivative_bound: local,
        derivative_bound: deriv,
        r2_bound: r2b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubstitutionReport {
    pub max_rel_deviation: f64,
    pub at: f64,
    pub compared_until: f64,
}

/// Solves `ψ'' = (D/4)ψ`, multiplies by `exp(−½∫p)` and compares with a
/// direct solve from the same initial data. Deviations are relative to
/// `|φ| + |φ'|`, at points where that exceeds the integrator's absolute floor.
pub fn substitution_check(
    c: &Coefficients,
    grid: Arc<Grid>,
    phi0: Complex64,
    dphi0: Complex64,
    tol: f64,
) -> Result<SubstitutionReport> {
    let direct = integrate_linear(c, Arc::clone(&grid), phi0, dphi0, tol)?;
    let t0 = grid.t0();
    // E(t0) = 1 and E' = −pE/2, so ψ(t0) = φ(t0), ψ'(t0) = φ'(t0) + p(t0)φ(t0)/2.
    let psi0 = phi0;
    let dpsi0 = dphi0 + 0.5 * c.p.eval(t0)? * phi0;
    let rhs = |t: f64, s: &[f64; 6]| -> Result<[f64; 6]> {
        let psi = Complex64::new(s[0], s[1]);
        let dd = 0.25 * c.disc(t)? * psi;
        let p = c.p.eval(t)?;
        Ok([s[2], s[3], dd.re, dd.im, p.re, p.im])
    };
    let y0 = [psi0.re, psi0.im, dpsi0.re, dpsi0.im, 0.0, 0.0];
    let out = ode::integrate(rhs, grid.points(), y0, &OdeOptions::with_tol(tol))?;
    let n = out.states.len().min(direct.phi.len());
    let mut worst = SubstitutionReport {
        max_rel_deviation: 0.0,
        at: t0,
        compared_until: t0,
    };
    for i in 0..n {
        let s = &out.states[i];
        let e = (-0.5 * Complex64::new(s[4], s[5])).exp();
        let rebuilt = e * Complex64::new(s[0], s[1]);
        let scale = direct.phi[i].norm() + direct.dphi[i].norm();
        if scale <= NOISE_FLOOR * tol {
            continue;
        }
        worst.compared_until = grid.points()[i];
        let dev = (rebuilt - direct.phi[i]).norm() / scale;
        if dev > worst.max_rel_deviation || dev.is_nan() {
            worst.max_rel_deviation = dev;
            worst.at = grid.points()[i];
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub t: f64,
    /// `|φ'' + pφ' + qφ|` divided by `|pφ'| + |qφ| + |φ''|`.
    pub scaled: f64,
}

/// Equation residual at grid index `i`. `φ''` comes from a central
/// difference of `φ'` obtained by short re-integrations from the stored state.
pub fn residual_at(c: &Coefficients, trace: &SolutionTrace, i: usize) -> Result<Residual> {
    let t = trace.times()[i];
    let y = [
        trace.phi[i].re,
        trace.phi[i].im,
        trace.dphi[i].re,
        trace.dphi[i].im,
    ];
    let h = 1e-4 * t.abs().max(1.0);
    let f = |s: f64, st: &[f64; 4]| c.rhs(s, st);
    let fwd = ode::fixed_step(f, t, t + h, y, 2)?;
    let back = ode::fixed_step(f, t, t - h, y, 2)?;
    let dd = (Complex64::new(fwd[2], fwd[3]) - Complex64::new(back[2], back[3])) / (2.0 * h);
    let pd = c.p.eval(t)? * trace.dphi[i];
    let qf = c.q.eval(t)? * trace.phi[i];
    let scale = dd.norm() + pd.norm() + qf.norm();
    let r = (dd + pd + qf).norm();
    Ok(Residual {
        t,
        scaled: if scale > 0.0 { r / scale } else { r },
    })
}
