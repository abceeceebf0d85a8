//! Dormand–Prince 5(4) with step-size control.
//!
//! Output is produced at the points of a caller-supplied grid: steps are
//! shortened to land on each grid point, so no interpolation is involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Integration stops (without error) once any component exceeds this.
    pub escape: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            escape: 1e250,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeOutput<const N: usize> {
    /// States at the grid points reached, starting with the initial state.
    pub states: Vec<[f64; N]>,
    pub accepted: usize,
    pub rejected: usize,
    /// Set when the state grew past `escape`; `states` then stops early.
    pub escaped_at: Option<f64>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn comb<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step from `(t, y)` with slope `k1 = f(t, y)`. Returns
/// the fifth-order state, its slope and the embedded error vector.
pub fn dp_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Result<([f64; N], [f64; N], [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k2 = f(t + C2 * h, &comb(y, h, &[(A21, k1)]))?;
    let k3 = f(t + C3 * h, &comb(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(
        t + C4 * h,
        &comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    )?;
    let k5 = f(
        t + C5 * h,
        &comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        t + h,
        &comb(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    )?;
    let y5 = comb(
        y,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = f(t + h, &y5)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok((y5, k7, err))
}

/// Integrates `y' = f(t, y)` from `grid[0]` with `y(grid[0]) = y0`.
pub fn integrate<const N: usize, F>(
    mut f: F,
    grid: &[f64],
    y0: [f64; N],
    opts: &OdeOptions,
) -> Result<OdeOutput<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty".into()));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidConfig("tolerances must be positive".into()));
    }
    let mut out = OdeOutput {
        states: Vec::with_capacity(grid.len()),
        accepted: 0,
        rejected: 0,
        escaped_at: None,
    };
    out.states.push(y0);
    if grid.len() == 1 {
        return Ok(out);
    }
    let mut t = grid[0];
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let mut h = initial_step(&y, &k1, opts).min(grid[grid.len() - 1] - t);
    let mut steps = 0usize;

    for &target in &grid[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let remaining = target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            if step <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t, h: step });
            }
            let (y5, k7, e) = dp_step(&mut f, t, &y, &k1, step)?;
            let mut norm: f64 = 0.0;
            for i in 0..N {
                let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
                norm = norm.max((e[i] / sc).abs());
            }
            if !norm.is_finite() {
                norm = 1e10;
            }
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            if norm <= 1.0 {
                out.accepted += 1;
                t = if last { target } else { t + step };
                y = y5;
                k1 = k7;
                // A shortened final step says nothing about the step size.
                if !last || step >= h {
                    h = step * factor;
                }
                if y.iter().any(|v| v.abs() > opts.escape) {
                    out.escaped_at = Some(t);
                    if t == target {
                        out.states.push(y);
                    }
                    return Ok(out);
                }
            } else {
                out.rejected += 1;
                h = step * factor.min(0.5);
            }
        }
        out.states.push(y);
    }
    Ok(out)
}

fn initial_step<const N: usize>(y: &[f64; N], k: &[f64; N], opts: &OdeOptions) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..N {
        let sc = opts.atol + opts.rtol * y[i].abs();
        d0 = d0.max((y[i] / sc).abs());
        d1 = d1.max((k[i] / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.clamp(1e-8, 0.1)
}

/// Fixed-step Dormand–Prince (fifth-order solution), `n` equal steps.
pub fn fixed_step<const N: usize, F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    n: usize,
) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    let mut k1 = f(t0, &y)?;
    for i in 0..n {
        let t = t0 + h * i as f64;
        let (y5, k7, _) = dp_step(&mut f, t, &y, &k1, h)?;
        y = y5;
        k1 = k7;
    }
    Ok(y)
}
