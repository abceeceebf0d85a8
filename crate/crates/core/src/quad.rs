//! Gauss–Kronrod quadrature.
//!
//! `gk21` is the QUADPACK 10/21-point pair. [`integrate`] is a global adaptive
//! scheme (bisect the panel with the largest error estimate until the summed
//! estimate meets the tolerance); [`integrate_partition`] additionally returns
//! the accepted leaf panels, which is what the cumulative-integral tables are
//! built from.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated: reals and complex numbers.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// One Gauss–Kronrod panel.
#[derive(Debug, Clone, Copy)]
pub struct Panel<V> {
    pub a: f64,
    pub b: f64,
    pub value: V,
    pub err: f64,
    /// Integral of |f| over the panel.
    pub resabs: f64,
}

/// Absolute and relative tolerance. The relative part is measured against
/// the integral of |f|, so cancelling oscillatory integrands stay attainable.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    fn target(&self, resabs: f64) -> f64 {
        self.abs.max(self.rel * resabs)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-14, 1e-10)
    }
}

pub fn gk21<V, F>(f: &mut F, a: f64, b: f64) -> Result<Panel<V>>
where
    V: QuadValue,
    F: FnMut(f64) -> Result<V>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();

    let mut fv1 = [V::zero(); 10];
    let mut fv2 = [V::zero(); 10];

    let fc = f(center)?;
    let mut res_g = V::zero();
    let mut res_k = fc * WGK[10];
    let mut res_abs = fc.magnitude() * WGK[10];

    for j in 0..5 {
        let jtw = 2 * j + 1;
        let x = half * XGK[jtw];
        let f1 = f(center - x)?;
        let f2 = f(center + x)?;
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_g = res_g + (f1 + f2) * WG[j];
        res_k = res_k + (f1 + f2) * WGK[jtw];
        res_abs += WGK[jtw] * (f1.magnitude() + f2.magnitude());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let x = half * XGK[jtwm1];
        let f1 = f(center - x)?;
        let f2 = f(center + x)?;
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_k = res_k + (f1 + f2) * WGK[jtwm1];
        res_abs += WGK[jtwm1] * (f1.magnitude() + f2.magnitude());
    }

    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).magnitude();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }

    let diff = (res_k - res_g) * half;
    let value = res_k * half;
    res_abs *= abs_half;
    res_asc *= abs_half;

    Ok(Panel {
        a,
        b,
        value,
        err: rescale_error(diff.magnitude(), res_abs, res_asc),
        resabs: res_abs,
    })
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err;
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// Ten-point Gauss–Legendre rule (the Gauss half of the Kronrod pair).
pub fn gl10<V, F>(f: &mut F, a: f64, b: f64) -> Result<V>
where
    V: QuadValue,
    F: FnMut(f64) -> Result<V>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = V::zero();
    for j in 0..5 {
        let x = half * XGK[2 * j + 1];
        acc = acc + (f(center - x)? + f(center + x)?) * WG[j];
    }
    Ok(acc * half)
}

#[derive(Debug, Clone, Copy)]
pub struct Integral<V> {
    pub value: V,
    pub err: f64,
    pub resabs: f64,
    pub panels: usize,
}

struct Queued<V>(Panel<V>);

impl<V> PartialEq for Queued<V> {
    fn eq(&self, other: &Self) -> bool {
        self.0.err.total_cmp(&other.0.err) == Ordering::Equal
    }
}
impl<V> Eq for Queued<V> {}
impl<V> PartialOrd for Queued<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Queued<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.err.total_cmp(&other.0.err)
    }
}

pub const DEFAULT_MAX_PANELS: usize = 1 << 20;

fn run_adaptive<V, F>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: Tolerance,
    max_panels: usize,
) -> Result<Vec<Panel<V>>>
where
    V: QuadValue,
    F: FnMut(f64) -> Result<V>,
{
    if a == b {
        return Ok(vec![Panel {
            a,
            b,
            value: V::zero(),
            err: 0.0,
            resabs: 0.0,
        }]);
    }
    let first = gk21(f, a, b)?;
    let mut total_err = first.err;
    let mut total_abs = first.resabs;
    let mut heap = BinaryHeap::new();
    heap.push(Queued(first));
    // Panels too narrow to split further; kept aside so the heap makes progress.
    let mut frozen: Vec<Panel<V>> = Vec::new();

    while total_err > tol.target(total_abs) {
        let Some(Queued(worst)) = heap.pop() else {
            break;
        };
        let mid = 0.5 * (worst.a + worst.b);
        let width = (worst.b - worst.a).abs();
        if width <= 64.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs()).max(1.0)
            || heap.len() + frozen.len() + 2 > max_panels
        {
            frozen.push(worst);
            if heap.is_empty() || heap.len() + frozen.len() + 2 > max_panels {
                break;
            }
            continue;
        }
        let left = gk21(f, worst.a, mid)?;
        let right = gk21(f, mid, worst.b)?;
        total_err += left.err + right.err - worst.err;
        total_abs += left.resabs + right.resabs - worst.resabs;
        heap.push(Queued(left));
        heap.push(Queued(right));
    }

    let mut leaves: Vec<Panel<V>> = heap.into_iter().map(|q| q.0).chain(frozen).collect();
    let err: f64 = leaves.iter().map(|p| p.err).sum();
    let resabs: f64 = leaves.iter().map(|p| p.resabs).sum();
    if err > tol.target(resabs) {
        return Err(Error::QuadratureFailure { a, b, err });
    }
    leaves.sort_by(|p, q| p.a.total_cmp(&q.a));
    Ok(leaves)
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<V, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral<V>>
where
    V: QuadValue,
    F: FnMut(f64) -> Result<V>,
{
    let leaves = run_adaptive(&mut f, a, b, tol, DEFAULT_MAX_PANELS)?;
    Ok(summarize(&leaves))
}

/// Like [`integrate`] but returns the accepted panels in increasing order.
pub fn integrate_partition<V, F>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
    max_panels: usize,
) -> Result<Vec<Panel<V>>>
where
    V: QuadValue,
    F: FnMut(f64) -> Result<V>,
{
    run_adaptive(&mut f, a, b, tol, max_panels)
}

fn summarize<V: QuadValue>(leaves: &[Panel<V>]) -> Integral<V> {
    let mut value = V::zero();
    let mut err = 0.0;
    let mut resabs = 0.0;
    for p in leaves {
        value = value + p.value;
        err += p.err;
        resabs += p.resabs;
    }
    Integral {
        value,
        err,
        resabs,
        panels: leaves.len(),
    }
}
