//! Globally adaptive Gauss–Kronrod (10/21-point) integration on a finite
//! union of intervals.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

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

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_814_748_275,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Stopping rule: total error ≤ max(abs, rel·|value|).
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-12,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Piece {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over consecutive intervals `[b_0,b_1], [b_1,b_2], ...`.
///
/// Breakpoints must be nondecreasing; zero-width pieces are skipped.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], tol: Tolerance) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evals = 0;
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            let p = gk21(&f, w[0], w[1]);
            evals += 21;
            value += p.value;
            error += p.error;
            heap.push(p);
        }
    }
    loop {
        if error <= tol.abs.max(tol.rel * value.abs()) || heap.is_empty() {
            return Ok(finish(heap, evals));
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::NonConvergent {
                what: "adaptive quadrature",
                estimate: value,
                error,
            });
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval is at floating-point resolution; accept what we have.
            heap.push(worst);
            return Ok(finish(heap, evals));
        }
        let left = gk21(&f, worst.a, mid);
        let right = gk21(&f, mid, worst.b);
        evals += 42;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
}

// Re-sums the pieces so running-update rounding does not leak into the result.
fn finish(heap: BinaryHeap<Piece>, evals: usize) -> QuadResult {
    let mut pieces = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    QuadResult {
        value: pieces.iter().map(|p| p.value).sum(),
        error: pieces.iter().map(|p| p.error).sum(),
        evals,
    }
}

/// Natural log of `∫ exp(log_f)`, for integrands far below the `f64` range.
///
/// The integrand is rescaled by its largest value at the breakpoints and
/// interval midpoints before integrating. Returns `(ln value, relative error)`.
pub fn integrate_log<F: Fn(f64) -> f64>(log_f: F, breakpoints: &[f64], rel: f64) -> Result<(f64, f64)> {
    let mut peak = f64::NEG_INFINITY;
    for w in breakpoints.windows(2) {
        for y in [w[0], 0.5 * (w[0] + w[1]), w[1]] {
            peak = peak.max(log_f(y));
        }
    }
    if peak == f64::NEG_INFINITY {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    let tol = Tolerance {
        abs: 0.0,
        rel,
        max_intervals: 50_000,
    };
    let r = integrate(|y| (log_f(y) - peak).exp(), breakpoints, tol)?;
    if r.value <= 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    Ok((peak + r.value.ln(), r.error / r.value))
}

/// Evenly spaced breakpoints with spacing at most `step`.
pub fn uniform_breakpoints(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = (((hi - lo) / step).ceil() as usize).max(1);
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}
