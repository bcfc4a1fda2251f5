//! One-dimensional quadrature.
//!
//! Two independent rules live here. [`adaptive_trapezoid`] drives the
//! finite-pulse convolution of the unbounded channel. [`gauss_kronrod`] is
//! a globally adaptive 7/15-point Gauss–Kronrod integrator used by the
//! Monte Carlo comparison and by the conservation checks, so that those
//! checks never share an integration path with the code they verify.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances for [`adaptive_trapezoid`].
#[derive(Debug, Clone, Copy)]
pub struct TrapezoidTolerance {
    pub rel: f64,
    pub abs_floor: f64,
    pub max_depth: u32,
}

impl Default for TrapezoidTolerance {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs_floor: 1e-30,
            max_depth: 48,
        }
    }
}

const MIN_DEPTH: u32 = 3;
const COARSE_PANELS: usize = 16;

/// Adaptive interval-halving trapezoid rule on `[a, b]`.
///
/// `breakpoints` inside `(a, b)` split the interval before refinement; put
/// them where the integrand has its structure (a peak, a kink) so that the
/// coarse pass cannot step over it. Each panel compares its trapezoid
/// value against the sum of its two halves. Accepted panels carry the
/// Richardson-extrapolated halves, which is what keeps the evaluation
/// count manageable at `rel = 1e-8` on sharply peaked integrands.
pub fn adaptive_trapezoid<F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: TrapezoidTolerance,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_trapezoid(f, b, a, breakpoints, tol).map(|v| -v);
    }

    let mut nodes: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    nodes.push(a);
    nodes.extend(breakpoints.iter().copied().filter(|&p| p > a && p < b));
    nodes.push(b);
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    nodes.dedup();

    // Coarse pass fixes the absolute error budget.
    let mut coarse = 0.0;
    for w in nodes.windows(2) {
        let h = (w[1] - w[0]) / COARSE_PANELS as f64;
        let mut s = 0.5 * (f(w[0]) + f(w[1]));
        for i in 1..COARSE_PANELS {
            s += f(w[0] + i as f64 * h);
        }
        coarse += s * h;
    }
    let budget = (tol.rel * coarse.abs()).max(tol.abs_floor);
    let span = b - a;

    let mut total = 0.0;
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (flo, fhi) = (f(lo), f(hi));
        let whole = 0.5 * (flo + fhi) * (hi - lo);
        let share = budget * (hi - lo) / span;
        total += refine(&f, lo, hi, flo, fhi, whole, share, 0, tol.max_depth)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    max_depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let left = 0.5 * (fa + fm) * (m - a);
    let right = 0.5 * (fm + fb) * (b - m);
    let halves = left + right;
    let diff = halves - whole;
    if !halves.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite integrand on [{a:e}, {b:e}] at depth {depth}"
        )));
    }
    if depth >= MIN_DEPTH && diff.abs() <= 3.0 * tol {
        return Ok(halves + diff / 3.0);
    }
    if depth >= max_depth {
        return Err(Error::Numerical(format!(
            "adaptive trapezoid did not converge on [{a:e}, {b:e}] after {depth} halvings \
             (panel error {:.3e}, allowed {:.3e}, estimate {halves:e})",
            diff.abs() / 3.0,
            tol
        )));
    }
    Ok(
        refine(f, a, m, fa, fm, left, 0.5 * tol, depth + 1, max_depth)?
            + refine(f, m, b, fm, fb, right, 0.5 * tol, depth + 1, max_depth)?,
    )
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        kronrod += w * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive Gauss–Kronrod (G7/K15) quadrature on `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol * |I|)`.
pub fn gauss_kronrod<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    gauss_kronrod_split(f, &[a, b], rel_tol, abs_tol)
}

/// [`gauss_kronrod`] over consecutive segments of `nodes` (which must be
/// sorted ascending).
pub fn gauss_kronrod_split<F>(f: F, nodes: &[f64], rel_tol: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    const MAX_PANELS: usize = 20_000;
    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in nodes.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, err) = kronrod_panel(&f, w[0], w[1]);
        total += value;
        total_err += err;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            err,
        });
    }
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_PANELS {
            return Err(Error::Numerical(format!(
                "Gauss-Kronrod exceeded {MAX_PANELS} panels (estimate {total:e}, error {total_err:e})"
            )));
        }
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        let (lv, le) = kronrod_panel(&f, worst.a, m);
        let (rv, re) = kronrod_panel(&f, m, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.err;
        heap.push(Panel {
            a: worst.a,
            b: m,
            value: lv,
            err: le,
        });
        heap.push(Panel {
            a: m,
            b: worst.b,
            value: rv,
            err: re,
        });
    }
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite Gauss-Kronrod estimate".into()));
    }
    Ok(total)
}
