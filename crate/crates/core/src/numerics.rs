//! Scalar numerical kernels: adaptive quadrature on semi-infinite ranges,
//! bracketed root finding and central finite differences.
//!
//! Everything here is a pure function of its arguments.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and truncation hint for [`integrate_semi_infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Rate `a` such that the integrand is eventually dominated by `exp(-a t)`.
    pub decay_rate: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-13,
            decay_rate: 1.0,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_decay_rate(decay_rate: f64) -> Self {
        Self {
            decay_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::ConfigError(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate.is_finite()) {
            return Err(Error::ConfigError(
                "quadrature decay-rate hint must be positive".into(),
            ));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::ConfigError(
                "quadrature needs at least one subdivision".into(),
            ));
        }
        Ok(())
    }

    /// Truncation point `T` with `exp(-decay_rate * T) < abs_tol / 10`.
    pub fn truncation_horizon(&self) -> f64 {
        (10.0 / self.abs_tol).ln() / self.decay_rate
    }
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1], as tabulated.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        // Ties broken on the left endpoint so refinement order is deterministic.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidIntegrand { at: x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = eval(center - dx)? + eval(center + dx)?;
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    })
}

/// Adaptive Gauss-Kronrod quadrature of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::DomainError(format!(
            "integration limits must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut heap = BinaryHeap::new();
    let first = gauss_kronrod(&f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.error;
    heap.push(first);
    let mut subdivisions = 1;
    while total_err > spec.abs_tol.max(spec.rel_tol * total.abs()) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NumericalFailure(format!(
                "quadrature on [{a}, {b}] reached {subdivisions} subdivisions with error estimate {total_err:e}"
            )));
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gauss_kronrod(&f, worst.a, mid)?;
        let right = gauss_kronrod(&f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        // Re-sum occasionally to stop the running totals from drifting.
        if subdivisions % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let mut segments: Vec<Segment> = heap.into_vec();
    segments.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(segments.iter().map(|s| s.value).sum())
}

/// `∫₀^∞ f(t) dt`, truncated where `exp(-decay_rate·T)` drops below a tenth
/// of the absolute tolerance.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    integrate_semi_infinite_from(f, spec, 0.0)
}

/// Same as [`integrate_semi_infinite`] but never truncating before `min_horizon`.
pub fn integrate_semi_infinite_from<F: Fn(f64) -> f64>(
    f: F,
    spec: &QuadratureSpec,
    min_horizon: f64,
) -> Result<f64> {
    spec.validate()?;
    let horizon = spec.truncation_horizon().max(min_horizon);
    // Split geometrically so the adaptive scheme starts with short panels
    // near the origin where the integrand carries most of its mass.
    let mut edges = vec![0.0];
    let mut edge = 1.0 / spec.decay_rate;
    while edge < horizon {
        edges.push(edge);
        edge *= 2.0;
    }
    edges.push(horizon);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += integrate(&f, w[0], w[1], spec)?;
    }
    Ok(total)
}

/// Brent's method on a sign-changing bracket.
pub fn find_root_bracketed<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    const MAX_ITER: usize = 200;
    if !(tol > 0.0) || !(lo <= hi) {
        return Err(Error::DomainError(format!(
            "invalid bracket [{lo}, {hi}] or tolerance {tol}"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (g(a), g(b));
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::InvalidIntegrand {
            at: if fa.is_finite() { b } else { a },
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::BracketError {
            lo,
            hi,
            g_lo: fa,
            g_hi: fb,
        });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, or secant when only two points differ.
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
        if !fb.is_finite() {
            return Err(Error::InvalidIntegrand { at: b });
        }
    }
    Err(Error::NumericalFailure(format!(
        "root finder exhausted {MAX_ITER} iterations on [{lo}, {hi}]"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Default central-difference step for the given order at `x`.
pub fn default_step(order: DerivativeOrder, x: f64) -> f64 {
    let scale = x.abs().max(1.0);
    match order {
        DerivativeOrder::First => f64::EPSILON.cbrt() * scale,
        DerivativeOrder::Second => f64::EPSILON.powf(0.25) * scale,
    }
}

/// Central finite difference for `f'(x)` or `f''(x)`, second-order accurate in `h`.
///
/// Passing `None` for `h` uses [`default_step`].
pub fn derivative_fd<F: Fn(f64) -> f64>(f: F, x: f64, order: DerivativeOrder, h: Option<f64>) -> Result<f64> {
    let h = h.unwrap_or_else(|| default_step(order, x));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::DomainError(format!("step must be positive, got {h}")));
    }
    let eval = |t: f64| -> Result<f64> {
        let v = f(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidIntegrand { at: t })
        }
    };
    let up = eval(x + h)?;
    let down = eval(x - h)?;
    match order {
        DerivativeOrder::First => Ok((up - down) / (2.0 * h)),
        DerivativeOrder::Second => {
            let mid = eval(x)?;
            Ok((up - 2.0 * mid + down) / (h * h))
        }
    }
}
