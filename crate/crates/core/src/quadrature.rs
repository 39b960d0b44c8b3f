//! Globally adaptive Gauss–Kronrod (7, 15) quadrature in one and two dimensions.
//!
//! The interval with the largest error estimate is bisected until the
//! tolerance is met. Two-dimensional integrals are nested one-dimensional ones.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

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
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5] and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl Tolerance {
    pub fn absolute(absolute: f64) -> Self {
        Tolerance { absolute, relative: 0.0 }
    }

    fn target(&self, value: f64) -> f64 {
        self.absolute.max(self.relative * value.abs())
    }
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
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
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

/// Integrates `f` over `[lo, hi]`.
///
/// Fails with [`Error::Quadrature`] when the error target is not reached
/// within the segment budget; the error carries the achieved estimate.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<Integral> {
    if lo == hi {
        return Ok(Integral { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (a, b, sign) = if lo < hi { (lo, hi, 1.0) } else { (hi, lo, -1.0) };

    let (value, error) = kronrod15(&mut f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { lo: a, hi: b, value, error });
    let mut total_value = value;
    let mut total_error = error;

    loop {
        if total_error <= tol.target(total_value) {
            // confirm with exact sums before accepting an incrementally updated total
            total_value = heap.iter().map(|s| s.value).sum();
            total_error = heap.iter().map(|s| s.error).sum();
            if total_error <= tol.target(total_value) {
                break;
            }
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature { achieved: total_error, requested: tol.target(total_value) });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // interval can no longer be split in floating point
            return Err(Error::Quadrature { achieved: total_error, requested: tol.target(total_value) });
        }
        let (v1, e1) = kronrod15(&mut f, worst.lo, mid);
        let (v2, e2) = kronrod15(&mut f, mid, worst.hi);
        evaluations += 30;
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Segment { lo: worst.lo, hi: mid, value: v1, error: e1 });
        heap.push(Segment { lo: mid, hi: worst.hi, value: v2, error: e2 });
        // periodic exact re-sum of the running totals
        if heap.len() % 64 == 0 {
            total_value = heap.iter().map(|s| s.value).sum();
            total_error = heap.iter().map(|s| s.error).sum();
        }
    }

    Ok(Integral { value: sign * total_value, error: total_error, evaluations })
}

/// Integrates `f` over `[lo, hi]`, splitting at the given interior break points
/// (kinks or discontinuities of the integrand).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.insert(0, lo);
    points.push(hi);
    let pieces = (points.len() - 1) as f64;
    let piece_tol = Tolerance { absolute: tol.absolute / pieces, relative: tol.relative };
    let mut out = Integral { value: 0.0, error: 0.0, evaluations: 0 };
    for w in points.windows(2) {
        let part = integrate(&mut f, w[0], w[1], piece_tol)?;
        out.value += part.value;
        out.error += part.error;
        out.evaluations += part.evaluations;
    }
    Ok(out)
}

/// Integrates `f(u, v)` over the rectangle `[u_lo, u_hi] × [v_lo, v_hi]`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (u_lo, u_hi): (f64, f64),
    (v_lo, v_hi): (f64, f64),
    tol: Tolerance,
) -> Result<Integral> {
    let width = (u_hi - u_lo).abs().max(f64::MIN_POSITIVE);
    let inner_tol = Tolerance { absolute: 0.1 * tol.absolute / width, relative: 0.1 * tol.relative };
    let mut inner_error = 0.0_f64;
    let mut evaluations = 0;
    let mut failure = None;
    let outer = integrate(
        |u| match integrate(|v| f(u, v), v_lo, v_hi, inner_tol) {
            Ok(inner) => {
                inner_error = inner_error.max(inner.error);
                evaluations += inner.evaluations;
                inner.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        u_lo,
        u_hi,
        Tolerance { absolute: 0.9 * tol.absolute, relative: 0.9 * tol.relative },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Integral {
        value: outer.value,
        error: outer.error + inner_error * width,
        evaluations: evaluations + outer.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, Tolerance::absolute(1e-14)).unwrap();
        // x^6/6 - x^3 + x from -1 to 2
        let exact = (64.0 / 6.0 - 8.0 + 2.0) - (1.0 / 6.0 + 1.0 - 1.0);
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let r = integrate(phi, -12.0, 12.0, Tolerance::absolute(1e-12)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x| x, 1.0, 0.0, Tolerance::absolute(1e-12)).unwrap();
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn kink_handled_with_breaks() {
        let r = integrate_with_breaks(|x: f64| x.abs(), -1.0, 3.0, &[0.0], Tolerance::absolute(1e-13)).unwrap();
        assert!((r.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_product() {
        let r = integrate_2d(|u, v| u * v.exp(), (0.0, 1.0), (0.0, 1.0), Tolerance::absolute(1e-12)).unwrap();
        assert!((r.value - 0.5 * (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn non_convergence_reports_achieved_error() {
        let err = integrate(|x: f64| (1e5 * x).sin() + (3.7e4 * x).cos(), 0.0, 1000.0, Tolerance::absolute(1e-10));
        match err {
            Err(Error::Quadrature { achieved, requested }) => {
                assert!(achieved > requested);
            }
            other => panic!("expected quadrature failure, got {other:?}"),
        }
    }
}
