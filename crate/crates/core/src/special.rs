//! Special functions and quadrature used by the predictions and closures.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub use statrs::function::gamma::{gamma, ln_gamma};

// B_2, B_4, ..., B_16 divided by their factorials (2j)!.
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
    -3617.0 / 510.0 / 20922789888000.0,
];

/// Riemann zeta function for real `s != 1`, by Euler-Maclaurin summation.
///
/// Accurate to a few ulps on `s > -10`, which covers every exponent the
/// kernel closures need (`0 < s < 3`).
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s != 1.0, "zeta has a pole at s = 1");
    const N: usize = 16;
    let n = N as f64;
    let mut head = 0.0;
    for k in (1..N).rev() {
        head += (k as f64).powf(-s);
    }
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising product s (s+1) ... (s+2j-2), times N^(-s-2j+1)
    let mut rising = s;
    let mut npow = n.powf(-s - 1.0);
    for (j, coef) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        tail += coef * rising * npow;
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        npow /= n * n;
    }
    head + tail
}

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
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
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
        self.error.total_cmp(&other.error)
    }
}

/// Result of an adaptive quadrature: value and the achieved error bound.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// The interval is first cut into `initial_panels` equal pieces, then the
/// panel with the largest error estimate is bisected until the summed
/// estimate drops below `abs_tol`.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    initial_panels: usize,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Quadrature> {
    let n0 = initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut heap = BinaryHeap::with_capacity(2 * n0);
    for i in 0..n0 {
        let lo = a + width * i as f64;
        let hi = if i + 1 == n0 { b } else { lo + width };
        let (value, error) = kronrod15(&f, lo, hi);
        heap.push(Panel {
            a: lo,
            b: hi,
            value,
            error,
        });
    }
    loop {
        let total_err: f64 = heap.iter().map(|p| p.error).sum();
        if total_err <= abs_tol {
            break;
        }
        if heap.len() >= max_panels {
            return Err(Error::NumericalFailure(format!(
                "quadrature did not converge: error bound {total_err:.3e} > {abs_tol:.1e} after {} panels",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod15(&f, lo, hi);
            heap.push(Panel {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
    }
    // sum in position order so the value does not depend on heap layout
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    Ok(Quadrature {
        value: panels.iter().map(|p| p.value).sum(),
        error: panels.iter().map(|p| p.error).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Cohen-Rodriguez Villegas-Zagier acceleration of the alternating eta series.
    fn zeta_via_eta(s: f64) -> f64 {
        let n = 40usize;
        let mut d = vec![0.0f64; n + 1];
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        d[0] = 1.0;
        for i in 1..=n {
            let (ni, ii) = (n as f64, i as f64);
            term *= 4.0 * (ni + ii - 1.0) * (ni - ii + 1.0) / ((2.0 * ii - 1.0) * (2.0 * ii));
            sum += term;
            d[i] = sum;
        }
        let mut eta = 0.0;
        for k in 0..n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            eta += sign * (d[n] - d[k]) / (k as f64 + 1.0).powf(s);
        }
        eta /= d[n];
        eta / (1.0 - 2f64.powf(1.0 - s))
    }

    #[test]
    fn zeta_known_values() {
        assert_relative_eq!(riemann_zeta(2.0), std::f64::consts::PI.powi(2) / 6.0, max_relative = 1e-14);
        assert_relative_eq!(riemann_zeta(0.5), -1.460_354_508_809_586_8, max_relative = 1e-13);
        assert_relative_eq!(riemann_zeta(0.0), -0.5, epsilon = 1e-14);
    }

    #[test]
    fn zeta_matches_eta_acceleration() {
        for s in [0.1, 0.3, 0.5, 0.7, 0.9, 1.5, 2.5] {
            assert_relative_eq!(riemann_zeta(s), zeta_via_eta(s), max_relative = 1e-12);
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // integral of x^(-1/2) over [0, 1] is 2
        let q = integrate_adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1, 1e-9, 10_000).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8, "{q:?}");
    }

    #[test]
    fn adaptive_oscillatory() {
        let q = integrate_adaptive(|x| (50.0 * x).cos(), 0.0, std::f64::consts::PI, 8, 1e-12, 10_000)
            .unwrap();
        assert!((q.value - (50.0 * std::f64::consts::PI).sin() / 50.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_reports_non_convergence() {
        let err = integrate_adaptive(|x| 1.0 / x, 0.0, 1.0, 1, 1e-12, 50).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure(_)));
    }
}
