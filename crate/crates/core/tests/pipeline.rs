use std::f64::consts::PI;

use bslab_core::kernel::{assemble, sqrt_factor, KernelSpec, DEFAULT_CLIP_REL};
use bslab_core::measure::{make_circle, make_segment, DiscreteMeasure, Point};
use bslab_core::special::{gamma, ln_gamma};
use bslab_core::spectral::{counting, sandwich, signed_spectrum, singular_spectrum, Sign, SpectralResult};
use bslab_core::weight::MatrixWeightField;
use proptest::prelude::*;

fn spectrum(measure: &DiscreteMeasure, alpha: f64, v: &MatrixWeightField) -> SpectralResult {
    let spec = KernelSpec::for_measure(measure, alpha).unwrap();
    let g = sqrt_factor(&assemble(measure, &spec).unwrap(), DEFAULT_CLIP_REL).unwrap();
    signed_spectrum(&sandwich(&g, v, measure).unwrap()).unwrap()
}

/// Circle Fourier multipliers of `|x - y|^(-alpha)` from the Gamma-ratio closed form.
fn circle_multiplier(alpha: f64, n: usize) -> f64 {
    let n = n as f64;
    2.0 * gamma(1.0 - alpha) * (PI * alpha / 2.0).sin() * (ln_gamma(n + alpha / 2.0) - ln_gamma(n + 1.0 - alpha / 2.0)).exp()
}

fn oracle_sorted(alpha: f64, count: usize) -> Vec<f64> {
    let mut v = vec![circle_multiplier(alpha, 0)];
    let mut n = 1;
    while v.len() < count {
        let l = circle_multiplier(alpha, n);
        v.push(l);
        v.push(l);
        n += 1;
    }
    v.truncate(count);
    v
}

#[test]
fn circle_nystrom_matches_closed_form() {
    let alpha = 0.4;
    let m = make_circle(512).unwrap();
    let r = spectrum(&m, alpha, &MatrixWeightField::scalar_const(1, 1.0));
    for (j, (got, want)) in r.values.iter().zip(oracle_sorted(alpha, 48)).enumerate() {
        assert!((got - want).abs() <= 0.01 * want, "rank {j}: {got} vs {want}");
    }
}

#[test]
fn constant_rotated_weight_splits_spectrum() {
    // R diag(a, -b) R^T with constant angle is unitarily equal to diag(a, -b)
    let (a, b) = (1.5, 0.5);
    let m = make_circle(96).unwrap();
    let base = spectrum(&m, 0.5, &MatrixWeightField::scalar_const(1, 1.0));
    let rot = spectrum(&m, 0.5, &MatrixWeightField::hermitian_rotated(move |_| a, move |_| b, |_| 0.7));
    let mut want: Vec<f64> = base.values.iter().flat_map(|l| [a * l, -b * l]).collect();
    want.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
    let mut got = rot.values.clone();
    got.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
    for (g, w) in got.iter().zip(&want).filter(|(_, w)| w.abs() > 1e-8) {
        assert!((g - w).abs() <= 1e-9 * want[0].abs(), "{g} vs {w}");
    }
    assert_eq!(counting(&rot, 1e-8, Sign::Plus).unwrap(), counting(&base, 1e-8 / a, Sign::All).unwrap());
}

#[test]
fn singular_values_of_hermitian_sandwich_are_moduli() {
    let m = make_segment(64).unwrap();
    let spec = KernelSpec::for_measure(&m, 0.5).unwrap();
    let g = sqrt_factor(&assemble(&m, &spec).unwrap(), DEFAULT_CLIP_REL).unwrap();
    let v = MatrixWeightField::scalar_profile(1, |p: &Point| p.coords[0] - 0.3);
    let s = sandwich(&g, &v, &m).unwrap();
    let mut moduli: Vec<f64> = signed_spectrum(&s).unwrap().values.iter().map(|x| x.abs()).collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    let sv = singular_spectrum(&s).unwrap();
    for (a, b) in moduli.iter().zip(&sv.values) {
        assert!((a - b).abs() <= 1e-10 * moduli[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn counting_is_monotone_and_scales(c in 0.2..4.0f64, lambda in 1e-3..1.0f64) {
        let m = make_circle(48).unwrap();
        let base = spectrum(&m, 0.5, &MatrixWeightField::scalar_const(1, 1.0));
        let scaled = spectrum(&m, 0.5, &MatrixWeightField::scalar_const(1, c));
        prop_assert_eq!(counting(&scaled, c * lambda, Sign::All).unwrap(), counting(&base, lambda, Sign::All).unwrap());
        prop_assert!(counting(&base, lambda, Sign::All).unwrap() >= counting(&base, 2.0 * lambda, Sign::All).unwrap());
    }

    #[test]
    fn negated_weight_swaps_signs(k in 8usize..40) {
        let m = make_circle(k).unwrap();
        let v = MatrixWeightField::scalar_profile(1, |p: &Point| p.coords[0]);
        let pos = spectrum(&m, 0.5, &v);
        let neg = spectrum(&m, 0.5, &v.scaled(-1.0));
        for lambda in [1e-3, 1e-2, 1e-1] {
            prop_assert_eq!(counting(&pos, lambda, Sign::Plus).unwrap(), counting(&neg, lambda, Sign::Minus).unwrap());
        }
    }
}
