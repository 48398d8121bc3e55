//! Weyl-law predictions from the flat convolution model, and the exact
//! Fourier diagonalization of the Riesz kernel on the unit circle.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernel::KernelSpec;
use crate::measure::DiscreteMeasure;
use crate::spectral::AsymptoticWindowEstimate;
use crate::special::{gamma, integrate_adaptive};
use crate::weight::{abs_matrix, hermitian_split, trace_power, MatrixWeightField};

/// `c_sup / c_inf` beyond which a window is read as oscillating.
pub const TWO_SIDED_RATIO: f64 = 1.25;

fn check_domain(s: f64, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < s) {
        return Err(invalid(format!("alpha must lie in (0, s): alpha = {alpha}, s = {s}")));
    }
    Ok(())
}

/// Fourier transform constant of `|u|^(-alpha)` in `R^s`:
/// `pi^(s/2) 2^(s-alpha) Gamma((s-alpha)/2) / Gamma(alpha/2)`.
pub fn kappa(s: f64, alpha: f64) -> Result<f64> {
    check_domain(s, alpha)?;
    Ok(PI.powf(s / 2.0) * 2f64.powf(s - alpha) * gamma((s - alpha) / 2.0) / gamma(alpha / 2.0))
}

/// Flat-model Weyl density `(2 pi)^(-s) omega_s kappa^theta`.
pub fn rho_flat(s: f64, alpha: f64) -> Result<f64> {
    let k = kappa(s, alpha)?;
    let theta = s / (s - alpha);
    let omega = PI.powf(s / 2.0) / gamma(s / 2.0 + 1.0);
    Ok((2.0 * PI).powf(-s) * omega * k.powf(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeylPart {
    Abs,
    Plus,
    Minus,
}

impl WeylPart {
    pub fn as_str(self) -> &'static str {
        match self {
            WeylPart::Abs => "abs",
            WeylPart::Plus => "plus",
            WeylPart::Minus => "minus",
        }
    }
}

/// `rho * sum_i w_i Tr(part(V(x_i))^theta)`.
pub fn weyl_coefficient(
    measure: &DiscreteMeasure,
    v: &MatrixWeightField,
    theta: f64,
    rho: f64,
    part: WeylPart,
) -> Result<f64> {
    if part != WeylPart::Abs && !v.is_hermitian() {
        return Err(invalid(format!(
            "{} part requested for a non-Hermitian {} field",
            part.as_str(),
            v.preset()
        )));
    }
    let mut sum = 0.0;
    for (atom, val) in measure.atoms().iter().zip(v.sample(measure)) {
        let p = match part {
            WeylPart::Abs => abs_matrix(val.as_ref())?,
            WeylPart::Plus => hermitian_split(val.as_ref())?.plus,
            WeylPart::Minus => hermitian_split(val.as_ref())?.minus,
        };
        sum += atom.weight * trace_power(p.as_ref(), theta)?;
    }
    Ok(rho * sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylPrediction {
    pub theta: f64,
    pub rho: f64,
    pub coeff_abs: f64,
    /// Present for Hermitian fields only.
    pub coeff_plus: Option<f64>,
    pub coeff_minus: Option<f64>,
}

impl WeylPrediction {
    pub fn coefficient(&self, part: WeylPart) -> Result<f64> {
        match part {
            WeylPart::Abs => Ok(self.coeff_abs),
            WeylPart::Plus => self.coeff_plus.ok_or_else(|| invalid("no plus coefficient for a non-Hermitian field")),
            WeylPart::Minus => self.coeff_minus.ok_or_else(|| invalid("no minus coefficient for a non-Hermitian field")),
        }
    }

    pub fn key_values(&self, prefix: &str) -> Vec<(String, String)> {
        let mut kv = vec![
            (format!("{prefix}theta"), self.theta.to_string()),
            (format!("{prefix}rho"), self.rho.to_string()),
            (format!("{prefix}coeff_abs"), self.coeff_abs.to_string()),
        ];
        if let (Some(p), Some(m)) = (self.coeff_plus, self.coeff_minus) {
            kv.push((format!("{prefix}coeff_plus"), p.to_string()));
            kv.push((format!("{prefix}coeff_minus"), m.to_string()));
        }
        kv
    }
}

/// Flat-model prediction for `V` on `measure` with the exponents of `spec`.
pub fn predict(measure: &DiscreteMeasure, v: &MatrixWeightField, spec: &KernelSpec) -> Result<WeylPrediction> {
    let rho = rho_flat(spec.s, spec.alpha)?;
    let coeff_abs = weyl_coefficient(measure, v, spec.theta, rho, WeylPart::Abs)?;
    let (coeff_plus, coeff_minus) = if v.is_hermitian() {
        (
            Some(weyl_coefficient(measure, v, spec.theta, rho, WeylPart::Plus)?),
            Some(weyl_coefficient(measure, v, spec.theta, rho, WeylPart::Minus)?),
        )
    } else {
        (None, None)
    };
    Ok(WeylPrediction {
        theta: spec.theta,
        rho,
        coeff_abs,
        coeff_plus,
        coeff_minus,
    })
}

/// Fourier eigenvalues of `(2 sin(t/2))^(-alpha)` on the unit circle.
#[derive(Debug, Clone)]
pub struct OracleSpectrum {
    pub alpha: f64,
    /// `lambda_n` for `n = 0..=n_max`; each `n >= 1` occurs twice in the spectrum.
    pub lambdas: Vec<f64>,
    pub quadrature_error_bound: f64,
}

impl OracleSpectrum {
    pub fn n_max(&self) -> usize {
        self.lambdas.len() - 1
    }

    pub fn multiplicity(n: usize) -> usize {
        if n == 0 {
            1
        } else {
            2
        }
    }

    /// Eigenvalues with multiplicity, largest first.
    pub fn sorted_eigenvalues(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.lambdas.len());
        for (n, &l) in self.lambdas.iter().enumerate() {
            out.extend(std::iter::repeat_n(l, Self::multiplicity(n)));
        }
        out.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
        out
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "n,lambda_n,multiplicity")?;
        for (n, l) in self.lambdas.iter().enumerate() {
            writeln!(out, "{n},{l},{}", Self::multiplicity(n))?;
        }
        Ok(())
    }
}

const ORACLE_TOL: f64 = 1e-10;

/// `lambda_n = int_0^(2 pi) (2 sin(t/2))^(-alpha) cos(n t) dt` by adaptive quadrature.
///
/// The integral is folded onto `[0, pi]` and the endpoint singularity is
/// removed with `t = pi u^p`, `p = 1 / (1 - alpha)`, after which the
/// integrand is bounded at `u = 0`.
pub fn circle_fourier_oracle(alpha: f64, n_max: usize) -> Result<OracleSpectrum> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("oracle needs 0 < alpha < 1, got {alpha}")));
    }
    if n_max < 1 {
        return Err(invalid("oracle needs n_max >= 1"));
    }
    let p = 1.0 / (1.0 - alpha);
    let results: Vec<Result<(f64, f64)>> = (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let nf = n as f64;
            let f = |u: f64| {
                let t = PI * u.powf(p);
                let jac = PI * p * u.powf(p - 1.0);
                (2.0 * (0.5 * t).sin()).powf(-alpha) * (nf * t).cos() * jac
            };
            let q = integrate_adaptive(f, 0.0, 1.0, (n / 2).max(8), 0.5 * ORACLE_TOL, 1 << 20)
                .map_err(|e| match e {
                    Error::NumericalFailure(msg) => Error::NumericalFailure(format!("oracle mode n = {n}: {msg}")),
                    other => other,
                })?;
            Ok((2.0 * q.value, 2.0 * q.error))
        })
        .collect();
    let mut lambdas = Vec::with_capacity(n_max + 1);
    let mut bound: f64 = 0.0;
    for r in results {
        let (v, e) = r?;
        lambdas.push(v);
        bound = bound.max(e);
    }
    Ok(OracleSpectrum {
        alpha,
        lambdas,
        quadrature_error_bound: bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylComparison {
    pub theta: f64,
    pub predicted: f64,
    pub c_mean: f64,
    pub c_inf: f64,
    pub c_sup: f64,
    pub dev_mean: f64,
    pub dev_inf: f64,
    pub dev_sup: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Window oscillates too much for a limit to be claimed.
    pub two_sided_only: bool,
}

impl WeylComparison {
    pub fn key_values(&self, prefix: &str) -> Vec<(String, String)> {
        vec![
            (format!("{prefix}predicted"), self.predicted.to_string()),
            (format!("{prefix}c_mean"), self.c_mean.to_string()),
            (format!("{prefix}c_inf"), self.c_inf.to_string()),
            (format!("{prefix}c_sup"), self.c_sup.to_string()),
            (format!("{prefix}dev_mean"), self.dev_mean.to_string()),
            (format!("{prefix}dev_inf"), self.dev_inf.to_string()),
            (format!("{prefix}dev_sup"), self.dev_sup.to_string()),
            (format!("{prefix}tolerance"), self.tolerance.to_string()),
            (format!("{prefix}passed"), self.passed.to_string()),
            (format!("{prefix}two_sided_only"), self.two_sided_only.to_string()),
        ]
    }
}

/// Relative deviations of a window estimate from a predicted coefficient.
pub fn predicted_vs_measured(
    prediction: &WeylPrediction,
    part: WeylPart,
    estimate: &AsymptoticWindowEstimate,
    tolerance: f64,
) -> Result<WeylComparison> {
    if (prediction.theta - estimate.theta).abs() > 1e-12 * prediction.theta.abs() {
        return Err(invalid(format!(
            "theta mismatch: prediction {} vs estimate {}",
            prediction.theta, estimate.theta
        )));
    }
    let predicted = prediction.coefficient(part)?;
    if !(predicted > 0.0) {
        return Err(invalid(format!("predicted coefficient {predicted} must be positive")));
    }
    let dev = |c: f64| (c - predicted) / predicted;
    let dev_mean = dev(estimate.c_mean);
    Ok(WeylComparison {
        theta: estimate.theta,
        predicted,
        c_mean: estimate.c_mean,
        c_inf: estimate.c_inf,
        c_sup: estimate.c_sup,
        dev_mean,
        dev_inf: dev(estimate.c_inf),
        dev_sup: dev(estimate.c_sup),
        tolerance,
        passed: dev_mean.abs() <= tolerance,
        two_sided_only: is_two_sided_only(estimate),
    })
}

pub fn is_two_sided_only(estimate: &AsymptoticWindowEstimate) -> bool {
    estimate.c_sup > TWO_SIDED_RATIO * estimate.c_inf
}
