//! Thin helpers over `faer` dense decompositions.

use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

fn evd_failure(what: &str, e: impl std::fmt::Debug) -> Error {
    Error::NumericalFailure(format!("{what} failed: {e:?}"))
}

/// Eigenvalues (ascending) and eigenvectors of a real symmetric matrix.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| evd_failure("symmetric eigendecomposition", e))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| evd_failure("symmetric eigendecomposition", e))
}

/// Eigenvalues (ascending) and eigenvectors of a complex Hermitian matrix.
pub fn herm_eigen(a: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| evd_failure("Hermitian eigendecomposition", e))?;
    let vals = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn herm_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| evd_failure("Hermitian eigendecomposition", e))
}

pub fn singular_values_real(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|e| evd_failure("SVD", e))
}

pub fn singular_values_complex(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.singular_values().map_err(|e| evd_failure("SVD", e))
}

pub fn eigenvalues_general(a: MatRef<'_, c64>) -> Result<Vec<c64>> {
    a.eigenvalues().map_err(|e| evd_failure("general eigendecomposition", e))
}

/// `Q diag(f(lambda)) Q*`, the spectral calculus for a Hermitian matrix.
pub fn herm_function(vals: &[f64], q: MatRef<'_, c64>, f: impl Fn(f64) -> f64) -> Mat<c64> {
    let n = vals.len();
    let scaled = Mat::<c64>::from_fn(n, n, |i, j| q[(i, j)] * f(vals[j]));
    let out = &scaled * q.adjoint();
    hermitian_part(out.as_ref())
}

/// `(A + A*) / 2`.
pub fn hermitian_part(a: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Largest entrywise deviation of `A` from its adjoint.
pub fn hermitian_defect(a: MatRef<'_, c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows().saturating_sub(1)) {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn is_hermitian(a: MatRef<'_, c64>, rel_tol: f64) -> bool {
    a.nrows() == a.ncols() && hermitian_defect(a) <= rel_tol * max_abs(a).max(f64::MIN_POSITIVE)
}

pub fn op_norm(a: MatRef<'_, c64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(singular_values_complex(a)?.first().copied().unwrap_or(0.0))
}

pub fn op_norm_real(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(singular_values_real(a)?.first().copied().unwrap_or(0.0))
}

pub fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn diag_complex(d: &[c64]) -> Mat<c64> {
    Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { c64::new(0.0, 0.0) })
}
