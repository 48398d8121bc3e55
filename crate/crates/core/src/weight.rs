//! Matrix weight fields `V(x)` on the support and their pointwise calculus:
//! modulus, sign split, trace powers, `L_theta` norms, factorization and
//! Gaussian mollification against the measure.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use faer::{c64, Mat, MatRef};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::measure::{DiscreteMeasure, Point};

/// Relative tolerance used to certify a sampled matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// `|V| = (V* V)^(1/2)`.
pub fn abs_matrix(v: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let vv = v.adjoint() * v;
    let (vals, q) = linalg::herm_eigen(linalg::hermitian_part(vv.as_ref()).as_ref())?;
    Ok(linalg::herm_function(&vals, q.as_ref(), |x| x.max(0.0).sqrt()))
}

#[derive(Debug, Clone)]
pub struct HermitianSplit {
    pub abs: Mat<c64>,
    pub plus: Mat<c64>,
    pub minus: Mat<c64>,
}

/// `V_+- = (|V| +- V) / 2` for Hermitian `V`.
pub fn hermitian_split(v: MatRef<'_, c64>) -> Result<HermitianSplit> {
    if !linalg::is_hermitian(v, HERMITIAN_TOL) {
        return Err(invalid(format!(
            "hermitian_split needs a Hermitian matrix (defect {:.3e})",
            linalg::hermitian_defect(v)
        )));
    }
    let vh = linalg::hermitian_part(v);
    let (vals, q) = linalg::herm_eigen(vh.as_ref())?;
    // built from clipped eigenvalues so a vanishing part is exactly zero
    let abs = linalg::herm_function(&vals, q.as_ref(), f64::abs);
    let plus = linalg::herm_function(&vals, q.as_ref(), |x| x.max(0.0));
    let minus = linalg::herm_function(&vals, q.as_ref(), |x| (-x).max(0.0));
    Ok(HermitianSplit { abs, plus, minus })
}

/// `sum_i lambda_i(P)^theta` for a positive semidefinite `P`.
pub fn trace_power(p: MatRef<'_, c64>, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(invalid(format!("trace power exponent {theta} must be positive")));
    }
    if p.nrows() == 0 {
        return Ok(0.0);
    }
    let vals = linalg::herm_eigenvalues(linalg::hermitian_part(p).as_ref())?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(bad) = vals.iter().find(|&&v| v < -1e-10 * scale) {
        return Err(invalid(format!("matrix is not positive semidefinite: eigenvalue {bad}")));
    }
    Ok(vals.iter().map(|&v| v.max(0.0).powf(theta)).sum())
}

/// `V = W* U W` with `W = |V|^(1/2)` and `U = W^+ V W^+`.
pub fn factorize(v: MatRef<'_, c64>) -> Result<(Mat<c64>, Mat<c64>)> {
    let vv = v.adjoint() * v;
    let (vals, q) = linalg::herm_eigen(linalg::hermitian_part(vv.as_ref()).as_ref())?;
    // eigenvalues of |V| are the singular values of V
    let sing: Vec<f64> = vals.iter().map(|x| x.max(0.0).sqrt()).collect();
    let top = sing.iter().copied().fold(0.0, f64::max);
    let cut = 1e-12 * top;
    let w = linalg::herm_function(&sing, q.as_ref(), |x| x.sqrt());
    let w_pinv = linalg::herm_function(&sing, q.as_ref(), |x| if x > cut { 1.0 / x.sqrt() } else { 0.0 });
    let u = &w_pinv * v * &w_pinv;
    Ok((w, u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    ScalarConst,
    ScalarProfile,
    HermitianRotated,
    Nilpotent,
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::ScalarConst => "scalar_const",
            Preset::ScalarProfile => "scalar_profile",
            Preset::HermitianRotated => "hermitian_rotated",
            Preset::Nilpotent => "nilpotent",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

type EvalFn = dyn Fn(&Point) -> Mat<c64> + Send + Sync;

/// An `m x m` complex matrix field evaluated at points of the support.
#[derive(Clone)]
pub struct MatrixWeightField {
    m: usize,
    preset: Preset,
    hermitian: bool,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for MatrixWeightField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixWeightField")
            .field("m", &self.m)
            .field("preset", &self.preset)
            .field("hermitian", &self.hermitian)
            .finish_non_exhaustive()
    }
}

fn scalar_matrix(m: usize, c: f64) -> Mat<c64> {
    Mat::from_fn(m, m, |i, j| if i == j { c64::new(c, 0.0) } else { c64::new(0.0, 0.0) })
}

impl MatrixWeightField {
    /// Arbitrary field; `hermitian` is the caller's certification.
    pub fn custom(
        m: usize,
        hermitian: bool,
        eval: impl Fn(&Point) -> Mat<c64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            m,
            preset: Preset::Custom,
            hermitian,
            eval: Arc::new(eval),
        }
    }

    /// `c * I_m`.
    pub fn scalar_const(m: usize, c: f64) -> Self {
        Self {
            m,
            preset: Preset::ScalarConst,
            hermitian: true,
            eval: Arc::new(move |_| scalar_matrix(m, c)),
        }
    }

    /// `v(x) * I_m` for a real profile `v`.
    pub fn scalar_profile(m: usize, v: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            m,
            preset: Preset::ScalarProfile,
            hermitian: true,
            eval: Arc::new(move |x| scalar_matrix(m, v(x))),
        }
    }

    /// `R(angle) diag(a, -b) R(angle)^T` with positive `a`, `b`.
    pub fn hermitian_rotated(
        a: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        b: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        angle: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            m: 2,
            preset: Preset::HermitianRotated,
            hermitian: true,
            eval: Arc::new(move |x| {
                let (pa, nb, t) = (a(x), -b(x), angle(x));
                let (c, s) = (t.cos(), t.sin());
                let e = [
                    [pa * c * c + nb * s * s, (pa - nb) * c * s],
                    [(pa - nb) * c * s, pa * s * s + nb * c * c],
                ];
                Mat::from_fn(2, 2, |i, j| c64::new(e[i][j], 0.0))
            }),
        }
    }

    /// `[[0, v(x)], [0, 0]]`.
    pub fn nilpotent(v: impl Fn(&Point) -> c64 + Send + Sync + 'static) -> Self {
        Self {
            m: 2,
            preset: Preset::Nilpotent,
            hermitian: false,
            eval: Arc::new(move |x| {
                let mut out = Mat::<c64>::zeros(2, 2);
                out[(0, 1)] = v(x);
                out
            }),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn eval(&self, x: &Point) -> Mat<c64> {
        (self.eval)(x)
    }

    /// Values at the atoms of `measure`, in atom order.
    pub fn sample(&self, measure: &DiscreteMeasure) -> Vec<Mat<c64>> {
        measure.atoms().iter().map(|a| self.eval(&a.point)).collect()
    }

    /// `t * V`.
    pub fn scaled(&self, t: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            m: self.m,
            preset: self.preset,
            hermitian: self.hermitian,
            eval: Arc::new(move |x| {
                let v = inner(x);
                Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * t)
            }),
        }
    }

    /// Pointwise map through a matrix function, e.g. the positive part.
    pub fn map(
        &self,
        hermitian: bool,
        f: impl Fn(MatRef<'_, c64>) -> Mat<c64> + Send + Sync + 'static,
    ) -> Self {
        let inner = self.eval.clone();
        Self {
            m: self.m,
            preset: Preset::Custom,
            hermitian,
            eval: Arc::new(move |x| f(inner(x).as_ref())),
        }
    }

    /// `V_+` of a Hermitian field.
    pub fn positive_part(&self) -> Result<Self> {
        self.require_hermitian("positive_part")?;
        Ok(self.map(true, |v| {
            hermitian_split(v).map(|s| s.plus).expect("field certified Hermitian")
        }))
    }

    /// `V_-` of a Hermitian field.
    pub fn negative_part(&self) -> Result<Self> {
        self.require_hermitian("negative_part")?;
        Ok(self.map(true, |v| {
            hermitian_split(v).map(|s| s.minus).expect("field certified Hermitian")
        }))
    }

    /// `|V|` pointwise.
    pub fn modulus(&self) -> Self {
        self.map(true, |v| abs_matrix(v).expect("eigendecomposition of a small matrix"))
    }

    pub fn difference(&self, other: &MatrixWeightField) -> Result<Self> {
        if self.m != other.m {
            return Err(invalid("weight fields of different matrix size"));
        }
        let (a, b) = (self.eval.clone(), other.eval.clone());
        Ok(Self {
            m: self.m,
            preset: Preset::Custom,
            hermitian: self.hermitian && other.hermitian,
            eval: Arc::new(move |x| &a(x) - &b(x)),
        })
    }

    fn require_hermitian(&self, what: &str) -> Result<()> {
        if self.hermitian {
            Ok(())
        } else {
            Err(invalid(format!("{what} requires a Hermitian weight field, got {}", self.preset)))
        }
    }

    /// CSV of the sampled field: `atom_index, re(V_11), im(V_11), ...` row-major.
    pub fn write_samples_csv(&self, measure: &DiscreteMeasure, out: &mut impl Write) -> std::io::Result<()> {
        let mut header = vec!["atom_index".to_string()];
        for a in 1..=self.m {
            for b in 1..=self.m {
                header.push(format!("re(V_{a}{b})"));
                header.push(format!("im(V_{a}{b})"));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (i, v) in self.sample(measure).iter().enumerate() {
            let mut row = vec![i.to_string()];
            for a in 0..self.m {
                for b in 0..self.m {
                    row.push(v[(a, b)].re.to_string());
                    row.push(v[(a, b)].im.to_string());
                }
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `(sum_i w_i ||V(x_i)||_op^theta)^(1/theta)`; only the `theta > 1` branch.
pub fn weight_norm_theta(v: &MatrixWeightField, measure: &DiscreteMeasure, theta: f64) -> Result<f64> {
    if !(theta > 1.0) {
        return Err(Error::UnsupportedBranch(format!(
            "L_(theta) norm implemented for theta > 1 only, got theta = {theta}"
        )));
    }
    let mut sum = 0.0;
    for (atom, val) in measure.atoms().iter().zip(v.sample(measure)) {
        sum += atom.weight * linalg::op_norm(val.as_ref())?.powf(theta);
    }
    Ok(sum.powf(1.0 / theta))
}

/// Gaussian smoothing of a field against the measure, with the smoothed
/// modulus `Y_eps = (|V_eps|^2 + eps^2)^(1/2)` alongside.
#[derive(Debug, Clone)]
pub struct Mollified {
    pub field: MatrixWeightField,
    pub modulus: MatrixWeightField,
}

pub fn mollify(v: &MatrixWeightField, measure: &DiscreteMeasure, eps: f64) -> Result<Mollified> {
    if !(eps > 0.0) {
        return Err(invalid(format!("mollifier width {eps} must be positive")));
    }
    let m = v.m();
    let nodes: Arc<Vec<(Point, f64, Mat<c64>)>> = Arc::new(
        measure
            .atoms()
            .iter()
            .map(|a| (a.point.clone(), a.weight, v.eval(&a.point)))
            .collect(),
    );
    let smooth = move |x: &Point| -> Mat<c64> {
        // shift exponents by the nearest node so far points cannot underflow to 0/0
        let d2: Vec<f64> = nodes.iter().map(|(p, _, _)| p.dist(x).powi(2)).collect();
        let d2_min = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let mut acc = Mat::<c64>::zeros(m, m);
        let mut norm = 0.0;
        for ((_, w, val), d) in nodes.iter().zip(&d2) {
            let g = w * (-(d - d2_min) / (2.0 * eps * eps)).exp();
            if g == 0.0 {
                continue;
            }
            norm += g;
            for j in 0..m {
                for i in 0..m {
                    acc[(i, j)] += val[(i, j)] * g;
                }
            }
        }
        Mat::from_fn(m, m, |i, j| acc[(i, j)] / norm)
    };
    let field = MatrixWeightField {
        m,
        preset: v.preset(),
        hermitian: v.is_hermitian(),
        eval: Arc::new(smooth),
    };
    let inner = field.clone();
    let modulus = MatrixWeightField {
        m,
        preset: Preset::Custom,
        hermitian: true,
        eval: Arc::new(move |x| {
            let ve = inner.eval(x);
            let mut y2 = ve.adjoint() * &ve;
            for i in 0..m {
                y2[(i, i)] += c64::new(eps * eps, 0.0);
            }
            let (vals, q) = linalg::herm_eigen(linalg::hermitian_part(y2.as_ref()).as_ref())
                .expect("eigendecomposition of a small matrix");
            linalg::herm_function(&vals, q.as_ref(), |t| t.max(0.0).sqrt())
        }),
    };
    Ok(Mollified { field, modulus })
}
