//! Nystrom assembly of the Riesz kernel `|x - y|^(-alpha)` over a discrete
//! measure, diagonal closure of the singular self-interaction, and the
//! positive square root of the assembled matrix.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{invalid, io_err, Error, Result};
use crate::linalg;
use crate::measure::{cantor_centers, DiscreteMeasure, Family, SelfSimilar};
use crate::special::riemann_zeta;

/// Kernel exponent `alpha = N - 2l` and spectral exponent `theta = s / (s - alpha)`.
///
/// Fails unless `0 < alpha < s`: at `alpha <= 0` the model kernel is not
/// singular, at `alpha >= s` the operator is unbounded on `L2(mu)`.
pub fn riesz_exponents(ambient_dim: usize, order: f64, s: f64) -> Result<(f64, f64)> {
    if ambient_dim == 0 {
        return Err(invalid("ambient dimension N must be at least 1"));
    }
    if !(order > 0.0) {
        return Err(invalid(format!("order l = {order} must be positive")));
    }
    if !(s > 0.0 && s <= ambient_dim as f64) {
        return Err(invalid(format!("s = {s} must lie in (0, N = {ambient_dim}]")));
    }
    let alpha = ambient_dim as f64 - 2.0 * order;
    check_alpha(alpha, s)?;
    Ok((alpha, s / (s - alpha)))
}

fn check_alpha(alpha: f64, s: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(invalid(format!(
            "alpha must lie in (0, s): alpha = {alpha} <= 0 (kernel not singular, need 2l < N)"
        )));
    }
    if !(alpha < s) {
        return Err(invalid(format!(
            "alpha must lie in (0, s): alpha = {alpha} >= s = {s} (need 2l > N - s)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub ambient_dim: usize,
    /// `l`: the smoothing operator has order `-l`.
    pub order: f64,
    pub alpha: f64,
    /// Hausdorff dimension the exponents were validated against.
    pub s: f64,
    pub theta: f64,
}

impl KernelSpec {
    pub fn from_order(ambient_dim: usize, order: f64, s: f64) -> Result<Self> {
        let (alpha, theta) = riesz_exponents(ambient_dim, order, s)?;
        Ok(Self {
            ambient_dim,
            order,
            alpha,
            s,
            theta,
        })
    }

    pub fn from_alpha(ambient_dim: usize, alpha: f64, s: f64) -> Result<Self> {
        Self::from_order(ambient_dim, 0.5 * (ambient_dim as f64 - alpha), s)
    }

    /// Spec validated against the Hausdorff dimension and ambient space of `measure`.
    pub fn for_measure(measure: &DiscreteMeasure, alpha: f64) -> Result<Self> {
        Self::from_alpha(measure.ambient_dim(), alpha, measure.hausdorff_dim())
    }
}

/// How the singular diagonal entry `M_ii` is closed.
///
/// Every method has the form `M_ii = w_i * h_i^(-alpha) * c`, with a
/// method-specific length scale `h_i` and constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagMethod {
    /// Cell self-energy of a straight cell over its mass: `c = 2 / ((1-a)(2-a))`.
    Analytic1d,
    /// Punctured-sum correction for uniform 1-d spacing: `c = -2 zeta(alpha)`.
    Zeta1d,
    /// Self-energy of a self-similar cell, solved from the similarity fixed point.
    SelfSimilar,
    /// Flat square cell of the same area, 4 x 4 sub-cells closed by scaling.
    Subdivision,
}

impl DiagMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagMethod::Analytic1d => "analytic_1d",
            DiagMethod::Zeta1d => "zeta_1d",
            DiagMethod::SelfSimilar => "self_similar",
            DiagMethod::Subdivision => "subdivision",
        }
    }

    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Circle | Family::Segment | Family::LipschitzGraph => DiagMethod::Zeta1d,
            Family::Cantor | Family::CantorDust => DiagMethod::SelfSimilar,
            Family::Sphere => DiagMethod::Subdivision,
        }
    }
}

impl fmt::Display for DiagMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "analytic_1d" => DiagMethod::Analytic1d,
            "zeta_1d" => DiagMethod::Zeta1d,
            "self_similar" => DiagMethod::SelfSimilar,
            "subdivision" => DiagMethod::Subdivision,
            other => return Err(invalid(format!("unknown diagonal method `{other}`"))),
        })
    }
}

/// `int_0^h int_0^h |x - y|^(-alpha) dx dy` for a straight cell of length `h`.
pub fn segment_self_energy(h: f64, alpha: f64) -> f64 {
    2.0 * h.powf(2.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha))
}

/// Self-energy of the unit self-similar measure (mass 1, side 1):
/// `E (1 - sum_c p_c^2 r^(-alpha)) = sum_{c != c'} cross(c, c')`.
pub fn self_similar_unit_energy(ratio: f64, copies: usize, alpha: f64) -> Result<f64> {
    let (dim, offsets): (usize, Vec<[f64; 2]>) = match copies {
        2 => (1, vec![[0.0, 0.0], [1.0 - ratio, 0.0]]),
        4 => (
            2,
            vec![
                [0.0, 0.0],
                [0.0, 1.0 - ratio],
                [1.0 - ratio, 0.0],
                [1.0 - ratio, 1.0 - ratio],
            ],
        ),
        _ => return Err(invalid(format!("unsupported number of similar copies {copies}"))),
    };
    let p = 1.0 / copies as f64;
    let denom = 1.0 - copies as f64 * p * p * ratio.powf(-alpha);
    if !(denom > 0.0) {
        return Err(invalid(format!(
            "alpha = {alpha} too large for the self-similar closure (need alpha < s)"
        )));
    }
    // unit measure discretized at a depth where the child-to-child interaction is smooth
    let depth = if dim == 1 { 9 } else { 4 };
    let centers = cantor_centers(ratio, depth);
    let unit: Vec<[f64; 2]> = if dim == 1 {
        centers.iter().map(|&x| [x, 0.0]).collect()
    } else {
        centers.iter().flat_map(|&x| centers.iter().map(move |&y| [x, y])).collect()
    };
    let q = 1.0 / unit.len() as f64;
    let child = |c: usize| -> Vec<[f64; 2]> {
        unit.iter()
            .map(|u| [offsets[c][0] + ratio * u[0], offsets[c][1] + ratio * u[1]])
            .collect()
    };
    let children: Vec<Vec<[f64; 2]>> = (0..copies).map(child).collect();
    let mut cross = 0.0;
    for a in 0..copies {
        for b in (a + 1)..copies {
            let s: f64 = children[a]
                .iter()
                .map(|x| {
                    children[b]
                        .iter()
                        .map(|y| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt().powf(-alpha))
                        .sum::<f64>()
                })
                .sum();
            cross += 2.0 * s * q * q * p * p;
        }
    }
    Ok(cross / denom)
}

/// Self-energy of the unit square (mass 1) from a 4 x 4 sub-sampling,
/// sub-cell self terms closed by `E(a) = a^(4 - alpha) E(1)`.
pub fn square_unit_energy(alpha: f64) -> f64 {
    const N: usize = 4;
    let pts: Vec<(f64, f64)> = (0..N * N)
        .map(|k| (((k / N) as f64 + 0.5) / N as f64, ((k % N) as f64 + 0.5) / N as f64))
        .collect();
    let w = 1.0 / (N * N) as f64;
    let mut s = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for (j, q) in pts.iter().enumerate() {
            if i != j {
                s += w * w * (p.0 - q.0).hypot(p.1 - q.1).powf(-alpha);
            }
        }
    }
    s / (1.0 - (N as f64).powf(alpha - 2.0))
}

/// Diagonal entries `M_ii` for the given closure.
pub fn diagonal_closure(measure: &DiscreteMeasure, alpha: f64, method: DiagMethod) -> Result<Vec<f64>> {
    let s = measure.hausdorff_dim();
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "diagonal method {method} requires {what}; measure family is {}",
                measure.family()
            )))
        }
    };
    match method {
        DiagMethod::Analytic1d | DiagMethod::Zeta1d => {
            need(s == 1.0 && alpha < 1.0, "1-dimensional cells with alpha < 1")?;
            let c = if method == DiagMethod::Analytic1d {
                segment_self_energy(1.0, alpha)
            } else {
                -2.0 * riemann_zeta(alpha)
            };
            Ok(measure
                .atoms()
                .iter()
                .map(|a| c * a.weight * a.extent.powf(-alpha))
                .collect())
        }
        DiagMethod::SelfSimilar => {
            let SelfSimilar { ratio, copies, .. } = measure
                .self_similar()
                .ok_or_else(|| invalid("self_similar closure needs self-similar construction data"))?;
            let c = self_similar_unit_energy(ratio, copies, alpha)?;
            let side = measure.self_similar().expect("checked above").cell_side();
            Ok(measure
                .atoms()
                .iter()
                .map(|a| c * a.weight * side.powf(-alpha))
                .collect())
        }
        DiagMethod::Subdivision => {
            need(s == 2.0, "2-dimensional cells")?;
            let c = square_unit_energy(alpha);
            Ok(measure
                .atoms()
                .iter()
                .map(|a| c * a.weight * a.weight.sqrt().powf(-alpha))
                .collect())
        }
    }
}

/// Symmetric Nystrom matrix `M_ij = sqrt(w_i w_j) |x_i - x_j|^(-alpha)`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub entries: Mat<f64>,
    pub diag_method: DiagMethod,
    pub alpha: f64,
    pub s: f64,
    pub family: Family,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Flat binary export: little-endian `u64` dimension, then `dim^2`
    /// little-endian `f64` entries in row-major order. A text sidecar
    /// `<path>.meta` records the provenance.
    pub fn save_binary(&self, path: &Path) -> Result<PathBuf> {
        let n = self.dim();
        let mut bytes = Vec::with_capacity(8 + 8 * n * n);
        bytes.extend_from_slice(&(n as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..n {
                bytes.extend_from_slice(&self.entries[(i, j)].to_le_bytes());
            }
        }
        std::fs::write(path, &bytes).map_err(io_err(path))?;
        let meta = sidecar_path(path);
        let text = format!(
            "family = {}\nK = {}\nalpha = {}\ns = {}\ndiag_method = {}\n",
            self.family, n, self.alpha, self.s, self.diag_method
        );
        std::fs::write(&meta, text).map_err(io_err(&meta))?;
        Ok(meta)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Reads a matrix written by [`KernelMatrix::save_binary`].
pub fn read_binary_matrix(path: &Path) -> Result<Mat<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.len() < 8 {
        return Err(invalid(format!("{} is too short for a matrix header", path.display())));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 8 + 8 * n * n {
        return Err(invalid(format!(
            "{} holds {} bytes, expected {} for dim {n}",
            path.display(),
            bytes.len(),
            8 + 8 * n * n
        )));
    }
    Ok(Mat::from_fn(n, n, |i, j| {
        let at = 8 + 8 * (i * n + j);
        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
    }))
}

/// Assembles with the family's default diagonal closure.
pub fn assemble(measure: &DiscreteMeasure, spec: &KernelSpec) -> Result<KernelMatrix> {
    assemble_with(measure, spec, DiagMethod::default_for(measure.family()))
}

pub fn assemble_with(measure: &DiscreteMeasure, spec: &KernelSpec, method: DiagMethod) -> Result<KernelMatrix> {
    if spec.ambient_dim != measure.ambient_dim() {
        return Err(invalid(format!(
            "kernel ambient dimension {} differs from the measure's {}",
            spec.ambient_dim,
            measure.ambient_dim()
        )));
    }
    if (spec.s - measure.hausdorff_dim()).abs() > 1e-12 {
        return Err(invalid(format!(
            "kernel exponents were validated against s = {}, measure has s = {}",
            spec.s,
            measure.hausdorff_dim()
        )));
    }
    check_alpha(spec.alpha, measure.hausdorff_dim())?;
    let atoms = measure.atoms();
    let n = atoms.len();
    let alpha = spec.alpha;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (xi, wi) = (&atoms[i].point, atoms[i].weight);
            atoms[i + 1..]
                .iter()
                .map(|a| (wi * a.weight).sqrt() * xi.dist(&a.point).powf(-alpha))
                .collect()
        })
        .collect();
    for (i, row) in upper.iter().enumerate() {
        if let Some(off) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateMeasure(format!(
                "atoms {i} and {} coincide",
                i + 1 + off
            )));
        }
    }
    let diag = diagonal_closure(measure, alpha, method)?;
    let mut entries = Mat::<f64>::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        entries[(i, i)] = diag[i];
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        entries,
        diag_method: method,
        alpha,
        s: measure.hausdorff_dim(),
        family: measure.family(),
    })
}

pub const DEFAULT_CLIP_REL: f64 = 1e-12;

/// Symmetric PSD square root `G` of a kernel matrix, `G G = M` after clipping.
#[derive(Debug, Clone)]
pub struct SqrtFactor {
    pub entries: Mat<f64>,
    pub clip_count: usize,
    /// Most negative eigenvalue met during factorization.
    pub spectrum_floor: f64,
    pub lambda_max: f64,
    pub warning: Option<String>,
}

impl SqrtFactor {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

pub fn sqrt_factor(kernel: &KernelMatrix, clip_rel: f64) -> Result<SqrtFactor> {
    sqrt_factor_of(kernel.entries.as_ref(), clip_rel)
}

/// Square root of an arbitrary symmetric matrix by eigenvalue clipping.
pub fn sqrt_factor_of(m: faer::MatRef<'_, f64>, clip_rel: f64) -> Result<SqrtFactor> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(invalid("square root needs a square matrix"));
    }
    if n == 0 {
        return Ok(SqrtFactor {
            entries: Mat::zeros(0, 0),
            clip_count: 0,
            spectrum_floor: 0.0,
            lambda_max: 0.0,
            warning: None,
        });
    }
    let (vals, q) = linalg::sym_eigen(m)?;
    let lambda_max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let cut = clip_rel * lambda_max.max(0.0);
    let mut clip_count = 0;
    let roots: Vec<f64> = vals
        .iter()
        .map(|&v| {
            if v < cut {
                clip_count += 1;
                0.0
            } else {
                v.sqrt()
            }
        })
        .collect();
    let scaled = Mat::<f64>::from_fn(n, n, |i, j| q[(i, j)] * roots[j]);
    let g = &scaled * q.transpose();
    let entries = Mat::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let warning = (clip_count * 100 > n).then(|| {
        format!("ill-conditioned kernel: {clip_count} of {n} eigenvalues clipped to zero")
    });
    Ok(SqrtFactor {
        entries,
        clip_count,
        spectrum_floor: floor,
        lambda_max,
        warning,
    })
}
