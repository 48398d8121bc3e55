//! Sandwich matrices `G V G`, their spectra, counting functions and
//! window estimates of the asymptotic coefficients.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use faer::{c64, Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::kernel::{assemble, sqrt_factor_of, KernelSpec, SqrtFactor};
use crate::linalg;
use crate::measure::{make_circle, make_segment, DiscreteMeasure};
use crate::weight::{MatrixWeightField, HERMITIAN_TOL};

/// Relative tolerance at which neighbouring values count as one tied group.
pub const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum SandwichEntries {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

/// `(G (x) I_m) blkdiag(V(x_k)) (G (x) I_m)`, indexed by `i * m + a`.
#[derive(Debug, Clone)]
pub struct SandwichMatrix {
    pub entries: SandwichEntries,
    pub hermitian: bool,
    pub atoms: usize,
    pub m: usize,
}

impl SandwichMatrix {
    pub fn dim(&self) -> usize {
        self.atoms * self.m
    }

    pub fn to_complex(&self) -> Mat<c64> {
        match &self.entries {
            SandwichEntries::Real(a) => linalg::to_complex(a.as_ref()),
            SandwichEntries::Complex(a) => a.clone(),
        }
    }
}

/// `G diag(d) G` for real `G`.
fn scaled_product(g: MatRef<'_, f64>, d: &[f64]) -> Mat<f64> {
    let n = g.nrows();
    let gd = Mat::<f64>::from_fn(n, n, |i, k| g[(i, k)] * d[k]);
    &gd * g
}

pub fn sandwich(g: &SqrtFactor, v: &MatrixWeightField, measure: &DiscreteMeasure) -> Result<SandwichMatrix> {
    let k = measure.len();
    if g.dim() != k {
        return Err(invalid(format!("square root has dimension {} but the measure has {k} atoms", g.dim())));
    }
    let m = v.m();
    if m == 0 {
        return Err(invalid("weight field must have m >= 1"));
    }
    let samples = v.sample(measure);
    let hermitian = samples.iter().all(|s| linalg::is_hermitian(s.as_ref(), HERMITIAN_TOL));
    let is_real = samples.iter().all(|s| (0..m).all(|b| (0..m).all(|a| s[(a, b)].im == 0.0)));
    let gr = g.entries.as_ref();

    let mut re = Mat::<f64>::zeros(k * m, k * m);
    let mut im = (!is_real).then(|| Mat::<f64>::zeros(k * m, k * m));
    for a in 0..m {
        for b in 0..m {
            let dr: Vec<f64> = samples.iter().map(|s| s[(a, b)].re).collect();
            if dr.iter().any(|&x| x != 0.0) {
                let block = scaled_product(gr, &dr);
                for j in 0..k {
                    for i in 0..k {
                        re[(i * m + a, j * m + b)] = block[(i, j)];
                    }
                }
            }
            if let Some(im) = im.as_mut() {
                let di: Vec<f64> = samples.iter().map(|s| s[(a, b)].im).collect();
                if di.iter().any(|&x| x != 0.0) {
                    let block = scaled_product(gr, &di);
                    for j in 0..k {
                        for i in 0..k {
                            im[(i * m + a, j * m + b)] = block[(i, j)];
                        }
                    }
                }
            }
        }
    }
    let n = k * m;
    let entries = match im {
        None if hermitian => SandwichEntries::Real(Mat::from_fn(n, n, |i, j| 0.5 * (re[(i, j)] + re[(j, i)]))),
        None => SandwichEntries::Real(re),
        Some(im) => {
            let z = Mat::from_fn(n, n, |i, j| c64::new(re[(i, j)], im[(i, j)]));
            SandwichEntries::Complex(if hermitian { linalg::hermitian_part(z.as_ref()) } else { z })
        }
    };
    Ok(SandwichMatrix {
        entries,
        hermitian,
        atoms: k,
        m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectrumKind {
    SignedEigenvalues,
    SingularValues,
}

impl SpectrumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumKind::SignedEigenvalues => "signed_eigenvalues",
            SpectrumKind::SingularValues => "singular_values",
        }
    }
}

impl fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub kind: SpectrumKind,
    /// Sorted by absolute value, largest first; signed values keep their sign.
    pub values: Vec<f64>,
    pub atoms: usize,
    pub m: usize,
    pub theta: Option<f64>,
    pub digest: String,
}

fn sort_by_magnitude(values: &mut [f64]) {
    values.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
}

impl SpectralResult {
    /// Wraps externally produced values; they are re-sorted by magnitude.
    pub fn from_values(kind: SpectrumKind, mut values: Vec<f64>, atoms: usize, m: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite spectral value".into()));
        }
        if kind == SpectrumKind::SingularValues && values.iter().any(|&v| v < 0.0) {
            return Err(invalid("singular values must be non-negative"));
        }
        sort_by_magnitude(&mut values);
        Ok(Self {
            kind,
            values,
            atoms,
            m,
            theta: None,
            digest: String::new(),
        })
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.digest = digest.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Preamble line, `j,value,c_j` header and one row per value.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let theta = self.theta.map_or_else(|| "none".to_string(), |t| t.to_string());
        writeln!(
            out,
            "# kind={}, K={}, m={}, theta={}, config_digest={}",
            self.kind, self.atoms, self.m, theta, self.digest
        )?;
        writeln!(out, "j,value,c_j")?;
        let mags: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        for (idx, v) in self.values.iter().enumerate() {
            let c = self
                .theta
                .map_or_else(String::new, |t| coefficient_at(&mags, idx, t).to_string());
            writeln!(out, "{},{},{}", idx + 1, v, c)?;
        }
        Ok(())
    }
}

pub fn signed_spectrum(s: &SandwichMatrix) -> Result<SpectralResult> {
    if !s.hermitian {
        return Err(invalid(
            "signed spectrum requested for a non-Hermitian sandwich; use singular values",
        ));
    }
    let values = match &s.entries {
        SandwichEntries::Real(a) => linalg::sym_eigenvalues(a.as_ref())?,
        SandwichEntries::Complex(a) => linalg::herm_eigenvalues(a.as_ref())?,
    };
    SpectralResult::from_values(SpectrumKind::SignedEigenvalues, values, s.atoms, s.m)
}

pub fn singular_spectrum(s: &SandwichMatrix) -> Result<SpectralResult> {
    let values = match &s.entries {
        SandwichEntries::Real(a) => linalg::singular_values_real(a.as_ref())?,
        SandwichEntries::Complex(a) => linalg::singular_values_complex(a.as_ref())?,
    };
    SpectralResult::from_values(SpectrumKind::SingularValues, values, s.atoms, s.m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    All,
    Plus,
    Minus,
}

impl Sign {
    pub fn as_str(self) -> &'static str {
        match self {
            Sign::All => "all",
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

impl FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Sign::All),
            "plus" => Ok(Sign::Plus),
            "minus" => Ok(Sign::Minus),
            other => Err(invalid(format!("unknown sign '{other}' (expected all, plus or minus)"))),
        }
    }
}

fn check_sign(result: &SpectralResult, sign: Sign) -> Result<()> {
    if sign != Sign::All && result.kind == SpectrumKind::SingularValues {
        return Err(invalid(format!("sign '{}' requested on singular values", sign.as_str())));
    }
    Ok(())
}

/// `n(lambda)`, `n_+(lambda)` or `n_-(lambda)`: values strictly beyond `lambda`.
pub fn counting(result: &SpectralResult, lambda: f64, sign: Sign) -> Result<usize> {
    check_sign(result, sign)?;
    if !(lambda > 0.0) {
        return Err(invalid(format!("counting threshold {lambda} must be positive")));
    }
    Ok(match sign {
        Sign::All => result.values.iter().filter(|v| v.abs() > lambda).count(),
        Sign::Plus => result.values.iter().filter(|&&v| v > lambda).count(),
        Sign::Minus => result.values.iter().filter(|&&v| -v > lambda).count(),
    })
}

/// Magnitudes of the requested subsequence, largest first.
pub fn signed_part(result: &SpectralResult, sign: Sign) -> Result<Vec<f64>> {
    check_sign(result, sign)?;
    let mut out: Vec<f64> = match sign {
        Sign::All => result.values.iter().map(|v| v.abs()).collect(),
        Sign::Plus => result.values.iter().copied().filter(|&v| v > 0.0).collect(),
        Sign::Minus => result.values.iter().filter(|&&v| v < 0.0).map(|v| -v).collect(),
    };
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_REL * a.abs().max(b.abs())
}

/// `k * seq[idx]^theta` with `k` the last 1-based index of the tie group of `idx`.
fn coefficient_at(seq: &[f64], idx: usize, theta: f64) -> f64 {
    let mut last = idx;
    while last + 1 < seq.len() && tied(seq[last + 1], seq[idx]) {
        last += 1;
    }
    (last + 1) as f64 * seq[idx].powf(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticWindowEstimate {
    pub theta: f64,
    pub j_lo: usize,
    pub j_hi: usize,
    pub c_values: Vec<f64>,
    pub c_mean: f64,
    pub c_inf: f64,
    pub c_sup: f64,
}

/// `c_j = j |value_j|^theta` on the window `j_lo..=j_hi` of a sorted magnitude sequence.
pub fn estimate_from_sequence(seq: &[f64], theta: f64, j_lo: usize, j_hi: usize) -> Result<AsymptoticWindowEstimate> {
    if !(theta > 0.0) {
        return Err(invalid(format!("theta = {theta} must be positive")));
    }
    if j_lo < 1 || j_lo >= j_hi {
        return Err(invalid(format!("window [{j_lo}, {j_hi}] needs 1 <= j_lo < j_hi")));
    }
    if j_hi > seq.len() {
        return Err(Error::InsufficientSpectrum(format!(
            "window upper bound {j_hi} exceeds the {} retained values",
            seq.len()
        )));
    }
    let c_values: Vec<f64> = (j_lo - 1..j_hi).map(|i| coefficient_at(seq, i, theta)).collect();
    let c_mean = c_values.iter().sum::<f64>() / c_values.len() as f64;
    let c_inf = c_values.iter().copied().fold(f64::INFINITY, f64::min);
    let c_sup = c_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AsymptoticWindowEstimate {
        theta,
        j_lo,
        j_hi,
        c_values,
        c_mean,
        c_inf,
        c_sup,
    })
}

pub fn estimate_coefficients(
    result: &SpectralResult,
    theta: f64,
    j_lo: usize,
    j_hi: usize,
    sign: Sign,
) -> Result<AsymptoticWindowEstimate> {
    let seq = signed_part(result, sign)?;
    estimate_from_sequence(&seq, theta, j_lo, j_hi)
}

/// `(max(8, n/64), n/8)` for a sequence of `n` values.
pub fn default_window(n: usize) -> (usize, usize) {
    ((n / 64).max(8), n / 8)
}

/// Default window on the requested subsequence.
pub fn default_window_for(result: &SpectralResult, sign: Sign) -> Result<(usize, usize)> {
    let n = match sign {
        Sign::All => result.len(),
        _ => signed_part(result, sign)?.len(),
    };
    if sign == Sign::All {
        return Ok(default_window(n));
    }
    // a sign part is about half of the spectrum; size the window on the full count
    let (lo, hi) = default_window(result.len());
    Ok((lo.min(n), hi.min(n)))
}

/// `count` logarithmically spaced thresholds between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(invalid(format!("log grid needs 0 < lo < hi and two points, got [{lo}, {hi}] x {count}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// 32 log-spaced thresholds spanning the window values of `seq`.
pub fn default_lambda_grid(seq: &[f64], j_lo: usize, j_hi: usize) -> Result<Vec<f64>> {
    if j_lo < 1 || j_hi > seq.len() || j_lo >= j_hi {
        return Err(Error::InsufficientSpectrum(format!(
            "window [{j_lo}, {j_hi}] not inside {} values",
            seq.len()
        )));
    }
    log_grid(seq[j_hi - 1], seq[j_lo - 1], 32)
}

/// `max_lambda lambda^theta |n_A(lambda) - n_B(lambda)|` over the grid.
pub fn compare_counting(a: &SpectralResult, b: &SpectralResult, theta: f64, grid: &[f64]) -> Result<f64> {
    compare_counting_by(a, Sign::All, b, Sign::All, theta, grid)
}

pub fn compare_counting_by(
    a: &SpectralResult,
    sign_a: Sign,
    b: &SpectralResult,
    sign_b: Sign,
    theta: f64,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("empty lambda grid"));
    }
    let mut worst: f64 = 0.0;
    for &lambda in grid {
        let na = counting(a, lambda, sign_a)? as f64;
        let nb = counting(b, lambda, sign_b)? as f64;
        worst = worst.max(lambda.powf(theta) * (na - nb).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub atoms: usize,
    pub m: usize,
    pub isometry_columns: usize,
    /// Relative deviation between the nonzero eigenvalue multisets.
    pub eigen_deviation: f64,
    pub eigen_counts: (usize, usize),
    pub singular_deviation_g: f64,
    pub singular_deviation_gq: f64,
    pub kernel_min_eigenvalue: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub offending: Vec<String>,
}

const NONZERO_REL: f64 = 1e-6;

/// Largest distance in a greedy nearest-neighbour matching of two multisets.
fn multiset_distance(a: &[c64], b: &[c64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let mut best = None;
        for (j, y) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (x - y).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            used[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

fn sorted_singular(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    let mut s = linalg::singular_values_complex(a)?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Random `k x l` matrix with orthonormal rows, `Q Q* = I_k`.
fn random_coisometry(k: usize, l: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Mat::<f64>::from_fn(l, k, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().compute_thin_Q().transpose().to_owned()
}

fn kron_identity(b: MatRef<'_, f64>, m: usize) -> Mat<c64> {
    Mat::from_fn(b.nrows() * m, b.ncols() * m, |r, c| {
        if r % m == c % m {
            c64::new(b[(r / m, c / m)], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

fn block_diag(samples: &[Mat<c64>], m: usize) -> Mat<c64> {
    let n = samples.len() * m;
    Mat::from_fn(n, n, |r, c| {
        if r / m == c / m {
            samples[r / m][(r % m, c % m)]
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Dense cross-check of the factor-swap identities on a tiny instance.
///
/// (a) eigenvalues of `G V G` against the nonzero eigenvalues of
/// `blkdiag(V) (M (x) I_m)`; (b) singular values of `B* V B` for `B = G`
/// and `B = G Q` with `Q` a random co-isometry, against those of `G V G`.
pub fn brute_force_identity_check(
    measure: &DiscreteMeasure,
    spec: &KernelSpec,
    v: &MatrixWeightField,
    seed: u64,
) -> Result<IdentityReport> {
    let k = measure.len();
    if k == 0 || k > 16 {
        return Err(invalid(format!("brute-force check needs 1..=16 atoms, got {k}")));
    }
    let m = v.m();
    let tolerance = 1e-8;
    let kernel = assemble(measure, spec)?;
    let g = sqrt_factor_of(kernel.entries.as_ref(), 0.0)?;
    let s = sandwich(&g, v, measure)?;
    let sz = s.to_complex();
    let samples = v.sample(measure);
    let vblk = block_diag(&samples, m);

    let mut offending = Vec::new();

    let eig_s = linalg::eigenvalues_general(sz.as_ref())?;
    let p = &vblk * kron_identity(kernel.entries.as_ref(), m);
    let eig_p = linalg::eigenvalues_general(p.as_ref())?;
    let scale = eig_s
        .iter()
        .chain(&eig_p)
        .fold(0.0f64, |acc, z| acc.max(z.norm()))
        .max(f64::MIN_POSITIVE);
    let nz = |vals: &[c64]| -> Vec<c64> { vals.iter().copied().filter(|z| z.norm() > NONZERO_REL * scale).collect() };
    let (nz_s, nz_p) = (nz(&eig_s), nz(&eig_p));
    let eigen_deviation = if nz_s.len() == nz_p.len() {
        multiset_distance(&nz_s, &nz_p).max(multiset_distance(&nz_p, &nz_s)) / scale
    } else {
        f64::INFINITY
    };
    if !(eigen_deviation <= tolerance) {
        offending.push(format!(
            "eigenvalues: {} nonzero in G V G vs {} in V (M x I), deviation {eigen_deviation:.3e}; G V G = {nz_s:?}; V (M x I) = {nz_p:?}",
            nz_s.len(),
            nz_p.len()
        ));
    }

    let sv_s = sorted_singular(sz.as_ref())?;
    let sv_scale = sv_s.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let compare_sv = |b: MatRef<'_, f64>| -> Result<f64> {
        let bm = kron_identity(b, m);
        let prod = bm.adjoint() * &vblk * &bm;
        let sv = sorted_singular(prod.as_ref())?;
        let mut worst: f64 = 0.0;
        for (i, x) in sv.iter().enumerate() {
            let y = sv_s.get(i).copied().unwrap_or(0.0);
            worst = worst.max((x - y).abs());
        }
        for y in sv_s.iter().skip(sv.len()) {
            worst = worst.max(y.abs());
        }
        Ok(worst / sv_scale)
    };
    let singular_deviation_g = compare_sv(g.entries.as_ref())?;
    let l = k + 1 + (seed % 4) as usize;
    let q = random_coisometry(k, l, seed);
    let gq = &g.entries * &q;
    let singular_deviation_gq = compare_sv(gq.as_ref())?;
    for (label, dev) in [("B = G", singular_deviation_g), ("B = G Q", singular_deviation_gq)] {
        if !(dev <= tolerance) {
            offending.push(format!("singular values for {label}: deviation {dev:.3e}"));
        }
    }

    Ok(IdentityReport {
        atoms: k,
        m,
        isometry_columns: l,
        eigen_deviation,
        eigen_counts: (nz_s.len(), nz_p.len()),
        singular_deviation_g,
        singular_deviation_gq,
        kernel_min_eigenvalue: g.spectrum_floor,
        tolerance,
        passed: offending.is_empty(),
        offending,
    })
}

/// A tiny randomized problem for [`brute_force_identity_check`].
#[derive(Debug, Clone)]
pub struct IdentityInstance {
    pub measure: DiscreteMeasure,
    pub spec: KernelSpec,
    pub field: MatrixWeightField,
    pub label: &'static str,
}

/// Seeded instance with `2..=16` atoms on a circle or segment and an affine
/// field `V(x) = A + x_1 B + x_2 C` that is Hermitian, general, or nilpotent.
pub fn random_identity_instance(seed: u64) -> Result<IdentityInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=16);
    let measure = if rng.gen_bool(0.5) { make_circle(k)? } else { make_segment(k)? };
    let spec = KernelSpec::for_measure(&measure, rng.gen_range(0.2..0.8))?;
    let label = ["hermitian", "general", "nilpotent"][rng.gen_range(0..3)];
    // nilpotent weights stay at m = 2: higher Jordan blocks blur zero eigenvalues past 1e-6
    let m = if label == "nilpotent" { 2 } else { rng.gen_range(1..=3) };
    let mut coef = || Mat::<c64>::from_fn(m, m, |_, _| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let (mut a, mut b, mut c) = (coef(), coef(), coef());
    for mat in [&mut a, &mut b, &mut c] {
        match label {
            "hermitian" => *mat = linalg::hermitian_part(mat.as_ref()),
            "nilpotent" => *mat = Mat::from_fn(m, m, |i, j| if i < j { mat[(i, j)] } else { c64::new(0.0, 0.0) }),
            _ => {}
        }
    }
    let field = MatrixWeightField::custom(m, label == "hermitian", move |x| {
        let (x1, x2) = (x.coords[0], x.coords[1]);
        Mat::from_fn(m, m, |i, j| a[(i, j)] + b[(i, j)] * x1 + c[(i, j)] * x2)
    });
    Ok(IdentityInstance {
        measure,
        spec,
        field,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{sqrt_factor, DEFAULT_CLIP_REL};
    use crate::measure::Point;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn result(kind: SpectrumKind, v: &[f64]) -> SpectralResult {
        SpectralResult::from_values(kind, v.to_vec(), v.len(), 1).unwrap()
    }

    fn circle_setup(k: usize) -> (DiscreteMeasure, SqrtFactor) {
        let c = make_circle(k).unwrap();
        let spec = KernelSpec::for_measure(&c, 0.5).unwrap();
        let g = sqrt_factor(&assemble(&c, &spec).unwrap(), DEFAULT_CLIP_REL).unwrap();
        (c, g)
    }

    fn real(s: &SandwichMatrix) -> &Mat<f64> {
        match &s.entries {
            SandwichEntries::Real(a) => a,
            SandwichEntries::Complex(_) => panic!("expected real entries"),
        }
    }

    #[test]
    fn sandwich_examples() {
        let (c, g) = circle_setup(64);
        let spec = KernelSpec::for_measure(&c, 0.5).unwrap();
        let kernel = assemble(&c, &spec).unwrap();
        let s = sandwich(&g, &MatrixWeightField::scalar_const(1, 1.0), &c).unwrap();
        assert!(s.hermitian);
        let diff = real(&s) - &kernel.entries;
        assert!(linalg::op_norm_real(diff.as_ref()).unwrap() < 1e-10 * kernel.entries.norm_max());

        let z = sandwich(&g, &MatrixWeightField::scalar_const(2, 0.0), &c).unwrap();
        assert_eq!(real(&z).norm_max(), 0.0);
        assert_eq!(z.dim(), 128);

        let one = DiscreteMeasure::from_atoms(
            c.family(),
            2,
            1.0,
            vec![c.atoms()[0].clone()],
            c.diameter(),
        )
        .unwrap();
        let m11 = 4.0;
        let g1 = sqrt_factor_of(Mat::from_fn(1, 1, |_, _| m11).as_ref(), 0.0).unwrap();
        let s1 = sandwich(&g1, &MatrixWeightField::scalar_const(1, 3.0), &one).unwrap();
        assert_relative_eq!(real(&s1)[(0, 0)], 12.0, epsilon = 1e-14);

        assert!(matches!(sandwich(&g1, &MatrixWeightField::scalar_const(1, 1.0), &c), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn sandwich_flags_and_entries() {
        let (c, g) = circle_setup(32);
        let nil = sandwich(&g, &MatrixWeightField::nilpotent(|_| c64::new(1.0, 0.0)), &c).unwrap();
        assert!(!nil.hermitian);
        assert!(matches!(nil.entries, SandwichEntries::Real(_)));
        assert!(matches!(signed_spectrum(&nil), Err(Error::InvalidParameter(_))));

        let phase = MatrixWeightField::custom(2, true, |x: &Point| {
            let t = x.coords[1].atan2(x.coords[0]);
            let z = c64::new(t.cos(), t.sin());
            Mat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 1) => z,
                (1, 0) => z.conj(),
                _ => c64::new(0.0, 0.0),
            })
        });
        let s = sandwich(&g, &phase, &c).unwrap();
        assert!(s.hermitian);
        let SandwichEntries::Complex(z) = &s.entries else { panic!("expected complex entries") };
        assert_eq!(linalg::hermitian_defect(z.as_ref()), 0.0);
        // (i, a) = (3, 0), (j, b) = (5, 1): sum_k G_3k V_01(x_k) G_k5
        let samples = phase.sample(&c);
        let mut want = c64::new(0.0, 0.0);
        for kk in 0..32 {
            want += samples[kk][(0, 1)] * (g.entries[(3, kk)] * g.entries[(kk, 5)]);
        }
        assert!((z[(6, 11)] - want).norm() < 1e-13);
    }

    #[test]
    fn spectrum_examples() {
        let d = SandwichMatrix {
            entries: SandwichEntries::Real(Mat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => 2.0,
                (1, 1) => -1.0,
                _ => 0.0,
            })),
            hermitian: true,
            atoms: 2,
            m: 1,
        };
        assert_eq!(signed_spectrum(&d).unwrap().values, vec![2.0, -1.0]);
        let sv = singular_spectrum(&d).unwrap().values;
        assert_relative_eq!(sv[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(sv[1], 1.0, epsilon = 1e-14);

        let n = SandwichMatrix {
            entries: SandwichEntries::Real(Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { 3.0 } else { 0.0 })),
            hermitian: false,
            atoms: 2,
            m: 1,
        };
        let sv = singular_spectrum(&n).unwrap().values;
        assert_relative_eq!(sv[0], 3.0, epsilon = 1e-14);
        assert!(sv[1].abs() < 1e-14);
    }

    #[test]
    fn counting_examples() {
        let r = result(SpectrumKind::SingularValues, &[3.0, 2.0, 1.0]);
        assert_eq!(counting(&r, 1.5, Sign::All).unwrap(), 2);
        assert_eq!(counting(&r, 5.0, Sign::All).unwrap(), 0);
        assert!(matches!(counting(&r, 1.0, Sign::Plus), Err(Error::InvalidParameter(_))));

        let s = result(SpectrumKind::SignedEigenvalues, &[2.0, -1.0, -3.0]);
        assert_eq!(counting(&s, 0.5, Sign::Plus).unwrap(), 1);
        assert_eq!(counting(&s, 0.5, Sign::Minus).unwrap(), 2);
        assert_eq!(counting(&s, 0.5, Sign::All).unwrap(), 3);
        assert_eq!(s.values, vec![-3.0, 2.0, -1.0]);
    }

    #[test]
    fn estimate_examples() {
        let theta: f64 = 1.7;
        let exact: Vec<f64> = (1..=200).map(|j| (j as f64).powf(-1.0 / theta)).collect();
        let e = estimate_from_sequence(&exact, theta, 10, 100).unwrap();
        assert_relative_eq!(e.c_mean, 1.0, max_relative = 1e-12);
        assert_relative_eq!(e.c_inf, 1.0, max_relative = 1e-12);
        assert_relative_eq!(e.c_sup, 1.0, max_relative = 1e-12);
        assert_eq!(e.c_values.len(), 91);

        let two: Vec<f64> = (1..=200).map(|j| (2.0 / j as f64).powf(1.0 / theta)).collect();
        let e = estimate_from_sequence(&two, theta, 10, 100).unwrap();
        assert_relative_eq!(e.c_mean, 2.0, max_relative = 1e-12);

        assert!(matches!(estimate_from_sequence(&two, theta, 0, 10), Err(Error::InvalidParameter(_))));
        assert!(matches!(estimate_from_sequence(&two, theta, 10, 300), Err(Error::InsufficientSpectrum(_))));
    }

    #[test]
    fn log_periodic_calibration() {
        // oracle: c_j evaluated on the constructed sequence in its own order
        let seq: Vec<f64> = (1..=4096)
            .map(|j| {
                let x = j as f64;
                x.powf(-0.5) * (1.0 + 0.2 * (2.0 * std::f64::consts::PI * x.log2()).sin())
            })
            .collect();
        let (lo, hi) = default_window(seq.len());
        let e = estimate_from_sequence(&seq, 2.0, lo, hi).unwrap();
        let ratio = e.c_sup / e.c_inf;
        assert!((ratio / 2.25 - 1.0).abs() < 0.10, "ratio {ratio}");
    }

    #[test]
    fn ties_use_largest_index() {
        let seq = [4.0, 2.0, 2.0, 2.0, 1.0];
        let e = estimate_from_sequence(&seq, 1.0, 2, 4).unwrap();
        assert_eq!(e.c_values, vec![8.0, 8.0, 8.0]);
    }

    #[test]
    fn signed_windows_and_degenerate_signs() {
        let r = result(SpectrumKind::SignedEigenvalues, &[3.0, 2.0, 1.0, 0.5]);
        assert!(matches!(estimate_coefficients(&r, 2.0, 1, 2, Sign::Minus), Err(Error::InsufficientSpectrum(_))));
        assert_eq!(default_window(2048), (32, 256));
        assert_eq!(default_window(100), (8, 12));
    }

    #[test]
    fn compare_examples() {
        let base: Vec<f64> = (1..=400).map(|j| (3.0 / j as f64).sqrt()).collect();
        let a = result(SpectrumKind::SingularValues, &base);
        let grid = default_lambda_grid(&base, 20, 200).unwrap();
        assert_eq!(grid.len(), 32);
        assert_eq!(compare_counting(&a, &a, 2.0, &grid).unwrap(), 0.0);
        assert!(matches!(compare_counting(&a, &a, 2.0, &[]), Err(Error::InvalidParameter(_))));

        let delta = 1e-3;
        let b = result(SpectrumKind::SingularValues, &base.iter().map(|v| v * (1.0 + delta)).collect::<Vec<_>>());
        let c_max = estimate_from_sequence(&base, 2.0, 1, 400).unwrap().c_sup;
        let lam_max = grid.iter().copied().fold(0.0, f64::max);
        let bound = 2.0 * delta * c_max + lam_max.powi(2);
        assert!(compare_counting(&a, &b, 2.0, &grid).unwrap() <= bound);

        let mut extra = base.clone();
        extra.push(10.0);
        let e = result(SpectrumKind::SingularValues, &extra);
        assert_relative_eq!(compare_counting(&e, &a, 2.0, &grid).unwrap(), lam_max.powi(2), max_relative = 1e-14);
    }

    #[test]
    fn csv_layout() {
        let r = result(SpectrumKind::SingularValues, &[3.0, 2.0, 1.0]).with_theta(2.0).with_digest("abc");
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# kind=singular_values, K=3, m=1, theta=2, config_digest=abc\nj,value,c_j\n1,3,9\n2,2,8\n3,1,3\n");
        let empty = result(SpectrumKind::SingularValues, &[]);
        let mut buf = Vec::new();
        empty.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn hermitian_consistency_on_rotated_field() {
        let (c, g) = circle_setup(96);
        let v = MatrixWeightField::hermitian_rotated(|_| 1.0, |_| 2.0, |x: &Point| x.coords[1].atan2(x.coords[0]));
        let s = sandwich(&g, &v, &c).unwrap();
        let signed = signed_spectrum(&s).unwrap();
        let sv = singular_spectrum(&s).unwrap();
        let scale = sv.values[0];
        for (a, b) in signed_part(&signed, Sign::All).unwrap().iter().zip(&sv.values) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn variational_monotonicity() {
        let (c, g) = circle_setup(256);
        let v = MatrixWeightField::hermitian_rotated(|_| 1.0, |x: &Point| 1.5 + x.coords[0], |x: &Point| 2.0 * x.coords[1]);
        let s = signed_spectrum(&sandwich(&g, &v, &c).unwrap()).unwrap();
        let p = signed_spectrum(&sandwich(&g, &v.positive_part().unwrap(), &c).unwrap()).unwrap();
        let plus = signed_part(&s, Sign::Plus).unwrap();
        let (lo, hi) = default_window(s.len());
        for lambda in default_lambda_grid(&plus, lo, hi).unwrap() {
            let n_s = counting(&s, lambda, Sign::Plus).unwrap();
            let n_p = counting(&p, lambda, Sign::All).unwrap();
            assert!(n_s <= n_p + 2, "lambda {lambda}: {n_s} > {n_p} + 2");
        }
    }

    #[test]
    fn similarity_spot_check_top_values() {
        let (c, g) = circle_setup(512);
        let v = MatrixWeightField::scalar_profile(1, |x: &Point| 1.0 + 0.5 * x.coords[0]);
        let s = signed_spectrum(&sandwich(&g, &v, &c).unwrap()).unwrap();
        let spec = KernelSpec::for_measure(&c, 0.5).unwrap();
        let kernel = assemble(&c, &spec).unwrap();
        // V^(1/2) M V^(1/2) is similar to V M and symmetric
        let d: Vec<f64> = c.atoms().iter().map(|a| (1.0 + 0.5 * a.point.coords[0]).sqrt()).collect();
        let sym = Mat::from_fn(512, 512, |i, j| d[i] * kernel.entries[(i, j)] * d[j]);
        let mut other = linalg::sym_eigenvalues(sym.as_ref()).unwrap();
        sort_by_magnitude(&mut other);
        for j in 0..32 {
            assert!((s.values[j] - other[j]).abs() <= 1e-8 * s.values[0].abs());
        }
    }

    #[test]
    fn brute_force_examples() {
        let c = make_circle(8).unwrap();
        let spec = KernelSpec::for_measure(&c, 0.5).unwrap();
        let one = brute_force_identity_check(&c, &spec, &MatrixWeightField::scalar_const(1, 1.0), 1).unwrap();
        assert!(one.passed, "{:?}", one.offending);

        let seg = make_segment(4).unwrap();
        let spec = KernelSpec::for_measure(&seg, 0.5).unwrap();
        let herm = MatrixWeightField::hermitian_rotated(|x: &Point| 1.0 + x.coords[0], |_| 0.5, |x: &Point| 3.0 * x.coords[0]);
        let r = brute_force_identity_check(&seg, &spec, &herm, 7).unwrap();
        assert!(r.passed, "{:?}", r.offending);

        let nil = MatrixWeightField::nilpotent(|x: &Point| c64::new(1.0, x.coords[0]));
        let r = brute_force_identity_check(&seg, &spec, &nil, 3).unwrap();
        assert!(r.passed, "{:?}", r.offending);
        assert_eq!(r.eigen_counts, (0, 0));
        assert!(r.singular_deviation_gq <= 1e-8);

        let big = make_circle(17).unwrap();
        let spec = KernelSpec::for_measure(&big, 0.5).unwrap();
        assert!(brute_force_identity_check(&big, &spec, &MatrixWeightField::scalar_const(1, 1.0), 0).is_err());
    }

    #[test]
    fn random_instances_pass() {
        let mut labels = std::collections::BTreeSet::new();
        for seed in 0..30 {
            let inst = random_identity_instance(seed).unwrap();
            labels.insert(inst.label);
            let r = brute_force_identity_check(&inst.measure, &inst.spec, &inst.field, seed).unwrap();
            assert!(r.passed, "seed {seed} ({}): {:?}", inst.label, r.offending);
        }
        assert_eq!(labels.len(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn estimate_permutation_and_append_invariance(seed in prop::collection::vec(0.01..10.0f64, 40..80), extra in prop::collection::vec(0.0..0.009f64, 0..20), rot in 0usize..40, theta in 1.1..3.0f64) {
            let mut sorted = seed.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let a = SpectralResult::from_values(SpectrumKind::SingularValues, seed.clone(), 1, 1).unwrap();
            let mut perm = seed.clone();
            perm.rotate_left(rot % seed.len());
            perm.extend(&extra);
            let b = SpectralResult::from_values(SpectrumKind::SingularValues, perm, 1, 1).unwrap();
            let (lo, hi) = (3, 30);
            let ea = estimate_coefficients(&a, theta, lo, hi, Sign::All).unwrap();
            let eb = estimate_coefficients(&b, theta, lo, hi, Sign::All).unwrap();
            prop_assert_eq!(ea.c_values.clone(), eb.c_values);
            prop_assert!(ea.c_inf <= ea.c_mean && ea.c_mean <= ea.c_sup);
        }

        #[test]
        fn estimate_scales_with_weight(seed in prop::collection::vec(0.01..10.0f64, 40), t in 0.1..10.0f64, theta in 1.1..3.0f64) {
            let a = SpectralResult::from_values(SpectrumKind::SingularValues, seed.clone(), 1, 1).unwrap();
            let b = SpectralResult::from_values(SpectrumKind::SingularValues, seed.iter().map(|v| v * t).collect(), 1, 1).unwrap();
            let ea = estimate_coefficients(&a, theta, 2, 30, Sign::All).unwrap();
            let eb = estimate_coefficients(&b, theta, 2, 30, Sign::All).unwrap();
            for (x, y) in ea.c_values.iter().zip(&eb.c_values) {
                prop_assert!((y / x - t.powf(theta)).abs() <= 1e-12 * t.powf(theta));
            }
        }

        #[test]
        fn sandwich_scaling(t in 0.2..5.0f64) {
            let (c, g) = circle_setup(48);
            let v = MatrixWeightField::scalar_profile(1, |x: &Point| 2.0 + x.coords[0]);
            let a = signed_spectrum(&sandwich(&g, &v, &c).unwrap()).unwrap();
            let b = signed_spectrum(&sandwich(&g, &v.scaled(t), &c).unwrap()).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((y - t * x).abs() <= 1e-10 * t * a.values[0].abs());
            }
        }
    }
}
