//! Experiment configuration: TOML or JSON text with the sections
//! `measure`, `kernel`, `weight`, `spectra` and `experiment`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use bslab_core::kernel::{DiagMethod, KernelSpec, DEFAULT_CLIP_REL};
use bslab_core::measure::{
    make_cantor, make_cantor_dust, make_circle, make_lipschitz_graph, make_segment, make_sphere, with_point_mass,
    DiscreteMeasure, Family, PiecewiseLinear, Point,
};
use bslab_core::weight::MatrixWeightField;
use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use faer::c64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error at `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// A number or an expression in `x`, `y`, `z`, `phi` (polar angle in `[0, 2 pi)`) and `pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub family: String,
    /// Atom count, or recursion depth for the Cantor families.
    pub size: Option<usize>,
    /// Refinement sweep, in place of `size`.
    pub sizes: Option<Vec<usize>>,
    pub ratio: Option<f64>,
    /// `flat` or `zigzag` for `lipschitz_graph`.
    pub profile: Option<String>,
    /// Fraction of the mass moved onto the first atom.
    pub point_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub l: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "N")]
    pub ambient_dim: Option<usize>,
    pub diag_method: Option<String>,
    pub clip_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub preset: String,
    pub m: Option<usize>,
    pub c: Option<f64>,
    pub v: Option<Scalar>,
    pub v_im: Option<Scalar>,
    pub a: Option<Scalar>,
    pub b: Option<Scalar>,
    pub angle: Option<Scalar>,
}

impl Default for WeightSection {
    fn default() -> Self {
        Self {
            preset: "scalar_const".into(),
            m: None,
            c: None,
            v: None,
            v_im: None,
            a: None,
            b: None,
            angle: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSection {
    /// `eigs`, `svd` or `both`; defaults to `eigs` for Hermitian weights, `svd` otherwise.
    pub kind: Option<String>,
    pub j_lo: Option<usize>,
    pub j_hi: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// Relative tolerance of the main comparison.
    pub tolerance: Option<f64>,
    pub oracle_tolerance: Option<f64>,
    pub compare_fraction: Option<f64>,
    pub lower_fraction: Option<f64>,
    pub sup_stability: Option<f64>,
    pub eps0: Option<f64>,
    pub halvings: Option<u32>,
    pub norm_ratio_max: Option<f64>,
    pub n_centers: Option<usize>,
    pub radii: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub bounds: Option<[f64; 2]>,
    pub max_spread: Option<f64>,
    pub expect_point_mass: Option<bool>,
    pub instances: Option<usize>,
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
}

impl ExperimentSection {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            tolerance: None,
            oracle_tolerance: None,
            compare_fraction: None,
            lower_fraction: None,
            sup_stability: None,
            eps0: None,
            halvings: None,
            norm_ratio_max: None,
            n_centers: None,
            radii: None,
            r_min: None,
            r_max: None,
            bounds: None,
            max_spread: None,
            expect_point_mass: None,
            instances: None,
            seed: None,
            n_max: None,
        }
    }
}

fn default_cache() -> bool {
    true
}

/// The configuration as written; also the canonical form hashed by the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub measure: MeasureSection,
    pub kernel: KernelSection,
    #[serde(default)]
    pub weight: WeightSection,
    #[serde(default)]
    pub spectra: SpectraSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_cache")]
    pub cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Spectrum,
    WeylCheck,
    SignSeparation,
    SingularWeyl,
    LowerBoundFractal,
    PerturbationStability,
    Ahlfors,
    OracleCircle,
    BruteForce,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Spectrum,
        ExperimentKind::WeylCheck,
        ExperimentKind::SignSeparation,
        ExperimentKind::SingularWeyl,
        ExperimentKind::LowerBoundFractal,
        ExperimentKind::PerturbationStability,
        ExperimentKind::Ahlfors,
        ExperimentKind::OracleCircle,
        ExperimentKind::BruteForce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::WeylCheck => "weyl_check",
            ExperimentKind::SignSeparation => "sign_separation",
            ExperimentKind::SingularWeyl => "singular_weyl",
            ExperimentKind::LowerBoundFractal => "lower_bound_fractal",
            ExperimentKind::PerturbationStability => "perturbation_stability",
            ExperimentKind::Ahlfors => "ahlfors",
            ExperimentKind::OracleCircle => "oracle_circle",
            ExperimentKind::BruteForce => "brute_force",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectraKind {
    Eigs,
    Svd,
    Both,
}

impl SpectraKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectraKind::Eigs => "eigs",
            SpectraKind::Svd => "svd",
            SpectraKind::Both => "both",
        }
    }

    pub fn wants_eigs(self) -> bool {
        matches!(self, SpectraKind::Eigs | SpectraKind::Both)
    }

    pub fn wants_svd(self) -> bool {
        matches!(self, SpectraKind::Svd | SpectraKind::Both)
    }
}

/// A compiled scalar expression over the coordinates of a point.
#[derive(Clone)]
pub struct ScalarFn {
    source: String,
    kind: ScalarKind,
}

#[derive(Clone)]
enum ScalarKind {
    Const(f64),
    Expr(Arc<Node<DefaultNumericTypes>>),
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.source)
    }
}

fn polar_angle(p: &Point) -> f64 {
    let (x, y) = (p.coords[0], p.coords.get(1).copied().unwrap_or(0.0));
    y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI)
}

impl ScalarFn {
    pub fn compile(key: &str, scalar: &Scalar) -> Result<Self, ConfigError> {
        let f = match scalar {
            Scalar::Number(v) => Self {
                source: v.to_string(),
                kind: ScalarKind::Const(*v),
            },
            Scalar::Expr(src) => {
                let node = build_operator_tree::<DefaultNumericTypes>(src)
                    .map_err(|e| bad(key, format!("cannot parse expression `{src}`: {e}")))?;
                Self {
                    source: src.clone(),
                    kind: ScalarKind::Expr(Arc::new(node)),
                }
            }
        };
        f.try_eval(&Point::new(vec![0.3, 0.4, 0.5]))
            .map_err(|e| bad(key, format!("cannot evaluate `{}`: {e}", f.source)))?;
        Ok(f)
    }

    fn try_eval(&self, p: &Point) -> Result<f64, String> {
        match &self.kind {
            ScalarKind::Const(v) => Ok(*v),
            ScalarKind::Expr(node) => {
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                let c = |i: usize| p.coords.get(i).copied().unwrap_or(0.0);
                for (name, value) in [
                    ("x", c(0)),
                    ("y", c(1)),
                    ("z", c(2)),
                    ("phi", polar_angle(p)),
                    ("pi", std::f64::consts::PI),
                ] {
                    ctx.set_value(name.into(), Value::Float(value)).map_err(|e| e.to_string())?;
                }
                node.eval_number_with_context(&ctx).map_err(|e| e.to_string())
            }
        }
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.try_eval(p).unwrap_or(f64::NAN)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[derive(Debug, Clone)]
pub enum WeightConfig {
    ScalarConst { m: usize, c: f64 },
    ScalarProfile { m: usize, v: ScalarFn },
    HermitianRotated { a: ScalarFn, b: ScalarFn, angle: ScalarFn },
    Nilpotent { v: ScalarFn, v_im: Option<ScalarFn> },
}

impl WeightConfig {
    pub fn m(&self) -> usize {
        match self {
            WeightConfig::ScalarConst { m, .. } | WeightConfig::ScalarProfile { m, .. } => *m,
            _ => 2,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        !matches!(self, WeightConfig::Nilpotent { .. })
    }

    pub fn field(&self) -> MatrixWeightField {
        match self.clone() {
            WeightConfig::ScalarConst { m, c } => MatrixWeightField::scalar_const(m, c),
            WeightConfig::ScalarProfile { m, v } => MatrixWeightField::scalar_profile(m, move |p| v.eval(p)),
            WeightConfig::HermitianRotated { a, b, angle } => {
                MatrixWeightField::hermitian_rotated(move |p| a.eval(p), move |p| b.eval(p), move |p| angle.eval(p))
            }
            WeightConfig::Nilpotent { v, v_im } => MatrixWeightField::nilpotent(move |p| {
                c64::new(v.eval(p), v_im.as_ref().map_or(0.0, |f| f.eval(p)))
            }),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            WeightConfig::ScalarConst { m, c } => format!("scalar_const(c={c}, m={m})"),
            WeightConfig::ScalarProfile { m, v } => format!("scalar_profile(v={}, m={m})", v.source()),
            WeightConfig::HermitianRotated { a, b, angle } => {
                format!("hermitian_rotated(a={}, b={}, angle={})", a.source(), b.source(), angle.source())
            }
            WeightConfig::Nilpotent { v, v_im } => match v_im {
                Some(im) => format!("nilpotent(v={} + i {})", v.source(), im.source()),
                None => format!("nilpotent(v={})", v.source()),
            },
        }
    }
}

/// Measure construction parameters shared by every size of a sweep.
#[derive(Debug, Clone)]
pub struct MeasureConfig {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub ratio: f64,
    pub profile: PiecewiseLinear,
    pub point_mass: Option<f64>,
}

impl MeasureConfig {
    pub fn build(&self, size: usize) -> bslab_core::Result<DiscreteMeasure> {
        let depth = u32::try_from(size).unwrap_or(u32::MAX);
        let m = match self.family {
            Family::Circle => make_circle(size)?,
            Family::Segment => make_segment(size)?,
            Family::LipschitzGraph => make_lipschitz_graph(size, &self.profile)?,
            Family::Sphere => make_sphere(size)?,
            Family::Cantor => make_cantor(self.ratio, depth)?,
            Family::CantorDust => make_cantor_dust(self.ratio, depth)?,
        };
        match self.point_mass {
            Some(f) => with_point_mass(&m, 0, f),
            None => Ok(m),
        }
    }

    pub fn is_fractal(&self) -> bool {
        matches!(self.family, Family::Cantor | Family::CantorDust)
    }
}

/// Fully validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub experiment: ExperimentKind,
    pub measure: MeasureConfig,
    pub spec: KernelSpec,
    pub diag_method: DiagMethod,
    pub clip_rel: f64,
    pub weight: WeightConfig,
    pub kind: SpectraKind,
    pub window: Option<(usize, usize)>,
    pub output_dir: PathBuf,
    pub cache: bool,
}

impl ExperimentConfig {
    pub fn params(&self) -> &ExperimentSection {
        &self.raw.experiment
    }
}

/// Parses TOML, or JSON when the first non-blank character is `{`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
    };
    resolve(raw)
}

fn require_positive(key: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(bad(key, format!("must be a positive number, got {x}"))),
        _ => Ok(()),
    }
}

fn resolve_measure(sec: &MeasureSection) -> Result<MeasureConfig, ConfigError> {
    let family: Family = sec.family.parse().map_err(|e: bslab_core::Error| bad("measure.family", e.to_string()))?;
    let sizes = match (sec.size, &sec.sizes) {
        (Some(_), Some(_)) => return Err(bad("measure.sizes", "give either `size` or `sizes`, not both")),
        (Some(s), None) => vec![s],
        (None, Some(list)) if !list.is_empty() => list.clone(),
        (None, Some(_)) => return Err(bad("measure.sizes", "must not be empty")),
        (None, None) => return Err(bad("measure.size", "missing required key")),
    };
    let fractal = matches!(family, Family::Cantor | Family::CantorDust);
    for &s in &sizes {
        if s == 0 {
            return Err(bad("measure.size", "must be at least 1"));
        }
        if !fractal && s > 8192 {
            return Err(bad("measure.size", format!("{s} atoms exceeds the dense limit 8192")));
        }
    }
    if sec.ratio.is_some() && !fractal {
        return Err(bad("measure.ratio", format!("only used by the Cantor families, not `{family}`")));
    }
    let ratio = sec.ratio.unwrap_or(1.0 / 3.0);
    let profile = match sec.profile.as_deref() {
        None | Some("zigzag") => PiecewiseLinear::zigzag(),
        Some("flat") => PiecewiseLinear::flat(),
        Some(other) => return Err(bad("measure.profile", format!("unknown profile `{other}` (expected flat or zigzag)"))),
    };
    if sec.profile.is_some() && family != Family::LipschitzGraph {
        return Err(bad("measure.profile", "only used by `lipschitz_graph`"));
    }
    if let Some(f) = sec.point_mass {
        if !(f > 0.0 && f < 1.0) {
            return Err(bad("measure.point_mass", format!("must lie in (0, 1), got {f}")));
        }
    }
    let cfg = MeasureConfig {
        family,
        sizes,
        ratio,
        profile,
        point_mass: sec.point_mass,
    };
    // cheapest member of the sweep validates the construction parameters
    let smallest = *cfg.sizes.iter().min().expect("non-empty sizes");
    cfg.build(smallest).map_err(|e| bad("measure", e.to_string()))?;
    Ok(cfg)
}

fn scalar(key: &str, v: &Option<Scalar>) -> Result<ScalarFn, ConfigError> {
    match v {
        Some(s) => ScalarFn::compile(key, s),
        None => Err(bad(key, "missing required key")),
    }
}

fn unused(key: &str, present: bool, preset: &str) -> Result<(), ConfigError> {
    if present {
        Err(bad(key, format!("not a parameter of preset `{preset}`")))
    } else {
        Ok(())
    }
}

fn resolve_weight(sec: &WeightSection) -> Result<WeightConfig, ConfigError> {
    let p = sec.preset.as_str();
    let m = sec.m.unwrap_or(1);
    if m == 0 {
        return Err(bad("weight.m", "must be at least 1"));
    }
    let fixed_m = |sec: &WeightSection| match sec.m {
        Some(m) if m != 2 => Err(bad("weight.m", format!("preset `{p}` is 2 x 2, got m = {m}"))),
        _ => Ok(()),
    };
    Ok(match p {
        "scalar_const" => {
            for (k, present) in [("weight.v", sec.v.is_some()), ("weight.a", sec.a.is_some()), ("weight.b", sec.b.is_some()), ("weight.angle", sec.angle.is_some()), ("weight.v_im", sec.v_im.is_some())] {
                unused(k, present, p)?;
            }
            WeightConfig::ScalarConst { m, c: sec.c.unwrap_or(1.0) }
        }
        "scalar_profile" => {
            for (k, present) in [("weight.c", sec.c.is_some()), ("weight.a", sec.a.is_some()), ("weight.b", sec.b.is_some()), ("weight.angle", sec.angle.is_some()), ("weight.v_im", sec.v_im.is_some())] {
                unused(k, present, p)?;
            }
            WeightConfig::ScalarProfile { m, v: scalar("weight.v", &sec.v)? }
        }
        "hermitian_rotated" => {
            fixed_m(sec)?;
            for (k, present) in [("weight.c", sec.c.is_some()), ("weight.v", sec.v.is_some()), ("weight.v_im", sec.v_im.is_some())] {
                unused(k, present, p)?;
            }
            WeightConfig::HermitianRotated {
                a: scalar("weight.a", &sec.a)?,
                b: scalar("weight.b", &sec.b)?,
                angle: scalar("weight.angle", &sec.angle)?,
            }
        }
        "nilpotent" => {
            fixed_m(sec)?;
            for (k, present) in [("weight.c", sec.c.is_some()), ("weight.a", sec.a.is_some()), ("weight.b", sec.b.is_some()), ("weight.angle", sec.angle.is_some())] {
                unused(k, present, p)?;
            }
            WeightConfig::Nilpotent {
                v: scalar("weight.v", &sec.v)?,
                v_im: sec.v_im.as_ref().map(|s| ScalarFn::compile("weight.v_im", s)).transpose()?,
            }
        }
        other => {
            return Err(bad(
                "weight.preset",
                format!("unknown preset `{other}` (expected scalar_const, scalar_profile, hermitian_rotated or nilpotent)"),
            ))
        }
    })
}

pub fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let experiment: ExperimentKind = raw.experiment.name.parse().map_err(|e: String| bad("experiment.name", e))?;
    let measure = resolve_measure(&raw.measure)?;
    let probe = measure.build(*measure.sizes.iter().min().expect("non-empty sizes")).map_err(|e| bad("measure", e.to_string()))?;

    let k = &raw.kernel;
    if let Some(n) = k.ambient_dim {
        if n != probe.ambient_dim() {
            return Err(bad(
                "kernel.N",
                format!("family `{}` lives in R^{}, got N = {n}", measure.family, probe.ambient_dim()),
            ));
        }
    }
    let n = probe.ambient_dim();
    let s = probe.hausdorff_dim();
    let spec = match (k.l, k.alpha) {
        (Some(l), None) => KernelSpec::from_order(n, l, s),
        (None, Some(a)) => KernelSpec::from_alpha(n, a, s),
        (Some(_), Some(_)) => return Err(bad("kernel", "give either `l` or `alpha`, not both")),
        (None, None) => return Err(bad("kernel.l", "missing required key (or give `alpha`)")),
    }
    .map_err(|e| bad(if k.l.is_some() { "kernel.l" } else { "kernel.alpha" }, e.to_string()))?;
    let diag_method = match &k.diag_method {
        Some(d) => d.parse().map_err(|e: bslab_core::Error| bad("kernel.diag_method", e.to_string()))?,
        None => DiagMethod::default_for(measure.family),
    };
    let clip_rel = k.clip_rel.unwrap_or(DEFAULT_CLIP_REL);
    if !(0.0..1.0).contains(&clip_rel) {
        return Err(bad("kernel.clip_rel", format!("must lie in [0, 1), got {clip_rel}")));
    }

    let weight = resolve_weight(&raw.weight)?;
    let kind = match raw.spectra.kind.as_deref() {
        None if weight.is_hermitian() => SpectraKind::Eigs,
        None => SpectraKind::Svd,
        Some("eigs") => SpectraKind::Eigs,
        Some("svd") => SpectraKind::Svd,
        Some("both") => SpectraKind::Both,
        Some(other) => return Err(bad("spectra.kind", format!("unknown kind `{other}` (expected eigs, svd or both)"))),
    };
    if kind.wants_eigs() && !weight.is_hermitian() {
        return Err(bad(
            "spectra.kind",
            format!("signed eigenvalues need a Hermitian weight; `{}` is not", raw.weight.preset),
        ));
    }
    let window = match (raw.spectra.j_lo, raw.spectra.j_hi) {
        (None, None) => None,
        (Some(lo), Some(hi)) if lo >= 1 && lo < hi => Some((lo, hi)),
        (Some(lo), Some(hi)) => return Err(bad("spectra.j_lo", format!("window [{lo}, {hi}] needs 1 <= j_lo < j_hi"))),
        _ => return Err(bad("spectra", "give both `j_lo` and `j_hi` or neither")),
    };

    let e = &raw.experiment;
    for (key, v) in [
        ("experiment.tolerance", e.tolerance),
        ("experiment.oracle_tolerance", e.oracle_tolerance),
        ("experiment.compare_fraction", e.compare_fraction),
        ("experiment.lower_fraction", e.lower_fraction),
        ("experiment.sup_stability", e.sup_stability),
        ("experiment.eps0", e.eps0),
        ("experiment.norm_ratio_max", e.norm_ratio_max),
        ("experiment.r_min", e.r_min),
        ("experiment.r_max", e.r_max),
        ("experiment.max_spread", e.max_spread),
    ] {
        require_positive(key, v)?;
    }
    if let Some([lo, hi]) = e.bounds {
        if !(lo < hi) {
            return Err(bad("experiment.bounds", format!("needs lo < hi, got [{lo}, {hi}]")));
        }
    }
    if let (Some(lo), Some(hi)) = (e.r_min, e.r_max) {
        if lo >= hi {
            return Err(bad("experiment.r_min", format!("must be below r_max = {hi}")));
        }
    }
    if e.n_max == Some(0) {
        return Err(bad("experiment.n_max", "must be at least 1"));
    }
    match experiment {
        ExperimentKind::SignSeparation if !weight.is_hermitian() => {
            return Err(bad("weight.preset", "sign_separation needs a Hermitian weight"));
        }
        ExperimentKind::OracleCircle if measure.family != Family::Circle || spec.alpha >= 1.0 => {
            return Err(bad("measure.family", "oracle_circle needs the circle with 0 < alpha < 1"));
        }
        ExperimentKind::LowerBoundFractal if !measure.is_fractal() => {
            return Err(bad("measure.family", "lower_bound_fractal needs a Cantor family"));
        }
        _ => {}
    }

    let output_dir = raw
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("bslab-out").join(experiment.as_str()));
    let cache = raw.cache;
    Ok(ExperimentConfig {
        raw,
        experiment,
        measure,
        spec,
        diag_method,
        clip_rel,
        weight,
        kind,
        window,
        output_dir,
        cache,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[measure]
family = "circle"
size = 512

[kernel]
l = 0.75

[weight]
preset = "scalar_const"
c = 1.0

[experiment]
name = "weyl_check"
"#;

    #[test]
    fn minimal_config_derives_theta() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.experiment, ExperimentKind::WeylCheck);
        assert!((c.spec.alpha - 0.5).abs() < 1e-15);
        assert!((c.spec.theta - 2.0).abs() < 1e-14);
        assert_eq!(c.diag_method, DiagMethod::Zeta1d);
        assert_eq!(c.kind, SpectraKind::Eigs);
        assert!(c.cache);
    }

    #[test]
    fn order_outside_trace_range() {
        let text = MINIMAL.replace("l = 0.75", "l = 1.2\nN = 2");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("alpha must lie in (0, s)"), "{err}");
        assert!(err.contains("kernel.l"), "{err}");
    }

    #[test]
    fn duplicate_key_reports_line() {
        let text = MINIMAL.replace("size = 512", "size = 512\nsize = 1024");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
        let json = r#"{"measure": {"family": "circle", "size": 8, "size": 9}, "kernel": {"alpha": 0.5}, "experiment": {"name": "spectrum"}}"#;
        let err = parse_config(json).unwrap_err().to_string();
        assert!(err.contains("duplicate") && err.contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = parse_config(&MINIMAL.replace("c = 1.0", "c = 1.0\ncolour = 3")).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        let err = parse_config(&MINIMAL.replace("family = \"circle\"\n", "")).unwrap_err().to_string();
        assert!(err.contains("family"), "{err}");
        let err = parse_config(&MINIMAL.replace("\"weyl_check\"", "\"weyl\"")).unwrap_err().to_string();
        assert!(err.contains("experiment.name"), "{err}");
        let err = parse_config(&MINIMAL.replace("\"scalar_const\"", "\"diagonal\"")).unwrap_err().to_string();
        assert!(err.contains("weight.preset"), "{err}");
    }

    #[test]
    fn json_equivalent() {
        let json = r#"{"measure": {"family": "circle", "size": 512}, "kernel": {"l": 0.75},
                       "weight": {"preset": "scalar_const", "c": 1.0}, "experiment": {"name": "weyl_check"}}"#;
        let a = parse_config(json).unwrap();
        let b = parse_config(MINIMAL).unwrap();
        assert_eq!(a.raw, b.raw);
    }

    #[test]
    fn weight_expressions() {
        let text = r#"
[measure]
family = "circle"
size = 64
[kernel]
alpha = 0.5
[weight]
preset = "hermitian_rotated"
a = 1
b = "2"
angle = "phi"
[experiment]
name = "sign_separation"
"#;
        let c = parse_config(text).unwrap();
        let f = c.weight.field();
        let v = f.eval(&Point::new(vec![0.0, 1.0]));
        // angle pi/2: R diag(1, -2) R^T = diag(-2, 1)
        assert!((v[(0, 0)].re + 2.0).abs() < 1e-12 && (v[(1, 1)].re - 1.0).abs() < 1e-12);

        let step = text.replace("preset = \"hermitian_rotated\"\na = 1\nb = \"2\"\nangle = \"phi\"", "preset = \"scalar_profile\"\nv = \"if(phi < pi, 1, 2)\"");
        let c = parse_config(&step.replace("sign_separation", "perturbation_stability")).unwrap();
        let f = c.weight.field();
        assert_eq!(f.eval(&Point::new(vec![0.0, 1.0]))[(0, 0)].re, 1.0);
        assert_eq!(f.eval(&Point::new(vec![0.0, -1.0]))[(0, 0)].re, 2.0);

        let err = parse_config(&step.replace("if(phi < pi, 1, 2)", "1 + q")).unwrap_err().to_string();
        assert!(err.contains("weight.v"), "{err}");
    }

    #[test]
    fn nilpotent_guards() {
        let text = MINIMAL.replace("preset = \"scalar_const\"\nc = 1.0", "preset = \"nilpotent\"\nv = 1");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.kind, SpectraKind::Svd);
        let err = parse_config(&text.replace("[experiment]", "[spectra]\nkind = \"eigs\"\n[experiment]")).unwrap_err().to_string();
        assert!(err.contains("spectra.kind"), "{err}");
        let err = parse_config(&text.replace("v = 1", "v = 1\nm = 3")).unwrap_err().to_string();
        assert!(err.contains("weight.m"), "{err}");
    }

    #[test]
    fn measure_validation() {
        assert!(parse_config(&MINIMAL.replace("size = 512", "size = 512\nsizes = [8]")).is_err());
        let err = parse_config(&MINIMAL.replace("size = 512", "size = 512\nratio = 0.3")).unwrap_err().to_string();
        assert!(err.contains("measure.ratio"), "{err}");
        let cantor = MINIMAL
            .replace("family = \"circle\"\nsize = 512", "family = \"cantor\"\nsizes = [6, 7]\nratio = 0.6")
            .replace("l = 0.75", "alpha = 0.3");
        let err = parse_config(&cantor).unwrap_err().to_string();
        assert!(err.contains("measure"), "{err}");
        let err = parse_config(&MINIMAL.replace("l = 0.75", "l = 0.75\nN = 3")).unwrap_err().to_string();
        assert!(err.contains("kernel.N"), "{err}");
    }
}
