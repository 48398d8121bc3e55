//! Discrete approximations of Ahlfors-regular measures.
//!
//! Every constructor places one atom per construction cell: the atom sits at
//! the cell center (segments, graphs, Cantor intervals) or at a lattice
//! point (circle, sphere), and carries the exact mass of its cell. Total mass
//! and the self-similar scaling are therefore exact at each level.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, io_err, Error, Result};

/// A point of the ambient space `R^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Quadrature cell: a point carrying the mass of its cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Point,
    /// Mass of the cell.
    pub weight: f64,
    /// Diameter of the cell.
    pub extent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Circle,
    Segment,
    LipschitzGraph,
    Sphere,
    Cantor,
    CantorDust,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Circle => "circle",
            Family::Segment => "segment",
            Family::LipschitzGraph => "lipschitz_graph",
            Family::Sphere => "sphere",
            Family::Cantor => "cantor",
            Family::CantorDust => "cantor_dust",
        }
    }

    /// Families whose cells are 1-dimensional arcs with uniform spacing.
    pub fn is_one_dimensional(self) -> bool {
        matches!(self, Family::Circle | Family::Segment | Family::LipschitzGraph)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "circle" => Family::Circle,
            "segment" => Family::Segment,
            "lipschitz_graph" => Family::LipschitzGraph,
            "sphere" => Family::Sphere,
            "cantor" => Family::Cantor,
            "cantor_dust" => Family::CantorDust,
            other => return Err(invalid(format!("unknown measure family `{other}`"))),
        })
    }
}

/// Construction data of a self-similar measure: `copies` similar pieces of
/// equal mass, each contracted by `ratio`, iterated `depth` times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimilar {
    pub ratio: f64,
    pub depth: u32,
    pub copies: usize,
}

impl SelfSimilar {
    /// Side length of a deepest construction cell.
    pub fn cell_side(&self) -> f64 {
        self.ratio.powi(self.depth as i32)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    ambient_dim: usize,
    hausdorff_dim: f64,
    atoms: Vec<Atom>,
    total_mass: f64,
    family: Family,
    diameter: f64,
    self_similar: Option<SelfSimilar>,
}

impl DiscreteMeasure {
    /// Builds a measure from explicit atoms, checking the structural invariants.
    pub fn from_atoms(
        family: Family,
        ambient_dim: usize,
        hausdorff_dim: f64,
        atoms: Vec<Atom>,
        diameter: f64,
    ) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(invalid("ambient dimension must be positive"));
        }
        if !(hausdorff_dim > 0.0 && hausdorff_dim <= ambient_dim as f64) {
            return Err(invalid(format!(
                "Hausdorff dimension {hausdorff_dim} must lie in (0, {ambient_dim}]"
            )));
        }
        if atoms.is_empty() {
            return Err(Error::DegenerateMeasure("measure has no atoms".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.point.dim() != ambient_dim {
                return Err(invalid(format!(
                    "atom {i} has {} coordinates, expected {ambient_dim}",
                    a.point.dim()
                )));
            }
            if !(a.weight > 0.0 && a.extent > 0.0) {
                return Err(invalid(format!("atom {i} must have positive weight and extent")));
            }
        }
        let total_mass = atoms.iter().map(|a| a.weight).sum();
        Ok(Self {
            ambient_dim,
            hausdorff_dim,
            atoms,
            total_mass,
            family,
            diameter,
            self_similar: None,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn hausdorff_dim(&self) -> f64 {
        self.hausdorff_dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn self_similar(&self) -> Option<SelfSimilar> {
        self.self_similar
    }

    pub fn finest_extent(&self) -> f64 {
        self.atoms.iter().map(|a| a.extent).fold(f64::INFINITY, f64::min)
    }

    /// Mass of the closed ball `B(x, r)`: sum of weights of atoms within distance `r`.
    pub fn ball_mass(&self, center: &Point, radius: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.point.dist(center) <= radius)
            .map(|a| a.weight)
            .sum()
    }

    /// Writes the measure as CSV: a metadata preamble, a header, one row per atom.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "# family={},N={},s={},total_mass={}",
            self.family, self.ambient_dim, self.hausdorff_dim, self.total_mass
        )?;
        let mut header: Vec<String> = (0..self.ambient_dim).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        header.push("extent".into());
        writeln!(out, "{}", header.join(","))?;
        for a in &self.atoms {
            let mut row: Vec<String> = a.point.coords.iter().map(|c| c.to_string()).collect();
            row.push(a.weight.to_string());
            row.push(a.extent.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    /// Parses the CSV produced by [`DiscreteMeasure::write_csv`].
    ///
    /// Self-similar construction data is not part of the file format, so a
    /// re-read Cantor measure carries no [`SelfSimilar`] metadata.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let preamble = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| invalid("missing `# ` metadata preamble"))?;
        let mut family = None;
        let mut n = None;
        let mut s = None;
        for kv in preamble.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("malformed preamble entry `{kv}`")))?;
            match k.trim() {
                "family" => family = Some(v.trim().parse::<Family>()?),
                "N" => n = Some(parse_num::<usize>(v)?),
                "s" => s = Some(parse_num::<f64>(v)?),
                "total_mass" => {}
                other => return Err(invalid(format!("unknown preamble key `{other}`"))),
            }
        }
        let (family, n, s) = match (family, n, s) {
            (Some(f), Some(n), Some(s)) => (f, n, s),
            _ => return Err(invalid("preamble must define family, N and s")),
        };
        lines.next().ok_or_else(|| invalid("missing CSV header"))?;
        let mut atoms = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals = line
                .split(',')
                .map(parse_num::<f64>)
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != n + 2 {
                return Err(invalid(format!("row `{line}` has {} fields, expected {}", vals.len(), n + 2)));
            }
            atoms.push(Atom {
                point: Point::new(vals[..n].to_vec()),
                weight: vals[n],
                extent: vals[n + 1],
            });
        }
        let diameter = bounding_diameter(&atoms);
        Self::from_atoms(family, n, s, atoms, diameter)
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| invalid(format!("cannot parse number `{}`", v.trim())))
}

fn bounding_diameter(atoms: &[Atom]) -> f64 {
    let n = atoms.first().map_or(0, |a| a.point.dim());
    let mut sq = 0.0;
    for d in 0..n {
        let (lo, hi) = atoms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
            (lo.min(a.point.coords[d]), hi.max(a.point.coords[d]))
        });
        sq += (hi - lo) * (hi - lo);
    }
    sq.sqrt()
}

fn require_positive(k: usize) -> Result<()> {
    if k == 0 {
        Err(invalid("number of atoms must be at least 1"))
    } else {
        Ok(())
    }
}

/// `K` equally spaced atoms on the unit circle in `R^2`, arclength measure.
pub fn make_circle(k: usize) -> Result<DiscreteMeasure> {
    require_positive(k)?;
    let h = 2.0 * PI / k as f64;
    let atoms = (0..k)
        .map(|i| {
            let t = h * i as f64;
            Atom {
                point: Point::new(vec![t.cos(), t.sin()]),
                weight: h,
                extent: h,
            }
        })
        .collect();
    DiscreteMeasure::from_atoms(Family::Circle, 2, 1.0, atoms, 2.0)
}

/// Midpoint atoms of `K` equal cells of the segment `[0,1] x {0}` in `R^2`.
pub fn make_segment(k: usize) -> Result<DiscreteMeasure> {
    require_positive(k)?;
    let h = 1.0 / k as f64;
    let atoms = (0..k)
        .map(|i| Atom {
            point: Point::new(vec![(i as f64 + 0.5) * h, 0.0]),
            weight: h,
            extent: h,
        })
        .collect();
    DiscreteMeasure::from_atoms(Family::Segment, 2, 1.0, atoms, 1.0)
}

/// Continuous piecewise-linear profile on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    /// Knots `(x, y)` with strictly increasing `x` from 0 to 1.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid("a profile needs at least two knots"));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(invalid("profile knots must span exactly [0, 1]"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("profile knots must have strictly increasing x"));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(invalid("profile knots must be finite"));
        }
        Ok(Self { knots })
    }

    pub fn flat() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 0.0)],
        }
    }

    /// The zigzag `|x - 1/2|`.
    pub fn zigzag() -> Self {
        Self {
            knots: vec![(0.0, 0.5), (0.5, 0.0), (1.0, 0.5)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self
            .knots
            .windows(2)
            .position(|w| x <= w[1].0)
            .unwrap_or(self.knots.len() - 2);
        let (x0, y0) = self.knots[i];
        let (x1, y1) = self.knots[i + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Graph vertices over `[a, b]`: both ends plus interior knots.
    fn vertices(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut v = vec![(a, self.eval(a))];
        v.extend(self.knots.iter().copied().filter(|&(x, _)| x > a && x < b));
        v.push((b, self.eval(b)));
        v
    }
}

fn polyline_length(v: &[(f64, f64)]) -> f64 {
    v.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
}

fn polyline_diameter(v: &[(f64, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in v.iter().enumerate() {
        for q in &v[i + 1..] {
            d = d.max((p.0 - q.0).hypot(p.1 - q.1));
        }
    }
    d
}

/// Graph of a Lipschitz profile over `[0,1]`, arclength measure, uniform
/// parameter cells.
pub fn make_lipschitz_graph(k: usize, profile: &PiecewiseLinear) -> Result<DiscreteMeasure> {
    require_positive(k)?;
    let h = 1.0 / k as f64;
    let atoms = (0..k)
        .map(|i| {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let verts = profile.vertices(a, b);
            let mid = 0.5 * (a + b);
            Atom {
                point: Point::new(vec![mid, profile.eval(mid)]),
                weight: polyline_length(&verts),
                extent: polyline_diameter(&verts),
            }
        })
        .collect();
    let diameter = polyline_diameter(&profile.vertices(0.0, 1.0));
    DiscreteMeasure::from_atoms(Family::LipschitzGraph, 2, 1.0, atoms, diameter)
}

/// Fibonacci lattice on the unit sphere `S^2` with equal weights `4 pi / K`.
pub fn make_sphere(k: usize) -> Result<DiscreteMeasure> {
    require_positive(k)?;
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    let kf = k as f64;
    let atoms = (0..k)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / kf;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            let p = [rho * phi.cos(), rho * phi.sin(), z];
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            Atom {
                point: Point::new(p.iter().map(|c| c / n).collect()),
                weight: 4.0 * PI / kf,
                extent: 4.0 / kf.sqrt(),
            }
        })
        .collect();
    DiscreteMeasure::from_atoms(Family::Sphere, 3, 2.0, atoms, 2.0)
}

fn check_cantor_params(ratio: f64, depth: u32) -> Result<()> {
    if !(ratio > 0.0 && ratio < 0.5) {
        return Err(invalid(format!(
            "Cantor ratio {ratio} must lie in (0, 1/2); the construction degenerates otherwise"
        )));
    }
    if depth == 0 {
        return Err(invalid("Cantor depth must be at least 1"));
    }
    if depth > 24 {
        return Err(invalid(format!("Cantor depth {depth} exceeds the supported maximum 24")));
    }
    Ok(())
}

/// Centers of the depth-level construction intervals of the middle-gap
/// Cantor set with contraction `ratio`, in increasing order.
pub fn cantor_centers(ratio: f64, depth: u32) -> Vec<f64> {
    let mut left = vec![0.0];
    let mut len = 1.0;
    for _ in 0..depth {
        let shift = len * (1.0 - ratio);
        left = left.iter().flat_map(|&a| [a, a + shift]).collect();
        len *= ratio;
    }
    left.into_iter().map(|a| a + 0.5 * len).collect()
}

pub fn cantor_dimension(ratio: f64) -> f64 {
    2f64.ln() / (1.0 / ratio).ln()
}

/// Self-similar Cantor measure on `[0, 1]` (ambient `R^1`), `2^depth` atoms.
pub fn make_cantor(ratio: f64, depth: u32) -> Result<DiscreteMeasure> {
    check_cantor_params(ratio, depth)?;
    let w = 0.5f64.powi(depth as i32);
    let side = ratio.powi(depth as i32);
    let atoms = cantor_centers(ratio, depth)
        .into_iter()
        .map(|x| Atom {
            point: Point::new(vec![x]),
            weight: w,
            extent: side,
        })
        .collect();
    let mut m = DiscreteMeasure::from_atoms(Family::Cantor, 1, cantor_dimension(ratio), atoms, 1.0)?;
    m.self_similar = Some(SelfSimilar {
        ratio,
        depth,
        copies: 2,
    });
    Ok(m)
}

/// Product of two Cantor constructions in `R^2`, `4^depth` atoms.
pub fn make_cantor_dust(ratio: f64, depth: u32) -> Result<DiscreteMeasure> {
    check_cantor_params(ratio, depth)?;
    if depth > 12 {
        return Err(invalid(format!("Cantor dust depth {depth} exceeds the supported maximum 12")));
    }
    let centers = cantor_centers(ratio, depth);
    let w = 0.25f64.powi(depth as i32);
    let side = ratio.powi(depth as i32);
    let mut atoms = Vec::with_capacity(centers.len() * centers.len());
    for &x in &centers {
        for &y in &centers {
            atoms.push(Atom {
                point: Point::new(vec![x, y]),
                weight: w,
                extent: side * std::f64::consts::SQRT_2,
            });
        }
    }
    let s = 2.0 * cantor_dimension(ratio);
    let mut m = DiscreteMeasure::from_atoms(Family::CantorDust, 2, s, atoms, std::f64::consts::SQRT_2)?;
    m.self_similar = Some(SelfSimilar {
        ratio,
        depth,
        copies: 4,
    });
    Ok(m)
}

/// One audited ball: center atom index, radius, and `mu(B(x,r)) / r^s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AhlforsSample {
    pub center: usize,
    pub radius: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct AhlforsReport {
    pub s: f64,
    pub c_minus_hat: f64,
    pub c_plus_hat: f64,
    pub samples: Vec<AhlforsSample>,
    /// Set when some center's ratio peaks at the smallest radius far above
    /// the typical ratio, the signature of a point mass.
    pub upper_regularity_failure: bool,
}

impl AhlforsReport {
    pub fn spread(&self) -> f64 {
        self.c_plus_hat / self.c_minus_hat
    }
}

/// Blow-up factor over the median ratio that marks a point mass.
pub const POINT_MASS_BLOWUP: f64 = 8.0;

/// `count` logarithmically spaced radii between `lo` and `hi` inclusive.
pub fn log_radii(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Default audit radii: log-spaced over `[4 * finest extent, diameter / 2]`.
pub fn default_audit_radii(measure: &DiscreteMeasure, count: usize) -> Vec<f64> {
    log_radii(4.0 * measure.finest_extent(), 0.5 * measure.diameter(), count)
}

/// Samples `mu(B(x,r)) / r^s` over evenly strided atom centers and the
/// given radii; returns the extreme ratios as empirical Ahlfors constants.
pub fn ahlfors_audit(measure: &DiscreteMeasure, n_centers: usize, radii: &[f64]) -> Result<AhlforsReport> {
    if radii.is_empty() {
        return Err(invalid("ahlfors_audit needs at least one radius"));
    }
    if n_centers == 0 {
        return Err(invalid("ahlfors_audit needs at least one center"));
    }
    let lo = 4.0 * measure.finest_extent();
    let hi = measure.diameter();
    if let Some(r) = radii.iter().find(|&&r| !(r >= lo * (1.0 - 1e-12) && r <= hi)) {
        return Err(invalid(format!(
            "audit radius {r} outside the admissible range [{lo}, {hi}]"
        )));
    }
    let s = measure.hausdorff_dim();
    let k = measure.len();
    let n_centers = n_centers.min(k);
    let mut samples = Vec::with_capacity(n_centers * radii.len());
    for c in 0..n_centers {
        let center = c * k / n_centers;
        let x = &measure.atoms()[center].point;
        for &r in radii {
            samples.push(AhlforsSample {
                center,
                radius: r,
                ratio: measure.ball_mass(x, r) / r.powf(s),
            });
        }
    }
    let c_minus_hat = samples.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let c_plus_hat = samples.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);

    let mut sorted: Vec<f64> = samples.iter().map(|p| p.ratio).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let r_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let upper_regularity_failure = radii.len() > 1
        && samples.chunks(radii.len()).any(|per_center| {
            let peak = per_center
                .iter()
                .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                .expect("non-empty chunk");
            peak.radius == r_min && peak.ratio > POINT_MASS_BLOWUP * median
        });

    Ok(AhlforsReport {
        s,
        c_minus_hat,
        c_plus_hat,
        samples,
        upper_regularity_failure,
    })
}

/// Moves a fraction of the total mass onto one atom, rescaling the rest so
/// the total is unchanged. The result is no longer self-similar.
pub fn with_point_mass(measure: &DiscreteMeasure, index: usize, fraction: f64) -> Result<DiscreteMeasure> {
    if index >= measure.len() {
        return Err(invalid(format!("point-mass atom {index} out of range 0..{}", measure.len())));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("point-mass fraction {fraction} must lie in (0, 1)")));
    }
    let total = measure.total_mass();
    let rest = total - measure.atoms[index].weight;
    if !(rest > 0.0) {
        return Err(Error::DegenerateMeasure("a single atom cannot host a point mass".into()));
    }
    let scale = (1.0 - fraction) * total / rest;
    let atoms = measure
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| Atom {
            weight: if i == index { fraction * total } else { a.weight * scale },
            ..a.clone()
        })
        .collect();
    DiscreteMeasure::from_atoms(
        measure.family,
        measure.ambient_dim,
        measure.hausdorff_dim,
        atoms,
        measure.diameter,
    )
}
