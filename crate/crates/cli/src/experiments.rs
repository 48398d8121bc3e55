//! The named experiment catalogue. Each experiment fills a report and
//! returns the CSV files it produced.

use std::f64::consts::PI;

use anyhow::{anyhow, Context, Result};
use bslab_core::kernel::{assemble_with, sqrt_factor, SqrtFactor};
use bslab_core::linalg;
use bslab_core::measure::{ahlfors_audit, log_radii, DiscreteMeasure, Family};
use bslab_core::spectral::{
    brute_force_identity_check, compare_counting_by, default_lambda_grid, default_window_for,
    estimate_coefficients, estimate_from_sequence, random_identity_instance, sandwich, signed_part, signed_spectrum,
    singular_spectrum, AsymptoticWindowEstimate, Sign, SpectralResult,
};
use bslab_core::special::gamma;
use bslab_core::weight::{abs_matrix, mollify, weight_norm_theta, MatrixWeightField};
use bslab_core::weyl::{
    circle_fourier_oracle, is_two_sided_only, kappa, predict, predicted_vs_measured, rho_flat, WeylPart,
    WeylPrediction,
};

use crate::config::{ExperimentConfig, ExperimentKind, WeightConfig};
use crate::report::ExperimentReport;

pub type Files = Vec<(String, Vec<u8>)>;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    report: ExperimentReport,
    files: Files,
}

struct Prepared {
    measure: DiscreteMeasure,
    g: SqrtFactor,
}

fn csv(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory cannot fail");
    buf
}

impl<'a> Ctx<'a> {
    fn label(&self, size: usize) -> String {
        if self.cfg.measure.is_fractal() {
            format!("depth{size}")
        } else {
            format!("K{size}")
        }
    }

    fn file(&mut self, name: String, bytes: Vec<u8>) {
        self.report.files.push(name.clone());
        self.files.push((name, bytes));
    }

    fn prepare(&mut self, size: usize) -> Result<Prepared> {
        let label = self.label(size);
        let measure = self
            .cfg
            .measure
            .build(size)
            .with_context(|| format!("stage measure ({label})"))?;
        let kernel = assemble_with(&measure, &self.cfg.spec, self.cfg.diag_method)
            .with_context(|| format!("stage kernel assembly ({label})"))?;
        let g = sqrt_factor(&kernel, self.cfg.clip_rel).with_context(|| format!("stage square root ({label})"))?;
        self.report.set(format!("{label}.atoms"), measure.len());
        self.report.set(format!("{label}.clipped_eigenvalues"), g.clip_count);
        self.report.set(format!("{label}.kernel_min_eigenvalue"), g.spectrum_floor);
        if let Some(w) = &g.warning {
            self.report.set(format!("{label}.warning"), w);
        }
        Ok(Prepared { measure, g })
    }

    fn spectrum_csv(&mut self, name: String, result: &SpectralResult) {
        let r = result.clone().with_theta(self.cfg.spec.theta).with_digest(self.report.digest.clone());
        self.file(name, csv(|b| r.write_csv(b)));
    }

    fn window_for(&self, result: &SpectralResult, sign: Sign) -> Result<(usize, usize)> {
        match self.cfg.window {
            Some(w) => Ok(w),
            None => Ok(default_window_for(result, sign)?),
        }
    }

    fn record_estimate(&mut self, prefix: &str, e: &AsymptoticWindowEstimate) {
        self.report.set(format!("{prefix}.j_lo"), e.j_lo);
        self.report.set(format!("{prefix}.j_hi"), e.j_hi);
        self.report.set(format!("{prefix}.c_mean"), e.c_mean);
        self.report.set(format!("{prefix}.c_inf"), e.c_inf);
        self.report.set(format!("{prefix}.c_sup"), e.c_sup);
    }

    fn record_prediction(&mut self, prefix: &str, p: &WeylPrediction) {
        for (k, v) in p.key_values(&format!("{prefix}.prediction.")) {
            self.report.set(k, v);
        }
    }

    fn tolerance(&self, default: f64) -> f64 {
        self.cfg.params().tolerance.unwrap_or(default)
    }
}

fn common_values(cfg: &ExperimentConfig, r: &mut ExperimentReport) {
    let sizes: Vec<String> = cfg.measure.sizes.iter().map(|s| s.to_string()).collect();
    r.set("family", cfg.measure.family);
    r.set(if cfg.measure.is_fractal() { "depths" } else { "sizes" }, sizes.join(","));
    if cfg.measure.is_fractal() {
        r.set("ratio", cfg.measure.ratio);
    }
    if let Some(f) = cfg.measure.point_mass {
        r.set("point_mass", f);
    }
    r.set("N", cfg.spec.ambient_dim);
    r.set("s", cfg.spec.s);
    r.set("l", cfg.spec.order);
    r.set("alpha", cfg.spec.alpha);
    r.set("theta", cfg.spec.theta);
    r.set("diag_method", cfg.diag_method);
    r.set("clip_rel", cfg.clip_rel);
    r.set("weight", cfg.weight.describe());
    r.set("m", cfg.weight.m());
    r.set("spectra_kind", cfg.kind.as_str());
    if let Some((lo, hi)) = cfg.window {
        r.set("window_override", format!("{lo},{hi}"));
    }
}

/// Runs the configured experiment; the report carries no timing yet.
pub fn execute(cfg: &ExperimentConfig, digest: &str) -> Result<(ExperimentReport, Files)> {
    let mut ctx = Ctx {
        cfg,
        report: ExperimentReport::new(cfg.experiment.as_str(), digest),
        files: Vec::new(),
    };
    common_values(cfg, &mut ctx.report);
    match cfg.experiment {
        ExperimentKind::Spectrum => spectrum(&mut ctx)?,
        ExperimentKind::WeylCheck => weyl_check(&mut ctx)?,
        ExperimentKind::SignSeparation => sign_separation(&mut ctx)?,
        ExperimentKind::SingularWeyl => singular_weyl(&mut ctx)?,
        ExperimentKind::LowerBoundFractal => lower_bound_fractal(&mut ctx)?,
        ExperimentKind::PerturbationStability => perturbation_stability(&mut ctx)?,
        ExperimentKind::Ahlfors => ahlfors(&mut ctx)?,
        ExperimentKind::OracleCircle => oracle_circle(&mut ctx)?,
        ExperimentKind::BruteForce => brute_force(&mut ctx)?,
    }
    Ok((ctx.report, ctx.files))
}

/// Signed and/or singular spectrum of `G V G` per the configured kind.
fn spectra_of(
    ctx: &Ctx<'_>,
    p: &Prepared,
    field: &MatrixWeightField,
    label: &str,
) -> Result<(Option<SpectralResult>, Option<SpectralResult>)> {
    let s = sandwich(&p.g, field, &p.measure).with_context(|| format!("stage sandwich ({label})"))?;
    let signed = if ctx.cfg.kind.wants_eigs() {
        Some(signed_spectrum(&s).with_context(|| format!("stage signed spectrum ({label})"))?)
    } else {
        None
    };
    let singular = if ctx.cfg.kind.wants_svd() {
        Some(singular_spectrum(&s).with_context(|| format!("stage singular spectrum ({label})"))?)
    } else {
        None
    };
    Ok((signed, singular))
}

/// The spectrum that carries `n(lambda)`: singular values when computed, else `|eigenvalues|`.
fn modulus_spectrum(signed: &Option<SpectralResult>, singular: &Option<SpectralResult>) -> SpectralResult {
    singular.clone().or_else(|| signed.clone()).expect("at least one spectrum")
}

fn spectrum(ctx: &mut Ctx<'_>) -> Result<()> {
    let field = ctx.cfg.weight.field();
    for &size in &ctx.cfg.measure.sizes.clone() {
        let label = ctx.label(size);
        let p = ctx.prepare(size)?;
        ctx.file(format!("measure_{label}.csv"), csv(|b| p.measure.write_csv(b)));
        ctx.file(format!("weight_{label}.csv"), csv(|b| field.write_samples_csv(&p.measure, b)));
        let (signed, singular) = spectra_of(ctx, &p, &field, &label)?;
        if let Some(r) = &signed {
            ctx.spectrum_csv(format!("spectrum_{label}_signed.csv"), r);
            ctx.report.set(format!("{label}.positive_count"), signed_part(r, Sign::Plus)?.len());
            ctx.report.set(format!("{label}.negative_count"), signed_part(r, Sign::Minus)?.len());
        }
        if let Some(r) = &singular {
            ctx.spectrum_csv(format!("spectrum_{label}_singular.csv"), r);
        }
        let r = modulus_spectrum(&signed, &singular);
        let (lo, hi) = ctx.window_for(&r, Sign::All)?;
        if hi > lo && hi <= r.len() {
            let e = estimate_coefficients(&r, ctx.cfg.spec.theta, lo, hi, Sign::All)?;
            ctx.record_estimate(&label, &e);
        }
    }
    Ok(())
}

/// Oracle eigenvalues scaled by a constant scalar weight, with multiplicity `m`.
fn scaled_oracle(alpha: f64, c: f64, m: usize, count: usize) -> Result<(Vec<f64>, f64)> {
    let n_max = count / 2 + 2;
    let o = circle_fourier_oracle(alpha, n_max)?;
    let mut vals: Vec<f64> = o
        .sorted_eigenvalues()
        .into_iter()
        .flat_map(|l| std::iter::repeat_n((c * l).abs(), m))
        .collect();
    vals.truncate(count);
    Ok((vals, o.quadrature_error_bound))
}

fn weyl_check(ctx: &mut Ctx<'_>) -> Result<()> {
    let field = ctx.cfg.weight.field();
    let tol = ctx.tolerance(if ctx.cfg.measure.family == Family::Sphere { 0.15 } else { 0.05 });
    let fractal = ctx.cfg.measure.is_fractal();
    ctx.report.set(
        "prediction_label",
        match ctx.cfg.measure.family {
            _ if fractal => "two-sided band only",
            Family::Sphere => "model prediction",
            _ => "flat-model prediction",
        },
    );
    for &size in &ctx.cfg.measure.sizes.clone() {
        let label = ctx.label(size);
        let p = ctx.prepare(size)?;
        let (signed, singular) = spectra_of(ctx, &p, &field, &label)?;
        let r = modulus_spectrum(&signed, &singular);
        ctx.spectrum_csv(format!("spectrum_{label}.csv"), &r);
        let (lo, hi) = ctx.window_for(&r, Sign::All)?;
        let e = estimate_coefficients(&r, ctx.cfg.spec.theta, lo, hi, Sign::All).context("stage window estimate")?;
        ctx.record_estimate(&label, &e);
        let two_sided = is_two_sided_only(&e);
        ctx.report.set(format!("{label}.two_sided_only"), two_sided);
        if fractal {
            ctx.report.check(format!("{label}.c_inf_positive"), e.c_inf, "> 0", e.c_inf > 0.0);
            continue;
        }
        let pred = predict(&p.measure, &field, &ctx.cfg.spec).context("stage prediction")?;
        ctx.record_prediction(&label, &pred);
        let cmp = predicted_vs_measured(&pred, WeylPart::Abs, &e, tol)?;
        ctx.report.set(format!("{label}.dev_inf"), cmp.dev_inf);
        ctx.report.set(format!("{label}.dev_sup"), cmp.dev_sup);
        ctx.report.check_abs_at_most(format!("{label}.weyl_c_mean"), cmp.dev_mean, tol);

        if let (Family::Circle, WeylConfigScalar::Const { c, m }) = (ctx.cfg.measure.family, scalar_const(&ctx.cfg.weight)) {
            if ctx.cfg.spec.alpha < 1.0 && c != 0.0 {
                let otol = ctx.cfg.params().oracle_tolerance.unwrap_or(0.01);
                let (oracle, bound) = scaled_oracle(ctx.cfg.spec.alpha, c, m, hi).context("stage circle oracle")?;
                let measured = signed_part(&r, Sign::All)?;
                let worst = oracle
                    .iter()
                    .zip(&measured)
                    .map(|(o, v)| (v - o).abs() / o)
                    .fold(0.0f64, f64::max);
                ctx.report.set(format!("{label}.oracle_ranks"), hi);
                ctx.report.set(format!("{label}.oracle_quadrature_bound"), bound);
                ctx.report.check_at_most(format!("{label}.oracle_rank"), worst, otol);
            }
        }
    }
    Ok(())
}

enum WeylConfigScalar {
    Const { c: f64, m: usize },
    Other,
}

fn scalar_const(w: &WeightConfig) -> WeylConfigScalar {
    match w {
        WeightConfig::ScalarConst { m, c } => WeylConfigScalar::Const { c: *c, m: *m },
        _ => WeylConfigScalar::Other,
    }
}

fn sign_separation(ctx: &mut Ctx<'_>) -> Result<()> {
    let field = ctx.cfg.weight.field();
    let plus_field = field.positive_part()?;
    let minus_field = field.negative_part()?;
    let theta = ctx.cfg.spec.theta;
    let tol = ctx.tolerance(0.15);
    let fraction = ctx.cfg.params().compare_fraction.unwrap_or(0.10);
    let mut sizes = ctx.cfg.measure.sizes.clone();
    sizes.sort_unstable();
    let mut compares = Vec::new();
    let mut last = None;
    for &size in &sizes {
        let label = ctx.label(size);
        let p = ctx.prepare(size)?;
        let spectrum_of = |f: &MatrixWeightField, what: &str| -> Result<SpectralResult> {
            let s = sandwich(&p.g, f, &p.measure).with_context(|| format!("stage sandwich {what} ({label})"))?;
            signed_spectrum(&s).with_context(|| format!("stage signed spectrum {what} ({label})"))
        };
        let full = spectrum_of(&field, "V")?;
        let plus = spectrum_of(&plus_field, "V+")?;
        let minus = spectrum_of(&minus_field, "V-")?;
        ctx.spectrum_csv(format!("spectrum_{label}_signed.csv"), &full);
        ctx.spectrum_csv(format!("spectrum_{label}_plus_part.csv"), &plus);
        ctx.spectrum_csv(format!("spectrum_{label}_minus_part.csv"), &minus);

        let pred = predict(&p.measure, &field, &ctx.cfg.spec).context("stage prediction")?;
        ctx.record_prediction(&label, &pred);
        let mut devs = Vec::new();
        let mut comps = Vec::new();
        for (sign, part, other, name) in [
            (Sign::Plus, WeylPart::Plus, &plus, "plus"),
            (Sign::Minus, WeylPart::Minus, &minus, "minus"),
        ] {
            let (lo, hi) = ctx.window_for(&full, sign)?;
            let e = estimate_coefficients(&full, theta, lo, hi, sign)
                .with_context(|| format!("stage {name} window estimate ({label})"))?;
            ctx.record_estimate(&format!("{label}.{name}"), &e);
            let cmp = predicted_vs_measured(&pred, part, &e, tol)?;
            ctx.report.set(format!("{label}.{name}.dev_mean"), cmp.dev_mean);
            let seq = signed_part(&full, sign)?;
            let grid = default_lambda_grid(&seq, lo, hi)?;
            let d = compare_counting_by(&full, sign, other, Sign::All, theta, &grid)?;
            ctx.report.set(format!("{label}.{name}.compare_counting"), d);
            devs.push((name, cmp.dev_mean, e.c_mean));
            comps.push(d);
        }
        let ratio = devs[1].2 / devs[0].2;
        ctx.report.set(format!("{label}.minus_over_plus"), ratio);
        ctx.report.set(format!("{label}.minus_over_plus_predicted"), pred.coefficient(WeylPart::Minus)? / pred.coefficient(WeylPart::Plus)?);
        compares.push(comps[0]);
        last = Some((label, devs, comps[0], pred.coefficient(WeylPart::Plus)?));
    }
    let (label, devs, compare, plus_coeff) = last.ok_or_else(|| anyhow!("sign_separation needs at least one size"))?;
    for (name, dev, _) in devs {
        ctx.report.check_abs_at_most(format!("{label}.{name}_coefficient"), dev, tol);
    }
    ctx.report.set("compare_reference", "predicted plus coefficient");
    ctx.report.check_at_most(format!("{label}.compare_counting_fraction"), compare / plus_coeff, fraction);
    if compares.len() > 1 {
        let worst_step = compares.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        ctx.report.check("compare_counting_decreasing", worst_step, "< 0 per refinement", worst_step < 0.0);
    }
    Ok(())
}

fn singular_weyl(ctx: &mut Ctx<'_>) -> Result<()> {
    let field = ctx.cfg.weight.field();
    let tol = ctx.tolerance(0.15);
    let mut sizes = ctx.cfg.measure.sizes.clone();
    sizes.sort_unstable();
    let mut last = None;
    for &size in &sizes {
        let label = ctx.label(size);
        let p = ctx.prepare(size)?;
        let s = sandwich(&p.g, &field, &p.measure).with_context(|| format!("stage sandwich ({label})"))?;
        // the signed route is only legal for Hermitian weights
        let rejected = signed_spectrum(&s).is_err();
        ctx.report.set(format!("{label}.signed_route_rejected"), rejected);
        let r = singular_spectrum(&s).with_context(|| format!("stage singular spectrum ({label})"))?;
        ctx.spectrum_csv(format!("spectrum_{label}_singular.csv"), &r);
        let (lo, hi) = ctx.window_for(&r, Sign::All)?;
        let e = estimate_coefficients(&r, ctx.cfg.spec.theta, lo, hi, Sign::All)?;
        ctx.record_estimate(&label, &e);
        let pred = predict(&p.measure, &field, &ctx.cfg.spec).context("stage prediction")?;
        ctx.record_prediction(&label, &pred);
        let cmp = predicted_vs_measured(&pred, WeylPart::Abs, &e, tol)?;
        last = Some((label, cmp.dev_mean, rejected || field.is_hermitian()));
    }
    let (label, dev, guarded) = last.ok_or_else(|| anyhow!("singular_weyl needs at least one size"))?;
    ctx.report.check_abs_at_most(format!("{label}.singular_coefficient"), dev, tol);
    ctx.report.check("signed_route_guard", if guarded { 1.0 } else { 0.0 }, "rejects non-Hermitian", guarded);
    Ok(())
}

fn lower_bound_fractal(ctx: &mut Ctx<'_>) -> Result<()> {
    let field = ctx.cfg.weight.field();
    let lower = ctx.cfg.params().lower_fraction.unwrap_or(0.25);
    let stability = ctx.cfg.params().sup_stability.unwrap_or(0.20);
    let mut depths = ctx.cfg.measure.sizes.clone();
    depths.sort_unstable();
    let mut rows = Vec::new();
    let mut table = String::from("depth,atoms,j_lo,j_hi,c_mean,c_inf,c_sup\n");
    for &d in &depths {
        let label = ctx.label(d);
        let p = ctx.prepare(d)?;
        let (signed, singular) = spectra_of(ctx, &p, &field, &label)?;
        let r = modulus_spectrum(&signed, &singular);
        ctx.spectrum_csv(format!("spectrum_{label}.csv"), &r);
        let (lo, hi) = ctx.window_for(&r, Sign::All)?;
        let e = estimate_coefficients(&r, ctx.cfg.spec.theta, lo, hi, Sign::All)
            .with_context(|| format!("stage window estimate ({label})"))?;
        ctx.record_estimate(&label, &e);
        ctx.report.set(format!("{label}.sup_over_inf"), e.c_sup / e.c_inf);
        ctx.report.set(format!("{label}.two_sided_only"), is_two_sided_only(&e));
        table.push_str(&format!("{d},{},{lo},{hi},{},{},{}\n", p.measure.len(), e.c_mean, e.c_inf, e.c_sup));
        rows.push(e);
    }
    ctx.file("fractal_bounds.csv".into(), table.into_bytes());
    let deepest = rows.last().ok_or_else(|| anyhow!("lower_bound_fractal needs at least one depth"))?;
    let ref_mean = deepest.c_mean;
    let min_inf_ratio = rows.iter().map(|e| e.c_inf / ref_mean).fold(f64::INFINITY, f64::min);
    ctx.report.check("lower_bound", min_inf_ratio, format!("> {lower} (c_inf / deepest c_mean)"), min_inf_ratio > lower);
    let sup_max = rows.iter().map(|e| e.c_sup).fold(f64::NEG_INFINITY, f64::max);
    let sup_min = rows.iter().map(|e| e.c_sup).fold(f64::INFINITY, f64::min);
    let spread = sup_max / sup_min - 1.0;
    ctx.report.set("c_sup_max", sup_max);
    ctx.report.check("c_sup_finite", sup_max, "finite", sup_max.is_finite());
    ctx.report.check_at_most("c_sup_stability", spread, stability);
    let flagged = rows.iter().all(is_two_sided_only);
    ctx.report.set("two_sided_only", flagged);
    ctx.report.set("weyl_limit_claimed", false);
    Ok(())
}

fn perturbation_stability(ctx: &mut Ctx<'_>) -> Result<()> {
    let field = ctx.cfg.weight.field();
    let theta = ctx.cfg.spec.theta;
    let size = *ctx.cfg.measure.sizes.iter().max().expect("non-empty sizes");
    let label = ctx.label(size);
    let p = ctx.prepare(size)?;
    let final_gap_max = ctx.tolerance(0.05);
    let norm_ratio_max = ctx.cfg.params().norm_ratio_max.unwrap_or(0.01);
    let eps0 = ctx.cfg.params().eps0.unwrap_or(8.0 * p.measure.finest_extent());
    let halvings = ctx.cfg.params().halvings.unwrap_or(4);
    ctx.report.set("eps0", eps0);
    ctx.report.set("halvings", halvings);

    let spectrum_of = |f: &MatrixWeightField, what: &str| -> Result<SpectralResult> {
        let s = sandwich(&p.g, f, &p.measure).with_context(|| format!("stage sandwich {what}"))?;
        if s.hermitian {
            signed_spectrum(&s).with_context(|| format!("stage signed spectrum {what}"))
        } else {
            singular_spectrum(&s).with_context(|| format!("stage singular spectrum {what}"))
        }
    };
    let base = spectrum_of(&field, "V")?;
    ctx.spectrum_csv(format!("spectrum_{label}.csv"), &base);
    let (lo, hi) = ctx.window_for(&base, Sign::All)?;
    let e0 = estimate_coefficients(&base, theta, lo, hi, Sign::All)?;
    ctx.record_estimate(&label, &e0);
    let pred = predict(&p.measure, &field, &ctx.cfg.spec)?;
    ctx.record_prediction(&label, &pred);
    let grid = default_lambda_grid(&signed_part(&base, Sign::All)?, lo, hi)?;
    let v_norm = weight_norm_theta(&field, &p.measure, theta).context("stage weight norm")?;

    let mut table = String::from("eps,norm_ratio,c_mean,gap,compare_counting,y_deviation\n");
    let mut gaps = Vec::new();
    let mut last_ratio = f64::NAN;
    for k in 0..=halvings {
        let eps = eps0 / 2f64.powi(k as i32);
        let mo = mollify(&field, &p.measure, eps).context("stage mollification")?;
        let diff = field.difference(&mo.field)?;
        let ratio = weight_norm_theta(&diff, &p.measure, theta)? / v_norm;
        let r = spectrum_of(&mo.field, "V_eps")?;
        let e = estimate_coefficients(&r, theta, lo, hi, Sign::All)?;
        let gap = (e.c_mean - e0.c_mean).abs() / e0.c_mean;
        let d = compare_counting_by(&base, Sign::All, &r, Sign::All, theta, &grid)?;
        let mut y_dev: f64 = 0.0;
        for a in p.measure.atoms() {
            let ve = mo.field.eval(&a.point);
            let dy = &mo.modulus.eval(&a.point) - &abs_matrix(ve.as_ref())?;
            y_dev = y_dev.max(linalg::op_norm(dy.as_ref())?);
        }
        table.push_str(&format!("{eps},{ratio},{},{gap},{d},{y_dev}\n", e.c_mean));
        gaps.push(gap);
        last_ratio = ratio;
        ctx.report.check_at_most(format!("eps{k}.y_within_eps"), y_dev, eps);
    }
    ctx.file("perturbation.csv".into(), table.into_bytes());
    let worst_rise = gaps.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ctx.report.set("gaps", gaps.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(","));
    // allow jitter of a tenth of a percent between consecutive widths
    ctx.report.check("gap_trend", worst_rise, "<= 0.001 per halving", worst_rise <= 1e-3);
    ctx.report.check_at_most("final_norm_ratio", last_ratio, norm_ratio_max);
    ctx.report.check_at_most("final_gap", *gaps.last().expect("at least one width"), final_gap_max);
    Ok(())
}

fn ahlfors(ctx: &mut Ctx<'_>) -> Result<()> {
    let params = ctx.cfg.params().clone();
    let sizes = ctx.cfg.measure.sizes.clone();
    let measures: Vec<DiscreteMeasure> = sizes
        .iter()
        .map(|&s| ctx.cfg.measure.build(s).with_context(|| format!("stage measure ({})", ctx.label(s))))
        .collect::<Result<_>>()?;
    // radii common to every size so the audits are comparable
    let r_min = params
        .r_min
        .unwrap_or_else(|| measures.iter().map(|m| 4.0 * m.finest_extent()).fold(0.0, f64::max));
    let r_max = params
        .r_max
        .unwrap_or_else(|| measures.iter().map(|m| 0.5 * m.diameter()).fold(f64::INFINITY, f64::min));
    let radii = log_radii(r_min, r_max, params.radii.unwrap_or(12));
    let n_centers = params.n_centers.unwrap_or(64);
    ctx.report.set("r_min", r_min);
    ctx.report.set("r_max", r_max);
    ctx.report.set("radii", radii.len());
    ctx.report.set("n_centers", n_centers);

    let mut table = String::from("size,center,radius,ratio\n");
    let mut spreads = Vec::new();
    for (&size, m) in sizes.iter().zip(&measures) {
        let label = ctx.label(size);
        let a = ahlfors_audit(m, n_centers, &radii).with_context(|| format!("stage Ahlfors audit ({label})"))?;
        for smp in &a.samples {
            table.push_str(&format!("{size},{},{},{}\n", smp.center, smp.radius, smp.ratio));
        }
        ctx.report.set(format!("{label}.c_minus_hat"), a.c_minus_hat);
        ctx.report.set(format!("{label}.c_plus_hat"), a.c_plus_hat);
        ctx.report.set(format!("{label}.spread"), a.spread());
        ctx.report.set(format!("{label}.upper_regularity_failure"), a.upper_regularity_failure);
        if let Some([lo, hi]) = params.bounds {
            ctx.report.check(format!("{label}.lower_bound"), a.c_minus_hat, format!(">= {lo}"), a.c_minus_hat >= lo);
            ctx.report.check(format!("{label}.upper_bound"), a.c_plus_hat, format!("<= {hi}"), a.c_plus_hat <= hi);
        }
        if let Some(expect) = params.expect_point_mass {
            let flagged = a.upper_regularity_failure;
            ctx.report.check(
                format!("{label}.point_mass_flag"),
                if flagged { 1.0 } else { 0.0 },
                format!("== {expect}"),
                flagged == expect,
            );
        }
        spreads.push(a.spread());
    }
    ctx.file("ahlfors.csv".into(), table.into_bytes());
    let max_spread = spreads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_spread = spreads.iter().copied().fold(f64::INFINITY, f64::min);
    ctx.report.set("spread_max", max_spread);
    ctx.report.set("spread_min", min_spread);
    if let Some(limit) = params.max_spread {
        ctx.report.check_at_most("spread", max_spread, limit);
    }
    Ok(())
}

fn oracle_circle(ctx: &mut Ctx<'_>) -> Result<()> {
    let alpha = ctx.cfg.spec.alpha;
    let theta = ctx.cfg.spec.theta;
    let n_max = ctx.cfg.params().n_max.unwrap_or(512);
    let tol = ctx.tolerance(0.02);
    let o = circle_fourier_oracle(alpha, n_max).context("stage circle oracle")?;
    ctx.file("oracle_circle.csv".into(), csv(|b| o.write_csv(b)));
    ctx.report.set("n_max", n_max);
    ctx.report.set("quadrature_error_bound", o.quadrature_error_bound);
    ctx.report.check_at_most("quadrature_error_bound", o.quadrature_error_bound, 1e-10);

    let seq = o.sorted_eigenvalues();
    let (lo, hi) = ctx.cfg.window.unwrap_or(((n_max / 8).max(1), n_max));
    let e = estimate_from_sequence(&seq, theta, lo, hi).context("stage oracle window estimate")?;
    ctx.record_estimate("oracle", &e);
    let rho = rho_flat(1.0, alpha)?;
    let predicted = rho * 2.0 * PI;
    ctx.report.set("rho_flat", rho);
    ctx.report.set("predicted", predicted);
    let dev = (e.c_mean - predicted) / predicted;
    ctx.report.set("dev_mean", dev);
    ctx.report.check_abs_at_most("oracle_weyl", dev, tol);

    let mut worst: f64 = 0.0;
    for a in [0.3, 0.5, 0.7] {
        let reflect = 2.0 * gamma(1.0 - a) * (PI * a / 2.0).sin();
        let diff = (kappa(1.0, a)? - reflect).abs();
        ctx.report.set(format!("kappa_identity.alpha{a}"), diff);
        worst = worst.max(diff);
    }
    ctx.report.check_at_most("kappa_identity", worst, 1e-10);
    Ok(())
}

fn brute_force(ctx: &mut Ctx<'_>) -> Result<()> {
    let n = ctx.cfg.params().instances.unwrap_or(20);
    let seed = ctx.cfg.params().seed.unwrap_or(0);
    ctx.report.set("instances", n);
    ctx.report.set("seed", seed);
    let mut table = String::from("instance,label,K,m,alpha,eigen_deviation,singular_deviation_g,singular_deviation_gq,passed\n");
    let mut worst: f64 = 0.0;
    let mut failures = 0usize;
    let mut labels = std::collections::BTreeSet::new();
    for i in 0..n as u64 {
        let inst = random_identity_instance(seed + i).context("stage instance generation")?;
        let r = brute_force_identity_check(&inst.measure, &inst.spec, &inst.field, seed + i)
            .with_context(|| format!("stage identity check (instance {i})"))?;
        labels.insert(inst.label);
        table.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{}\n",
            inst.label, r.atoms, r.m, inst.spec.alpha, r.eigen_deviation, r.singular_deviation_g, r.singular_deviation_gq, r.passed
        ));
        worst = worst.max(r.eigen_deviation).max(r.singular_deviation_g).max(r.singular_deviation_gq);
        if !r.passed {
            failures += 1;
            ctx.report.set(format!("instance{i}.offending"), r.offending.join("; "));
        }
    }
    ctx.file("brute_force.csv".into(), table.into_bytes());
    ctx.report.set("labels", labels.into_iter().collect::<Vec<_>>().join(","));
    ctx.report.set("failures", failures);
    ctx.report.check_at_most("identity_deviation", worst, 1e-8);
    Ok(())
}
