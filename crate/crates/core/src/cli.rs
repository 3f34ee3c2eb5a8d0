//! Batch driver: subcommands, CSV/JSON writers and run manifests.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::boundary::BoundaryBasis;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fields::{eval_field, eval_points, kernel_densities, micro_modes, project_coeffs, BlochField, Region};
use crate::greens::{green, GreensMethod, GreensParams, C64};
use crate::homogenize::{
    envelope_frequency_dispersion, f_curve, sampling_line, DiracSystem, EnvelopeCurve, EnvelopeProblem,
};
use crate::lattice::{LatticeKind, QuasiMomentum, Vec2};
use crate::operators::Material;
use crate::spectral::{
    band_sweep, cone_samples, dirac_fit, dirac_frequency, dirac_velocity, profile_dips, sigma_ratio_profile, DiracData,
    DiracFrequency,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Exit status for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status for numerical failures.
pub const EXIT_NUMERIC: i32 = 2;

/// Largest tolerated fraction of failed sweep points.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Tolerance for "constant ratio" checks: max |r_i / mean - 1|.
pub const LAW_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Bands,
    Dirac,
    Field,
    Envelope,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Dirac => "dirac",
            Command::Field => "field",
            Command::Envelope => "envelope",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bubbly", version, about = "Bands, Dirac cones and envelopes of bubbly phononic crystals")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 lets the pool decide).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Action {
    /// Band structure along a symmetry path.
    Bands(RunArgs),
    /// Dirac point data and cone fits (honeycomb).
    Dirac(RunArgs),
    /// Bloch mode on a grid and along a line cut.
    Field(RunArgs),
    /// Envelope spatial frequency against the frequency shift.
    Envelope(RunArgs),
    /// Envelope laws of both lattices side by side.
    Compare(RunArgs),
    /// Re-execute a run from its manifest and compare output hashes.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the thread count recorded in the manifest.
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// One output file held in memory until the run finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Set when outputs were produced but too many points failed.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHash {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreensCheck {
    pub method: GreensMethod,
    pub reference: GreensMethod,
    pub draws: usize,
    pub max_relative_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub schema_version: u32,
    pub command: Command,
    pub package_version: String,
    pub threads: usize,
    pub config: RunConfig,
    pub greens_check: GreensCheck,
    pub outputs: Vec<OutputHash>,
}

/// C-style `%.12e`: twelve mantissa digits, signed exponent of at least two digits.
pub fn fmt_e(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

fn csv_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s.into_bytes()
}

fn stamp(schema: &str, body: Value) -> Value {
    let mut v = json!({ "schema": schema, "schema_version": SCHEMA_VERSION });
    if let (Value::Object(head), Value::Object(rest)) = (&mut v, body) {
        head.extend(rest);
    }
    v
}

fn complex_json(z: C64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

/// `max_i |r_i / mean(r) - 1|`.
pub fn ratio_spread(ratios: &[f64]) -> f64 {
    if ratios.is_empty() {
        return f64::NAN;
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max)
}

/// Spreads of `f/eps` and `f/sqrt(eps)` over positive shifts in `[1e-3, 1e-2]`.
pub fn law_spreads(curve: &EnvelopeCurve) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = curve
        .epsilons
        .iter()
        .zip(&curve.f)
        .filter(|(e, _)| (1e-3 - 1e-12..=1e-2 + 1e-12).contains(*e))
        .map(|(&e, &f)| (e, f))
        .collect();
    let lin: Vec<f64> = pts.iter().map(|(e, f)| f / e).collect();
    let sqrt: Vec<f64> = pts.iter().map(|(e, f)| f / e.sqrt()).collect();
    (ratio_spread(&lin), ratio_spread(&sqrt))
}

fn numeric(cfg: &RunConfig) -> Result<(BoundaryBasis, Material)> {
    Ok((cfg.basis()?, cfg.material()?))
}

fn dirac_data(cfg: &RunConfig, basis: &BoundaryBasis, material: &Material) -> Result<DiracData> {
    let h = cfg.solver.dirac_step * basis.lattice.dirac_point().norm();
    dirac_velocity(basis, material, h)
}

fn dirac_block(data: &DiracData, freq: &DiracFrequency) -> Value {
    json!({
        "alpha_star": data.alpha_star.0,
        "omega_star": freq.omega,
        "omega_star_asymptotic": freq.omega_asymptotic,
        "omega_star_leading": data.omega_star,
        "split": freq.split,
        "multiplicity": freq.multiplicity,
        "residual": freq.residual,
        "c1": data.c1,
        "c2_ratio": data.c2_ratio,
        "c": complex_json(data.c_dirac),
        "abs_c": data.c_dirac.norm(),
        "theta_c": data.c_dirac.arg(),
        "lambda0": data.lambda0,
        "slope_theory": data.slope,
        "grad_c1_ratio": data.grad_c1_ratio,
        "pattern_deviation": data.pattern_deviation,
    })
}

/// Compare the configured Green's method against the other one at seeded
/// random points.
pub fn greens_check(cfg: &RunConfig) -> Result<GreensCheck> {
    let lattice = cfg.lattice()?;
    let method = cfg.greens.method;
    let reference = match method {
        GreensMethod::Ewald => GreensMethod::Spectral,
        GreensMethod::Spectral => GreensMethod::Ewald,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    let mut attempts = 0;
    while draws < cfg.greens.check_draws {
        attempts += 1;
        if attempts > 20 * cfg.greens.check_draws + 20 {
            return Err(Error::NotFound { lo: 0.0, hi: 0.0 });
        }
        let s: f64 = rng.random_range(0.05..0.95);
        let t: f64 = rng.random_range(0.05..0.95);
        let alpha = QuasiMomentum::from_vec(lattice.a1 * s + lattice.a2 * t);
        let k = rng.random_range(0.1..2.0) / lattice.constant;
        let x = lattice.l1 * rng.random_range(0.1..0.9) + lattice.l2 * rng.random_range(0.1..0.9);
        let mut p = GreensParams::new(lattice, alpha, k);
        p.spectral_radius = cfg.greens.spectral_radius;
        p.ewald_split = cfg.greens.ewald_split;
        let a = green(&p.with_method(method), x);
        let b = green(&p.with_method(reference), x);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                worst = worst.max((a - b).norm() / b.norm().max(1e-300));
                draws += 1;
            }
            (Err(Error::Resonance { .. }), _) | (_, Err(Error::Resonance { .. })) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(GreensCheck { method, reference, draws, max_relative_difference: worst })
}

pub fn cmd_bands(cfg: &RunConfig) -> Result<RunOutput> {
    let (basis, material) = numeric(cfg)?;
    let path = cfg.path()?;
    let labels = cfg.path_labels()?;
    let bands = band_sweep(&basis, &material, &path, cfg.solver.tol)?;
    let nb = bands.n_bands();
    let mut csv = String::new();
    let header = [
        "arclength", "alpha_x", "alpha_y", "omega1", "omega2", "residual1", "residual2", "omega1_asym", "omega2_asym",
    ];
    csv_row(&mut csv, &header.map(String::from));
    let pick = |v: &Vec<Vec<f64>>, b: usize, i: usize| if b < nb { v[b][i] } else { f64::NAN };
    for i in 0..bands.path.len() {
        let a = bands.path[i].0;
        let row = [
            bands.arclength[i],
            a[0],
            a[1],
            pick(&bands.omega, 0, i),
            pick(&bands.omega, 1, i),
            pick(&bands.residual, 0, i),
            pick(&bands.residual, 1, i),
            pick(&bands.omega_asymptotic, 0, i),
            pick(&bands.omega_asymptotic, 1, i),
        ];
        csv_row(&mut csv, &row.map(fmt_e));
    }
    let waypoints: Vec<Value> = labels
        .iter()
        .zip(&path.waypoint_indices)
        .map(|(l, &i)| json!({ "label": l, "index": i, "arclength": path.arclength[i] }))
        .collect();
    let mut body = json!({
        "lattice": cfg.lattice.kind,
        "n_bands": nb,
        "n_points": bands.path.len(),
        "waypoints": waypoints,
        "failures": bands.failures,
        "excluded": bands.excluded,
        "failure_fraction": bands.failure_fraction(),
    });
    let obj = body.as_object_mut().expect("object");
    match cfg.lattice.kind {
        LatticeKind::Honeycomb if labels.iter().any(|l| l.starts_with('K')) => {
            let data = dirac_data(cfg, &basis, &material)?;
            let freq = dirac_frequency(&basis, &material, cfg.solver.tol)?;
            obj.insert("dirac".into(), dirac_block(&data, &freq));
        }
        LatticeKind::Square => {
            obj.insert("first_band".into(), square_gap(&basis, &material, &bands.omega[0], cfg)?);
            let gap = obj["first_band"]["max_at_m"].as_bool() == Some(true)
                && obj["first_band"]["no_mode_above"].as_bool() == Some(true);
            obj.insert("bandgap_above_first_band".into(), Value::Bool(gap));
        }
        _ => {}
    }
    let degraded = bands.failure_fraction() > MAX_FAILURE_FRACTION;
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "bands.csv".into(), bytes: csv.into_bytes() },
            Artifact { name: "bands.json".into(), bytes: json_bytes(&stamp("bubbly.bands", body)) },
        ],
        degraded,
    })
}

/// Frequencies scanned above the first band at `M`, in units of its value.
const GAP_WINDOW: (f64, f64) = (1.01, 3.0);

fn square_gap(basis: &BoundaryBasis, material: &Material, band: &[f64], cfg: &RunConfig) -> Result<Value> {
    let lat = basis.lattice;
    let freq = dirac_frequency(basis, material, cfg.solver.tol)?;
    let max = band.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let max_at_m = freq.omega >= max * (1.0 - 1e-9);
    let (lo, hi) = (freq.omega * GAP_WINDOW.0, freq.omega * GAP_WINDOW.1);
    let profile = sigma_ratio_profile(basis, material, lat.m_point(), lo, hi, 80)?;
    let dips = profile_dips(&profile);
    Ok(json!({
        "omega_m": freq.omega,
        "omega_m_asymptotic": freq.omega_asymptotic,
        "path_max": max,
        "max_at_m": max_at_m,
        "window": [lo, hi],
        "sigma_ratio_min": profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        "dips": dips.iter().map(|d| d.0).collect::<Vec<_>>(),
        "no_mode_above": dips.is_empty(),
    }))
}

pub fn cmd_dirac(cfg: &RunConfig) -> Result<RunOutput> {
    if cfg.lattice.kind != LatticeKind::Honeycomb {
        return Err(Error::Config("dirac needs lattice.kind = \"honeycomb\"".into()));
    }
    let (basis, material) = numeric(cfg)?;
    let data = dirac_data(cfg, &basis, &material)?;
    let freq = dirac_frequency(&basis, &material, cfg.solver.tol)?;
    let a = data.alpha_star.norm();
    let radii: Vec<f64> = cfg.dirac.radii.iter().map(|r| r * a).collect();
    let mut csv = String::new();
    csv_row(
        &mut csv,
        &["theta", "radius", "omega_lower", "omega_upper", "omega_lower_asym", "omega_upper_asym"].map(String::from),
    );
    let mut dirs = Vec::new();
    let mut slopes = Vec::new();
    let mut mismatch: f64 = 0.0;
    for j in 0..cfg.dirac.directions {
        let theta = 2.0 * PI * j as f64 / cfg.dirac.directions as f64;
        let cone = cone_samples(&basis, &material, &freq, theta, &radii, cfg.solver.tol)?;
        for i in 0..radii.len() {
            let row = [
                theta,
                radii[i],
                cone.lower[i],
                cone.upper[i],
                cone.lower_asymptotic[i],
                cone.upper_asymptotic[i],
            ];
            csv_row(&mut csv, &row.map(fmt_e));
        }
        let fit = dirac_fit(&radii, &cone.lower, &cone.upper)?;
        let mean = 0.5 * (fit.slope_plus + fit.slope_minus);
        mismatch = mismatch.max((fit.slope_plus / fit.slope_minus - 1.0).abs());
        slopes.push(mean);
        dirs.push(json!({
            "theta": theta,
            "slope_plus": fit.slope_plus,
            "slope_minus": fit.slope_minus,
            "curvature_plus": fit.curvature_plus,
            "curvature_minus": fit.curvature_minus,
            "r2_plus": fit.r2_plus,
            "r2_minus": fit.r2_minus,
            "omega_star_fit": fit.omega_star_fit,
        }));
    }
    let mean_slope = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let mut body = dirac_block(&data, &freq);
    let obj = body.as_object_mut().expect("object");
    obj.insert("lattice".into(), json!(cfg.lattice.kind));
    obj.insert("delta".into(), json!(material.delta()));
    obj.insert("radii".into(), json!(radii));
    obj.insert("directions".into(), Value::Array(dirs));
    obj.insert("mean_slope".into(), json!(mean_slope));
    obj.insert("isotropy_spread".into(), json!(ratio_spread(&slopes)));
    obj.insert("max_slope_mismatch".into(), json!(mismatch));
    obj.insert("slope_error".into(), json!((mean_slope / data.slope - 1.0).abs()));
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "dirac.json".into(), bytes: json_bytes(&stamp("bubbly.dirac", body)) },
            Artifact { name: "dirac_cone.csv".into(), bytes: csv.into_bytes() },
        ],
        degraded: false,
    })
}

pub fn cmd_field(cfg: &RunConfig) -> Result<RunOutput> {
    let (basis, material) = numeric(cfg)?;
    let lat = basis.lattice;
    let problem = EnvelopeProblem::new(&basis, &material, cfg.direction(), cfg.solver.tol)?;
    let sol = envelope_frequency_dispersion(&problem, cfg.field.epsilon)?;
    let dens = kernel_densities(&basis, &material, sol.alpha, sol.omega)?;
    let field = BlochField::new(&basis, &material, &dens)?;
    let (origin, period) = sampling_line(&problem)?;
    let fc = &cfg.field;
    let region = Region { x0: 0.0, x1: fc.cells[0] as f64 * period, y0: 0.0, y1: fc.cells[1] as f64 * lat.constant };
    let grid = eval_field(&field, region, fc.resolution[0], fc.resolution[1])?;
    let scale = grid.max_abs();
    let mut csv = String::new();
    csv_row(&mut csv, &["x", "y", "re_u", "im_u", "inside"].map(String::from));
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let u = grid.at(ix, iy) / scale;
            let inside = u8::from(grid.inside[iy * grid.nx() + ix]);
            csv_row(&mut csv, &[fmt_e(grid.x[ix]), fmt_e(grid.y[iy]), fmt_e(u.re), fmt_e(u.im), inside.to_string()]);
        }
    }
    let h = period / fc.line_per_cell as f64;
    let s: Vec<f64> = (0..fc.line_cells * fc.line_per_cell).map(|i| i as f64 * h).collect();
    let points: Vec<Vec2> = s.iter().map(|&s| origin + problem.direction * s).collect();
    let line = eval_points(&field, &points);
    let mut lcsv = String::new();
    csv_row(&mut lcsv, &["s", "x", "y", "re_u", "im_u", "inside"].map(String::from));
    for ((s, p), v) in s.iter().zip(&points).zip(&line) {
        let u = v.value / scale;
        csv_row(&mut lcsv, &[fmt_e(*s), fmt_e(p.x), fmt_e(p.y), fmt_e(u.re), fmt_e(u.im), u8::from(v.inside).to_string()]);
    }
    let mut body = json!({
        "lattice": cfg.lattice.kind,
        "epsilon": sol.epsilon,
        "omega": sol.omega,
        "band": sol.band,
        "alpha": sol.alpha.0,
        "alpha_tilde": sol.t,
        "f": sol.f,
        "sigma_ratio": dens.sigma_ratio,
        "region": [region.x0, region.x1, region.y0, region.y1],
        "resolution": fc.resolution,
        "line_origin": [origin.x, origin.y],
        "line_period": period,
        "normalization": scale,
    });
    if lat.kind == LatticeKind::Honeycomb {
        let modes = micro_modes(&basis)?;
        // far from alpha* the mode leaves the two-mode space; report null then
        let coeffs = match project_coeffs(&dens, &modes.psi) {
            Ok(c) => json!({
                "a": complex_json(c.a),
                "b": complex_json(c.b),
                "relative_phase": c.relative_phase(),
                "residual": c.residual,
            }),
            Err(Error::BadFit(_)) => Value::Null,
            Err(e) => return Err(e),
        };
        body.as_object_mut().expect("object").insert("coefficients".into(), coeffs);
    }
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "field.csv".into(), bytes: csv.into_bytes() },
            Artifact { name: "field_line.csv".into(), bytes: lcsv.into_bytes() },
            Artifact { name: "field.json".into(), bytes: json_bytes(&stamp("bubbly.field", body)) },
        ],
        degraded: false,
    })
}

/// Envelope curve and its summary for one configuration.
pub fn envelope_run(cfg: &RunConfig) -> Result<(EnvelopeCurve, Value)> {
    let (basis, material) = numeric(cfg)?;
    let problem = EnvelopeProblem::new(&basis, &material, cfg.direction(), cfg.solver.tol)?;
    let env = &cfg.envelope;
    let curve = f_curve(&problem, &cfg.epsilons(), &env.fft_at, env.fft_cells, env.fft_per_cell)?;
    let (_, period) = sampling_line(&problem)?;
    let bin = 1.0 / (env.fft_cells as f64 * period);
    let (lin, sqrt) = law_spreads(&curve);
    let mut summary = json!({
        "lattice": cfg.lattice.kind,
        "omega_critical": problem.critical.omega,
        "direction": [problem.direction.x, problem.direction.y],
        "fit": curve.fit,
        "fft_bin": bin,
        "linear_ratio_spread": lin,
        "sqrt_ratio_spread": sqrt,
        "skipped": cfg.epsilons().len() - curve.epsilons.len(),
    });
    if cfg.lattice.kind == LatticeKind::Honeycomb {
        let data = dirac_data(cfg, &basis, &material)?;
        let sys = DiracSystem::from_dirac(&data);
        let theory = 1.0 / (2.0 * PI * sys.c.norm() * sys.lambda0 * material.delta().sqrt());
        let max_f = curve.f.iter().cloned().fold(0.0, f64::max);
        let obj = summary.as_object_mut().expect("object");
        obj.insert("slope_theory".into(), json!(theory));
        obj.insert("slope_error".into(), json!((curve.fit.coefficient / theory - 1.0).abs()));
        obj.insert("intercept_fraction".into(), json!(curve.fit.intercept.abs() / max_f));
    }
    Ok((curve, summary))
}

fn envelope_csv(curve: &EnvelopeCurve) -> Vec<u8> {
    let mut csv = String::new();
    csv_row(&mut csv, &["epsilon", "f_dispersion", "f_fft"].map(String::from));
    for i in 0..curve.epsilons.len() {
        let fft = curve.f_fft[i].unwrap_or(f64::NAN);
        csv_row(&mut csv, &[fmt_e(curve.epsilons[i]), fmt_e(curve.f[i]), fmt_e(fft)]);
    }
    let footer = serde_json::to_string(&curve.fit).expect("fit serializes");
    let _ = writeln!(csv, "# {footer}");
    csv.into_bytes()
}

fn curve_json(curve: &EnvelopeCurve, summary: &Value) -> Value {
    let mut v = summary.clone();
    let obj = v.as_object_mut().expect("object");
    obj.insert("epsilons".into(), json!(curve.epsilons));
    obj.insert("f".into(), json!(curve.f));
    obj.insert("f_fft".into(), json!(curve.f_fft));
    obj.insert("method".into(), json!(curve.method));
    v
}

pub fn cmd_envelope(cfg: &RunConfig) -> Result<RunOutput> {
    let (curve, summary) = envelope_run(cfg)?;
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "envelope.csv".into(), bytes: envelope_csv(&curve) },
            Artifact {
                name: "envelope.json".into(),
                bytes: json_bytes(&stamp("bubbly.envelope", curve_json(&curve, &summary))),
            },
        ],
        degraded: false,
    })
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<RunOutput> {
    let hc = cfg.for_kind(LatticeKind::Honeycomb);
    let sq = cfg.for_kind(LatticeKind::Square);
    let (hcurve, hsum) = envelope_run(&hc)?;
    let (scurve, ssum) = envelope_run(&sq)?;
    let (hl, hs) = law_spreads(&hcurve);
    let (sl, ss) = law_spreads(&scurve);
    let checks = json!({
        "threshold": LAW_SPREAD,
        "honeycomb_linear_holds": hl <= LAW_SPREAD,
        "honeycomb_sqrt_holds": hs <= LAW_SPREAD,
        "square_linear_holds": sl <= LAW_SPREAD,
        "square_sqrt_holds": ss <= LAW_SPREAD,
        "mutually_exclusive": hl <= LAW_SPREAD && hs > LAW_SPREAD && ss <= LAW_SPREAD && sl > LAW_SPREAD,
    });
    let body = json!({
        "honeycomb": curve_json(&hcurve, &hsum),
        "square": curve_json(&scurve, &ssum),
        "exclusion": checks,
    });
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "compare.json".into(), bytes: json_bytes(&stamp("bubbly.compare", body)) },
            Artifact { name: "envelope_honeycomb.csv".into(), bytes: envelope_csv(&hcurve) },
            Artifact { name: "envelope_square.csv".into(), bytes: envelope_csv(&scurve) },
        ],
        degraded: false,
    })
}

pub fn run_command(command: Command, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match command {
        Command::Bands => cmd_bands(cfg),
        Command::Dirac => cmd_dirac(cfg),
        Command::Field => cmd_field(cfg),
        Command::Envelope => cmd_envelope(cfg),
        Command::Compare => cmd_compare(cfg),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run `command` on `threads` workers (0: pool default), write its outputs
/// and the manifest into `out`.
pub fn execute(command: Command, cfg: &RunConfig, out: &Path, threads: usize) -> Result<(Manifest, bool)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let (output, check) = pool.install(|| -> Result<_> { Ok((run_command(command, cfg)?, greens_check(cfg)?)) })?;
    std::fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    for a in &output.artifacts {
        std::fs::write(out.join(&a.name), &a.bytes)?;
        outputs.push(OutputHash { file: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() });
    }
    let manifest = Manifest {
        schema: "bubbly.manifest".into(),
        schema_version: SCHEMA_VERSION,
        command,
        package_version: env!("CARGO_PKG_VERSION").into(),
        threads,
        config: cfg.clone(),
        greens_check: check,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text)?;
    Ok((manifest, output.degraded))
}

/// Re-execute the run recorded in `manifest_path` into `out`; true when
/// every output hash matches.
pub fn rerun(manifest_path: &Path, out: &Path, threads: Option<usize>) -> Result<bool> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", manifest_path.display())))?;
    let old: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad manifest: {e}")))?;
    if old.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!("manifest schema version {}", old.schema_version)));
    }
    old.config.validate()?;
    let (new, _) = execute(old.command, &old.config, out, threads.unwrap_or(old.threads))?;
    Ok(new.outputs == old.outputs)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Entry point shared by the binary and the tests; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (command, args) = match cli.action {
        Action::Bands(a) => (Command::Bands, a),
        Action::Dirac(a) => (Command::Dirac, a),
        Action::Field(a) => (Command::Field, a),
        Action::Envelope(a) => (Command::Envelope, a),
        Action::Compare(a) => (Command::Compare, a),
        Action::Rerun { manifest, out, threads } => {
            return match rerun(&manifest, &out, threads) {
                Ok(true) => 0,
                Ok(false) => {
                    eprintln!("error: rerun outputs differ from {}", manifest.display());
                    EXIT_NUMERIC
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            };
        }
    };
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    match execute(command, &cfg, &args.out, args.threads) {
        Ok((_, false)) => 0,
        Ok((_, true)) => {
            eprintln!("error: more than {:.0}% of sweep points failed", MAX_FAILURE_FRACTION * 100.0);
            EXIT_NUMERIC
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_like_printf() {
        assert_eq!(fmt_e(1.5e-3), "1.500000000000e-03");
        assert_eq!(fmt_e(-2.0), "-2.000000000000e+00");
        assert_eq!(fmt_e(0.0), "0.000000000000e+00");
        assert_eq!(fmt_e(6.02214076e123), "6.022140760000e+123");
        assert_eq!(fmt_e(f64::NAN), "nan");
    }

    #[test]
    fn spread_is_relative_to_the_mean() {
        assert_eq!(ratio_spread(&[1.0, 1.0]), 0.0);
        assert!((ratio_spread(&[0.9, 1.1]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn greens_check_is_seeded() {
        let cfg = RunConfig::default();
        let a = greens_check(&cfg).unwrap();
        assert_eq!(a, greens_check(&cfg).unwrap());
        assert_eq!(a.draws, cfg.greens.check_draws);
        assert!(a.max_relative_difference < 1e-8, "{a:?}");
    }
}
