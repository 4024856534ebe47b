//! The `eqm` command-line front end: economy loading, verification sweeps,
//! curvature reports, geodesic traces, selection experiments and uniqueness
//! checks, emitting CSV or JSON for plotting.
//!
//! Exit codes: 0 success, 1 validation failure, 2 tolerance breach,
//! 3 numerical error (singular metric, non-convergence, domain exit).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::economy::EconomyModel;
use crate::error::{Error, Result};
use crate::geodesic::{exp_map, g_speed, TangentVector};
use crate::geometry::{christoffel_at, curvature_at, metric_at, metric_partials, riemann_coefficients_at};
use crate::oracle::{christoffel_numeric, curvature_numeric, metric_numeric, FdConfig};
use crate::selection::{find_equilibria_detailed, select, uniqueness_check, PerturbedState};

/// Keep sampled points this far from the domain boundary so that every
/// finite-difference stencil of the verification suite stays certified.
const SAMPLE_T_MARGIN: f64 = 1e-3;

/// Point budget for the doubly-nested curvature oracle, the one comparison
/// whose cost per point dominates the sweep.
const CURVATURE_ORACLE_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub enum Command {
    /// Oracle-vs-closed-form suite; nonzero exit on any tolerance breach.
    Verify,
    /// Seeded curvature sweep, one CSV/JSON row per sample.
    Curvature,
    /// Integrate one geodesic and emit the accepted-step trace.
    Geodesic { t0: f64, alpha: Vec<f64>, velocity: Vec<f64> },
    /// One selection experiment.
    Select { t0: f64, alpha: Vec<f64>, omega_prime: Vec<f64>, refine: bool },
    /// All equilibria over a fixed endowment.
    Equilibria { endowment: Vec<f64> },
    /// Zero-curvature/uniqueness equivalence report.
    Uniqueness,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub economy_path: PathBuf,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
    pub samples: usize,
    pub format: OutputFormat,
}

/// Executes the configured command, prints human-readable results to stdout
/// and returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Json(_) | Error::Io(_) | Error::Domain { .. } => 1,
        Error::SingularMetric { .. }
        | Error::DegeneratePlane { .. }
        | Error::DomainExit { .. }
        | Error::Stiffness { .. }
        | Error::NonConvergence { .. }
        | Error::RefinementStall { .. } => 3,
    }
}

fn execute(config: &RunConfig) -> Result<i32> {
    if config.samples == 0 {
        return Err(Error::Validation("--samples must be at least 1".into()));
    }
    let json = std::fs::read_to_string(&config.economy_path)?;
    let model = EconomyModel::from_json(&json)?;
    match &config.command {
        Command::Verify => verify(config, &model),
        Command::Curvature => curvature_sweep(config, &model),
        Command::Geodesic { t0, alpha, velocity } => geodesic_trace(config, &model, *t0, alpha, velocity),
        Command::Select { t0, alpha, omega_prime, refine } => {
            select_experiment(config, &model, *t0, alpha, omega_prime, *refine)
        }
        Command::Equilibria { endowment } => equilibria_report(config, &model, endowment),
        Command::Uniqueness => uniqueness_report(config, &model),
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

/// Seeded sample of chart coordinates, uniform over the certified t-range
/// (shrunk by [`SAMPLE_T_MARGIN`]) times `[-1, 1]^{L-1}`.
fn sample_coords(model: &EconomyModel, samples: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = model.domain();
    let (lo, hi) = (t0 + SAMPLE_T_MARGIN, t1 - SAMPLE_T_MARGIN);
    (0..samples)
        .map(|_| {
            let t = rng.random_range(lo..=hi);
            let alpha = (0..model.goods() - 1).map(|_| rng.random_range(-1.0..=1.0)).collect();
            (t, alpha)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct VerifyRow {
    comparison: String,
    samples: usize,
    max_error: f64,
    tolerance: String,
    pass: bool,
    worst_t: f64,
    worst_alpha: Vec<f64>,
}

struct Tracker {
    max_err: f64,
    worst: (f64, Vec<f64>),
}

impl Tracker {
    fn new() -> Self {
        Tracker { max_err: 0.0, worst: (f64::NAN, Vec::new()) }
    }

    fn update(&mut self, err: f64, at: (f64, &[f64])) {
        if err > self.max_err || self.worst.0.is_nan() {
            self.max_err = self.max_err.max(err);
            self.worst = (at.0, at.1.to_vec());
        }
    }

    fn row(&self, comparison: &str, samples: usize, tol: f64, tol_desc: &str) -> VerifyRow {
        VerifyRow {
            comparison: comparison.to_string(),
            samples,
            max_error: self.max_err,
            tolerance: tol_desc.to_string(),
            pass: self.max_err <= tol,
            worst_t: self.worst.0,
            worst_alpha: self.worst.1.clone(),
        }
    }
}

fn verify(config: &RunConfig, model: &EconomyModel) -> Result<i32> {
    let cfg = FdConfig::default();
    let coords = sample_coords(model, config.samples, config.seed);
    let l = model.goods();

    let mut metric_cmp = Tracker::new();
    let mut inverse_cmp = Tracker::new();
    let mut christoffel_cmp = Tracker::new();
    let mut christoffel_zero = Tracker::new();
    let mut contraction_cmp = Tracker::new();
    let mut compat_cmp = Tracker::new();
    let mut nonpos = Tracker::new();
    let mut flat_planes = Tracker::new();

    for (t, alpha) in &coords {
        let at = (*t, alpha.as_slice());
        let pt = model.embed(*t, alpha)?;
        let md = metric_at(model, &pt)?;

        let num = metric_numeric(model, &pt, &cfg)?;
        metric_cmp.update((&md.g - &num).abs().max(), at);

        let lu_inv = md.g.clone().try_inverse().ok_or(Error::SingularMetric {
            det_g: md.det_g,
            t: *t,
        })?;
        inverse_cmp.update((&md.g_inv - lu_inv).abs().max(), at);

        let ch = christoffel_at(model, &pt)?;
        let ch_num = christoffel_numeric(model, &pt, &cfg)?;
        let mut worst = 0.0f64;
        for k in 0..l {
            worst = worst.max((ch.upper(k) - ch_num.upper(k)).abs().max());
        }
        christoffel_cmp.update(worst, at);
        let mut worst = 0.0f64;
        for k in 0..l {
            for i in 1..l {
                for j in 1..l {
                    worst = worst.max(ch.get(k, i, j).abs());
                }
            }
        }
        christoffel_zero.update(worst, at);

        let r = riemann_coefficients_at(model, &pt)?;
        let cr = curvature_at(model, &pt)?;
        let mut worst = 0.0f64;
        for i in 1..l {
            let contr = r.inner(&md.g, 0, i, 0, i);
            let want = cr.inner_r[i - 1];
            let err = if want == 0.0 { (contr - want).abs() } else { (contr - want).abs() / want.abs() };
            worst = worst.max(err);
        }
        contraction_cmp.update(worst, at);

        nonpos.update(cr.sec_0i.max().max(0.0), at);
        flat_planes.update(cr.sec_ij_max_abs, at);

        let parts = metric_partials(model, &pt)?;
        let mut worst = 0.0f64;
        for k in 0..l {
            for i in 0..l {
                for j in 0..l {
                    let mut rhs = 0.0;
                    for m in 0..l {
                        rhs += ch.get(m, k, i) * md.g[(m, j)] + ch.get(m, k, j) * md.g[(i, m)];
                    }
                    worst = worst.max((parts[k][(i, j)] - rhs).abs());
                }
            }
        }
        compat_cmp.update(worst, at);
    }

    // The doubly-nested curvature oracle dominates runtime; cap its points.
    let curv_samples = config.samples.min(CURVATURE_ORACLE_CAP);
    let mut curvature_cmp = Tracker::new();
    for (t, alpha) in coords.iter().take(curv_samples) {
        let at = (*t, alpha.as_slice());
        let pt = model.embed(*t, alpha)?;
        let md = metric_at(model, &pt)?;
        let cr = curvature_at(model, &pt)?;
        let r_num = curvature_numeric(model, &pt, &cfg)?;
        let mut worst = 0.0f64;
        for i in 1..l {
            let contr = r_num.inner(&md.g, 0, i, 0, i);
            let want = cr.inner_r[i - 1];
            let tol = 1e-4 * want.abs() + 1e-8;
            worst = worst.max((contr - want).abs() / tol);
        }
        curvature_cmp.update(worst, at);
    }

    let rows = vec![
        metric_cmp.row("metric: closed form vs central differences", config.samples, 1e-6, "1e-6"),
        inverse_cmp.row("metric inverse: closed form vs LU", config.samples, 1e-10, "1e-10"),
        christoffel_cmp.row("christoffel: closed form vs nested differences", config.samples, 1e-6, "1e-6"),
        christoffel_zero.row("christoffel: nonzero lower indices vanish", config.samples, 1e-12, "1e-12"),
        contraction_cmp.row("curvature: contraction vs closed form (relative)", config.samples, 1e-9, "1e-9"),
        curvature_cmp.row(
            "curvature: closed form vs nested differences (err/tol)",
            curv_samples,
            1.0,
            "1e-4 rel + 1e-8 abs",
        ),
        nonpos.row("sectional curvature K(X0,Xi) above zero", config.samples, 1e-12, "1e-12"),
        flat_planes.row("sectional curvature |K(Xi,Xj)|", config.samples, 1e-10, "1e-10"),
        compat_cmp.row("metric compatibility of the connection", config.samples, 1e-6, "1e-6"),
    ];

    let mut all_pass = true;
    println!("{:<58} {:>8} {:>13} {:>20} {:>7}", "comparison", "samples", "max error", "tolerance", "result");
    for row in &rows {
        println!(
            "{:<58} {:>8} {:>13.4e} {:>20} {:>7}",
            row.comparison,
            row.samples,
            row.max_error,
            row.tolerance,
            if row.pass { "pass" } else { "FAIL" }
        );
        if !row.pass {
            all_pass = false;
            println!(
                "    worst point: t = {}, alpha = {:?}",
                row.worst_t, row.worst_alpha
            );
        }
    }

    if let Some(path) = &config.output_path {
        let content = match config.format {
            OutputFormat::Json => to_json(&rows)?,
            OutputFormat::Csv => {
                let mut out = String::from("comparison,samples,max_error,tolerance,pass\n");
                for r in &rows {
                    let _ = writeln!(
                        out,
                        "\"{}\",{},{},{},{}",
                        r.comparison, r.samples, r.max_error, r.tolerance, r.pass
                    );
                }
                out
            }
        };
        write_output(Some(path), &content)?;
    }

    Ok(if all_pass { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// curvature sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CurvatureRow {
    t: f64,
    alpha: Vec<f64>,
    det_g: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "A")]
    a: f64,
    inner_r: Vec<f64>,
    sec_0i: Vec<f64>,
}

fn curvature_sweep(config: &RunConfig, model: &EconomyModel) -> Result<i32> {
    let l = model.goods();
    let mut rows = Vec::with_capacity(config.samples);
    for (t, alpha) in sample_coords(model, config.samples, config.seed) {
        let pt = model.embed(t, &alpha)?;
        let md = metric_at(model, &pt)?;
        let cr = curvature_at(model, &pt)?;
        rows.push(CurvatureRow {
            t,
            alpha,
            det_g: md.det_g,
            b: md.scalars.b,
            a: md.scalars.a,
            inner_r: cr.inner_r.iter().copied().collect(),
            sec_0i: cr.sec_0i.iter().copied().collect(),
        });
    }

    // Non-positivity is surfaced end to end: refuse to emit a breach.
    for row in &rows {
        if let Some(&bad) = row.inner_r.iter().find(|v| **v > 1e-12) {
            eprintln!(
                "tolerance breach: inner_R = {bad:e} > 1e-12 at t = {}, alpha = {:?}",
                row.t, row.alpha
            );
            return Ok(2);
        }
    }

    let content = match config.format {
        OutputFormat::Json => to_json(&rows)?,
        OutputFormat::Csv => {
            let mut header = String::from("t");
            for i in 1..l {
                let _ = write!(header, ",alpha{i}");
            }
            header.push_str(",det_g,B,A");
            for i in 1..l {
                let _ = write!(header, ",inner_R_{i}");
            }
            for i in 1..l {
                let _ = write!(header, ",sec_0{i}");
            }
            header.push('\n');
            let mut out = header;
            for r in &rows {
                let _ = write!(out, "{}", r.t);
                for a in &r.alpha {
                    let _ = write!(out, ",{a}");
                }
                let _ = write!(out, ",{},{},{}", r.det_g, r.b, r.a);
                for v in &r.inner_r {
                    let _ = write!(out, ",{v}");
                }
                for v in &r.sec_0i {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
            out
        }
    };
    write_output(config.output_path.as_deref(), &content)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// geodesic trace
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct TraceRow {
    s: f64,
    coords: Vec<f64>,
    velocity: Vec<f64>,
    g_speed: f64,
}

fn geodesic_trace(
    config: &RunConfig,
    model: &EconomyModel,
    t0: f64,
    alpha: &[f64],
    velocity: &[f64],
) -> Result<i32> {
    let base = model.embed(t0, alpha)?;
    let v = TangentVector::new(base, DVector::from_column_slice(velocity));
    let (_, path) = exp_map(model, &v)?;
    let l = model.goods();
    let mut rows = Vec::with_capacity(path.samples.len());
    for sample in &path.samples {
        rows.push(TraceRow {
            s: sample.s,
            coords: sample.coords.iter().copied().collect(),
            velocity: sample.velocity.iter().copied().collect(),
            g_speed: g_speed(model, sample)?,
        });
    }
    let content = match config.format {
        OutputFormat::Json => to_json(&rows)?,
        OutputFormat::Csv => {
            let mut header = String::from("s,t");
            for i in 1..l {
                let _ = write!(header, ",alpha{i}");
            }
            header.push_str(",dt");
            for i in 1..l {
                let _ = write!(header, ",dalpha{i}");
            }
            header.push_str(",g_speed\n");
            let mut out = header;
            for r in &rows {
                let _ = write!(out, "{}", r.s);
                for c in &r.coords {
                    let _ = write!(out, ",{c}");
                }
                for vi in &r.velocity {
                    let _ = write!(out, ",{vi}");
                }
                let _ = writeln!(out, ",{}", r.g_speed);
            }
            out
        }
    };
    write_output(config.output_path.as_deref(), &content)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// selection experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CoordsOut {
    t: f64,
    alpha: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SelectOutput {
    base: CoordsOut,
    omega_prime: Vec<f64>,
    v_coeffs: Vec<f64>,
    landed: CoordsOut,
    price_new: Vec<f64>,
    residual: f64,
    iterations: usize,
    branch_index: Option<usize>,
}

fn select_experiment(
    config: &RunConfig,
    model: &EconomyModel,
    t0: f64,
    alpha: &[f64],
    omega_prime: &[f64],
    refine: bool,
) -> Result<i32> {
    if config.format == OutputFormat::Csv {
        return Err(Error::Validation(
            "the select command emits JSON; pass --format json".into(),
        ));
    }
    let base = model.embed(t0, alpha)?;
    let state = PerturbedState::new(model, base.clone(), omega_prime)?;
    let result = select(model, &state, refine)?;
    let branches = find_equilibria_detailed(model, omega_prime)?;
    let branch_index = branches
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a.point.t() - result.landed.t()).abs();
            let db = (b.point.t() - result.landed.t()).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i);
    let out = SelectOutput {
        base: CoordsOut { t: base.t(), alpha: base.alpha().iter().copied().collect() },
        omega_prime: omega_prime.to_vec(),
        v_coeffs: result.v.coeffs.iter().copied().collect(),
        landed: CoordsOut {
            t: result.landed.t(),
            alpha: result.landed.alpha().iter().copied().collect(),
        },
        price_new: result.price_new.iter().copied().collect(),
        residual: result.endowment_residual,
        iterations: result.iterations,
        branch_index,
    };
    write_output(config.output_path.as_deref(), &to_json(&out)?)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// equilibria / uniqueness
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct EquilibriumRow {
    t: f64,
    price: Vec<f64>,
    fiber_slope: f64,
    tangency: bool,
}

fn equilibria_report(config: &RunConfig, model: &EconomyModel, endowment: &[f64]) -> Result<i32> {
    let l = model.goods();
    let roots = find_equilibria_detailed(model, endowment)?;
    let rows: Vec<EquilibriumRow> = roots
        .iter()
        .map(|r| EquilibriumRow {
            t: r.point.t(),
            price: r.point.ambient().rows(0, l - 1).iter().copied().collect(),
            fiber_slope: r.fiber_slope,
            tangency: r.tangency,
        })
        .collect();
    for row in &rows {
        if row.tangency {
            eprintln!(
                "warning: near-tangent fiber at t = {} (|h'| = {:e}): branch structure \
                 degenerates near this endowment",
                row.t,
                row.fiber_slope.abs()
            );
        }
    }
    let content = match config.format {
        OutputFormat::Json => to_json(&rows)?,
        OutputFormat::Csv => {
            let mut out = String::from("t");
            for i in 1..l {
                let _ = write!(out, ",p{i}");
            }
            out.push_str(",fiber_slope,tangency\n");
            for r in &rows {
                let _ = write!(out, "{}", r.t);
                for p in &r.price {
                    let _ = write!(out, ",{p}");
                }
                let _ = writeln!(out, ",{},{}", r.fiber_slope, r.tangency);
            }
            out
        }
    };
    write_output(config.output_path.as_deref(), &content)?;
    Ok(0)
}

fn uniqueness_report(config: &RunConfig, model: &EconomyModel) -> Result<i32> {
    let rep = uniqueness_check(model)?;
    let content = match config.format {
        OutputFormat::Json => to_json(&rep)?,
        OutputFormat::Csv => format!(
            "unique,max_abs_p_prime,max_abs_inner_r\n{},{},{}\n",
            rep.unique, rep.max_abs_p_prime, rep.max_abs_inner_r
        ),
    };
    write_output(config.output_path.as_deref(), &content)?;
    println!(
        "unique = {} (max |p_i'| = {:e}, max |<R(X0,Xi)X0,Xi>| = {:e})",
        rep.unique, rep.max_abs_p_prime, rep.max_abs_inner_r
    );
    Ok(0)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
