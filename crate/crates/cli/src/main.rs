//! `consub` — run identity suites on geometry bundles, integrate and project
//! geodesics, lift base curves, and emit JSON/CSV reports.
//!
//! Exit codes: 0 success, 1 identity failure, 2 configuration error,
//! 3 numerical breakdown (domain exit, singular matrix, divergence).

mod config;
mod reportage;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use consub_core::error::GeomError;
use consub_core::gallery::{BundleManifest, GeometryBundle};
use consub_core::geodesic::{
    geodesic_defect, geodesic_ivp, lift_geodesic_check, projection_condition_residual,
    CurveRecord, IvpOutcome,
};
use consub_core::report::IdentityId;
use consub_core::suite::{run_suite, SuiteOptions};

use config::{with_workers, ConfigFile, ResolvedConfig, VerifyFlags};
use reportage::{write_json, ConfigEcho, ReportError, VerifyReport, CONVENTIONS};

#[derive(Parser)]
#[command(
    name = "consub",
    version,
    about = "Numerical identity suites and geodesic lab for conformal submersions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run identity suites on a bundle and write a residual report.
    Verify(VerifyArgs),
    /// Integrate a geodesic, project it, and audit the projection condition.
    Geodesic(GeodesicArgs),
    /// Lift a base curve horizontally and audit the lift-geodesic condition.
    Lift(LiftArgs),
    /// List the built-in geometry bundles.
    ListBundles(ListArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON config file (flags override individual fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundle name (see list-bundles) or path to a bundle manifest.
    #[arg(long)]
    bundle: Option<String>,
    /// Comma-separated suite subset (default: all suites).
    #[arg(long)]
    suites: Vec<String>,
    /// Sample points per suite.
    #[arg(long)]
    points: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    fd_step: Option<f64>,
    /// Seed for random test fields and geodesic batches.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override identity=value (repeatable).
    #[arg(long = "tol")]
    tolerances: Vec<String>,
    /// Integration steps per curve in the geodesic/lift suites.
    #[arg(long)]
    curve_steps: Option<usize>,
    /// Number of seeded curves in the geodesic suite.
    #[arg(long)]
    curves: Option<usize>,
    /// Report file (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads (default: CONSUB_WORKERS or all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GeodesicArgs {
    #[arg(long)]
    bundle: String,
    /// Start point, comma-separated chart coordinates.
    #[arg(long)]
    p0: String,
    /// Start velocity, comma-separated components.
    #[arg(long)]
    v0: String,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Threshold for both sides of the projection biconditional.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    fd_step: Option<f64>,
    /// Output directory for curve.csv, curve.json, projected.csv and
    /// projection_report.json.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    bundle: String,
    /// Base curve CSV file (header t,x1..xm,v1..vm).
    #[arg(long)]
    base_curve: Option<PathBuf>,
    /// Parametric base geodesic "p0=..;v0=..;t_end=1;steps=2000".
    #[arg(long)]
    base_geodesic: Option<String>,
    /// Lift start point on the fiber of the base curve start.
    #[arg(long)]
    p0: String,
    /// Threshold for the lift-geodesic biconditional.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Threshold on A_ZZ below which the audit applies.
    #[arg(long, default_value_t = 1e-5)]
    hypothesis_tol: f64,
    #[arg(long)]
    fd_step: Option<f64>,
    /// Output directory for lift.csv and lift_report.json.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ListArgs {
    /// Emit the full manifests as a JSON array.
    #[arg(long)]
    json: bool,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(classify_error(&err));
        }
    }
}

fn classify_error(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<GeomError>() {
        Some(g) if g.is_numerical_breakdown() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Geodesic(args) => cmd_geodesic(args),
        Command::Lift(args) => cmd_lift(args),
        Command::ListBundles(args) => cmd_list(args),
    }
}

fn load_bundle(name_or_path: &str) -> Result<GeometryBundle> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: BundleManifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        return GeometryBundle::from_manifest(&manifest).map_err(Into::into);
    }
    GeometryBundle::from_name(name_or_path).map_err(Into::into)
}

fn parse_vector(text: &str, expected_len: usize, what: &str) -> Result<DVector<f64>> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("bad {what} component '{s}': {e}"))
        })
        .collect::<Result<_>>()?;
    if parts.len() != expected_len {
        bail!("{what} needs {expected_len} components, got {}", parts.len());
    }
    Ok(DVector::from_vec(parts))
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let file = args.config.as_deref().map(ConfigFile::load).transpose()?;
    let flags = VerifyFlags {
        bundle: args.bundle,
        suites: args.suites,
        points: args.points,
        fd_step: args.fd_step,
        seed: args.seed,
        tolerances: args.tolerances,
        curve_steps: args.curve_steps,
        curves: args.curves,
        output: args.output,
        workers: args.workers,
    };
    let resolved: ResolvedConfig = config::resolve(file, &flags)?;
    let bundle = load_bundle(&resolved.bundle)?;
    let echo = ConfigEcho::new(&resolved.suites, &resolved.options);

    let outcome = with_workers(resolved.workers, || {
        let mut results = Vec::new();
        for kind in &resolved.suites {
            match run_suite(&bundle, *kind, &resolved.options) {
                Ok(batch) => results.extend(batch),
                Err(err) => return (results, Some(err)),
            }
        }
        (results, None)
    })?;
    let (results, suite_error) = outcome;

    let error = suite_error.as_ref().map(|e| ReportError {
        message: e.to_string(),
        numerical_breakdown: e.is_numerical_breakdown(),
    });
    let report = VerifyReport::new(bundle.manifest(), echo, results, error);
    write_json(&report, resolved.output.as_deref())?;

    if let Some(err) = suite_error {
        eprintln!("suite aborted: {err}");
        return Ok(if err.is_numerical_breakdown() { 3 } else { 2 });
    }
    if report.summary.all_passed {
        Ok(0)
    } else {
        eprintln!(
            "failing identities: {}",
            report.summary.failing_identities.join(", ")
        );
        Ok(1)
    }
}

#[derive(serde::Serialize)]
struct ProjectionSample {
    t: f64,
    condition_residual: f64,
    base_defect: f64,
    condition_holds: bool,
    projection_is_geodesic: bool,
    agree: bool,
}

#[derive(serde::Serialize)]
struct GeodesicReport {
    schema: &'static str,
    generated_at: String,
    bundle: String,
    p0: Vec<f64>,
    v0: Vec<f64>,
    t_end: f64,
    steps: usize,
    tolerance: f64,
    conventions: reportage::Conventions,
    verdict: String,
    agreement_failures: usize,
    max_condition_residual: f64,
    max_base_defect: f64,
    samples: Vec<ProjectionSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ReportError>,
}

fn cmd_geodesic(args: GeodesicArgs) -> Result<i32> {
    let bundle = load_bundle(&args.bundle)?;
    let s = &bundle.submersion;
    let n = s.total_dim();
    let p0 = s
        .source()
        .point(parse_vector(&args.p0, n, "p0")?)
        .map_err(anyhow::Error::from)?;
    let v0 = parse_vector(&args.v0, n, "v0")?;
    if args.steps < 2 {
        bail!("steps must be at least 2");
    }
    let h = args.fd_step.unwrap_or(SuiteOptions::default().fd_step);
    std::fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;

    let outcome = geodesic_ivp(s.source(), &bundle.conn_m, &p0, &v0, args.t_end, args.steps)?;
    let (curve, halt) = match outcome {
        IvpOutcome::Complete(c) => (c, None),
        IvpOutcome::Halted {
            partial,
            time,
            cause,
        } => (partial, Some((time, cause))),
    };
    std::fs::write(args.output.join("curve.csv"), curve.to_csv())?;
    write_json(&curve.to_data(), Some(&args.output.join("curve.json")))?;

    if let Some((time, cause)) = halt {
        let report = GeodesicReport {
            schema: "consub/geodesic-report/v1",
            generated_at: reportage::timestamp(),
            bundle: bundle.name.clone(),
            p0: p0.to_vec(),
            v0: v0.iter().copied().collect(),
            t_end: args.t_end,
            steps: args.steps,
            tolerance: args.tolerance,
            conventions: CONVENTIONS,
            verdict: "aborted".into(),
            agreement_failures: 0,
            max_condition_residual: f64::NAN,
            max_base_defect: f64::NAN,
            samples: Vec::new(),
            error: Some(ReportError {
                message: format!("integration halted at t={time}: {cause}"),
                numerical_breakdown: true,
            }),
        };
        write_json(&report, Some(&args.output.join("projection_report.json")))?;
        eprintln!("integration halted at t={time}: {cause}");
        return Ok(3);
    }

    let projected = curve.project(s)?;
    std::fs::write(args.output.join("projected.csv"), projected.to_csv())?;

    let audit = with_workers(args.workers, || -> Result<_, GeomError> {
        use rayon::prelude::*;
        let len = curve.len();
        let stride = ((len - 2) / 400).max(1);
        let indices: Vec<usize> = curve.interior_indices().step_by(stride).collect();
        let samples: Vec<ProjectionSample> = indices
            .par_iter()
            .map(|&i| {
                let condition_residual =
                    projection_condition_residual(s, &bundle.conn_m, &bundle.phi, &curve, i, h)?;
                let base_defect = geodesic_defect(&bundle.conn_b, &projected, i)?;
                let condition_holds = condition_residual <= args.tolerance;
                let projection_is_geodesic = base_defect <= args.tolerance;
                Ok(ProjectionSample {
                    t: curve.time(i),
                    condition_residual,
                    base_defect,
                    condition_holds,
                    projection_is_geodesic,
                    agree: condition_holds == projection_is_geodesic,
                })
            })
            .collect::<Result<_, GeomError>>()?;
        Ok(samples)
    })??;

    let agreement_failures = audit.iter().filter(|s| !s.agree).count();
    let max_condition = audit
        .iter()
        .map(|s| s.condition_residual)
        .fold(0.0f64, f64::max);
    let max_defect = audit.iter().map(|s| s.base_defect).fold(0.0f64, f64::max);
    let verdict = if max_defect <= args.tolerance { "yes" } else { "no" };
    let report = GeodesicReport {
        schema: "consub/geodesic-report/v1",
        generated_at: reportage::timestamp(),
        bundle: bundle.name.clone(),
        p0: p0.to_vec(),
        v0: v0.iter().copied().collect(),
        t_end: args.t_end,
        steps: args.steps,
        tolerance: args.tolerance,
        conventions: CONVENTIONS,
        verdict: verdict.into(),
        agreement_failures,
        max_condition_residual: max_condition,
        max_base_defect: max_defect,
        samples: audit,
        error: None,
    };
    write_json(&report, Some(&args.output.join("projection_report.json")))?;
    println!("projection geodesic: {verdict}");
    Ok(if agreement_failures == 0 { 0 } else { 1 })
}

fn parse_base_geodesic_spec(spec: &str, base_dim: usize) -> Result<(Vec<f64>, Vec<f64>, f64, usize)> {
    let mut p0 = None;
    let mut v0 = None;
    let mut t_end = 1.0;
    let mut steps = 2000usize;
    for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("bad base-geodesic field '{part}' (expected key=value)"))?;
        match key.trim() {
            "p0" => p0 = Some(parse_vector(value, base_dim, "base p0")?),
            "v0" => v0 = Some(parse_vector(value, base_dim, "base v0")?),
            "t_end" => t_end = value.trim().parse().context("parsing t_end")?,
            "steps" => steps = value.trim().parse().context("parsing steps")?,
            other => bail!("unknown base-geodesic field '{other}'"),
        }
    }
    let p0 = p0.ok_or_else(|| anyhow!("base-geodesic spec needs p0"))?;
    let v0 = v0.ok_or_else(|| anyhow!("base-geodesic spec needs v0"))?;
    Ok((
        p0.iter().copied().collect(),
        v0.iter().copied().collect(),
        t_end,
        steps,
    ))
}

#[derive(serde::Serialize)]
struct LiftReport {
    schema: &'static str,
    generated_at: String,
    bundle: String,
    p0: Vec<f64>,
    tolerance: f64,
    hypothesis_tolerance: f64,
    conventions: reportage::Conventions,
    applicable: bool,
    a_zz_max: f64,
    drift: f64,
    lift_defect: f64,
    condition_residual: f64,
    lift_is_geodesic: bool,
    condition_holds: bool,
    agree: bool,
    verdict: String,
}

fn cmd_lift(args: LiftArgs) -> Result<i32> {
    let bundle = load_bundle(&args.bundle)?;
    let s = &bundle.submersion;
    let h = args.fd_step.unwrap_or(SuiteOptions::default().fd_step);
    let alpha = match (&args.base_curve, &args.base_geodesic) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading base curve {}", path.display()))?;
            CurveRecord::from_csv(s.target(), &text).map_err(anyhow::Error::from)?
        }
        (None, Some(spec)) => {
            let (p0, v0, t_end, steps) = parse_base_geodesic_spec(spec, s.base_dim())?;
            let b0 = s
                .target()
                .point_from_slice(&p0)
                .map_err(anyhow::Error::from)?;
            geodesic_ivp(
                s.target(),
                &bundle.conn_b,
                &b0,
                &DVector::from_column_slice(&v0),
                t_end,
                steps,
            )?
            .into_complete()?
        }
        _ => bail!("give exactly one of --base-curve or --base-geodesic"),
    };
    let p0 = s
        .source()
        .point(parse_vector(&args.p0, s.total_dim(), "p0")?)
        .map_err(anyhow::Error::from)?;
    std::fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;

    let (lift, check) = with_workers(args.workers, || {
        lift_geodesic_check(
            s,
            &bundle.conn_m,
            &bundle.conn_b,
            &bundle.phi,
            &alpha,
            &p0,
            h,
            args.tolerance,
            args.hypothesis_tol,
        )
    })??;
    std::fs::write(args.output.join("lift.csv"), lift.to_csv())?;

    let verdict = if !check.applicable {
        format!("inapplicable: A_ZZ = {:.6e}", check.a_zz_max)
    } else if check.lift_is_geodesic {
        "lift geodesic: yes".to_string()
    } else {
        "lift geodesic: no".to_string()
    };
    let report = LiftReport {
        schema: "consub/lift-report/v1",
        generated_at: reportage::timestamp(),
        bundle: bundle.name.clone(),
        p0: p0.to_vec(),
        tolerance: args.tolerance,
        hypothesis_tolerance: args.hypothesis_tol,
        conventions: CONVENTIONS,
        applicable: check.applicable,
        a_zz_max: check.a_zz_max,
        drift: check.drift,
        lift_defect: check.lift_defect,
        condition_residual: check.condition_residual,
        lift_is_geodesic: check.lift_is_geodesic,
        condition_holds: check.condition_holds,
        agree: check.agree,
        verdict: verdict.clone(),
    };
    write_json(&report, Some(&args.output.join("lift_report.json")))?;
    println!("{verdict}");

    if !check.applicable {
        return Ok(0);
    }
    let fidelity_tol = consub_core::suite::default_tolerance(IdentityId::LiftFidelity);
    if !check.agree || check.drift > fidelity_tol {
        eprintln!(
            "lift audit failed: agree={}, drift={:.3e}",
            check.agree, check.drift
        );
        return Ok(1);
    }
    Ok(0)
}

fn cmd_list(args: ListArgs) -> Result<i32> {
    if args.json {
        let manifests: Vec<BundleManifest> = GeometryBundle::builtin_names()
            .iter()
            .map(|name| GeometryBundle::from_name(name).map(|b| b.manifest()))
            .collect::<Result<_, _>>()?;
        write_json(&manifests, None)?;
    } else {
        for name in GeometryBundle::builtin_names() {
            let bundle = GeometryBundle::from_name(name)?;
            println!(
                "{:<28} total_dim={} base_dim={} cshd={} a_zz_zero={}",
                name,
                bundle.submersion.total_dim(),
                bundle.submersion.base_dim(),
                bundle.claims.cshd,
                bundle.claims.horizontal_a_vanishes,
            );
        }
        println!();
        println!("name forms: flat_product:NxM | hyperbolic:N | warped_line:constant[:c] | warped_line:linear[:a] | random_conformal:SEED:NxM");
    }
    Ok(0)
}
