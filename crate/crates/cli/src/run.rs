//! Orchestration of one configured run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rodeo::exact::{evolve_exact_with, positivity_monitor_with, PositivityMonitor};
use rodeo::jump_mc::{run_ensemble, EnsembleRun, TrajectoryConfig};
use rodeo::nmqj::{run_nmqj, NmqjRun};
use rodeo::observables::{compare, BlochSeries, ComparisonReport};
use rodeo::{projector, BreakdownEvent, Error, NumericPolicy};
use serde_json::{json, Map, Value};

use crate::config::{Mode, OutputPaths, RunConfig, SchemaError};
use crate::output::{self, ClassSeries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_BREAKDOWN: i32 = 4;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: Value,
}

/// Everything a run produced, whether or not it finished.
#[derive(Default)]
struct Report {
    exact: Option<BlochSeries<f64>>,
    jump: Option<(EnsembleRun<f64>, BlochSeries<f64>)>,
    nmqj: Option<(NmqjRun<f64>, BlochSeries<f64>)>,
    monitor: Option<PositivityMonitor<f64>>,
    comparisons: Vec<(&'static str, ComparisonReport)>,
    error: Option<Error>,
}

/// Runs `cfg` on its own thread pool, writes every artifact and returns the
/// exit code with the summary that was written.
pub fn run(cfg: &RunConfig, policy: &NumericPolicy) -> RunOutcome {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build();
    let report = match pool {
        Ok(pool) => pool.install(|| execute(cfg, policy)),
        Err(e) => Report {
            error: Some(Error::InvalidInput(format!(
                "cannot start thread pool: {e}"
            ))),
            ..Report::default()
        },
    };
    let mut artifacts = Map::new();
    let mut io_error = None;
    if let Err(e) = write_artifacts(cfg, &report, &mut artifacts) {
        io_error = Some(e);
    }

    let breakdown = report.nmqj.as_ref().and_then(|(r, _)| r.breakdown.clone());
    let (mut exit_code, error) = match (&report.error, &breakdown) {
        (Some(e), _) => (exit_code_for(e), Some(error_json(e))),
        (None, Some(b)) if cfg.mode != Mode::Witness => (
            EXIT_BREAKDOWN,
            Some(json!({ "kind": "breakdown", "message": b.to_string(), "time": b.time })),
        ),
        _ => (EXIT_OK, None),
    };
    let mut error = error;
    if let Some(e) = io_error {
        if exit_code == EXIT_OK {
            exit_code = EXIT_ERROR;
            error = Some(json!({ "kind": "io", "message": e }));
        }
    }

    let mut summary = Map::new();
    summary.insert(
        "status".into(),
        json!(if exit_code == EXIT_OK { "ok" } else { "failed" }),
    );
    summary.insert("exit_code".into(), json!(exit_code));
    summary.insert("mode".into(), json!(cfg.mode.name()));
    summary.insert("config".into(), cfg.resolved.clone());
    summary.insert("numeric_policy".into(), policy_json(policy));
    summary.insert("error".into(), error.unwrap_or(Value::Null));
    let comparisons: Map<String, Value> = report
        .comparisons
        .iter()
        .map(|(name, r)| (name.to_string(), comparison_json(r, report.exact.as_ref())))
        .collect();
    let pass = if report.comparisons.is_empty() {
        Value::Null
    } else {
        json!(report.comparisons.iter().all(|(_, r)| r.pass))
    };
    summary.insert("comparisons".into(), Value::Object(comparisons));
    summary.insert("pass".into(), pass);
    summary.insert(
        "breakdown".into(),
        breakdown.as_ref().map_or(Value::Null, breakdown_json),
    );
    if cfg.mode == Mode::Witness {
        summary.insert(
            "witness".into(),
            witness_json(cfg, breakdown.as_ref(), report.monitor.as_ref()),
        );
    }
    summary.insert("statistics".into(), statistics_json(&report));
    summary.insert("artifacts".into(), Value::Object(artifacts));
    summary.insert(
        "runtime_seconds".into(),
        json!(start.elapsed().as_secs_f64()),
    );
    let summary = Value::Object(summary);

    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    if let Err(e) = output::write_file(&cfg.output.summary(), &text) {
        eprintln!("cannot write {}: {e}", cfg.output.summary().display());
        if exit_code == EXIT_OK {
            exit_code = EXIT_ERROR;
        }
    }
    RunOutcome { exit_code, summary }
}

/// Writes the summary of a config that failed validation.
pub fn schema_failure(dir: &Path, errors: &[SchemaError]) -> RunOutcome {
    let list: Vec<Value> = errors
        .iter()
        .map(|e| json!({ "path": e.path, "message": e.message }))
        .collect();
    let summary = json!({
        "status": "failed",
        "exit_code": EXIT_SCHEMA,
        "error": { "kind": "schema", "message": format!("{} schema error(s)", errors.len()), "errors": list },
    });
    let path = dir.join(OutputPaths::default().summary_json);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    if let Err(e) = output::write_file(&path, &text) {
        eprintln!("cannot write {}: {e}", path.display());
    }
    RunOutcome {
        exit_code: EXIT_SCHEMA,
        summary,
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::NegativeRate { .. } | Error::StepTooLarge { .. } => EXIT_GUARD,
        Error::Breakdown(_) => EXIT_BREAKDOWN,
        _ => EXIT_ERROR,
    }
}

fn execute(cfg: &RunConfig, policy: &NumericPolicy) -> Report {
    let mut report = Report::default();
    if let Err(e) = execute_into(cfg, policy, &mut report) {
        report.error = Some(e);
    }
    report
}

fn execute_into(cfg: &RunConfig, policy: &NumericPolicy, report: &mut Report) -> rodeo::Result<()> {
    let rho0 = projector(&cfg.initial_state)?;
    let exact = evolve_exact_with(&cfg.model, &rho0, cfg.t_max, cfg.dt, policy)?;
    let exact_series = BlochSeries::from_trajectory(&exact)?;
    if cfg.mode == Mode::Witness {
        report.monitor = Some(positivity_monitor_with(&exact, policy)?);
    }
    report.exact = Some(exact_series);
    let exact_series = report.exact.as_ref().expect("set above");

    let mut tc = TrajectoryConfig::new(cfg.dt, cfg.t_max, cfg.n_traj, cfg.seed);
    tc.max_event_prob = cfg.max_event_prob;

    if matches!(cfg.mode, Mode::Jump | Mode::Compare) {
        let run = run_ensemble(&cfg.model, &cfg.strategy, &cfg.initial_state, &tc, policy)?;
        let series = BlochSeries::from_estimate(&run.estimate)?;
        report.comparisons.push((
            "jump_vs_exact",
            compare(&series, exact_series, cfg.tolerance)?,
        ));
        report.jump = Some((run, series));
    }
    if matches!(cfg.mode, Mode::Nmqj | Mode::Witness | Mode::Compare) {
        let run = run_nmqj(&cfg.model, &cfg.strategy, &cfg.initial_state, &tc, policy)?;
        let series = BlochSeries::from_estimate(&run.estimate)?;
        if cfg.mode != Mode::Witness {
            let exact_prefix = prefix(exact_series, series.len());
            report.comparisons.push((
                "nmqj_vs_exact",
                compare(&series, &exact_prefix, cfg.tolerance)?,
            ));
            if let Some((_, jump)) = &report.jump {
                let jump_prefix = prefix(jump, series.len());
                report.comparisons.push((
                    "jump_vs_nmqj",
                    compare(&jump_prefix, &series, cfg.tolerance)?,
                ));
            }
        }
        report.nmqj = Some((run, series));
    }
    Ok(())
}

fn prefix(s: &BlochSeries<f64>, n: usize) -> BlochSeries<f64> {
    let cut = |v: &Vec<f64>| v[..n.min(v.len())].to_vec();
    BlochSeries {
        times: cut(&s.times),
        x: cut(&s.x),
        y: cut(&s.y),
        z: cut(&s.z),
        stderr_x: cut(&s.stderr_x),
        stderr_y: cut(&s.stderr_y),
        stderr_z: cut(&s.stderr_z),
    }
}

/// Path of the second trajectory table in compare mode: `name_nmqj.ext`.
pub fn nmqj_table_path(paths: &OutputPaths) -> PathBuf {
    let p = Path::new(&paths.trajectory_csv);
    let stem = p
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match p.extension() {
        Some(ext) => format!("{stem}_nmqj.{}", ext.to_string_lossy()),
        None => format!("{stem}_nmqj"),
    };
    paths.dir.join(p.with_file_name(name))
}

fn write_artifacts(
    cfg: &RunConfig,
    report: &Report,
    artifacts: &mut Map<String, Value>,
) -> Result<(), String> {
    let Some(exact) = &report.exact else {
        return Ok(());
    };
    let mut write = |key: &str, path: PathBuf, contents: String| -> Result<(), String> {
        output::write_file(&path, &contents)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        artifacts.insert(key.into(), json!(path.to_string_lossy()));
        Ok(())
    };
    let class_series = report.nmqj.as_ref().map(|(r, _)| ClassSeries {
        populations: &r.populations,
        reverse_jumps: &r.reverse_jumps,
        breakdown_step: r.breakdown.as_ref().map(|b| b.step),
    });
    let nmqj_series = report.nmqj.as_ref().map(|(_, s)| s);
    let jump_series = report.jump.as_ref().map(|(_, s)| s);

    let main_table = match cfg.mode {
        Mode::Exact => output::trajectory_csv(exact, None, None),
        Mode::Jump | Mode::Compare => output::trajectory_csv(exact, jump_series, None),
        Mode::Nmqj | Mode::Witness => {
            output::trajectory_csv(exact, nmqj_series, class_series.as_ref())
        }
    };
    let has_table = cfg.mode == Mode::Exact || report.jump.is_some() || report.nmqj.is_some();
    if has_table {
        write("trajectory_csv", cfg.output.trajectory(), main_table)?;
    }
    if cfg.mode == Mode::Compare && report.nmqj.is_some() {
        let table = output::trajectory_csv(exact, nmqj_series, class_series.as_ref());
        write("trajectory_nmqj_csv", nmqj_table_path(&cfg.output), table)?;
    }
    let populations = report.nmqj.as_ref().map(|(r, _)| r.populations.as_slice());
    write(
        "populations_csv",
        cfg.output.populations(),
        output::populations_csv(&exact.times, populations.unwrap_or(&[])),
    )?;
    let stochastic = match cfg.mode {
        Mode::Jump | Mode::Compare => jump_series.or(nmqj_series),
        _ => nmqj_series,
    };
    write(
        "plot_svg",
        cfg.output.plot(),
        output::bloch_svg(&cfg.model_name, exact, stochastic, populations),
    )?;
    artifacts.insert(
        "summary_json".into(),
        json!(cfg.output.summary().to_string_lossy()),
    );
    Ok(())
}

fn error_json(e: &Error) -> Value {
    let kind = match e {
        Error::NegativeRate { .. } | Error::StepTooLarge { .. } => "numerical_guard",
        Error::Breakdown(_) => "breakdown",
        _ => "error",
    };
    let mut v = json!({ "kind": kind, "variant": variant_name(e), "message": e.to_string() });
    match e {
        Error::NegativeRate { time, index, rate } => {
            v["time"] = json!(time);
            v["eigenindex"] = json!(index);
            v["rate"] = json!(rate);
        }
        Error::StepTooLarge {
            time,
            what,
            value,
            bound,
        } => {
            v["time"] = json!(time);
            v["quantity"] = json!(what);
            v["value"] = json!(value);
            v["bound"] = json!(bound);
        }
        _ => {}
    }
    v
}

fn variant_name(e: &Error) -> &'static str {
    match e {
        Error::NotHermitian { .. } => "NotHermitian",
        Error::NoConvergence { .. } => "NoConvergence",
        Error::ZeroVector => "ZeroVector",
        Error::DimensionMismatch { .. } => "DimensionMismatch",
        Error::DimensionUnsupported { .. } => "DimensionUnsupported",
        Error::NotNormalized { .. } => "NotNormalized",
        Error::NonFiniteStrategyOutput => "NonFiniteStrategyOutput",
        Error::InvalidInput(_) => "InvalidInput",
        Error::StepTooLarge { .. } => "StepTooLarge",
        Error::NegativeRate { .. } => "NegativeRate",
        Error::Breakdown(_) => "Breakdown",
        Error::GridMismatch => "GridMismatch",
    }
}

fn breakdown_json(b: &BreakdownEvent) -> Value {
    json!({
        "time": b.time,
        "step": b.step,
        "source_class": b.source_class,
        "eigenindex": b.eigenindex,
        "rate": b.rate,
        "missing_target": b.missing_target.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
    })
}

fn comparison_json(r: &ComparisonReport, exact: Option<&BlochSeries<f64>>) -> Value {
    let first = r.failures.first().map(|&(k, axis)| {
        let component = ["x", "y", "z"][axis];
        json!({
            "index": k,
            "t": exact.and_then(|e| e.times.get(k)),
            "component": component,
        })
    });
    json!({
        "pass": r.pass,
        "tolerance": { "sigmas": r.tolerance.sigmas, "floor": r.tolerance.floor },
        "points": r.z_scores.len(),
        "failures": r.failures.len(),
        "first_failure": first,
        "max_deviation": r.max_deviation,
        "max_z": r.max_z.iter().map(|z| if z.is_finite() { json!(z) } else { json!("inf") }).collect::<Vec<_>>(),
    })
}

fn witness_json(
    cfg: &RunConfig,
    breakdown: Option<&BreakdownEvent>,
    monitor: Option<&PositivityMonitor<f64>>,
) -> Value {
    let oracle = monitor.map(|m| {
        let at_breakdown = breakdown.and_then(|b| m.mu.get(b.step + 1).or(m.mu.last()));
        json!({
            "first_violation_time": m.first_violation_time,
            "min_mu": m.mu.iter().copied().fold(f64::INFINITY, f64::min),
            "mu_after_breakdown": at_breakdown,
            "mu_negative_for_t_positive": m.mu.len() > 1 && m.mu[1..].iter().all(|&mu| mu < 0.0),
        })
    });
    let confirmed =
        breakdown.is_some() && monitor.is_some_and(|m| m.first_violation_time.is_some());
    json!({
        "breakdown_detected": breakdown.is_some(),
        "breakdown_time": breakdown.map(|b| b.time),
        "breakdown_step": breakdown.map(|b| b.step),
        "dt": cfg.dt,
        "oracle": oracle,
        "confirmed": confirmed,
    })
}

fn statistics_json(report: &Report) -> Value {
    let mut s = Map::new();
    if let Some((run, _)) = &report.jump {
        s.insert("jump_samples".into(), json!(run.estimate.samples));
        s.insert("jump_total_jumps".into(), json!(run.total_jumps));
    }
    if let Some((run, _)) = &report.nmqj {
        s.insert("nmqj_members".into(), json!(run.estimate.samples));
        s.insert("nmqj_direct_jumps".into(), json!(run.direct_jumps));
        s.insert(
            "nmqj_reverse_jumps".into(),
            json!(run.total_reverse_jumps()),
        );
        s.insert(
            "nmqj_max_classes".into(),
            json!(run.populations.iter().map(Vec::len).max().unwrap_or(0)),
        );
        s.insert(
            "nmqj_grid_points_completed".into(),
            json!(run.populations.len()),
        );
    }
    Value::Object(s)
}

fn policy_json(p: &NumericPolicy) -> Value {
    json!({
        "atol": p.atol,
        "hermiticity_tol": p.hermiticity_tol,
        "norm_tol": p.norm_tol,
        "trace_drift_tol": p.trace_drift_tol,
        "rate_tol": p.rate_tol,
        "match_tol": p.match_tol,
        "self_jump_tol": p.self_jump_tol,
        "positivity_tol": p.positivity_tol,
        "max_event_prob": p.max_event_prob,
    })
}
