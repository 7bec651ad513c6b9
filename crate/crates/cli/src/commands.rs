//! Command dispatch and output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use rfpde::applications::caching::{cache_benchmark, CacheBenchConfig};
use rfpde::applications::discovery::{run_oscillator, OscillatorConfig};
use rfpde::applications::inverse::{run_source_demo, write_trajectory_csv, SourceDemoConfig};
use rfpde::applications::sweep::{argmin_sigma, sigma_sweep, summarize, SweepOptions, DEFAULT_SIGMA_GRID};
use rfpde::BasisKind;
use rfpde::problems::{
    aggregate, evaluate_errors, registry, run_ablation, run_benchmark, solve_case, write_csv, write_markdown,
    AblationRecord, AblationVariant, BenchOptions, CaseMode, PdeCase,
};
use rfpde::Error;

use crate::config::{Format, RunConfig};
use crate::{Cli, Command};

/// Exit code for usage errors and invalid input.
const EXIT_USAGE: u8 = 2;
/// Exit code for failures during computation.
const EXIT_FAILURE: u8 = 1;

fn valid_names() -> Vec<String> {
    registry().map(|r| r.into_iter().map(|c| c.name).collect()).unwrap_or_default()
}

pub fn report_usage(e: &clap::Error) -> ExitCode {
    let msg = e.render().to_string();
    let record = json!({"error": {"kind": "usage", "message": msg.trim_end(), "valid_problems": valid_names()}});
    eprintln!("{record}");
    ExitCode::from(EXIT_USAGE)
}

pub fn report_error(e: &anyhow::Error) -> ExitCode {
    let message = format!("{e:#}");
    let (kind, code) = if let Some(err) = e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        let code = match err {
            Error::InvalidArgument(_) | Error::UnknownProblem(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        (err.kind(), code)
    } else if e.chain().any(|c| c.downcast_ref::<toml::de::Error>().is_some()) {
        ("invalid-config", EXIT_USAGE)
    } else {
        ("io", EXIT_FAILURE)
    };
    let mut body = json!({"kind": kind, "message": message});
    if kind == "unknown-problem" {
        body["valid_problems"] = json!(valid_names());
    }
    eprintln!("{}", json!({ "error": body }));
    ExitCode::from(code)
}

fn open_output(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Problem names expanded against the registry. `all` selects every case.
fn resolve_cases(names: &[String]) -> Result<Vec<PdeCase>> {
    let all = registry()?;
    let mut out: Vec<PdeCase> = Vec::new();
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            out.extend(all.iter().cloned());
            continue;
        }
        let key = |s: &str| s.to_ascii_lowercase().replace(['-', '_'], "");
        let case = all
            .iter()
            .find(|c| key(&c.name) == key(name))
            .ok_or_else(|| Error::UnknownProblem(name.clone()))?;
        out.push(case.clone());
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|c| seen.insert(c.name.clone()));
    Ok(out)
}

/// Problems for a command: the configured list, or `default` when none is
/// given.
fn cases_for(cfg: &RunConfig, default: &[&str]) -> Result<Vec<PdeCase>> {
    let names: Vec<String> = match &cfg.problems {
        Some(p) => p.clone(),
        None => default.iter().map(|s| s.to_string()).collect(),
    };
    if names.is_empty() {
        bail!(Error::InvalidArgument("no problem given; pass --problems".into()));
    }
    resolve_cases(&names)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Solve => "solve",
        Command::Bench => "bench",
        Command::Sweep => "sweep",
        Command::Ablate { .. } => "ablate",
        Command::Discover { .. } => "discover",
        Command::Inverse { .. } => "inverse",
        Command::CacheBench { .. } => "cache-bench",
        Command::ListProblems => "list-problems",
    }
}

fn default_problems(cmd: &Command) -> &'static [&'static str] {
    match cmd {
        Command::Bench => &["all"],
        Command::Ablate { .. } => &["nlpoisson2d", "burgers1d"],
        Command::CacheBench { .. } => &["helmholtz2d"],
        _ => &[],
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.run.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = file.overlay(&cli.run.to_config());
    cfg.validate()?;
    let command = match cli.command {
        Some(c) if !cli.list_problems => c,
        _ => Command::ListProblems,
    };
    if cli.run.dry_run {
        return dry_run(&cfg, &command);
    }
    let mut out = open_output(&cfg)?;
    match command {
        Command::ListProblems => list_problems(&cfg, &mut *out)?,
        Command::Solve => solve(&cfg, &mut *out)?,
        Command::Bench => bench(&cfg, &mut *out)?,
        Command::Sweep => sweep(&cfg, &mut *out)?,
        Command::Ablate { variants } => ablate(&cfg, &variants, &mut *out)?,
        Command::Discover {
            noise,
            points,
            edge_trim,
        } => {
            let mut oc = OscillatorConfig::default();
            if let Some(v) = noise {
                oc.noise = v;
            }
            if let Some(v) = points {
                oc.points = v;
            }
            if let Some(v) = edge_trim {
                oc.edge_trim = v;
            }
            if let Some(v) = cfg.n_total {
                oc.features = v;
            }
            if let Some(v) = cfg.sigma {
                oc.sigma = v;
            }
            if let Some(v) = cfg.mu {
                oc.mu = v;
            }
            oc.seed = cfg.seeds()[0];
            let report = run_oscillator(&oc)?;
            write_json(&json!({"config": oc, "report": report}), &mut *out)?;
        }
        Command::Inverse {
            operator,
            steps,
            step_size,
            noise,
            trajectory,
        } => {
            let mut sc = SourceDemoConfig {
                operator,
                ..Default::default()
            };
            if let Some(v) = steps {
                sc.optimizer.steps = v;
            }
            if let Some(v) = step_size {
                sc.optimizer.adam.step_size = v;
            }
            if let Some(v) = noise {
                sc.noise = v;
            }
            if let Some(v) = cfg.n_total {
                sc.features = v;
            }
            if let Some(v) = cfg.sigma {
                sc.sigma = v;
            }
            if let Some(v) = cfg.m_interior {
                sc.interior = v;
            }
            if let Some(v) = cfg.m_boundary {
                sc.boundary = v;
            }
            if let Some(v) = cfg.penalty {
                sc.penalty = v;
            }
            if let Some(v) = cfg.mu {
                sc.mu = v;
            }
            sc.seed = cfg.seeds()[0];
            let report = run_source_demo(&sc)?;
            if let Some(p) = trajectory {
                let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                write_trajectory_csv(&report.outcome.trajectory, BufWriter::new(f))?;
            }
            let mut v = serde_json::to_value(&report)?;
            if let Some(o) = v.get_mut("outcome").and_then(Value::as_object_mut) {
                o.remove("trajectory");
            }
            write_json(&json!({"operator": operator.to_string(), "seed": sc.seed, "report": v}), &mut *out)?;
        }
        Command::CacheBench { rhs } => {
            let cases = cases_for(&cfg, default_problems(&Command::CacheBench { rhs }))?;
            let mut cc = CacheBenchConfig {
                problem: cases[0].name.clone(),
                rhs_count: rhs,
                seed: cfg.seeds()[0],
                sigma: cfg.sigma,
                ..Default::default()
            };
            if let Some(v) = cfg.n_total {
                cc.features = v;
            }
            if let Some(v) = cfg.m_interior {
                cc.interior = v;
            }
            if let Some(v) = cfg.m_boundary {
                cc.boundary = v;
            }
            if let Some(v) = cfg.mu {
                cc.mu = v;
            }
            let report = cache_benchmark(&cc)?;
            write_json(&json!({"config": cc, "report": report}), &mut *out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn dry_run(cfg: &RunConfig, command: &Command) -> Result<()> {
    let cases = match command {
        Command::Discover { .. } | Command::Inverse { .. } | Command::ListProblems => Vec::new(),
        c => cases_for(cfg, default_problems(c))?,
    };
    let resolved: Vec<Value> = cases
        .iter()
        .map(|case| {
            let ov = cfg.overrides(case);
            json!({
                "problem": case.name,
                "mode": case.mode.to_string(),
                "protocol": cfg.protocol(case),
                "sigma": ov.sigma.unwrap_or(case.defaults.sigma),
                "penalty": ov.penalty.unwrap_or(case.defaults.penalty),
                "mu": ov.mu.unwrap_or(case.defaults.mu),
                "normalized": ov.normalized.unwrap_or(true),
                "newton": (case.mode == CaseMode::SolverNewton)
                    .then(|| ov.newton.unwrap_or_else(|| case.defaults.newton.clone())),
                "schedule": case.defaults.schedule,
            })
        })
        .collect();
    let record = json!({
        "command": command_name(command),
        "config": cfg,
        "basis": cfg.kinds(),
        "seeds": cfg.seeds(),
        "test_points": cfg.test_points(),
        "test_seed": cfg.test_seed(),
        "format": cfg.format(),
        "problems": resolved,
    });
    let mut out = open_output(cfg)?;
    write_json(&record, &mut *out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ProblemRow {
    name: String,
    mode: String,
    dim: usize,
    time_dependent: bool,
    sigma: f64,
    title: String,
}

fn list_problems(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let rows: Vec<ProblemRow> = registry()?
        .into_iter()
        .map(|c| ProblemRow {
            dim: c.dim(),
            mode: c.mode.to_string(),
            time_dependent: c.time_axis.is_some(),
            sigma: c.defaults.sigma,
            name: c.name,
            title: c.title,
        })
        .collect();
    match cfg.format() {
        Format::Json => write_json(&rows, out)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Markdown => {
            writeln!(out, "| name | mode | dim | time | sigma | title |")?;
            writeln!(out, "|---|---|---|---|---|---|")?;
            for r in &rows {
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    r.name, r.mode, r.dim, r.time_dependent, r.sigma, r.title
                )?;
            }
        }
    }
    Ok(())
}

fn solve(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let cases = cases_for(cfg, &[])?;
    let mut results = Vec::new();
    for case in &cases {
        let protocol = cfg.protocol(case);
        let ov = cfg.overrides(case);
        for &kind in &cfg.kinds() {
            for &seed in &cfg.seeds() {
                let run = solve_case(case, kind, &protocol, seed, &ov)
                    .with_context(|| format!("solving {} ({kind}, seed {seed})", case.name))?;
                let errors = evaluate_errors(&run.solution, case, cfg.test_points(), cfg.test_seed())?;
                let mut report = serde_json::to_value(&run.report)?;
                if let Some(o) = report.as_object_mut() {
                    o.remove("coefficients");
                }
                results.push(json!({
                    "problem": case.name,
                    "basis": kind,
                    "seed": seed,
                    "protocol": protocol,
                    "errors": errors,
                    "solve": report,
                    "wall_times": run.times,
                    "newton": run.traces,
                    "status": run.status.map(|s| s.to_string()),
                }));
            }
        }
    }
    if results.len() == 1 {
        write_json(&results[0], out)
    } else {
        write_json(&results, out)
    }
}

fn bench(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let cases = cases_for(cfg, &["all"])?;
    let mut records = Vec::new();
    for case in &cases {
        let opts = BenchOptions {
            scale: cfg.scale(),
            protocol: cfg.has_protocol_override().then(|| cfg.protocol(case)),
            kinds: cfg.kinds(),
            seeds: cfg.seeds(),
            overrides: cfg.overrides(case),
            test_count: cfg.test_points(),
            test_seed: cfg.test_seed(),
        };
        records.extend(run_benchmark(std::slice::from_ref(case), &opts));
    }
    match cfg.format() {
        Format::Csv => write_csv(&records, out)?,
        Format::Markdown => write_markdown(&aggregate(&records), out)?,
        Format::Json => write_json(&records, out)?,
    }
    Ok(())
}

/// Sweep CSV row: the record with its problem name and seed.
#[derive(Serialize)]
struct SweepRow<'a> {
    problem: &'a str,
    sigma: f64,
    basis: BasisKind,
    trial: usize,
    seed: u64,
    l2_value: f64,
    l2_grad: f64,
}

fn sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let cases = cases_for(cfg, &[])?;
    let opts = SweepOptions {
        grid: cfg.grid.clone().unwrap_or_else(|| DEFAULT_SIGMA_GRID.to_vec()),
        trials: cfg.trials.unwrap_or(3),
        kinds: cfg.kinds(),
        test_count: cfg.test_points(),
        test_seed: cfg.test_seed(),
    };
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for case in &cases {
        let rows = sigma_sweep(case, &cfg.protocol(case), &opts)?;
        let points = summarize(&rows);
        let best: Vec<Value> = opts
            .kinds
            .iter()
            .map(|&k| json!({"basis": k, "sigma": argmin_sigma(&points, k)}))
            .collect();
        summaries.push(json!({"problem": case.name, "medians": points, "argmin": best}));
        records.push((case.name.clone(), rows));
    }
    match cfg.format() {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for (name, rows) in &records {
                for r in rows {
                    w.serialize(SweepRow {
                        problem: name,
                        sigma: r.sigma,
                        basis: r.basis,
                        trial: r.trial,
                        seed: r.trial as u64,
                        l2_value: r.l2_value,
                        l2_grad: r.l2_grad,
                    })?;
                }
            }
            w.flush()?;
        }
        Format::Markdown => {
            writeln!(out, "| problem | basis | sigma | median rel. L2 | median grad L2 |")?;
            writeln!(out, "|---|---|---|---|---|")?;
            for s in &summaries {
                for p in s["medians"].as_array().into_iter().flatten() {
                    writeln!(
                        out,
                        "| {} | {} | {} | {:.2e} | {:.2e} |",
                        s["problem"].as_str().unwrap_or_default(),
                        p["basis"].as_str().unwrap_or_default(),
                        p["sigma"],
                        p["l2_value"].as_f64().unwrap_or(f64::NAN),
                        p["l2_grad"].as_f64().unwrap_or(f64::NAN),
                    )?;
                }
            }
        }
        Format::Json => {
            let all: Vec<Value> = records
                .iter()
                .zip(&summaries)
                .map(|((_, rows), s)| {
                    let mut s = s.clone();
                    s["records"] = json!(rows);
                    s
                })
                .collect();
            write_json(&all, out)?;
        }
    }
    Ok(())
}

fn ablate(cfg: &RunConfig, variants: &[AblationVariant], out: &mut dyn Write) -> Result<()> {
    let cases = cases_for(cfg, &["nlpoisson2d", "burgers1d"])?;
    let variants: Vec<AblationVariant> = if variants.is_empty() {
        AblationVariant::ALL.to_vec()
    } else {
        variants.to_vec()
    };
    let mut records: Vec<AblationRecord> = Vec::new();
    for case in &cases {
        if case.mode != CaseMode::SolverNewton {
            bail!(Error::InvalidArgument(format!(
                "ablation needs a nonlinear solver case, `{}` is {}",
                case.name, case.mode
            )));
        }
        for &seed in &cfg.seeds() {
            records.extend(run_ablation(case, &cfg.protocol(case), seed, &variants, cfg.test_points(), cfg.test_seed()));
        }
    }
    match cfg.format() {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Markdown => {
            writeln!(out, "| problem | variant | rel. L2 | iterations | status |")?;
            writeln!(out, "|---|---|---|---|---|")?;
            for r in &records {
                writeln!(
                    out,
                    "| {} | {} | {:.2e} | {} | {} |",
                    r.problem, r.variant, r.l2_value, r.iterations, r.status
                )?;
            }
        }
        Format::Json => write_json(&records, out)?,
    }
    Ok(())
}
