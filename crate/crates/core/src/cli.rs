//! Experiment runner behind the `kseg` binary.
//!
//! Every run writes `effective_config.toml` (when a configuration is used)
//! and `summary.json` into the output directory, plus CSV tables and plain
//! `x y` plot series depending on `--emit`. Exit codes: 0 ok, 2 validation,
//! 3 solver did not converge, 4 I/O.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{emit_document, parse_config, Document, Experiment};
use crate::diagnostics::{self, blowup_extract, interaction_decay, pohozaev_check, BlowupOptions};
use crate::energy::{self, MultiField};
use crate::limit::{self, LimitResult};
use crate::solver::{self, ContinuationResult};
use crate::threshold::{threshold_report, AlphaSearch};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Emit {
    Csv,
    Json,
    Plotdata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PohozaevField {
    /// Limit field from the beta-proxy route.
    Limit,
    /// `u_1 = x_1`, other components zero.
    X1,
    /// `u_1 = x_1 x_2`, other components zero.
    X1x2,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize at one beta (default: last schedule entry).
    Minimize {
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Warm-started continuation along the schedule.
    Continue,
    /// Segregated limit by the beta-proxy and penalty routes.
    Limit,
    /// Overlapping-partition constants and nu_bar for the given k.
    Alpha {
        #[arg(long)]
        k: usize,
    },
    /// Local Pohozaev identity on the configured ball.
    Pohozaev {
        #[arg(long, value_enum, default_value = "limit")]
        field: PohozaevField,
    },
    /// Print the summary.json found in the output directory.
    Report,
}

#[derive(Debug, Parser)]
#[command(
    name = "kseg",
    version,
    about = "k-wise competition energies, continuation and segregated limits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem document (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 42, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: u64,
    #[arg(
        long,
        global = true,
        value_enum,
        value_delimiter = ',',
        default_value = "csv,json,plotdata"
    )]
    pub emit: Vec<Emit>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } => 3,
        Error::Io(_) | Error::Serialization(_) => 4,
        _ => 2,
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Minimize { .. } => "minimize",
        Command::Continue => "continue",
        Command::Limit => "limit",
        Command::Alpha { .. } => "alpha",
        Command::Pohozaev { .. } => "pohozaev",
        Command::Report => "report",
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

struct Outcome {
    summary: Value,
    /// Any solve failed to converge.
    unconverged: bool,
}

pub fn run(cli: &Cli) -> i32 {
    let name = command_name(&cli.command);
    if let Command::Report = cli.command {
        return match report(&cli.out) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        };
    }
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return 4;
    }
    match execute(cli) {
        Ok(out) => {
            let code = if out.unconverged { 3 } else { 0 };
            let mut summary = out.summary;
            summary["exit_code"] = json!(code);
            if let Err(e) = write_summary(cli, &summary) {
                eprintln!("error: {e}");
                return 4;
            }
            println!("{name}: wrote {}", cli.out.display());
            code
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            let summary = json!({ "command": name, "seed": cli.seed, "error": e.to_string(), "exit_code": code });
            if write_summary(cli, &summary).is_err() {
                return 4;
            }
            code
        }
    }
}

fn write_summary(cli: &Cli, summary: &Value) -> Result<()> {
    if !cli.emit.contains(&Emit::Json) {
        return Ok(());
    }
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Serialization(e.to_string()))?;
    fs::write(cli.out.join("summary.json"), text + "\n")?;
    Ok(())
}

fn load(cli: &Cli) -> Result<(Document, Experiment)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let text = fs::read_to_string(path)?;
    let (mut doc, _) = parse_config(&text)?;
    doc.solver.seed = cli.seed;
    let exp = doc.build()?;
    fs::write(cli.out.join("effective_config.toml"), emit_document(&doc)?)?;
    Ok((doc, exp))
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Serialization(e.to_string()))
}

fn write_plot(cli: &Cli, name: &str, points: &[(f64, f64)]) -> Result<()> {
    if !cli.emit.contains(&Emit::Plotdata) {
        return Ok(());
    }
    let dir = cli.out.join("plot");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(format!("{name}.dat")), diagnostics::plot_series(points))?;
    Ok(())
}

fn write_csv(cli: &Cli, name: &str, text: &str) -> Result<()> {
    if cli.emit.contains(&Emit::Csv) {
        fs::write(cli.out.join(name), text)?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Minimize { beta } => run_minimize(cli, *beta),
        Command::Continue => run_continue(cli),
        Command::Limit => run_limit(cli),
        Command::Alpha { k } => run_alpha(cli, *k),
        Command::Pohozaev { field } => run_pohozaev(cli, *field),
        Command::Report => unreachable!("handled before execution"),
    }
}

fn run_minimize(cli: &Cli, beta: Option<f64>) -> Result<Outcome> {
    let (_, exp) = load(cli)?;
    let beta = beta.unwrap_or(*exp.schedule.last().expect("nonempty schedule"));
    let spec = exp.spec.with_beta(beta);
    let init = solver::harmonic_init(&spec.domain, &spec.traces)?;
    let res = solver::minimize(&spec, &init, &exp.solve)?;
    let mut csv = String::from("iter,energy,step,pg\n");
    for r in &res.records {
        let _ = writeln!(csv, "{},{:e},{:e},{:e}", r.iter, r.energy, r.step, r.pg);
    }
    write_csv(cli, "iterations.csv", &csv)?;
    let pts: Vec<(f64, f64)> = res.records.iter().map(|r| (r.iter as f64, r.energy)).collect();
    write_plot(cli, "energy_vs_iteration", &pts)?;
    Ok(Outcome {
        unconverged: !res.converged,
        summary: json!({
            "command": "minimize",
            "seed": cli.seed,
            "beta": beta,
            "energy": to_value(&res.energy)?,
            "iterations": res.iterations,
            "pg_norm": res.pg_norm,
            "converged": res.converged,
            "stalled": res.stalled,
            "seg_violation": diagnostics::segregation_violation(&res.u, spec.k()),
            "h1_norm": solver::h1_norm(&spec.domain, &res.u),
            "sup_norm": solver::sup_norm(&spec.domain, &res.u),
        }),
    })
}

/// Column label for a Hölder exponent, e.g. `holder_alpha03` for 0.3.
pub fn holder_column(alpha: f64) -> String {
    let tenths = (alpha * 10.0).round();
    if (alpha * 10.0 - tenths).abs() < 1e-9 {
        format!("holder_alpha{:02}", tenths as u32)
    } else {
        format!("holder_alpha{}", alpha.to_string().replace('.', ""))
    }
}

pub fn continuation_csv(result: &ContinuationResult) -> String {
    let mut s = String::from("beta,energy,interaction_scaled");
    if let Some(first) = result.steps.first() {
        for h in &first.snapshot.holder {
            s.push(',');
            s.push_str(&holder_column(h.alpha));
        }
    }
    s.push_str(",seg_violation,h1_norm,sup_norm\n");
    for step in &result.steps {
        let sn = &step.snapshot;
        let _ = write!(s, "{:e},{:e},{:e}", sn.beta, sn.energy.total, sn.interaction_scaled);
        for h in &sn.holder {
            let _ = write!(s, ",{:e}", h.value);
        }
        let _ = writeln!(s, ",{:e},{:e},{:e}", sn.seg_violation, sn.h1_norm, sn.sup_norm);
    }
    s
}

fn continuation_summary(cli: &Cli, cont: &ContinuationResult) -> Result<Value> {
    let snaps: Vec<Value> = cont
        .steps
        .iter()
        .map(|s| to_value(&s.snapshot))
        .collect::<Result<_>>()?;
    let mut v = json!({ "steps": snaps, "warning": cont.warning });
    if cont.steps.len() >= 2 {
        let decay = interaction_decay(cont)?;
        let bounds = solver::uniform_bounds_report(cont)?;
        write_plot(cli, "interaction_decay", &decay.rows)?;
        v["interaction_decay"] = to_value(&decay)?;
        v["uniform_bounds"] = to_value(&bounds)?;
    }
    write_csv(cli, "continuation.csv", &continuation_csv(cont))?;
    if let Some(first) = cont.steps.first() {
        for (n, h) in first.snapshot.holder.iter().enumerate() {
            let pts: Vec<(f64, f64)> = cont
                .steps
                .iter()
                .map(|s| (s.beta, s.snapshot.holder[n].value))
                .collect();
            write_plot(cli, &holder_column(h.alpha), &pts)?;
        }
    }
    let sup: Vec<(f64, f64)> = cont.steps.iter().map(|s| (s.beta, s.snapshot.sup_norm)).collect();
    let h1: Vec<(f64, f64)> = cont.steps.iter().map(|s| (s.beta, s.snapshot.h1_norm)).collect();
    let en: Vec<(f64, f64)> = cont.steps.iter().map(|s| (s.beta, s.snapshot.energy.total)).collect();
    write_plot(cli, "sup_norm", &sup)?;
    write_plot(cli, "h1_norm", &h1)?;
    write_plot(cli, "energy", &en)?;
    Ok(v)
}

fn run_continue(cli: &Cli) -> Result<Outcome> {
    let (_, exp) = load(cli)?;
    let cont = solver::continuation(&exp.spec, &exp.schedule, &exp.solve)?;
    let mut summary = json!({ "command": "continue", "seed": cli.seed });
    summary["continuation"] = continuation_summary(cli, &cont)?;
    if let Some(b) = &exp.blowup {
        let last = cont.steps.last().expect("nonempty schedule");
        let spec = exp.spec.with_beta(last.beta);
        let frame = blowup_extract(
            &spec,
            &last.solve.u,
            b.center,
            b.scale,
            b.alpha,
            &BlowupOptions {
                half_width: b.half_width,
                normalization: b.normalization,
            },
        )?;
        summary["blowup"] = json!({
            "beta": last.beta,
            "center": frame.center,
            "scale": frame.scale,
            "alpha": frame.alpha,
            "normalization": frame.normalization,
            "m_n": frame.m_n,
            "interaction_magnitude": frame.interaction_magnitude,
        });
    }
    Ok(Outcome {
        unconverged: cont.warning,
        summary,
    })
}

fn limit_value(r: &LimitResult) -> Result<Value> {
    Ok(json!({
        "method": to_value(&r.method)?,
        "c_infty": r.c_infty,
        "c_beta": r.c_beta,
        "projected_energy": r.projected_energy,
        "breakdown": to_value(&r.breakdown)?,
        "rounds": r.rounds,
        "positivity_residual": to_value(&r.residuals)?,
        "seg_violation": diagnostics::segregation_violation(r.u.field(), r.u.k()),
        "penalty_trace": to_value(&r.penalty_trace)?,
        "support": hex::encode(r.u.support_bytes()),
    }))
}

fn run_limit(cli: &Cli) -> Result<Outcome> {
    let (_, exp) = load(cli)?;
    let cont = solver::continuation(&exp.spec, &exp.schedule, &exp.solve)?;
    let last = cont.steps.last().expect("nonempty schedule");
    let spec_max = exp.spec.with_beta(last.beta);
    let proxy = limit::solve_limit_from(&spec_max, &last.solve.u, &exp.solve, &exp.limit)?;
    let mut summary = json!({ "command": "limit", "seed": cli.seed });
    summary["continuation"] = continuation_summary(cli, &cont)?;
    summary["beta_proxy"] = limit_value(&proxy)?;
    summary["relative_gap"] = json!((last.snapshot.energy.total - proxy.c_infty).abs() / proxy.c_infty.abs());
    let mut unconverged = cont.warning;
    if !exp.penalty_schedule.is_empty() {
        let pen = limit::solve_limit_penalty(
            &exp.spec,
            proxy.u.field(),
            &exp.penalty_schedule,
            &exp.solve,
            &exp.limit,
        )?;
        unconverged |= pen.penalty_trace.iter().any(|s| !s.converged);
        let mut csv = String::from("n,penalty,energy\n");
        for s in &pen.penalty_trace {
            let _ = writeln!(csv, "{:e},{:e},{:e}", s.n, s.penalty, s.energy);
        }
        write_csv(cli, "penalty.csv", &csv)?;
        let pts: Vec<(f64, f64)> = pen.penalty_trace.iter().map(|s| (s.n, s.penalty)).collect();
        write_plot(cli, "penalty_integral", &pts)?;
        summary["route_agreement"] = json!((pen.c_infty - proxy.c_infty).abs() / proxy.c_infty.abs());
        summary["penalty"] = limit_value(&pen)?;
    }
    Ok(Outcome { unconverged, summary })
}

fn run_alpha(cli: &Cli, k: usize) -> Result<Outcome> {
    let search = match &cli.config {
        Some(_) => load(cli)?.1.alpha,
        None => AlphaSearch::default(),
    };
    let report = threshold_report(k, &search)?;
    for a in &report.alphas {
        println!("alpha_{} <= {:.12}", a.ell, a.alpha);
        println!("{}", a.config);
    }
    println!("nu_bar <= {:.12}", report.nu_bar);
    let mut summary = json!({ "command": "alpha", "seed": cli.seed });
    summary["threshold"] = to_value(&report)?;
    Ok(Outcome {
        unconverged: false,
        summary,
    })
}

fn run_pohozaev(cli: &Cli, field: PohozaevField) -> Result<Outcome> {
    let (_, exp) = load(cli)?;
    let ball = exp
        .ball
        .ok_or_else(|| Error::Config("a [pohozaev] section with center and radius is required".into()))?;
    let spec = &exp.spec;
    let dom = &spec.domain;
    let mut unconverged = false;
    let u = match field {
        PohozaevField::Limit => {
            let cont = solver::continuation(spec, &exp.schedule, &exp.solve)?;
            unconverged = cont.warning;
            let last = cont.steps.last().expect("nonempty schedule");
            limit::solve_limit_from(&spec.with_beta(last.beta), &last.solve.u, &exp.solve, &exp.limit)?
                .u
                .into_field()
        }
        PohozaevField::X1 | PohozaevField::X1x2 => {
            let mut u = MultiField::zeros(spec.d(), dom.len());
            let f = dom.sample(|x, y| if field == PohozaevField::X1 { x } else { x * y });
            u.component_mut(0).copy_from_slice(&f);
            u
        }
    };
    let rep = pohozaev_check(spec, &u, &ball)?;
    let mut summary = json!({ "command": "pohozaev", "seed": cli.seed });
    summary["field"] = json!(format!("{field:?}").to_lowercase());
    summary["report"] = to_value(&rep)?;
    summary["energy_infinity"] = json!(energy::energy(&limit::limit_spec(spec), &u)?.total);
    Ok(Outcome { unconverged, summary })
}

/// Human-readable digest of `summary.json`.
pub fn report(out: &Path) -> Result<String> {
    let text = fs::read_to_string(out.join("summary.json"))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
    let mut s = String::new();
    let _ = writeln!(s, "command: {}", v["command"].as_str().unwrap_or("?"));
    let _ = writeln!(s, "exit code: {}", v["exit_code"]);
    if let Some(e) = v.get("error") {
        let _ = writeln!(s, "error: {}", e.as_str().unwrap_or(""));
    }
    if let Some(steps) = v.pointer("/continuation/steps").and_then(Value::as_array) {
        let _ = writeln!(s, "{:>10} {:>14} {:>14} {:>12}", "beta", "energy", "interaction", "sup");
        for st in steps {
            let _ = writeln!(
                s,
                "{:>10e} {:>14.8} {:>14.6e} {:>12.6}",
                st["beta"].as_f64().unwrap_or(f64::NAN),
                st.pointer("/energy/total").and_then(Value::as_f64).unwrap_or(f64::NAN),
                st["interaction_scaled"].as_f64().unwrap_or(f64::NAN),
                st["sup_norm"].as_f64().unwrap_or(f64::NAN),
            );
        }
    }
    if let Some(c) = v.pointer("/beta_proxy/c_infty") {
        let _ = writeln!(s, "c_infty (beta proxy): {c}");
    }
    if let Some(c) = v.pointer("/penalty/c_infty") {
        let _ = writeln!(s, "c_infty (penalty): {c}");
    }
    if let Some(nu) = v.pointer("/threshold/nu_bar") {
        let _ = writeln!(s, "nu_bar <= {nu}");
    }
    if let Some(r) = v.pointer("/report/residual") {
        let _ = writeln!(s, "Pohozaev residual: {r}");
    }
    Ok(s)
}
