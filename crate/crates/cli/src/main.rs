//! `glab`: run experiments from a config, sweep a field, or run the
//! acceptance suite.
//!
//! Exit codes: 0 all audits pass, 1 an audit failed, 2 invalid config or
//! parameters, 3 numerical or resource failure.

mod config;
mod output;
mod tasks;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use glab_core::correlations::linear_fit;
use glab_core::{GlabError, VerifyOptions};
use rayon::prelude::*;
use serde_json::json;

use config::ExperimentConfig;
use output::{audit_rows, sha256_hex, Writer};
use tasks::{run_task, to_csv_records, TaskOutput};

const EXIT_AUDIT: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "glab", version, about = "Channel circuits between Gibbs states: experiments and audits")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "GLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of a numeric config field, merged into sweep.csv.
    Sweep {
        config: PathBuf,
        /// Dotted field path, e.g. `params.r_1` or `model.beta`.
        #[arg(long)]
        axis: String,
        #[arg(long, num_args = 0.., allow_negative_numbers = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria.
    VerifyAll {
        /// Smaller instances; finishes in well under a minute.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
        #[arg(long, default_value = "glab-out/verify-all")]
        out: PathBuf,
    },
}

/// Errors that mean the request itself was invalid.
fn exit_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<GlabError>() {
        Some(GlabError::Config(_) | GlabError::Path(_) | GlabError::Geometry(_) | GlabError::Partition(_) | GlabError::Label(_)) => {
            EXIT_INVALID
        }
        Some(_) => EXIT_NUMERICAL,
        None => EXIT_INVALID,
    }
}

struct Outcome {
    code: u8,
    metrics: std::collections::BTreeMap<String, f64>,
    error: Option<String>,
}

/// Write all artifacts for a finished task and report failing audits.
fn emit(dir: &Path, task: &str, config: serde_json::Value, inputs: serde_json::Value, out: &TaskOutput, started: Instant, threads: usize) -> anyhow::Result<u8> {
    let mut w = Writer::new(dir)?;
    for (name, body) in &out.csvs {
        w.write(name, body.as_bytes())?;
    }
    for (name, v) in &out.json {
        w.write_json(name, v)?;
    }
    let pass = out.audits.all_pass();
    let failures: Vec<_> = out.audits.failures().iter().map(|a| json!({ "name": a.name, "anchor": a.anchor })).collect();
    let summary = json!({
        "schema": config::SCHEMA_VERSION,
        "task": task,
        "config": config,
        "pass": pass,
        "n_audits": out.audits.len(),
        "audits": audit_rows(&out.audits),
        "failures": failures,
        "metrics": out.metrics,
        "results": out.results,
    });
    w.write_json("summary.json", &summary)?;
    w.finish(inputs, started.elapsed().as_secs_f64(), threads)?;
    for a in out.audits.failures() {
        eprintln!("audit failed: {} ({:.6e} > {:.6e} + {:.1e}) [{}]", a.name, a.lhs, a.rhs, a.slack, a.anchor);
    }
    Ok(if pass { 0 } else { EXIT_AUDIT })
}

fn run_config(cfg: &ExperimentConfig, raw: &str, dir: &Path, threads: usize) -> Outcome {
    let started = Instant::now();
    let out = match run_task(cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Outcome { code: exit_for(&e), metrics: Default::default(), error: Some(format!("{e:#}")) };
        }
    };
    let inputs = json!({ "config_sha256": sha256_hex(raw.as_bytes()), "canonical_config_sha256": sha256_hex(cfg.to_toml().as_bytes()), "seed": cfg.seed });
    let config = serde_json::to_value(cfg).unwrap_or_default();
    match emit(dir, cfg.task.name(), config, inputs, &out, started, threads) {
        Ok(code) => Outcome { code, metrics: out.metrics, error: None },
        Err(e) => {
            eprintln!("error: {e:#}");
            Outcome { code: EXIT_NUMERICAL, metrics: out.metrics, error: Some(format!("{e:#}")) }
        }
    }
}

fn output_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>, prefix: &str) -> PathBuf {
    flag.or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(format!("glab-out/{prefix}{}", cfg.task.name())))
}

fn cmd_run(path: &Path, out: Option<PathBuf>, threads: usize) -> u8 {
    let (cfg, raw) = match ExperimentConfig::load(path) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("invalid config: {e:#}");
            return EXIT_INVALID;
        }
    };
    let dir = output_dir(&cfg, out, "");
    let o = run_config(&cfg, &raw, &dir, threads);
    if o.code == 0 {
        println!("{}: all audits pass; artifacts in {}", cfg.task.name(), dir.display());
    }
    o.code
}

fn cmd_sweep(path: &Path, axis: &str, values: &[String], out: Option<PathBuf>, threads: usize) -> u8 {
    let raw = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return EXIT_INVALID;
        }
    };
    let json = path.extension().is_some_and(|e| e == "json");
    let base = match ExperimentConfig::parse(&raw, json).and_then(|c| Ok((c, config::parse_table(&raw, json)?))) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("invalid config: {e:#}");
            return EXIT_INVALID;
        }
    };
    if values.is_empty() {
        println!("sweep over {axis}: no values, nothing to do");
        return 0;
    }
    let (cfg0, table) = base;
    let dir = output_dir(&cfg0, out, "sweep-");
    let started = Instant::now();
    let outcomes: Vec<Outcome> = values
        .par_iter()
        .map(|v| {
            let mut t = table.clone();
            let cfg = config::patch_field(&mut t, axis, v).and_then(|_| {
                let c: ExperimentConfig = t.try_into()?;
                c.validate()?;
                Ok(c)
            });
            match cfg {
                Ok(c) => run_config(&c, &c.to_toml(), &dir.join(format!("{}={v}", axis.replace('/', "_"))), threads),
                Err(e) => {
                    eprintln!("{axis}={v}: invalid: {e:#}");
                    Outcome { code: EXIT_INVALID, metrics: Default::default(), error: Some(format!("{e:#}")) }
                }
            }
        })
        .collect();

    let mut names: Vec<String> = outcomes.iter().flat_map(|o| o.metrics.keys().cloned()).collect();
    names.sort();
    names.dedup();
    let mut header = vec!["value", "exit_code"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = values
        .iter()
        .zip(&outcomes)
        .map(|(v, o)| {
            let mut r = vec![v.clone(), o.code.to_string()];
            r.extend(names.iter().map(|n| o.metrics.get(n).map(|x| x.to_string()).unwrap_or_default()));
            r
        })
        .collect();

    // log|metric| against the axis value, over sub-runs that produced it.
    let mut trends = vec![];
    for n in &names {
        let pts: Vec<(f64, f64)> = values
            .iter()
            .zip(&outcomes)
            .filter_map(|(v, o)| Some((v.parse::<f64>().ok()?, *o.metrics.get(n)?)))
            .filter(|(_, m)| m.is_finite() && *m > 0.0)
            .collect();
        if pts.len() >= 2 {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            let (a, b, r2) = linear_fit(&xs, &ys);
            trends.push(vec![n.clone(), pts.len().to_string(), b.to_string(), a.to_string(), r2.to_string()]);
        }
    }
    let worst = outcomes.iter().map(|o| o.code).max().unwrap_or(0);
    let res = (|| -> anyhow::Result<()> {
        let mut w = Writer::new(&dir)?;
        w.write("sweep.csv", to_csv_records(&header, &rows)?.as_bytes())?;
        w.write("trends.csv", to_csv_records(&["metric", "points", "log_slope", "log_intercept", "r_squared"], &trends)?.as_bytes())?;
        let runs: Vec<_> = values.iter().zip(&outcomes).map(|(v, o)| json!({ "value": v, "exit_code": o.code, "error": o.error })).collect();
        let trend_json: Vec<_> = trends.iter().map(|t| json!({ "metric": t[0], "log_slope": t[2].parse::<f64>().ok(), "r_squared": t[4].parse::<f64>().ok() })).collect();
        w.write_json(
            "summary.json",
            &json!({ "schema": config::SCHEMA_VERSION, "task": format!("sweep:{}", cfg0.task.name()), "axis": axis, "pass": worst == 0, "runs": runs, "trends": trend_json }),
        )?;
        w.finish(json!({ "config_sha256": sha256_hex(raw.as_bytes()), "axis": axis, "values": values }), started.elapsed().as_secs_f64(), threads)
    })();
    if let Err(e) = res {
        eprintln!("error: {e:#}");
        return worst.max(EXIT_NUMERICAL);
    }
    println!("sweep over {axis}: {} runs, worst exit {worst}; artifacts in {}", values.len(), dir.display());
    worst
}

fn cmd_verify(quick: bool, seed: Option<u64>, only: Option<Vec<usize>>, dir: &Path, threads: usize) -> u8 {
    let mut opts = VerifyOptions { quick, ..VerifyOptions::default() };
    if let Some(s) = seed {
        opts.seed = s;
    }
    if let Some(bad) = only.iter().flatten().find(|&&id| id == 0 || id > glab_core::verify::N_CRITERIA) {
        eprintln!("invalid criterion id {bad}");
        return EXIT_INVALID;
    }
    let started = Instant::now();
    let out = match tasks::verify(&opts, only.as_deref()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_NUMERICAL;
        }
    };
    let inputs = json!({ "quick": quick, "seed": opts.seed, "only": only });
    match emit(dir, "verify-all", inputs.clone(), inputs, &out, started, threads) {
        Ok(code) => {
            if code == 0 {
                println!("verify-all: all audits pass; artifacts in {}", dir.display());
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_NUMERICAL
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("thread count must be positive");
            return ExitCode::from(EXIT_INVALID);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure threads: {e}");
        }
    }
    let threads = rayon::current_num_threads();
    let code = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out, threads),
        Command::Sweep { config, axis, values, out } => cmd_sweep(&config, &axis, &values, out, threads),
        Command::VerifyAll { quick, seed, only, out } => cmd_verify(quick, seed, only, &out, threads),
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use glab_core::Audit;

    #[test]
    fn failed_audit_exits_1_and_is_listed() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = TaskOutput::default();
        out.audits.push(Audit::le("ok", 1.0, 2.0, 0.0, "a"));
        out.audits.push(Audit::le("broken", 3.0, 2.0, 1e-9, "named bound"));
        let code = emit(tmp.path(), "test", json!({}), json!({}), &out, Instant::now(), 1).unwrap();
        assert_eq!(code, EXIT_AUDIT);
        let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["pass"], false);
        assert_eq!(s["failures"][0]["anchor"], "named bound");
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_for(&GlabError::Path("x".into()).into()), EXIT_INVALID);
        assert_eq!(exit_for(&GlabError::Numerical("x".into()).into()), EXIT_NUMERICAL);
        assert_eq!(exit_for(&anyhow::anyhow!("bad")), EXIT_INVALID);
    }
}
