//! The `morlgen` command line.
//!
//! Exit codes: 0 on success, 2 on bad input, 3 when the run succeeded but a
//! reference front is an approximation. Every subcommand that writes files
//! drops a `manifest.json` into its output directory before anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::agents::AgentSnapshot;
use crate::harness::{
    make_reference_fronts, render_report, summary_table, write_report, AgentKind, EvalConfig,
    EvalReport, HarnessError, Provenance, TrainedAgents, VERSION,
};
use crate::lavagrid::{
    builtin_context, ContextFile, LavaGridContext, DEFAULT_GAMMA, DEFAULT_MAX_STEPS,
};
use crate::oracle::pareto_backward_induction;
use crate::pareto::io::front_to_csv;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIGEST_FILE: &str = "SHA256SUMS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Result of a subcommand that did not fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Approximate,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Done => 0,
            Outcome::Approximate => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "morlgen",
    version,
    about = "Evaluate generalization in multi-objective reinforcement learning"
)]
pub struct Cli {
    /// Worker threads; defaults to the number of logical cores. Never changes outputs.
    #[arg(long, global = true, value_name = "N")]
    pub parallel: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the Pareto front of one context by backward induction.
    Oracle(OracleArgs),
    /// Train agents and write snapshots.
    Train(TrainArgs),
    /// Score agents against reference fronts and write reports.
    Eval(EvalArgs),
    /// Render a report as a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Builtin context name or path to a context JSON file.
    pub context: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub horizon: usize,
    /// Largest return set kept per state.
    #[arg(long, default_value_t = crate::harness::DEFAULT_ORACLE_CAP, conflicts_with = "exact")]
    pub cap: usize,
    /// Keep every nondominated return (no cap).
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Generalist,
    Specialist,
    Random,
}

impl AgentArg {
    fn kind(self) -> AgentKind {
        match self {
            AgentArg::Generalist => AgentKind::Generalist,
            AgentArg::Specialist => AgentKind::Specialist,
            AgentArg::Random => AgentKind::Random,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Agents to train; repeat for several. Defaults to all.
    #[arg(long = "agent", value_enum)]
    pub agents: Vec<AgentArg>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory written by `train`; agents are trained in memory when absent.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Score the reference fronts against themselves.
    #[arg(long, conflicts_with = "snapshots")]
    pub self_test: bool,
    /// Agents to evaluate when training in memory. Defaults to all.
    #[arg(long = "agent", value_enum)]
    pub agents: Vec<AgentArg>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `report-*.json` written by `eval`.
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextEcho {
    pub name: String,
    pub weights: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub out: String,
    pub base_seed: Option<u64>,
    pub software_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextEcho>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifests serialize");
        text.push('\n');
        write(&dir.join(MANIFEST_FILE), &text)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// A builtin by name, or a context JSON file named by its stem.
pub fn load_context(spec: &str) -> Result<LavaGridContext, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let file: ContextFile = parse_json(path, &read(path)?)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("context")
            .to_string();
        let ctx = file
            .into_context(name)
            .map_err(|e| CliError::Input(format!("{spec}: {e}")))?;
        ctx.layout
            .validate()
            .map_err(|e| CliError::Input(format!("{spec}: {e}")))?;
        return Ok(ctx);
    }
    builtin_context(spec).ok_or_else(|| {
        CliError::Input(format!(
            "{spec}: neither a builtin context nor a readable file"
        ))
    })
}

/// Reads and validates a run config, applying a `--seed` override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<EvalConfig, CliError> {
    let mut config: EvalConfig = parse_json(path, &read(path)?)?;
    if let Some(s) = seed {
        config.seeds = vec![s];
    }
    config.validate()?;
    config.resolve_contexts()?;
    Ok(config)
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Outcome, CliError> {
    let ctx = load_context(&args.context)?;
    if args.cap == 0 {
        return Err(CliError::Input("--cap must be positive".into()));
    }
    let manifest = RunManifest {
        subcommand: "oracle".into(),
        config: None,
        out: args.out.display().to_string(),
        base_seed: None,
        software_version: VERSION.into(),
        context: Some(ContextEcho {
            name: ctx.id.clone(),
            weights: ctx.weights.as_array(),
        }),
    };
    let cap = (!args.exact).then_some(args.cap);
    let front = pareto_backward_induction(&ctx, args.gamma, args.horizon, cap)
        .map_err(|e| CliError::Input(e.to_string()))?;
    manifest.write(&args.out)?;
    write(&args.out.join("front.csv"), &front_to_csv(&front.front))?;
    let mut witnesses =
        serde_json::to_string_pretty(&front.witness_file()).expect("witnesses serialize");
    witnesses.push('\n');
    write(&args.out.join("witnesses.json"), &witnesses)?;
    if front.approximate {
        eprintln!(
            "front is an approximation: cap {} bound, epsilon {}",
            args.cap, front.epsilon
        );
        return Ok(Outcome::Approximate);
    }
    Ok(Outcome::Done)
}

fn kinds(agents: &[AgentArg]) -> Vec<AgentKind> {
    let mut picked: Vec<AgentKind> = if agents.is_empty() {
        vec![
            AgentKind::Generalist,
            AgentKind::Specialist,
            AgentKind::Random,
        ]
    } else {
        agents.iter().map(|a| a.kind()).collect()
    };
    picked.dedup();
    picked
}

fn snapshot_file_name(s: &AgentSnapshot) -> String {
    let stem = match &s.context {
        Some(c) => format!("{}-seed-{}-{}", s.label, s.rng.base_seed, c),
        None => format!("{}-seed-{}", s.label, s.rng.base_seed),
    };
    let stem: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{stem}.json")
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn cmd_train(args: &TrainArgs) -> Result<Outcome, CliError> {
    let config = load_config(&args.config, args.seed)?;
    RunManifest {
        subcommand: "train".into(),
        config: Some(args.config.display().to_string()),
        out: args.out.display().to_string(),
        base_seed: config.seeds.first().copied(),
        software_version: VERSION.into(),
        context: None,
    }
    .write(&args.out)?;
    let mut sums = String::new();
    for kind in kinds(&args.agents) {
        let agents = TrainedAgents::train(&config, kind)?;
        for snap in agents.snapshots(&config)? {
            let name = snapshot_file_name(&snap);
            let text = snap.to_json();
            sums.push_str(&format!("{}  {name}\n", sha256_hex(&text)));
            write(&args.out.join(&name), &text)?;
        }
    }
    write(&args.out.join(DIGEST_FILE), &sums)?;
    print!("{sums}");
    Ok(Outcome::Done)
}

/// Every snapshot in `dir`, checked against its digest file when present.
pub fn load_snapshots(dir: &Path) -> Result<Vec<AgentSnapshot>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!(
            "{}: snapshot directory not found",
            dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n != MANIFEST_FILE)
        })
        .collect();
    paths.sort();
    let sums_path = dir.join(DIGEST_FILE);
    let sums = if sums_path.is_file() {
        Some(read(&sums_path)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for p in paths {
        let text = read(&p)?;
        if let Some(sums) = &sums {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let listed = sums.lines().find_map(|l| {
                l.split_once("  ")
                    .filter(|(_, n)| *n == name)
                    .map(|(h, _)| h.to_string())
            });
            if listed.is_some_and(|h| h != sha256_hex(&text)) {
                return Err(CliError::Input(format!("{}: digest mismatch", p.display())));
            }
        }
        out.push(
            AgentSnapshot::from_json(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        );
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no snapshots found",
            dir.display()
        )));
    }
    Ok(out)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Outcome, CliError> {
    let config = load_config(&args.config, args.seed)?;
    let snapshots = args.snapshots.as_deref().map(load_snapshots).transpose()?;
    RunManifest {
        subcommand: "eval".into(),
        config: Some(args.config.display().to_string()),
        out: args.out.display().to_string(),
        base_seed: config.seeds.first().copied(),
        software_version: VERSION.into(),
        context: None,
    }
    .write(&args.out)?;
    let references = make_reference_fronts(&config)?;
    let mut reports = Vec::new();
    if args.self_test {
        reports.push(TrainedAgents::Oracle.evaluate(&config, &references)?);
    } else if let Some(snaps) = &snapshots {
        for kind in [
            AgentKind::Generalist,
            AgentKind::Specialist,
            AgentKind::Random,
        ] {
            if snaps.iter().any(|s| s.label == kind.as_str()) {
                reports.push(
                    TrainedAgents::from_snapshots(&config, kind, snaps)?
                        .evaluate(&config, &references)?,
                );
            }
        }
        if reports.is_empty() {
            return Err(CliError::Input(
                "no generalist, specialist or random snapshots found".into(),
            ));
        }
    } else {
        for kind in kinds(&args.agents) {
            reports.push(TrainedAgents::train(&config, kind)?.evaluate(&config, &references)?);
        }
    }
    for r in &reports {
        write_report(r, &args.out)?;
    }
    print!("{}", summary_table(&reports));
    let approximate: Vec<&str> = references
        .iter()
        .filter(|r| r.provenance != Provenance::OracleExact)
        .map(|r| r.context.as_str())
        .collect();
    if approximate.is_empty() {
        Ok(Outcome::Done)
    } else {
        eprintln!("approximate reference fronts: {}", approximate.join(", "));
        Ok(Outcome::Approximate)
    }
}

pub fn cmd_report(args: &ReportArgs) -> Result<Outcome, CliError> {
    let text = read(&args.report)?;
    let report = EvalReport::from_json(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.report.display())))?;
    print!("{}", render_report(&report));
    Ok(Outcome::Done)
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.parallel {
        if n == 0 {
            return Err(CliError::Input("--parallel must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Input(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Oracle(a) => cmd_oracle(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    })
}

/// Parses the process arguments, runs, and maps failures to exit code 2.
pub fn main_exit() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
