//! `decprov`: record, verify and interrogate decision provenance logs.
//!
//! Exit codes: 0 on success, 1 when the log or the request fails on its
//! merits (tampering, unknown node, rule violation), 2 on bad usage.

mod commands;
mod render;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "decprov", version, about = "Decision provenance logs for reviewable systems")]
struct Cli {
    /// Output format; json unless stated otherwise for a command.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Print diagnostics to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Dot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Back,
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ThreadArg {
    Driver,
    Lighting,
    Ambulance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AudienceArg {
    Regulator,
    Developer,
    User,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    None,
    Technical,
    Administrative,
}

#[derive(Args)]
pub struct LogArg {
    /// Log file (JSON Lines).
    #[arg(long, env = "DECPROV_LOG")]
    pub log: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Append events from a JSON Lines file through the capture policy.
    Ingest(IngestArgs),
    /// Check the hash chain of a log.
    Verify(LogArg),
    /// Backward or forward pipeline around a node.
    Trace(TraceArgs),
    /// Agents involved in a pipeline and their roles.
    Actors(ActorsArgs),
    /// List flow events.
    Flows(FlowsArgs),
    /// Re-evaluate logged flows against rules, or raise a breach report.
    Audit(AuditArgs),
    /// Audience-targeted audit report about a decision.
    Report(ReportArgs),
    /// Records of processing activities for controllers.
    Art30(Art30Args),
    /// Run a scenario and write its provenance log.
    Simulate(SimulateArgs),
    /// Follow a line of inquiry through a scenario log.
    Investigate(InvestigateArgs),
    /// Write a compacted copy of a log with expired records tombstoned.
    Expire(ExpireArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// Events to append, one JSON object per line; `-` reads stdin.
    #[arg(long)]
    pub input: PathBuf,
    /// Capture policy; records everything when absent.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Compliance rules checked on each ingested flow.
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// Root node id or label.
    #[arg(long)]
    pub id: String,
    #[arg(long, value_enum, default_value = "back")]
    pub direction: DirectionArg,
    /// Time window `start..end` (RFC 3339).
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Args)]
pub struct ActorsArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long)]
    pub id: String,
    #[arg(long, value_enum, default_value = "back")]
    pub direction: DirectionArg,
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Args)]
pub struct FlowsArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
}

#[derive(Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// Compliance rules; required unless `--breach` is given.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Evaluation time (RFC 3339); defaults to the latest record.
    #[arg(long)]
    pub now: Option<String>,
    /// Raise a breach report about this node and log the alert.
    #[arg(long)]
    pub breach: Option<String>,
    /// Who the breach alert is for.
    #[arg(long, default_value = "dpo")]
    pub recipient: String,
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long)]
    pub id: String,
    #[arg(long, value_enum, default_value = "regulator")]
    pub audience: AudienceArg,
    /// Largest included/total ratio before the report warns.
    #[arg(long, default_value_t = 1.0)]
    pub cap: f64,
}

#[derive(Args)]
pub struct Art30Args {
    #[command(flatten)]
    pub log: LogArg,
    /// Controller name or id; every agent with role=controller when absent.
    #[arg(long)]
    pub controller: Option<String>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario file; the bundled smart-city scenario when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the log.
    #[arg(long, env = "DECPROV_LOG")]
    pub out: PathBuf,
    /// Where to write the event trace (JSON Lines).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Capture policy; the bundled redaction policy when absent.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Compliance rules; the bundled rules when absent.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Run without compliance checks.
    #[arg(long, conflicts_with = "rules")]
    pub no_rules: bool,
    /// Drop the scenario's fault injections.
    #[arg(long)]
    pub no_faults: bool,
}

#[derive(Args)]
pub struct InvestigateArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// One line of inquiry; all three when absent.
    #[arg(long, value_enum)]
    pub thread: Option<ThreadArg>,
}

#[derive(Args)]
pub struct ExpireArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long)]
    pub policy: PathBuf,
    /// Evaluation time (RFC 3339); defaults to the latest record.
    #[arg(long)]
    pub now: Option<String>,
    /// Where to write the compacted log.
    #[arg(long)]
    pub out: PathBuf,
}

/// A request that cannot be served as given.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let ctx = commands::Ctx { format: cli.format, verbose: cli.verbose };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
        Command::Trace(a) => commands::trace(&ctx, a),
        Command::Actors(a) => commands::actors(&ctx, a),
        Command::Flows(a) => commands::flows(&ctx, a),
        Command::Audit(a) => commands::audit(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
        Command::Art30(a) => commands::art30(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Investigate(a) => commands::investigate(&ctx, a),
        Command::Expire(a) => commands::expire(&ctx, a),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("run `decprov --help` for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
