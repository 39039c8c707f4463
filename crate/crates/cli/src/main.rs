//! `readiness` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 validation failure.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use readiness_core::scoring::{display, ratio};
use readiness_core::session::format_timestamp;
use readiness_core::{
    histogram, load_catalog, render_csv, render_json, render_text, rollup, Assessment,
    AssessmentError, Catalog, CatalogError, Mode, NodeKind, Rational, ReportOptions, ScoringError,
    SessionStore, StoreError,
};
use readiness_service::{ServiceConfig, ServiceError};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "readiness",
    version,
    about = "ISMS compliance-readiness assessment tool"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a catalog document (the bundled catalog when no path is given).
    Validate { catalog: Option<PathBuf> },
    /// Score an assessment document and print a report.
    Assess(AssessArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Inspect stored assessment sessions.
    #[command(subcommand)]
    Sessions(SessionsCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Domain,
    Control,
}

#[derive(clap::Args)]
struct AssessArgs {
    /// Assessment document (JSON).
    assessment: PathBuf,
    /// Catalog document; defaults to the bundled ISO 27001 catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Score over the answered issues only instead of rejecting incomplete input.
    #[arg(long)]
    partial: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Histogram level for CSV output.
    #[arg(long, value_enum, default_value = "domain")]
    level: Level,
    /// Flag controls whose priority is at least this value (0 to 4).
    #[arg(long, default_value = "2", value_parser = parse_threshold)]
    flag_threshold: Rational,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, env = "READINESS_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "READINESS_STORE", default_value = "store")]
    store: PathBuf,
    #[arg(long, env = "READINESS_CATALOG")]
    catalog: Option<PathBuf>,
    /// Origin allowed to call the API from a browser; any origin when omitted.
    #[arg(long, env = "READINESS_UI_ORIGIN")]
    ui_origin: Option<String>,
}

#[derive(Subcommand)]
enum SessionsCommand {
    /// List sessions in the store.
    List {
        #[arg(long, env = "READINESS_STORE", default_value = "store")]
        store: PathBuf,
    },
    /// Show grade progression across a session's experiments.
    Progression {
        session_id: String,
        #[arg(long, env = "READINESS_STORE", default_value = "store")]
        store: PathBuf,
    },
}

/// Parses a plain decimal such as `2` or `2.5` into an exact value on the 0..=4 scale.
fn parse_threshold(text: &str) -> Result<Rational, String> {
    let bad = || format!("`{text}` is not a decimal between 0 and 4");
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if whole.is_empty()
        || !whole
            .bytes()
            .chain(frac.bytes())
            .all(|b| b.is_ascii_digit())
        || frac.len() > 6
    {
        return Err(bad());
    }
    let digits: i64 = format!("{whole}{frac}").parse().map_err(|_| bad())?;
    let value = ratio(digits, 10i64.pow(frac.len() as u32));
    if value > ratio(4, 1) {
        return Err(bad());
    }
    Ok(value)
}

enum Failure {
    Runtime(anyhow::Error),
    Validation(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Runtime)
}

fn catalog_failure(path: &str, err: &CatalogError) -> Failure {
    let mut msg = format!("invalid catalog {path}");
    match err.diagnostics() {
        [] => write!(msg, ": {err}").unwrap(),
        diags => {
            for d in diags {
                write!(msg, "\n  {d}").unwrap();
            }
        }
    }
    Failure::Validation(msg)
}

fn load_catalog_arg(path: Option<&Path>) -> Result<Catalog, Failure> {
    match path {
        None => Ok(Catalog::bundled()),
        Some(p) => {
            load_catalog(&read(p)?).map_err(|e| catalog_failure(&p.display().to_string(), &e))
        }
    }
}

fn cmd_validate(path: Option<&Path>) -> CmdResult {
    let catalog = load_catalog_arg(path)?;
    println!(
        "valid: {} {}: {} domains, {} controls, {} assessment issues",
        catalog.name(),
        catalog.version(),
        catalog.nodes_of_kind(NodeKind::Domain).len(),
        catalog.nodes_of_kind(NodeKind::Control).len(),
        catalog.leaves().len()
    );
    Ok(())
}

fn scoring_failure(err: ScoringError) -> Failure {
    match err {
        ScoringError::Incomplete(ids) => Failure::Validation(format!(
            "assessment is incomplete ({} unscored issues; use --partial to score anyway):\n  {}",
            ids.len(),
            ids.join("\n  ")
        )),
        other => Failure::Validation(other.to_string()),
    }
}

fn cmd_assess(args: &AssessArgs) -> CmdResult {
    let catalog = load_catalog_arg(args.catalog.as_deref())?;
    let assessment = Assessment::from_json(&read(&args.assessment)?).map_err(|e| match e {
        AssessmentError::Parse(_) | AssessmentError::OutOfRange(_) => Failure::Validation(format!(
            "invalid assessment {}: {e}",
            args.assessment.display()
        )),
    })?;
    let mode = if args.partial {
        Mode::Partial
    } else {
        Mode::Strict
    };
    let report = rollup(&catalog, &assessment, mode).map_err(scoring_failure)?;
    let opts = ReportOptions {
        flag_threshold: args.flag_threshold.clone(),
        ..ReportOptions::default()
    };
    let out = match args.format {
        Format::Text => render_text(&report, &catalog, &opts),
        Format::Json => render_json(&report, &catalog, &opts),
        Format::Csv => {
            let level = match args.level {
                Level::Domain => NodeKind::Domain,
                Level::Control => NodeKind::Control,
            };
            histogram(&report, &catalog, level).map(|h| render_csv(&h))
        }
    }
    .map_err(|e| Failure::Validation(e.to_string()))?;
    print!("{out}");
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CmdResult {
    let config = ServiceConfig {
        bind: args.bind,
        store_dir: args.store,
        catalog_path: args.catalog,
        ui_origin: args.ui_origin,
    };
    let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
    runtime
        .block_on(readiness_service::serve(config))
        .map_err(|e| match e {
            ServiceError::Catalog { path, source } => {
                catalog_failure(&path.display().to_string(), &source)
            }
            other => Failure::Runtime(anyhow!(other)),
        })
}

fn table(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
    }
    out
}

fn store_failure(err: StoreError) -> Failure {
    match err {
        StoreError::UnknownSession(_) => Failure::Validation(err.to_string()),
        other => Failure::Runtime(anyhow!(other)),
    }
}

fn cmd_sessions(cmd: SessionsCommand) -> CmdResult {
    match cmd {
        SessionsCommand::List { store } => {
            let mut rows = vec![
                ["SESSION_ID", "USER", "CATALOG", "EXPERIMENTS", "UPDATED_AT"]
                    .map(String::from)
                    .to_vec(),
            ];
            if store.exists() {
                let store = SessionStore::open(&store).map_err(store_failure)?;
                for s in store.list().map_err(store_failure)? {
                    rows.push(vec![
                        s.session_id,
                        s.entry.user,
                        s.entry.catalog.to_string(),
                        s.entry.experiment_count.to_string(),
                        format_timestamp(&s.entry.updated_at),
                    ]);
                }
            }
            print!("{}", table(&rows));
        }
        SessionsCommand::Progression { session_id, store } => {
            if !store.exists() {
                return Err(Failure::Validation(format!(
                    "unknown session `{session_id}`"
                )));
            }
            let store = SessionStore::open(&store).map_err(store_failure)?;
            let progression = store.progression(&session_id).map_err(store_failure)?;
            let mut rows = vec![["INDEX", "FINISHED_AT", "ACHIEVEMENT", "DELTA"]
                .map(String::from)
                .to_vec()];
            for row in progression {
                let delta = match &row.delta {
                    None => "-".to_string(),
                    Some(d) if *d >= ratio(0, 1) => format!("+{}", display(d)),
                    Some(d) => display(d),
                };
                rows.push(vec![
                    row.index.to_string(),
                    format_timestamp(&row.finished_at),
                    display(&row.achievement),
                    delta,
                ]);
            }
            print!("{}", table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Validate { catalog } => cmd_validate(catalog.as_deref()),
        Command::Assess(args) => cmd_assess(&args),
        Command::Serve(args) => cmd_serve(args),
        Command::Sessions(cmd) => cmd_sessions(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
