//! `qualctl`: generate, clean, query, evaluate and serve the qualification
//! catalog from one binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod config;
mod failure;
mod manifest;

use config::FileConfig;
use failure::{Failure, EXIT_OK, EXIT_USAGE};
use manifest::{normalize_args, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "qualctl", version, about = "Qualification retrieval over a component database and a qualification catalog")]
struct Cli {
    /// Print errors as one JSON object on standard error.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    /// TOML file with [corpus], [cost.*], [limits] and [llm] sections.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus: plm.csv, qc.csv, truth.json, truth_rules.csv.
    Gen(GenArgs),
    /// Propose manufacturer rules and recover part numbers from card notes.
    Clean(CleanArgs),
    /// Run the direct / similarity / alternative cascade for one part number.
    Query(QueryArgs),
    /// Run and score the retrieval-augmented baseline.
    Rag(RagArgs),
    /// Score the cascade against ground truth.
    Eval(EvalArgs),
    /// Effort curves, break-even points and savings of the three approaches.
    Cost(CostArgs),
    /// Serve the HTTP API over a data directory.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    /// Deterministic offline backend.
    Mock,
    /// Chat-completions endpoint from LLM_ENDPOINT / LLM_API_KEY / LLM_MODEL.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Feature-hashing embedder, no network.
    Local,
    /// Embedding service from EMBED_ENDPOINT / EMBED_MODEL.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Marginals of the reference evaluation; card count follows the direct average.
    Paper,
    /// Use the [corpus] section of --config as is.
    Config,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Number of components.
    #[arg(long)]
    pub components: Option<usize>,
    /// Number of qualification cards.
    #[arg(long)]
    pub quals: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "paper")]
    pub profile: Profile,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CleanArgs {
    #[arg(long)]
    pub plm: PathBuf,
    #[arg(long)]
    pub qc: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    pub llm: LlmKind,
    /// Output directory; it becomes a data directory for `query` and `serve`.
    #[arg(long)]
    pub out: PathBuf,
    /// Leave every proposed rule for a reviewer.
    #[arg(long)]
    pub no_auto_accept: bool,
    /// Parallel extraction calls.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct QueryArgs {
    #[arg(long)]
    pub pn: String,
    /// Maximum alternative suggestions.
    #[arg(long)]
    pub k: Option<usize>,
    /// Print the report as JSON with sorted keys.
    #[arg(long)]
    pub json: bool,
    /// Data directory written by `clean`.
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderKind,
}

#[derive(Debug, Args, Serialize)]
pub struct RagArgs {
    #[arg(long)]
    pub plm: PathBuf,
    #[arg(long)]
    pub qc: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Evaluate this many evenly spaced components; all when absent.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Context size.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "mock")]
    pub llm: LlmKind,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderKind,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long, default_value = "rag_report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Data directory written by `clean`.
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub subset: Option<usize>,
    /// Maximum alternative suggestions.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderKind,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long, default_value = "eval_report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CostArgs {
    #[arg(long, default_value_t = 10_000)]
    pub max_n: u64,
    #[arg(long, default_value_t = 100)]
    pub step: u64,
    /// Write the effort curves as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Write break-even points and savings as JSON.
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
    /// Change every per-component effort by this percentage, e.g. -20.
    #[arg(long, allow_hyphen_values = true)]
    pub sensitivity: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    /// Refuse review decisions.
    #[arg(long)]
    pub read_only: bool,
    /// Snapshot the folded state every N decisions; 0 disables snapshots.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderKind,
}

/// Settings shared by every subcommand.
pub struct Ctx {
    pub quiet: bool,
    pub config: FileConfig,
}

impl Ctx {
    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", line.as_ref());
            let _ = out.flush();
        }
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Clean(_) => "clean",
            Command::Query(_) => "query",
            Command::Rag(_) => "rag",
            Command::Eval(_) => "eval",
            Command::Cost(_) => "cost",
            Command::Serve(_) => "serve",
        }
    }

    fn args_json(&self) -> serde_json::Value {
        let v = match self {
            Command::Gen(a) => serde_json::to_value(a),
            Command::Clean(a) => serde_json::to_value(a),
            Command::Query(a) => serde_json::to_value(a),
            Command::Rag(a) => serde_json::to_value(a),
            Command::Eval(a) => serde_json::to_value(a),
            Command::Cost(a) => serde_json::to_value(a),
            Command::Serve(a) => serde_json::to_value(a),
        };
        v.unwrap_or_default()
    }

    fn manifest_dir(&self) -> PathBuf {
        match self {
            Command::Gen(a) => a.out.clone(),
            Command::Clean(a) => a.out.clone(),
            Command::Query(a) => a.data.clone(),
            Command::Rag(a) => parent_dir(&a.out),
            Command::Eval(a) => parent_dir(&a.out),
            Command::Cost(a) => a.csv.as_deref().or(a.summary.as_deref()).map_or_else(|| PathBuf::from("."), parent_dir),
            Command::Serve(a) => a.data.clone(),
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        use qualkg::cleaning::files;
        use qualkg::corpus::{PLM_FILE, QC_FILE, TRUTH_RULES_FILE};
        let data = |dir: &Path| {
            [PLM_FILE, QC_FILE, files::QC_AUGMENTED, files::RULES_CSV, files::RULES_JSON, files::REVIEW_QUEUE]
                .iter()
                .map(|f| dir.join(f))
                .collect::<Vec<_>>()
        };
        match self {
            Command::Gen(_) | Command::Cost(_) => Vec::new(),
            Command::Clean(a) => vec![a.plm.clone(), a.qc.clone()],
            Command::Query(a) => data(&a.data),
            Command::Serve(a) => data(&a.data),
            Command::Rag(a) => vec![a.plm.clone(), a.qc.clone(), a.truth.clone(), a.truth.with_file_name(TRUTH_RULES_FILE)],
            Command::Eval(a) => {
                let mut v = data(&a.data);
                v.push(a.truth.clone());
                v
            }
        }
    }
}

fn report_failure(f: &Failure, json: bool) {
    let mut err = std::io::stderr().lock();
    let _ = if json {
        writeln!(err, "{}", f.to_json())
    } else {
        writeln!(err, "error: {f}")
    };
}

fn run(argv: Vec<OsString>) -> i32 {
    let json_errors = argv.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            if json_errors {
                report_failure(&Failure::Usage(e.to_string().trim().to_string()), true);
            } else {
                let _ = e.print();
            }
            return EXIT_USAGE;
        }
    };

    let started = Utc::now();
    let result = FileConfig::load(cli.config.as_deref()).and_then(|config| {
        let ctx = Ctx {
            quiet: cli.quiet,
            config,
        };
        match &cli.command {
            Command::Gen(a) => commands::gen(&ctx, a),
            Command::Clean(a) => commands::clean(&ctx, a),
            Command::Query(a) => commands::query(&ctx, a),
            Command::Rag(a) => commands::rag(&ctx, a),
            Command::Eval(a) => commands::eval(&ctx, a),
            Command::Cost(a) => commands::cost(&ctx, a),
            Command::Serve(a) => commands::serve(&ctx, a),
        }
    });
    let exit_code = result.as_ref().map_or_else(Failure::exit_code, |_| EXIT_OK);

    let inputs = cli.command.inputs();
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        args: normalize_args(cli.command.args_json()),
        input_fingerprints: manifest::fingerprints(inputs.iter().map(PathBuf::as_path)),
        started,
        finished: Utc::now(),
        exit_code,
    };
    let dir = cli.command.manifest_dir();
    if dir.is_dir() || exit_code == EXIT_OK {
        if let Err(e) = manifest.write(&dir) {
            if !cli.quiet {
                println!("note: run manifest not written to {}: {e}", dir.display());
            }
        }
    }

    if let Err(f) = &result {
        report_failure(f, json_errors || cli.json_errors);
    }
    exit_code
}

fn main() {
    std::process::exit(run(std::env::args_os().collect()));
}
