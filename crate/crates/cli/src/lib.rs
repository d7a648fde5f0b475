//! The `vme` command line: ingestion, task and persona review, validation,
//! personalized Q&A and archives.

pub mod config;
pub mod listen;
pub mod workspace;

use anyhow::{bail, Context as _};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use config::Config;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use vme_core::archive::{self, Archive, TimeRange};
use vme_core::ingest::{read_lbs, SymbolIndex};
use vme_core::llm::{LlmClient, LlmRegistry};
use vme_core::model::EventReader;
use vme_core::persona::validation::record_validation;
use vme_core::persona::{
    compute_accuracy, compute_persona, parse_confirmations, Dimension, MetricRegistry, Persona,
    PersonaStore,
};
use vme_core::qa::{self, Mode, Query};
use vme_core::similarity::{EmbeddingProvider, EmbeddingRegistry};
use vme_core::tasks::read_tbs;
use vme_core::{Engine, IngestSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_EXTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "vme",
    version,
    about = "Developer behavior analytics from IDE and terminal activity"
)]
pub struct Cli {
    /// Data directory holding the stores.
    #[arg(long, global = true, env = "VME_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Configuration file (defaults to <data-dir>/config.toml).
    #[arg(long, global = true, env = "VME_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a capture stream from a file or listen for capture clients.
    Ingest(IngestArgs),
    /// List recognized tasks.
    Tasks(TasksArgs),
    /// Recompute, snapshot and print the developer persona.
    Persona(PersonaArgs),
    /// Record per-metric confirmations and report accuracy per dimension.
    Validate { file: PathBuf },
    /// Ask a question about a repository.
    Ask(AskArgs),
    /// Write the events, behaviors and tasks of a time range to an archive.
    Export(ExportArgs),
    /// Append an archive to the stores.
    Import { archive: PathBuf },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Event file (`-` for stdin).
    #[arg(required_unless_present = "listen", conflicts_with = "listen")]
    pub file: Option<PathBuf>,
    /// `host:port`, `tcp:host:port` or `unix:/path`.
    #[arg(long)]
    pub listen: Option<String>,
    /// Stop after serving one connection.
    #[arg(long, requires = "listen")]
    pub once: bool,
    /// Symbol index file (overrides the configured one).
    #[arg(long)]
    pub symbols: Option<PathBuf>,
    /// Repository root that task summaries read snippets from.
    #[arg(long)]
    pub workspace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TasksArgs {
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PersonaArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub question: String,
    /// Leave the developer persona out of the prompt.
    #[arg(long)]
    pub baseline: bool,
    /// Repository whose files are included as context.
    #[arg(long)]
    pub workspace: Option<PathBuf>,
    /// Store the full rendered prompt in the audit log.
    #[arg(long)]
    pub dump_prompt: bool,
    /// Print the rendered prompt and its provenance.
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    /// Output archive path.
    pub out: PathBuf,
}

/// A mistake in how the command was invoked.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit status for an error: usage 1, data or integrity 2, external
/// service 3.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<vme_core::Error>() {
            return match e {
                e if e.is_external() => EXIT_EXTERNAL,
                vme_core::Error::InvalidParams(_)
                | vme_core::Error::UnknownStrategy { .. }
                | vme_core::Error::UnknownMetric { .. }
                | vme_core::Error::Invalid(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

/// Accepts RFC 3339 times, `YYYY-MM-DD` dates (UTC midnight) and epoch
/// milliseconds.
pub fn parse_time(s: &str) -> anyhow::Result<i64> {
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp_millis());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis());
    }
    Err(usage(format!(
        "cannot read {s:?} as a time (use RFC 3339, YYYY-MM-DD or epoch ms)"
    )))
}

fn range(from: &Option<String>, to: &Option<String>) -> anyhow::Result<TimeRange> {
    let from = from.as_deref().map(parse_time).transpose()?;
    let to = to.as_deref().map(parse_time).transpose()?;
    TimeRange::new(from, to).map_err(|e| usage(e.to_string()))
}

fn format_ts(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|d| d.format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_else(|| ms.to_string())
}

pub fn default_data_dir() -> PathBuf {
    std::env::var_os("HOME")
        .map(|h| PathBuf::from(h).join(".vme"))
        .unwrap_or_else(|| PathBuf::from(".vme"))
}

/// Resolved settings and the strategies built from them.
pub struct Session {
    pub data_dir: PathBuf,
    pub config: Config,
}

impl Session {
    pub fn new(cli: &Cli) -> anyhow::Result<Self> {
        let data_dir = cli.data_dir.clone().unwrap_or_else(default_data_dir);
        let mut config =
            Config::load(cli.config.as_deref(), &data_dir).map_err(|e| usage(format!("{e:#}")))?;
        config.apply_env(|k| std::env::var(k).ok());
        Ok(Session { data_dir, config })
    }

    pub fn client(&self) -> anyhow::Result<Arc<dyn LlmClient>> {
        Ok(LlmRegistry::with_builtins().create(&self.config.llm)?)
    }

    pub fn provider(&self) -> anyhow::Result<Arc<dyn EmbeddingProvider>> {
        Ok(EmbeddingRegistry::with_builtins().create(&self.config.embedding)?)
    }

    fn symbols(&self, flag: Option<&Path>) -> anyhow::Result<SymbolIndex> {
        match flag.or(self.config.symbols.as_deref()) {
            None => Ok(SymbolIndex::new()),
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                Ok(SymbolIndex::load(BufReader::new(f))?)
            }
        }
    }

    pub fn engine(
        &self,
        symbols: Option<&Path>,
        workspace: Option<&Path>,
    ) -> anyhow::Result<Engine> {
        let mut cfg = self.config.engine.clone();
        if let Some(w) = workspace {
            cfg.workspace_root = Some(w.to_path_buf());
        }
        Ok(Engine::open(
            &self.data_dir,
            cfg,
            self.symbols(symbols)?,
            self.provider()?,
            self.client()?,
        )?)
    }

    /// Snapshot-consistent read of the stores: tasks before behaviors, so
    /// every task read has its behaviors on disk.
    pub fn compute_persona(&self) -> anyhow::Result<Persona> {
        let tbs = read_tbs(&self.data_dir)?;
        let lbs = read_lbs(&self.data_dir)?;
        Ok(compute_persona(
            &tbs,
            &lbs,
            &MetricRegistry::with_builtins(),
            &self.config.persona,
        )?)
    }
}

fn print_summary(out: &mut dyn Write, s: &IngestSummary) -> io::Result<()> {
    writeln!(
        out,
        "read {} events ({} filtered, {} edits merged, {} outputs folded, {} unclassified)",
        s.events_read, s.events_filtered, s.edits_merged, s.outputs_folded, s.unclassified
    )?;
    writeln!(
        out,
        "{} behaviors, {} batches, {} tasks ({} unsummarized, {} retried), {} pruned, {} noise, {} carried",
        s.lbs_created,
        s.batches,
        s.tbs_created,
        s.tbs_unsummarized,
        s.retries_resolved,
        s.pruned,
        s.noise_finalized,
        s.carried_over
    )
}

fn cmd_ingest(ctx: &Session, args: &IngestArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut engine = ctx.engine(args.symbols.as_deref(), args.workspace.as_deref())?;
    if let Some(addr) = &args.listen {
        let addr = listen::ListenAddr::parse(addr);
        let summary = listen::listen(&addr, engine, args.once)?;
        return Ok(print_summary(out, &summary)?);
    }
    let path = args
        .file
        .as_deref()
        .ok_or_else(|| usage("an event file or --listen is required"))?;
    let input: Box<dyn BufRead> = if path == Path::new("-") {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Box::new(BufReader::new(f))
    };
    let result = engine.ingest(EventReader::new(input));
    if result.is_err() {
        // Keep what was accepted before the bad record.
        let _ = engine.end_stream();
    }
    result?;
    print_summary(out, &engine.summary())?;
    Ok(())
}

fn cmd_tasks(ctx: &Session, args: &TasksArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let range = range(&args.from, &args.to)?;
    let tbs: Vec<_> = read_tbs(&ctx.data_dir)?
        .into_iter()
        .filter(|tb| range.contains(tb.start_ts))
        .collect();
    if args.json {
        for tb in &tbs {
            writeln!(out, "{}", serde_json::to_string(tb)?)?;
        }
        return Ok(());
    }
    for tb in &tbs {
        writeln!(
            out,
            "#{:<5} {}  {:>6.0}s  {:>3} behaviors  {}",
            tb.tb_id,
            format_ts(tb.start_ts),
            tb.delta_t,
            tb.lbs.len(),
            tb.task
        )?;
    }
    if tbs.is_empty() {
        writeln!(out, "no tasks in range")?;
    }
    Ok(())
}

fn cmd_persona(ctx: &Session, args: &PersonaArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let persona = ctx.compute_persona()?;
    PersonaStore::new(&ctx.data_dir).snapshot(&persona)?;
    if args.json {
        writeln!(out, "{}", persona.to_json()?)?;
    } else {
        write!(out, "{}", persona.report())?;
    }
    Ok(())
}

fn load_persona(ctx: &Session) -> anyhow::Result<Persona> {
    PersonaStore::new(&ctx.data_dir)
        .load_current()?
        .ok_or_else(|| usage("no persona snapshot yet; run `vme persona` first"))
}

fn cmd_validate(ctx: &Session, file: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let persona = load_persona(ctx)?;
    let text =
        std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let records = parse_confirmations(&text, &persona)?;
    if records.is_empty() {
        bail!(usage("the confirmation file has no entries"));
    }
    record_validation(&ctx.data_dir, &persona, &records)?;
    writeln!(
        out,
        "{:<32} {:>9} {:>9}",
        "dimension", "confirmed", "accuracy"
    )?;
    for r in &records {
        writeln!(
            out,
            "{:<32} {:>5}/{:<3} {:>9.2}",
            format!("{} ({})", r.dimension.title(), r.dimension.code()),
            r.correct(),
            r.total(),
            compute_accuracy(r)?
        )?;
    }
    for dim in Dimension::ALL {
        if !records.iter().any(|r| r.dimension == dim) {
            writeln!(
                out,
                "note: no confirmations for {} ({}); omitted",
                dim.title(),
                dim.code()
            )?;
        }
    }
    Ok(())
}

fn cmd_ask(ctx: &Session, args: &AskArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mode = if args.baseline {
        Mode::Baseline
    } else {
        Mode::Personalized
    };
    let query = Query::new(&args.question, mode).map_err(|e| usage(e.to_string()))?;
    let persona = match mode {
        Mode::Personalized => Some(load_persona(ctx)?),
        Mode::Baseline => None,
    };
    let files = match &args.workspace {
        Some(dir) => workspace::collect(dir)?,
        None => Vec::new(),
    };
    let client = ctx.client()?;
    let (bundle, answer) = qa::ask(
        &query,
        persona.as_ref(),
        &files,
        &MetricRegistry::with_builtins(),
        ctx.provider()?.as_ref(),
        client.as_ref(),
    )?;
    qa::record_audit(
        &ctx.data_dir,
        Utc::now().timestamp_millis(),
        &bundle,
        &answer,
        args.dump_prompt,
    )?;
    if args.verbose {
        writeln!(out, "--- prompt ---")?;
        write!(out, "{}", bundle.render())?;
        writeln!(out, "--- provenance ---")?;
        if bundle.provenance.is_empty() {
            writeln!(out, "(none)")?;
        }
        for key in &bundle.provenance {
            writeln!(out, "{key}")?;
        }
        writeln!(out, "--- answer ---")?;
    }
    writeln!(out, "{}", answer.text.trim_end())?;
    Ok(())
}

fn cmd_export(ctx: &Session, args: &ExportArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let range = range(&args.from, &args.to)?;
    let archive = archive::export(&ctx.data_dir, range)?;
    let f = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    archive.write(BufWriter::new(f))?;
    writeln!(
        out,
        "exported {} event records, {} behaviors, {} tasks to {}",
        archive.event_lines.len(),
        archive.lbs.len(),
        archive.tbs.len(),
        args.out.display()
    )?;
    Ok(())
}

fn cmd_import(ctx: &Session, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let archive = Archive::read(BufReader::new(f))?;
    let s = archive::import(&ctx.data_dir, &archive)?;
    writeln!(
        out,
        "imported {} events, {} behaviors, {} tasks",
        s.events, s.lbs, s.tbs
    )?;
    Ok(())
}

/// Runs a parsed command line, writing its report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let ctx = Session::new(cli)?;
    std::fs::create_dir_all(&ctx.data_dir)
        .with_context(|| format!("creating {}", ctx.data_dir.display()))?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a, out),
        Command::Tasks(a) => cmd_tasks(&ctx, a, out),
        Command::Persona(a) => cmd_persona(&ctx, a, out),
        Command::Validate { file } => cmd_validate(&ctx, file, out),
        Command::Ask(a) => cmd_ask(&ctx, a, out),
        Command::Export(a) => cmd_export(&ctx, a, out),
        Command::Import { archive } => cmd_import(&ctx, archive, out),
    }
}
