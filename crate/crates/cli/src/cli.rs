use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ceilguard_core::audit::{AuditLogger, JsonLinesSink};
use ceilguard_core::bundle::read_manifest;
use ceilguard_core::eval::evaluate;
use ceilguard_core::model::slot_name;
use ceilguard_core::pipeline::{label_slot, prepare};
use ceilguard_core::synth::{emit_event_stream, truth_to_line};
use ceilguard_core::{generate, load_bundle, save_bundle, score, serialize_event, train_bundle};
use clap::{Args, Parser, Subcommand};

use crate::config::{AppConfig, BIND_ENV, BUNDLE_ENV};
use crate::io::{read_events, read_single_event, read_truth, write_json, write_lines};
use crate::server::{self, AppState};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "ceilguard", version, about = "Anchor-price anomaly detection and ceiling prices")]
pub struct Cli {
    /// JSON config file with optional generator, pipeline, eval and serve sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic marketplace corpus with ground truth.
    Generate(GenerateArgs),
    /// Apply labeling functions and masking; write per-detector training rows.
    Label(LabelArgs),
    /// Train detectors and the aggregator into a model bundle.
    Train(TrainArgs),
    /// Compare the five configurations on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Run the HTTP scoring service.
    Serve(ServeArgs),
    /// Score a single event.
    Score(ScoreArgs),
    /// Model bundle utilities.
    #[command(subcommand)]
    Bundle(BundleCommand),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory for events.jsonl and truth.jsonl.
    #[arg(long, required_unless_present = "stream")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_items: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write events to stdout instead, paced at this many per second.
    #[arg(long, value_name = "RATE")]
    pub stream: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Ground truth; without it every AUR-covered row counts as normal when tuning.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Bundle directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// JSON report path; the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pac_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = BUNDLE_ENV)]
    pub bundle: Option<PathBuf>,
    #[arg(long, env = BIND_ENV)]
    pub bind: Option<String>,
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Event JSON file, or - for stdin.
    #[arg(long, default_value = "-")]
    pub event: PathBuf,
    #[arg(long, env = BUNDLE_ENV)]
    pub bundle: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum BundleCommand {
    /// Print the manifest and version of a bundle after verifying it.
    Inspect { dir: PathBuf },
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => cmd_generate(&cfg, a),
        Command::Label(a) => cmd_label(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Serve(a) => cmd_serve(&cfg, a),
        Command::Score(a) => cmd_score(a),
        Command::Bundle(BundleCommand::Inspect { dir }) => cmd_inspect(&dir),
    }
}

fn cmd_generate(cfg: &AppConfig, a: GenerateArgs) -> Result<()> {
    let mut gen = cfg.generator.clone();
    if let Some(n) = a.n_items {
        gen.n_items = n;
    }
    if let Some(s) = a.seed {
        gen.seed = s;
    }
    let (events, truth) = generate(&gen)?;
    if let Some(rate) = a.stream {
        let stdout = io::stdout();
        let mut out = BufWriter::new(stdout.lock());
        emit_event_stream(&events, rate, true, &mut out)?;
        return Ok(());
    }
    let dir = a.out.expect("clap enforces --out");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_lines(&dir.join("events.jsonl"), events.iter().map(serialize_event))?;
    write_lines(&dir.join("truth.jsonl"), truth.iter().map(truth_to_line))?;
    tracing::info!(n = events.len(), seed = gen.seed, dir = %dir.display(), "corpus written");
    Ok(())
}

fn load_corpus(a: &CorpusArgs) -> Result<(Vec<ceilguard_core::PriceEvent>, Option<Vec<ceilguard_core::GroundTruth>>)> {
    let events = read_events(&a.events)?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    if truth.as_ref().is_some_and(|t| t.len() != events.len()) {
        bail!("{} events but {} ground truth lines", events.len(), truth.unwrap().len());
    }
    Ok((events, truth))
}

fn cmd_label(cfg: &AppConfig, a: LabelArgs) -> Result<()> {
    let (events, truth) = load_corpus(&a.corpus)?;
    let prep = prepare(&events, truth.as_deref(), &cfg.pipeline)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut reports = Vec::new();
    for &slot in &cfg.pipeline.monitored_slots {
        let set = label_slot(&events, slot, &prep, &cfg.pipeline, a.corpus.seed)?;
        let path = a.out.join(format!("{}.jsonl", slot_name(slot)));
        write_lines(&path, set.rows.iter().map(|r| serde_json::to_string(r).expect("row serialization")))?;
        tracing::info!(anchor = slot_name(slot), rows = set.rows.len(), anomalous = set.report.n_anomalous, "labeled");
        reports.push(set.report);
    }
    write_json(&a.out.join("labeling_report.json"), &reports)
}

fn cmd_train(cfg: &AppConfig, a: TrainArgs) -> Result<()> {
    let (events, truth) = load_corpus(&a.corpus)?;
    let (bundle, report) = train_bundle(&events, truth.as_deref(), &cfg.pipeline, a.corpus.seed)?;
    save_bundle(&bundle, &a.out)?;
    for d in &report.detectors {
        tracing::info!(anchor = %d.anchor, f1 = d.f1, threshold = d.threshold, "detector trained");
    }
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    println!("{}", bundle.version());
    Ok(())
}

fn cmd_evaluate(cfg: &AppConfig, a: EvaluateArgs) -> Result<()> {
    let events = read_events(&a.events)?;
    let truth = read_truth(&a.truth)?;
    let bundle = load_bundle(&a.bundle)?;
    let mut eval_cfg = cfg.eval.clone();
    if let Some(t) = a.pac_threshold {
        eval_cfg.pac_threshold = t;
    }
    let report = evaluate(&events, &truth, &bundle, &eval_cfg)?;
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let bundle = load_bundle(&a.bundle)?;
    let event = read_single_event(&a.event)?;
    let result = score(&event, &bundle)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn cmd_inspect(dir: &Path) -> Result<()> {
    let bundle = load_bundle(dir)?;
    let manifest = read_manifest(dir)?;
    let out = serde_json::json!({ "version": bundle.version(), "manifest": manifest });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_serve(cfg: &AppConfig, a: ServeArgs) -> Result<()> {
    let bundle_path =
        a.bundle.or_else(|| cfg.serve.bundle.clone()).context("no bundle given (--bundle or CEILGUARD_BUNDLE)")?;
    let bind = a.bind.unwrap_or_else(|| cfg.serve.bind.clone());
    let bundle = load_bundle(&bundle_path)?;
    let audit = match a.audit_log.or_else(|| cfg.serve.audit_log.clone()) {
        Some(path) => {
            let file: File = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .with_context(|| format!("opening audit log {}", path.display()))?;
            Some(AuditLogger::spawn(Box::new(JsonLinesSink::new(BufWriter::new(file))), cfg.serve.audit_queue))
        }
        None => None,
    };
    let version = bundle.version().to_string();
    let state = Arc::new(AppState::new(bundle, Some(bundle_path), audit));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        tracing::info!(addr = %listener.local_addr()?, bundle = %version, "serving");
        #[cfg(unix)]
        server::reload_on_sighup(Arc::clone(&state))?;
        server::run(listener, Arc::clone(&state), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        let (written, dropped) = state.audit_stats();
        tracing::info!(written, dropped, "shut down");
        io::stderr().flush()?;
        Ok(())
    })
}
