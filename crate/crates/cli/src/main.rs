//! `screen`: title/abstract screening pipeline.
//!
//! Settings come from `--config <file>` (TOML) and can be overridden per flag.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use screen_core::commands::{
    cmd_agree, cmd_evaluate, cmd_export_sft, cmd_infer, cmd_ingest, cmd_manifest, cmd_report, cmd_split,
    report_file_name, AgreeSource, InferArgs, Outcome, PromptSource, Subset, TransportChoice,
};
use screen_core::config::{ReportFormat, RunConfigFile};
use screen_core::corpus::{CorpusFormat, SplitMode, SplitSpec};
use screen_core::ScreeningLabel;

#[derive(Parser)]
#[command(name = "screen", version, about = "Title/abstract screening pipeline")]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CorpusArgs {
    /// Corpus file (delimited table or JSON lines).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Corpus format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<CorpusFormat>,
}

#[derive(Args, Clone, Default)]
struct PromptArgs {
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    criteria: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct BootstrapArgs {
    /// Skip bootstrap intervals.
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long)]
    replicates: Option<usize>,
    /// Bootstrap seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write a normalized copy.
    Ingest {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Partition the corpus into train and test sets.
    Split {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// stratified | enriched
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        enrichment_target: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the training split as chat-formatted JSON lines.
    ExportSft {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        prompt: PromptArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the fine-tuning manifest, with `field=value` overrides.
    Manifest {
        #[arg(long = "set", value_name = "FIELD=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every temperature pass and append predictions to the ledger.
    Infer {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// train | test | all
        #[arg(long)]
        subset: Option<String>,
        #[command(flatten)]
        prompt: PromptArgs,
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Comma-separated, one pass each.
        #[arg(long, value_delimiter = ',')]
        temperatures: Option<Vec<f64>>,
        #[arg(long)]
        max_new_tokens: Option<u32>,
        #[arg(long)]
        majority_class: Option<ScreeningLabel>,
        #[arg(long)]
        force_greedy: bool,
        #[arg(long)]
        concurrency: Option<usize>,
        /// Record every live exchange to this file.
        #[arg(long, conflicts_with = "replay")]
        record: Option<PathBuf>,
        /// Answer only from this recorded exchange file.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Continue an interrupted run in the same ledger.
        #[arg(long)]
        resume: bool,
    },
    /// Score a completed ledger and export disagreements.
    Evaluate {
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        bootstrap: BootstrapArgs,
        /// text | json
        #[arg(long = "report-format")]
        report_format: Option<ReportFormat>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Agreement statistics for a rating table or a ledger.
    Agree {
        #[arg(long, conflicts_with = "ledger")]
        ratings: Option<PathBuf>,
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        bootstrap: BootstrapArgs,
        #[arg(long = "report-format")]
        report_format: Option<ReportFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a report from a stored evaluation.
    Report {
        #[arg(long)]
        evaluation: Option<PathBuf>,
        #[arg(long = "report-format")]
        report_format: Option<ReportFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| anyhow!("missing required setting {key}"))
}

fn out_path(flag: Option<PathBuf>, cfg: &RunConfigFile, default_name: &str) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    cfg.paths
        .out_dir
        .as_ref()
        .map(|d| d.join(default_name))
        .ok_or_else(|| anyhow!("no --out given and paths.out_dir is not set"))
}

fn corpus_of(args: CorpusArgs, cfg: &RunConfigFile) -> Result<(PathBuf, Option<CorpusFormat>)> {
    Ok((
        pick(args.corpus, &cfg.paths.corpus, "paths.corpus (--corpus)")?,
        args.format.or(cfg.paths.corpus_format),
    ))
}

fn prompt_of(args: PromptArgs, cfg: &RunConfigFile) -> PromptSource {
    PromptSource {
        template: args.template.or_else(|| cfg.paths.template.clone()),
        criteria: args.criteria.or_else(|| cfg.paths.criteria.clone()),
    }
}

fn bootstrap_of(args: BootstrapArgs, cfg: &RunConfigFile) -> Option<screen_core::agreement::BootstrapSpec> {
    if args.no_bootstrap || !cfg.bootstrap.enabled {
        return None;
    }
    let mut spec = cfg.bootstrap.spec.clone();
    if let Some(r) = args.replicates {
        spec.replicates = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(c) = args.confidence {
        spec.confidence = c;
    }
    Some(spec)
}

fn split_spec(
    cfg: &RunConfigFile,
    train_size: Option<usize>,
    seed: Option<u64>,
    mode: Option<String>,
    target: Option<f64>,
) -> Result<SplitSpec> {
    let mut spec = match &cfg.split {
        Some(s) => s.clone(),
        None => SplitSpec::stratified(
            train_size.ok_or_else(|| anyhow!("missing required setting split.train_size (--train-size)"))?,
            seed.ok_or_else(|| anyhow!("missing required setting split.seed (--seed)"))?,
        ),
    };
    if let Some(n) = train_size {
        spec.train_size = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(m) = mode {
        spec.mode = match m.as_str() {
            "stratified" => SplitMode::Stratified,
            "enriched" => SplitMode::Enriched,
            other => bail!("unknown split mode {other:?} (expected stratified or enriched)"),
        };
    }
    if target.is_some() {
        spec.enrichment_target = target;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => RunConfigFile::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfigFile::default(),
    };
    let report_format = |flag: Option<ReportFormat>| flag.unwrap_or(cfg.report.format);

    let outcome = match cli.command {
        Command::Ingest { corpus, out } => {
            let (corpus, format) = corpus_of(corpus, &cfg)?;
            cmd_ingest(&corpus, format, &out_path(out, &cfg, "corpus.csv")?)?
        }
        Command::Split {
            corpus,
            train_size,
            seed,
            mode,
            enrichment_target,
            out,
        } => {
            let (corpus, format) = corpus_of(corpus, &cfg)?;
            let spec = split_spec(&cfg, train_size, seed, mode, enrichment_target)?;
            let out = match out.or_else(|| cfg.paths.split_manifest.clone()) {
                Some(p) => p,
                None => out_path(None, &cfg, "split.json")?,
            };
            cmd_split(&corpus, format, &spec, &out)?
        }
        Command::ExportSft {
            corpus,
            manifest,
            prompt,
            out,
        } => {
            let (corpus, format) = corpus_of(corpus, &cfg)?;
            let manifest = pick(manifest, &cfg.paths.split_manifest, "paths.split_manifest (--manifest)")?;
            let markers = cfg.markers.clone().unwrap_or_default();
            cmd_export_sft(
                &corpus,
                format,
                &manifest,
                &prompt_of(prompt, &cfg),
                &markers,
                &out_path(out, &cfg, "sft_train.jsonl")?,
            )?
        }
        Command::Manifest { set, out } => {
            let mut overrides = BTreeMap::new();
            for entry in set {
                let (k, v) = entry
                    .split_once('=')
                    .ok_or_else(|| anyhow!("override {entry:?} is not FIELD=VALUE"))?;
                overrides.insert(k.trim().to_string(), v.trim().to_string());
            }
            cmd_manifest(&overrides, &out_path(out, &cfg, "training_manifest.json")?)?
        }
        Command::Infer {
            corpus,
            manifest,
            subset,
            prompt,
            ledger,
            endpoint,
            model,
            temperatures,
            max_new_tokens,
            majority_class,
            force_greedy,
            concurrency,
            record,
            replay,
            resume,
        } => {
            let (corpus, format) = corpus_of(corpus, &cfg)?;
            let subset: Subset = subset
                .unwrap_or_else(|| cfg.inference.subset.clone())
                .parse()
                .map_err(|e: String| anyhow!(e))?;
            let manifest = manifest.or_else(|| cfg.paths.split_manifest.clone());
            let mut config = cfg.inference.config.clone();
            if let Some(t) = temperatures {
                config.temperatures = t;
            }
            if let Some(n) = max_new_tokens {
                config.max_new_tokens = n;
            }
            if let Some(m) = majority_class {
                config.majority_class = m;
            }
            if force_greedy {
                config.force_greedy = true;
            }
            if let Some(c) = concurrency {
                config.concurrency_limit = c;
            }
            let replay = replay.or_else(|| {
                if record.is_some() {
                    None
                } else {
                    cfg.paths.replay.clone()
                }
            });
            let transport = match replay {
                Some(path) => TransportChoice::Replay(path),
                None => TransportChoice::Live {
                    endpoint: endpoint.or_else(|| cfg.inference.endpoint.clone()).ok_or_else(|| {
                        anyhow!("missing required setting inference.endpoint (--endpoint or --replay)")
                    })?,
                    model: model
                        .or_else(|| cfg.inference.model.clone())
                        .unwrap_or_else(|| "screening-model".into()),
                    record: record.or_else(|| cfg.paths.record.clone()),
                },
            };
            let ledger = match ledger.or_else(|| cfg.paths.ledger.clone()) {
                Some(p) => p,
                None => out_path(None, &cfg, "ledger.jsonl")?,
            };
            cmd_infer(&InferArgs {
                corpus,
                format,
                manifest,
                subset,
                prompt: prompt_of(prompt, &cfg),
                config,
                transport,
                ledger,
                resume,
            })?
        }
        Command::Evaluate {
            ledger,
            corpus,
            bootstrap,
            report_format: rf,
            out_dir,
        } => {
            let ledger = pick(ledger, &cfg.paths.ledger, "paths.ledger (--ledger)")?;
            let (corpus, format) = corpus_of(corpus, &cfg)?;
            let out_dir = pick(out_dir, &cfg.paths.out_dir, "paths.out_dir (--out-dir)")?;
            cmd_evaluate(
                &ledger,
                &corpus,
                format,
                bootstrap_of(bootstrap, &cfg).as_ref(),
                report_format(rf),
                &out_dir,
            )?
        }
        Command::Agree {
            ratings,
            ledger,
            corpus,
            bootstrap,
            report_format: rf,
            out,
        } => {
            let source = match ratings.or_else(|| {
                if ledger.is_some() {
                    None
                } else {
                    cfg.paths.ratings.clone()
                }
            }) {
                Some(p) => AgreeSource::Ratings(p),
                None => {
                    let (corpus, format) = corpus_of(corpus, &cfg)?;
                    AgreeSource::Ledger {
                        ledger: pick(ledger, &cfg.paths.ledger, "paths.ledger (--ledger or --ratings)")?,
                        corpus,
                        format,
                    }
                }
            };
            let rf = report_format(rf);
            let name = match rf {
                ReportFormat::Text => "agreement.txt",
                ReportFormat::Json => "agreement.json",
            };
            cmd_agree(
                &source,
                bootstrap_of(bootstrap, &cfg).as_ref(),
                rf,
                &out_path(out, &cfg, name)?,
            )?
        }
        Command::Report {
            evaluation,
            report_format: rf,
            out,
        } => {
            let rf = report_format(rf);
            let evaluation = match evaluation {
                Some(p) => p,
                None => out_path(None, &cfg, "evaluation.json")?,
            };
            let out = match out {
                Some(p) => p,
                None => out_path(None, &cfg, report_file_name(rf))?,
            };
            cmd_report(&evaluation, rf, &out)?
        }
    };
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.log_line());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
