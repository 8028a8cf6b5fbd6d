//! `xnap` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bilstm::{load_model_file, save_model_file, train, TrainConfig};
use crate::encoding::{
    assemble_dataset, encode_running_trace, max_augmented_len, ActivityVocabulary, END_LABEL,
};
use crate::error::{Error, Result};
use crate::eval::{run_cv, split_validation};
use crate::eventlog::{
    compute_stats, filter_log, read_log_file, write_log, EventLog, LogFormat, Trace,
};
use crate::heatmap::{render_ansi, render_html, render_json, ExplanationRecord};
use crate::lrp::{explain, LrpConfig, StartFrom, Target};
use crate::synthlog::{generate, GrammarSpec};
use crate::Model;

#[derive(Debug, Parser)]
#[command(
    name = "xnap",
    version,
    about = "Explainable next-activity prediction for event logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every random choice.
    #[arg(long, global = true, env = "XNAP_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print log statistics.
    Stats {
        #[command(flatten)]
        log: LogArgs,
        /// Name shown in the first column; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Write a synthetic event log as CSV.
    Synth(SynthArgs),
    /// Train a model on a log.
    Train {
        #[command(flatten)]
        log: LogArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Model file to write.
        #[arg(long)]
        model: PathBuf,
        /// Per-epoch history CSV; defaults to `<model>.history.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the next activity of running traces.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: TraceInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict and explain prefixes of traces with relevance heatmaps.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: TraceInput,
        #[command(flatten)]
        lrp: LrpArgs,
        /// Shortest prefix to explain.
        #[arg(long, default_value_t = 3)]
        min_prefix: usize,
        #[arg(long)]
        max_prefix: Option<usize>,
        /// Only explain these cases (repeatable).
        #[arg(long = "case")]
        cases: Vec<String>,
        /// Treat traces as running: no ground truth after the last event.
        #[arg(long)]
        running: bool,
        #[arg(long, value_enum, default_value_t = Render::Json)]
        render: Render,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// K-fold cross-validation (ten folds by default); writes a metrics CSV.
    Evaluate {
        #[command(flatten)]
        log: LogArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the fold model with the highest F1.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Render {
    Html,
    Ansi,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GrammarPreset {
    Linear,
    Copy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    Logit,
    Probability,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value = "case")]
    pub case_col: String,
    #[arg(long, default_value = "activity")]
    pub activity_col: String,
    #[arg(long, default_value = "timestamp")]
    pub time_col: String,
    /// chrono format string for timestamps; ISO-8601 and `YYYY-MM-DD HH:MM:SS` are tried otherwise.
    #[arg(long)]
    pub time_format: Option<String>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Drop traces longer than this.
    #[arg(long)]
    pub max_trace_len: Option<usize>,
    /// Keep a seeded random fraction of the traces.
    #[arg(long, default_value_t = 1.0)]
    pub sample_fraction: f64,
}

impl LogArgs {
    fn format(&self) -> Result<LogFormat> {
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidConfig(format!(
                "delimiter `{}` is not ASCII",
                self.delimiter
            )));
        }
        Ok(LogFormat {
            case_col: self.case_col.clone(),
            activity_col: self.activity_col.clone(),
            time_col: self.time_col.clone(),
            time_format: self.time_format.clone(),
            delimiter: self.delimiter as u8,
        })
    }

    fn path(&self) -> Result<&Path> {
        self.log
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--log is required".into()))
    }

    fn load(&self, seed: u64) -> Result<EventLog> {
        let log = read_log_file(self.path()?, &self.format()?)?;
        if self.max_trace_len.is_none() && self.sample_fraction == 1.0 {
            return Ok(log);
        }
        let filtered = filter_log(
            &log,
            self.max_trace_len.unwrap_or(usize::MAX),
            self.sample_fraction,
            seed,
        )?;
        if filtered.is_empty() {
            return Err(Error::EmptyLog);
        }
        Ok(filtered)
    }
}

#[derive(Debug, Args)]
pub struct TraceInput {
    #[command(flatten)]
    pub log: LogArgs,
    /// A single trace given as comma-separated activity labels.
    #[arg(long, conflicts_with = "log")]
    pub trace: Option<String>,
}

impl TraceInput {
    fn traces(&self, seed: u64) -> Result<Vec<Trace>> {
        match &self.trace {
            Some(t) => {
                let labels: Vec<&str> = t.split(',').map(str::trim).collect();
                Ok(vec![Trace::from_activities("trace", &labels)?])
            }
            None => Ok(self.log.load(seed)?.traces().to_vec()),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_size: self.hidden,
            dropout_rate: self.dropout,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.lr,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct LrpArgs {
    #[arg(long, default_value_t = 0.001)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = StartArg::Logit)]
    pub start_from: StartArg,
    /// Explain this activity instead of the predicted one.
    #[arg(long)]
    pub target: Option<String>,
}

impl LrpArgs {
    fn config(&self, vocab: &ActivityVocabulary) -> Result<LrpConfig> {
        let target = match &self.target {
            None => Target::Predicted,
            Some(label) => {
                Target::Class(
                    vocab
                        .index_of(label)
                        .ok_or_else(|| Error::UnknownActivity {
                            label: label.clone(),
                            case_id: "--target".into(),
                        })?,
                )
            }
        };
        let config = LrpConfig {
            epsilon: self.epsilon,
            delta: self.delta,
            target,
            start_from: match self.start_from {
                StartArg::Logit => StartFrom::Logit,
                StartArg::Probability => StartFrom::Probability,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = GrammarPreset::Linear)]
    pub grammar: GrammarPreset,
    /// Grammar as JSON; overrides the preset options.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub traces: usize,
    /// Activities of the linear preset.
    #[arg(long, default_value = "A,B,C")]
    pub labels: String,
    #[arg(long, default_value_t = 1)]
    pub key_position: usize,
    #[arg(long, default_value_t = 3)]
    pub distance: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Runs one subcommand.
pub fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Stats { log, name } => {
            let l = log.load(seed)?;
            let stats = compute_stats(&l)?;
            let name = name.clone().unwrap_or_else(|| {
                log.path()
                    .ok()
                    .and_then(|p| p.file_stem())
                    .map_or("log".into(), |s| s.to_string_lossy().into_owned())
            });
            write_output(None, &stats.table(&name))
        }
        Command::Synth(args) => cmd_synth(args, seed),
        Command::Train {
            log,
            train: t,
            model,
            out,
        } => cmd_train(log, t, model, out.as_deref(), seed),
        Command::Predict { model, input, out } => cmd_predict(model, input, out.as_deref(), seed),
        Command::Explain {
            model,
            input,
            lrp,
            min_prefix,
            max_prefix,
            cases,
            running,
            render,
            out,
        } => {
            let opts = ExplainOptions {
                min_prefix: *min_prefix,
                max_prefix: *max_prefix,
                cases,
                running: *running,
                render: *render,
            };
            cmd_explain(model, input, lrp, &opts, out.as_deref(), seed)
        }
        Command::Evaluate {
            log,
            train: t,
            folds,
            out,
            model_out,
        } => {
            let l = log.load(seed)?;
            let outcome = run_cv::<f64>(&l, &t.config(seed), *folds, seed)?;
            eprintln!(
                "average accuracy {:.4} (sd {:.4}), average F1 {:.4} (sd {:.4})",
                outcome.report.avg.accuracy,
                outcome.report.sd.accuracy,
                outcome.report.avg.f1,
                outcome.report.sd.f1
            );
            if let Some(p) = model_out {
                save_model_file(&outcome.models[outcome.best_fold], p)?;
            }
            write_output(out.as_deref(), &outcome.report.to_csv())
        }
    }
}

fn cmd_synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => serde_json::from_str::<GrammarSpec>(&fs::read_to_string(path)?)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?,
        None => match args.grammar {
            GrammarPreset::Linear => {
                let labels: Vec<&str> = args.labels.split(',').map(str::trim).collect();
                GrammarSpec::linear(&labels, args.traces, seed)
            }
            GrammarPreset::Copy => {
                GrammarSpec::copy_task(args.traces, args.key_position, args.distance, seed)
            }
        },
    };
    let log = generate(&spec)?;
    let mut buf = Vec::new();
    write_log(&log, &mut buf, &LogFormat::default())?;
    write_output(
        args.out.as_deref(),
        &String::from_utf8(buf).expect("CSV is UTF-8"),
    )
}

fn cmd_train(
    log_args: &LogArgs,
    t: &TrainArgs,
    model_path: &Path,
    history: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let log = log_args.load(seed)?;
    let vocab = ActivityVocabulary::build(&log)?;
    let max_len = max_augmented_len(&log);
    let mut cases = log.case_ids();
    cases.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if cases.len() < 2 {
        return Err(Error::TooFewTraces {
            have: cases.len(),
            k: 2,
        });
    }
    let (train_cases, val_cases) = split_validation(&cases);
    let train_ds = assemble_dataset(&log.subset(&train_cases), &vocab, max_len)?;
    let val_ds = assemble_dataset(&log.subset(&val_cases), &vocab, max_len)?;
    let (model, hist) = train::<f64>(&train_ds, &val_ds, &vocab, &t.config(seed))?;
    save_model_file(&model, model_path)?;
    let history_path = history.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = model_path.as_os_str().to_owned();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    fs::write(&history_path, hist.to_csv()?)?;
    eprintln!(
        "trained {} epochs, best epoch {} (val loss {:.5}); model written to {}",
        hist.epochs.len(),
        hist.best_epoch,
        hist.epochs[hist.best_epoch - 1].val_loss,
        model_path.display()
    );
    Ok(())
}

fn cmd_predict(model_path: &Path, input: &TraceInput, out: Option<&Path>, seed: u64) -> Result<()> {
    let model: Model = load_model_file(model_path)?;
    let traces = input.traces(seed)?;
    let single = input.trace.is_some();
    let mut text = String::from("case_id,prefix_len,predicted,probability\n");
    let mut predicted = 0;
    for trace in &traces {
        let sample = match encode_running_trace(trace, &model.vocab, model.max_len) {
            Ok(s) => s,
            Err(e @ Error::TraceTooShort { .. }) if !single => {
                log::warn!("case {}: {e}; skipped", trace.case_id());
                continue;
            }
            Err(e) => return Err(e),
        };
        let (class, probs) = model.predict(&sample)?;
        text.push_str(&format!(
            "{},{},{},{}\n",
            trace.case_id(),
            trace.len(),
            model.vocab.label(class),
            probs[class]
        ));
        predicted += 1;
    }
    if predicted == 0 {
        return Err(Error::TraceTooShort {
            len: traces.iter().map(Trace::len).max().unwrap_or(0),
        });
    }
    write_output(out, &text)
}

struct ExplainOptions<'a> {
    min_prefix: usize,
    max_prefix: Option<usize>,
    cases: &'a [String],
    running: bool,
    render: Render,
}

/// Explanation records for prefixes `min..=max` of `trace`.
pub fn explain_trace_prefixes(
    model: &Model,
    trace: &Trace,
    config: &LrpConfig,
    min_prefix: usize,
    max_prefix: Option<usize>,
    running: bool,
) -> Result<Vec<ExplanationRecord>> {
    let labels: Vec<&str> = trace.activities().collect();
    let upper = max_prefix.unwrap_or(trace.len()).min(trace.len());
    let mut records = Vec::new();
    for k in min_prefix.max(1)..=upper {
        let prefix = trace.prefix(k)?;
        let sample = match encode_running_trace(&prefix, &model.vocab, model.max_len) {
            Ok(s) => s,
            Err(e @ Error::TraceTooShort { .. }) => {
                log::warn!("case {} prefix {k}: {e}; skipped", trace.case_id());
                continue;
            }
            Err(e) => return Err(e),
        };
        let rel = explain(model, &sample, config)?;
        let ground_truth = if k < trace.len() {
            Some(labels[k].to_string())
        } else if running {
            None
        } else {
            Some(END_LABEL.to_string())
        };
        records.push(ExplanationRecord {
            case_id: trace.case_id().to_string(),
            prefix: labels[..k].iter().map(|s| s.to_string()).collect(),
            target_class: model.vocab.label(rel.target_class).to_string(),
            target_prob: rel.target_prob,
            raw_relevance: rel.raw,
            display: rel.display,
            ground_truth,
        });
    }
    Ok(records)
}

fn cmd_explain(
    model_path: &Path,
    input: &TraceInput,
    lrp: &LrpArgs,
    opts: &ExplainOptions<'_>,
    out: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let model: Model = load_model_file(model_path)?;
    let config = lrp.config(&model.vocab)?;
    let mut records = Vec::new();
    for trace in input.traces(seed)? {
        if !opts.cases.is_empty() && !opts.cases.iter().any(|c| c == trace.case_id()) {
            continue;
        }
        let rows = explain_trace_prefixes(
            &model,
            &trace,
            &config,
            opts.min_prefix,
            opts.max_prefix,
            opts.running,
        )?;
        if rows.is_empty() {
            log::warn!("case {}: no prefix in range; skipped", trace.case_id());
        }
        records.extend(rows);
    }
    let text = match opts.render {
        Render::Json => render_json(&records),
        Render::Html => render_html(&records),
        Render::Ansi => render_ansi(&records),
    };
    write_output(out, &text)
}
