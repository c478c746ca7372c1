use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use emocont_cli::commands::{parse_track_arg, run_eval, run_extract, run_fuse, run_plot, run_train};
use emocont_cli::{synth, RunConfig, SynthSpec};
use emocont_core::Subset;

#[derive(Parser)]
#[command(name = "emocont", version, about = "Continuous speech emotion recognition workflow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output root (feature caches, models, evaluations, fusion).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    feature_set: Option<String>,
    #[arg(long)]
    dimension: Option<String>,
    /// JSON run configuration; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = &self.feature_set {
            cfg.feature_set = f.clone();
        }
        if let Some(d) = &self.dimension {
            cfg.dimension = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON synthesis settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        dev: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Build per-segment feature caches for every conversation.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resample_hz: Option<u32>,
    },
    /// Train a model on the train subset, selecting on dev.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        /// Smallest dev CCC gain that resets the patience counter.
        #[arg(long)]
        min_delta: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Score a checkpoint and write per-conversation predictions.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        subset: Subset,
        /// Defaults to the feature set's best checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Search late-fusion weights on dev predictions of two models.
    Fuse {
        #[command(flatten)]
        common: Common,
        /// Eval directory of the first model (holding dev/ and test/).
        #[arg(long)]
        preds_a: PathBuf,
        #[arg(long)]
        preds_b: PathBuf,
    },
    /// Draw a gold trace and prediction tracks as SVG.
    Plot {
        /// Annotation or prediction CSV.
        #[arg(long)]
        gold: PathBuf,
        /// Prediction CSV, optionally prefixed with `LABEL=`.
        #[arg(long = "pred", required = true)]
        preds: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value_t = 250)]
        segment_ms: u64,
    },
}

fn kind_of(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<emocont_core::Error>())
        .map_or("failed", emocont_core::Error::kind)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            config,
            train,
            dev,
            test,
        } => {
            let mut spec = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)?,
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            spec.n_train = train.unwrap_or(spec.n_train);
            spec.n_dev = dev.unwrap_or(spec.n_dev);
            spec.n_test = test.unwrap_or(spec.n_test);
            let manifest = synth::write_corpus(&spec, &out)?;
            println!("manifest={}", manifest.display());
        }
        Command::Extract { common, resample_hz } => {
            let mut cfg = common.resolve()?;
            if resample_hz.is_some() {
                cfg.resample_hz = resample_hz;
            }
            let summary = run_extract(&cfg)?;
            for (id, msg) in &summary.failures {
                eprintln!("error[extract] conversation={id}: {msg}");
            }
            println!(
                "feature_set={} dim={} written={} up_to_date={} failed={}",
                cfg.feature_set,
                summary.dim.map_or("-".to_string(), |d| d.to_string()),
                summary.written.len(),
                summary.up_to_date.len(),
                summary.failures.len()
            );
            if !summary.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Train {
            common,
            epochs,
            batch_size,
            learning_rate,
            patience,
            min_delta,
            quiet,
        } => {
            let mut cfg = common.resolve()?;
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
            if patience.is_some() {
                cfg.patience = patience;
            }
            cfg.min_delta = min_delta.unwrap_or(cfg.min_delta);
            let summary = run_train(&cfg, |e| {
                if !quiet {
                    eprintln!(
                        "epoch {:>4}  train_loss {:.4}  dev_ccc {:.4}  {} ms",
                        e.epoch, e.train_loss, e.dev_ccc, e.wall_ms
                    );
                }
            })?;
            println!(
                "model_dir={} epochs={} best_epoch={} dev_ccc={:.6}",
                summary.model_dir.display(),
                summary.epochs_run,
                summary.best_epoch,
                summary.best_dev_ccc
            );
        }
        Command::Eval {
            common,
            subset,
            checkpoint,
        } => {
            let cfg = common.resolve()?;
            let summary = run_eval(&cfg, subset, checkpoint.as_deref())?;
            println!(
                "report={} ccc={:.6}",
                summary.dir.join("report.csv").display(),
                summary.report.ccc_concat
            );
        }
        Command::Fuse {
            common,
            preds_a,
            preds_b,
        } => {
            let cfg = common.resolve()?;
            let summary = run_fuse(&cfg, &preds_a, &preds_b)?;
            let s = summary.report.selected;
            print!(
                "report={} w_a={:.2} w_b={:.2} dev_ccc={:.6}",
                summary.dir.join("report.csv").display(),
                s.w_a,
                s.w_b,
                s.dev_ccc
            );
            match &summary.test_report {
                Some(r) => println!(" test_ccc={:.6}", r.ccc_concat),
                None => println!(),
            }
        }
        Command::Plot {
            gold,
            preds,
            out,
            title,
            segment_ms,
        } => {
            let tracks: Vec<_> = preds.iter().map(|a| parse_track_arg(a)).collect();
            run_plot(&gold, &tracks, &out, &title, segment_ms)?;
            println!("svg={}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", kind_of(&e));
            ExitCode::from(2)
        }
    }
}
