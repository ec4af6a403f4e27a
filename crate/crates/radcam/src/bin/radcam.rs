//! Command-line front end; all logic lives in `radcam::cli`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use radcam::cli::{self, CliError, RunConfig, SweepKind};
use radcam::infereval::Against;

#[derive(Parser)]
#[command(name = "radcam", version, about = "Radar-camera association pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgainstArg {
    Truth,
    Labels,
}

impl From<AgainstArg> for Against {
    fn from(a: AgainstArg) -> Self {
        match a {
            AgainstArg::Truth => Against::Truth,
            AgainstArg::Labels => Against::Labels,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic dataset splits (train/val/test) plus a manifest.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        train_frames: Option<usize>,
        #[arg(long)]
        val_frames: Option<usize>,
        #[arg(long)]
        test_frames: Option<usize>,
    },
    /// Label a dataset with the rule-based teacher and report its quality.
    Teach {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Enable corruption at this flip probability.
        #[arg(long)]
        flip_prob: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the association network on a labeled dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        w_ord: Option<f64>,
        #[arg(long)]
        sample_ratio: Option<f64>,
        /// Use every negative pair instead of sampling.
        #[arg(long)]
        no_sampling: bool,
        /// Extract full-width shared embeddings for both modalities.
        #[arg(long)]
        shared_embedding: bool,
    },
    /// Run a checkpoint over a dataset and write predictions.
    Infer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        assoc_threshold: Option<f64>,
    },
    /// Score predictions against a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_enum, default_value = "labels")]
        against: AgainstArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        assoc_threshold: Option<f64>,
        /// Also write a per-frame CSV of frame_id,tp,fp,fn.
        #[arg(long)]
        per_frame: Option<PathBuf>,
        /// Metrics file of a baseline to print a comparison table against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Emit SVG scene views, training curves, or sweep plots.
    Plot {
        #[command(subcommand)]
        what: PlotCmd,
    },
    /// Threshold and ablation sweeps.
    Sweep {
        #[command(subcommand)]
        what: SweepCmd,
    },
}

#[derive(Subcommand)]
enum PlotCmd {
    /// Image-plane and BEV views of one frame.
    Scene {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        frame: u64,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        assoc_threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loss curves from a training log CSV.
    Curves {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision/recall/F1 curves from a sweep CSV.
    Sweep {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SweepCmd {
    /// Evaluate existing predictions across association thresholds.
    Threshold {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_enum, default_value = "labels")]
        against: AgainstArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train per negative-sampling arm and compare.
    Ratio {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train_dataset: PathBuf,
        #[arg(long)]
        test_dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train per ordinal-weight arm and compare.
    OrdWeight {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train_dataset: PathBuf,
        #[arg(long)]
        test_dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Gen {
            config,
            out,
            seed,
            train_frames,
            val_frames,
            test_frames,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = train_frames {
                cfg.split.train_frames = n;
            }
            if let Some(n) = val_frames {
                cfg.split.val_frames = n;
            }
            if let Some(n) = test_frames {
                cfg.split.test_frames = n;
            }
            let manifest = cli::cmd_gen(&cfg, &out)?;
            for s in &manifest.splits {
                println!("{}: {} frames -> {}", s.name, s.frames, s.path);
            }
            Ok(())
        }
        Cmd::Teach {
            config,
            dataset,
            out,
            flip_prob,
            seed,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = flip_prob {
                cfg.teacher.corruption.enabled = true;
                cfg.teacher.corruption.flip_prob = p;
            }
            let report = cli::cmd_teach(&dataset, &cfg, &out)?;
            println!(
                "teacher vs truth: {:.3} / {:.3} / {:.3} (P/R/F1) over {} frames",
                report.precision,
                report.recall,
                report.f1,
                report.per_frame.len()
            );
            Ok(())
        }
        Cmd::Train {
            config,
            dataset,
            out,
            iters,
            seed,
            w_ord,
            sample_ratio,
            no_sampling,
            shared_embedding,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(n) = iters {
                cfg.train.total_iters = n;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.network.weight_init_seed = s;
            }
            if let Some(w) = w_ord {
                cfg.loss.w_ord = w;
            }
            if let Some(r) = sample_ratio {
                cfg.loss.sample_ratio = r;
            }
            if no_sampling {
                cfg.loss.sample_all_negatives = true;
            }
            if shared_embedding {
                cfg.network.shared_embedding = true;
            }
            let artifacts = cli::cmd_train(&dataset, &cfg, &out)?;
            println!(
                "model -> {} (final loss {})",
                artifacts.model_path.display(),
                artifacts
                    .final_loss
                    .map(|l| format!("{l:.5}"))
                    .unwrap_or_else(|| "n/a".into())
            );
            Ok(())
        }
        Cmd::Infer {
            config,
            dataset,
            model,
            out,
            assoc_threshold,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(t) = assoc_threshold {
                cfg.assoc_threshold = t;
            }
            let preds = cli::cmd_infer(&dataset, &model, &cfg, &out)?;
            let kept: usize = preds
                .pairs_at(preds.threshold)
                .iter()
                .map(|(_, p)| p.len())
                .sum();
            println!(
                "{} frames, {} associations at threshold {}",
                preds.frames.len(),
                kept,
                preds.threshold
            );
            Ok(())
        }
        Cmd::Eval {
            dataset,
            predictions,
            against,
            out,
            assoc_threshold,
            per_frame,
            baseline,
        } => {
            let result = cli::cmd_eval(
                &dataset,
                &predictions,
                against.into(),
                assoc_threshold,
                &out,
                per_frame.as_deref(),
            )?;
            println!(
                "learned: {:.3} / {:.3} / {:.3} (P/R/F1) at threshold {}",
                result.report.precision, result.report.recall, result.report.f1, result.threshold
            );
            if let Some(base_path) = baseline {
                let text = std::fs::read_to_string(&base_path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", base_path.display())))?;
                let base: radcam::infereval::EvalReport = serde_json::from_str(&text)
                    .map_err(|e| CliError::Data(format!("{}: {e}", base_path.display())))?;
                print!(
                    "{}",
                    cli::comparison_table(&[
                        ("Rule-based", &base),
                        ("Learning-based", &result.report)
                    ])
                );
            }
            Ok(())
        }
        Cmd::Plot { what } => match what {
            PlotCmd::Scene {
                dataset,
                frame,
                predictions,
                assoc_threshold,
                out,
            } => {
                let (image, bev) = cli::cmd_plot_scene(
                    &dataset,
                    frame,
                    predictions.as_deref(),
                    assoc_threshold,
                    &out,
                )?;
                println!("{}\n{}", image.display(), bev.display());
                Ok(())
            }
            PlotCmd::Curves { log, out } => {
                cli::cmd_plot_curves(&log, &out)?;
                println!("{}", out.display());
                Ok(())
            }
            PlotCmd::Sweep { csv, out } => {
                cli::cmd_plot_sweep(&csv, &out)?;
                println!("{}", out.display());
                Ok(())
            }
        },
        Cmd::Sweep { what } => match what {
            SweepCmd::Threshold {
                dataset,
                predictions,
                against,
                out,
            } => {
                cli::cmd_sweep_threshold(&dataset, &predictions, against.into(), &out)?;
                println!("{}", out.display());
                Ok(())
            }
            SweepCmd::Ratio {
                config,
                train_dataset,
                test_dataset,
                seeds,
                out,
            } => {
                let cfg = RunConfig::load(config.as_deref())?;
                cli::cmd_sweep_ablation(
                    SweepKind::Ratio,
                    &train_dataset,
                    &test_dataset,
                    &cfg,
                    &seeds,
                    &out,
                )?;
                println!("{}", out.display());
                Ok(())
            }
            SweepCmd::OrdWeight {
                config,
                train_dataset,
                test_dataset,
                seeds,
                out,
            } => {
                let cfg = RunConfig::load(config.as_deref())?;
                cli::cmd_sweep_ablation(
                    SweepKind::OrdWeight,
                    &train_dataset,
                    &test_dataset,
                    &cfg,
                    &seeds,
                    &out,
                )?;
                println!("{}", out.display());
                Ok(())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
