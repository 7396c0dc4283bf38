use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;

use muzero_recon::checkpoint;
use muzero_recon::config::RunConfig;
use muzero_recon::metrics::{EvalCsv, LossCsv};
use muzero_recon::plot;
use muzero_recon::trainer::Trainer;

#[derive(Parser)]
#[command(name = "muzero-recon", about = "MuZero with self-supervised auxiliary losses", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a configuration file.
    Train {
        /// Path to the key = value configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for metrics and checkpoints.
        #[arg(long, default_value = "runs/out")]
        out: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured number of pretraining steps.
        #[arg(long)]
        pretrain_steps: Option<u64>,
        /// Override the configured number of training steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Resume from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint greedily and report mean and std reward.
    Eval {
        /// Path to the checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Evaluation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render metric CSV files to a single SVG line plot.
    Plot {
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Input CSV files (first column x, second column y).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            pretrain_steps,
            steps,
            resume,
        } => run_train(config, out, seed, pretrain_steps, steps, resume),
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => run_eval(checkpoint, episodes, seed),
        Command::Plot { out, inputs } => {
            plot::emit_plot(&inputs, &out).context("rendering plot")?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn run_train(
    config_path: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    pretrain_steps: Option<u64>,
    steps: Option<u64>,
    resume: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut trainer = if let Some(resume_path) = &resume {
        let trainer = checkpoint::load(resume_path)
            .with_context(|| format!("loading checkpoint {}", resume_path.display()))?;
        info!("resumed from {} at step {}", resume_path.display(), trainer.step);
        trainer
    } else {
        let text = std::fs::read_to_string(&config_path)
            .with_context(|| format!("reading config {}", config_path.display()))?;
        let mut config = RunConfig::parse(&text).context("parsing config")?;
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(p) = pretrain_steps {
            config.pretrain_steps = p;
        }
        if let Some(s) = steps {
            config.training_steps = s;
        }
        config.validate().context("validating config")?;
        Trainer::new(config)
    };

    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let mut loss_csv = LossCsv::create(&out.join("losses.csv"))?;
    let mut eval_csv = EvalCsv::create(&out.join("evals.csv"))?;
    let ckpt_path = out.join("checkpoint.bin");
    checkpoint::save(&trainer, &ckpt_path)?;

    let total = trainer.total_steps();
    while trainer.step < total {
        let record = trainer.advance()?;
        loss_csv.append(&record)?;
        if record.step % trainer.config.eval_interval == 0 {
            let eval = trainer.evaluate_now(trainer.config.eval_episodes)?;
            eval_csv.append(&eval)?;
            info!(
                "step {}: loss {:.4}, eval reward {:.1} +/- {:.1}",
                record.step, record.breakdown.total, eval.mean, eval.std
            );
        }
        if record.step % trainer.config.checkpoint_interval == 0 {
            checkpoint::save(&trainer, &ckpt_path)?;
        }
    }
    checkpoint::save(&trainer, &ckpt_path)?;

    let final_eval = trainer.evaluate_now(trainer.config.eval_episodes)?;
    println!(
        "final greedy reward over {} episodes: {:.2} +/- {:.2}",
        trainer.config.eval_episodes, final_eval.mean, final_eval.std
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn run_eval(checkpoint_path: PathBuf, episodes: usize, seed: u64) -> anyhow::Result<()> {
    if episodes == 0 {
        bail!("need at least one evaluation episode");
    }
    let trainer = checkpoint::load(&checkpoint_path)
        .with_context(|| format!("loading checkpoint {}", checkpoint_path.display()))?;
    let mut env = trainer.config.env.build();
    let (mean, std) = muzero_recon::trainer::evaluate(
        &trainer.model,
        env.as_mut(),
        episodes,
        &trainer.mcts_config(),
        seed,
    )?;
    let report = format!("reward over {episodes} episodes: {mean:.2} +/- {std:.2}");
    println!("{report}");
    let report_path = checkpoint_path.with_extension("eval.txt");
    std::fs::write(&report_path, format!("{report}\n"))?;
    println!("wrote {}", report_path.display());
    Ok(())
}
