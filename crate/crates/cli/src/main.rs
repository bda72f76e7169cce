use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dkto_cli::commands::{self, Axis};
use dkto_cli::config::Override;
use dkto_cli::{exit_code, RunConfig};
use dkto_core::ddpm::Cond;
use dkto_core::Result;

#[derive(Parser)]
#[command(
    name = "dkto",
    version,
    about = "Diffusion alignment from binary feedback on a 2-D toy suite"
)]
struct Cli {
    /// TOML config file; unknown keys are rejected.
    #[arg(long, global = true, env = "DKTO_CONFIG")]
    config: Option<PathBuf>,

    /// Run seed. Overrides the config file and DKTO_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override a config key, e.g. `--set align.beta=25`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<Override>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a denoiser on the pretraining Gaussian.
    Pretrain {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a pretrained checkpoint.
    Align {
        #[arg(long)]
        ckpt: PathBuf,
        /// kto, loss_averse, risk_seeking, kahneman_tversky, dpo_pair, sft or csft.
        #[arg(long)]
        objective: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw points from a checkpoint into a CSV file.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of points; defaults to `sample.n`.
        #[arg(long)]
        n: Option<usize>,
        /// Condition for conditional checkpoints (good or bad); defaults to good.
        #[arg(long)]
        cond: Option<Cond>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a point cloud against the reference Gaussians.
    Eval {
        #[arg(long)]
        cloud: PathBuf,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Align once per value of one setting and rank the results.
    Ablate {
        #[arg(long)]
        ckpt: PathBuf,
        /// utility, gamma, beta or partition.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate every utility and its derivative on a grid.
    UtilityTable {
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        v_min: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        v_max: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(Override {
            key: "seed".into(),
            value: seed.to_string(),
        });
    }
    if let Command::Align { objective: Some(o), .. } = &cli.command {
        overrides.push(Override {
            key: "objective".into(),
            value: o.clone(),
        });
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), std::env::vars(), &overrides)?;
    match cli.command {
        Command::Pretrain { out } => {
            let done = commands::cmd_pretrain(&cfg, &out)?;
            match done.final_loss {
                Some(l) => println!("wrote {} (final loss {l:.4})", done.checkpoint.display()),
                None => println!("wrote {}", done.checkpoint.display()),
            }
        }
        Command::Align { ckpt, out, .. } => {
            let done = commands::cmd_align(&cfg, &ckpt, &out)?;
            println!(
                "wrote {} after {} steps",
                done.checkpoint.display(),
                done.log.rows.len()
            );
        }
        Command::Sample { ckpt, n, cond, out } => {
            let points = commands::cmd_sample(&ckpt, n.unwrap_or(cfg.sample.n), cfg.seed, cond, &out)?;
            println!("wrote {} points to {}", points.len(), out.display());
        }
        Command::Eval { cloud, out } => {
            let report = commands::cmd_eval(&cloud, &cfg.data, &out)?;
            print!("{}", report.to_json());
        }
        Command::Ablate {
            ckpt,
            axis,
            values,
            out,
        } => {
            let done = commands::cmd_ablate(&cfg, &ckpt, axis, &values, &out)?;
            for (rank, (tag, r)) in done.ranked.iter().enumerate() {
                println!(
                    "{:>2}. {tag:<28} score {:>8.4}  win {:.3}",
                    rank + 1,
                    r.desirable_score_mean,
                    r.win_fraction
                );
            }
            for (tag, err) in &done.failed {
                println!(" -  {tag:<28} failed: {err}");
            }
        }
        Command::UtilityTable {
            v_min,
            v_max,
            step,
            out,
        } => {
            commands::cmd_utility_table(v_min, v_max, step, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dkto: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
