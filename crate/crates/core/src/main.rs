use std::path::PathBuf;
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand};
use otvq::expcli::{
    bench_table, evaluate_checkpoint, ot_bench, output_dir, parse_config, parse_sizes,
    run_experiment_in, write_bench_csv, OUT_ENV,
};
use otvq::{Error, Result};

#[derive(Parser)]
#[command(
    name = "otvq",
    version,
    about = "VQ-WAE / VQ-VAE training and OT benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one model, or one per seed with --seeds.
    Train {
        config: PathBuf,
        /// Comma-separated seeds; each run goes to `<output_dir>/seed_<s>` in its own process.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the dataset described by a config.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
    },
    /// Compare exact, Sinkhorn and semi-dual OT values on random instances.
    OtBench {
        #[arg(long, default_value = "1x1,2x2,4x4,6x4,8x8,10x10")]
        sizes: String,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; defaults to `ot_bench.csv` under $OTVQ_OUT or the current directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn train(
    config: PathBuf,
    seeds: Option<Vec<u64>>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = parse_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.unwrap_or_else(|| output_dir(&cfg));
    let Some(seeds) = seeds else {
        let summary = run_experiment_in(&cfg, &dir)?;
        println!(
            "{} seed {}: mse {:.6}, psnr {:.2} dB, perplexity {:?}",
            summary.method, summary.seed, summary.mse, summary.psnr, summary.perplexity
        );
        return Ok(());
    };
    let exe = std::env::current_exe()?;
    let children = seeds
        .iter()
        .map(|s| {
            Command::new(&exe)
                .arg("train")
                .arg(&config)
                .arg("--seed")
                .arg(s.to_string())
                .arg("--out")
                .arg(dir.join(format!("seed_{s}")))
                .env_remove(OUT_ENV)
                .spawn()
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    let mut worst = 0;
    for mut child in children {
        let code = child.wait()?.code().unwrap_or(2);
        worst = worst.max(code);
    }
    if worst != 0 {
        std::process::exit(worst);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Train {
            config,
            seeds,
            seed,
            out,
        } => train(config, seeds, seed, out),
        Cmd::Eval { checkpoint, config } => {
            let cfg = parse_config(&config)?;
            let summary = evaluate_checkpoint(&checkpoint, &cfg)?;
            let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.into()))?;
            println!("{text}");
            Ok(())
        }
        Cmd::OtBench {
            sizes,
            eps,
            seed,
            csv,
        } => {
            let rows = ot_bench(&parse_sizes(&sizes)?, &eps, seed)?;
            print!("{}", bench_table(&rows));
            let path = csv.unwrap_or_else(|| {
                std::env::var_os(OUT_ENV)
                    .map_or_else(PathBuf::new, PathBuf::from)
                    .join("ot_bench.csv")
            });
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            write_bench_csv(&rows, &path)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
