use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sornet::cli::{self, exit};
use sornet::{Result, RunConfig};

#[derive(Parser)]
#[command(name = "sornet", about = "Super-resolution with self-organized operational layers")]
struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `key=value` override, applied after the config file.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build HR/ and LRx{scale}/ from a directory of HR PNGs.
    MakeDataset {
        #[arg(long)]
        hr_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        scale: usize,
    },
    Train,
    Eval,
    /// Upscale one PNG.
    Sr { input: PathBuf, output: PathBuf },
    CountParams {
        /// Print the four reference Self-ONN configurations.
        #[arg(long)]
        table1: bool,
    },
    Gradcheck,
}

fn load_config(args: &Cli) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &args.set {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", seed.to_string())?;
    }
    Ok(cfg)
}

fn need_checkpoint(args: &Cli) -> Result<PathBuf> {
    args.checkpoint
        .clone()
        .ok_or_else(|| sornet::Error::Config("--checkpoint is required".into()))
}

fn run(args: &Cli) -> Result<i32> {
    let cfg = load_config(args)?;
    match &args.cmd {
        Cmd::MakeDataset { hr_dir, out_dir, scale } => {
            let s = cli::make_dataset(hr_dir, out_dir, *scale)?;
            println!("{} images, manifest {}", s.images, s.manifest.display());
        }
        Cmd::Train => {
            let (outcome, report) = cli::cmd_train(&cfg)?;
            println!("final checkpoint {}", outcome.final_checkpoint.display());
            if let Some(r) = report {
                print!("{}", r.summary());
            }
        }
        Cmd::Eval => {
            let report = cli::cmd_eval(&cfg, &need_checkpoint(args)?)?;
            print!("{}", report.summary());
        }
        Cmd::Sr { input, output } => {
            cli::cmd_sr(&need_checkpoint(args)?, input, output)?;
        }
        Cmd::CountParams { table1 } => {
            let text = if *table1 {
                cli::cmd_count_params_table1()?
            } else {
                cli::cmd_count_params(&cfg)?
            };
            print!("{text}");
        }
        Cmd::Gradcheck => {
            let report = cli::cmd_gradcheck()?;
            print!("{}", report.to_table());
            if !report.all_passed() {
                return Ok(exit::NUMERIC);
            }
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("SORNET_THREADS").ok().and_then(|v| v.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let args = Cli::parse();
    let code = match run(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
