//! Pre-trained initialization: a x2 model's weights seed a x4 model, with the
//! upsampler stages left freshly initialized, then training continues at x4.
//!
//! Usage: `cargo run --release --example pretrain_finetune -- [iterations] [work_dir]`

mod support;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sornet::cli::cmd_train;
use sornet::train::Checkpoint;
use sornet::{Error, Model, RunConfig};

fn main() -> sornet::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters: usize = match args.next() {
        Some(s) => s.parse().map_err(|_| Error::Config(format!("bad iteration count '{s}'")))?,
        None => 100,
    };
    let work = PathBuf::from(args.next().unwrap_or_else(|| "pret_work".into()));
    let x2 = support::toy_dataset(&work, 2)?;
    let x4 = support::toy_dataset(&work, 4)?;

    let base = "arch = selfonn\nnum_blocks = 2\nchannels = 16\nq = 3\nbatch = 16\npatch = 16\n\
                checkpoint_interval = 0\n";
    let runs = work.join("runs");
    let cfg2 = RunConfig::parse(&format!(
        "{base}scale = 2\ntotal_iters = {iters}\nname = x2\nruns_dir = {}\ntrain_dir = {}\nval_dir = {}\n",
        runs.display(),
        x2.train.display(),
        x2.val.display()
    ))?;
    let (pre, report) = cmd_train(&cfg2)?;
    println!("x2 val PSNR {:.3} dB", report.expect("val_dir is set").mean_psnr);

    let cfg4 = RunConfig::parse(&format!(
        "{base}scale = 4\ntotal_iters = {iters}\nname = x4\nruns_dir = {}\ntrain_dir = {}\nval_dir = {}\n\
         init_checkpoint = {}\nskip = upsampler\n",
        runs.display(),
        x4.train.display(),
        x4.val.display(),
        pre.final_checkpoint.display()
    ))?;

    let tcfg = cfg4.train_config()?;
    let mut probe = Model::build(&tcfg.spec, &mut ChaCha8Rng::seed_from_u64(tcfg.seed))?;
    let load = probe.load_partial(&Checkpoint::load(&pre.final_checkpoint)?, &tcfg.skip_prefixes)?;
    println!("transferred {} tensors, kept fresh: {}", load.loaded.len(), load.skipped.join(", "));

    let (_, report) = cmd_train(&cfg4)?;
    println!("x4 val PSNR after fine-tuning {:.3} dB", report.expect("val_dir is set").mean_psnr);
    Ok(())
}
