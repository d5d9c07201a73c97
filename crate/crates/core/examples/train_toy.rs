//! Trains a small selfonn model on the toy corpus and compares it with
//! bicubic upscaling on the held-out images.
//!
//! Usage: `cargo run --release --example train_toy -- [iterations] [work_dir]`

mod support;

use std::path::PathBuf;

use sornet::cli::cmd_train;
use sornet::data::Dataset;
use sornet::metrics::evaluate_bicubic;
use sornet::train::{smoothed, SMOOTHING_WINDOW};
use sornet::{Error, RunConfig};

fn main() -> sornet::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters: usize = match args.next() {
        Some(s) => s.parse().map_err(|_| Error::Config(format!("bad iteration count '{s}'")))?,
        None => 300,
    };
    let work = PathBuf::from(args.next().unwrap_or_else(|| "toy_work".into()));
    let dirs = support::toy_dataset(&work, 2)?;

    let cfg = RunConfig::parse(&format!(
        "arch = selfonn\nnum_blocks = 2\nchannels = 16\nq = 3\nscale = 2\n\
         total_iters = {iters}\nbatch = 16\npatch = 24\ncheckpoint_interval = 0\n\
         name = selfonn_toy\nruns_dir = {}\ntrain_dir = {}\nval_dir = {}\n",
        work.join("runs").display(),
        dirs.train.display(),
        dirs.val.display()
    ))?;
    let (outcome, report) = cmd_train(&cfg)?;
    let losses: Vec<f64> = outcome.losses.iter().map(|r| r.loss).collect();
    let s = smoothed(&losses, SMOOTHING_WINDOW);
    for i in (0..s.len()).step_by(50.max(s.len() / 10)) {
        println!("iter {i:>5}  smoothed l1 {:.5}", s[i]);
    }
    println!("final smoothed l1 {:.5}", s[s.len() - 1]);

    let report = report.expect("val_dir is set");
    let bicubic = evaluate_bicubic(&Dataset::load(&dirs.val, 2, None)?, 2)?;
    println!("val PSNR: model {:.3} dB, bicubic {:.3} dB", report.mean_psnr, bicubic.mean_psnr);
    println!("checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}
