//! Scores a checkpoint on a dataset and prints the per-image report.
//!
//! Usage: `cargo run --release --example evaluate -- <checkpoint> <dataset_dir>`

use std::path::PathBuf;

use sornet::data::Dataset;
use sornet::metrics::{evaluate, evaluate_bicubic};
use sornet::train::{checkpoint_means, checkpoint_spec, model_from_checkpoint, Checkpoint};
use sornet::Error;

fn main() -> sornet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [ckpt_path, data_dir] = args.as_slice() else {
        return Err(Error::Config("usage: evaluate <checkpoint> <dataset_dir>".into()));
    };
    let ckpt = Checkpoint::load(PathBuf::from(ckpt_path))?;
    let spec = checkpoint_spec(&ckpt)?;
    let model = model_from_checkpoint(&ckpt)?;
    let means = checkpoint_means(&ckpt)?;
    let ds = Dataset::load(data_dir, spec.scale, None)?;

    let report = evaluate(&model, &means, &ds, spec.scale)?;
    print!("{}", report.to_tsv());
    print!("{}", report.summary());
    let bicubic = evaluate_bicubic(&ds, spec.scale)?;
    println!("bicubic mean_psnr_db = {:.4}", bicubic.mean_psnr);
    Ok(())
}
