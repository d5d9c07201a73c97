//! Toy-corpus setup shared by the examples.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use sornet::cli::make_dataset;
use sornet::data::save_png;
use sornet::data::toy::{toy_corpus, TOY_TRAIN};
use sornet::Error;

pub struct ToyDirs {
    pub train: PathBuf,
    pub val: PathBuf,
}

/// Writes the toy corpus under `root` and degrades it at `scale` into
/// `root/train` (first images) and `root/val` (held out).
pub fn toy_dataset(root: &Path, scale: usize) -> sornet::Result<ToyDirs> {
    let corpus = toy_corpus();
    let mut dirs = Vec::new();
    for (split, range) in [("train", 0..TOY_TRAIN), ("val", TOY_TRAIN..corpus.len())] {
        let raw = root.join(format!("raw_{split}"));
        fs::create_dir_all(&raw).map_err(|e| Error::io(&raw, e))?;
        for (id, img) in &corpus[range] {
            save_png(img, raw.join(format!("{id}.png")))?;
        }
        let out = root.join(format!("{split}_x{scale}"));
        let summary = make_dataset(&raw, &out, scale)?;
        println!("{split}: {} images -> {}", summary.images, out.display());
        dirs.push(out);
    }
    let val = dirs.pop().expect("two splits");
    let train = dirs.pop().expect("two splits");
    Ok(ToyDirs { train, val })
}
