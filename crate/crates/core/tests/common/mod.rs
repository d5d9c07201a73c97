//! Shared helpers for integration tests: independent metric references and
//! toy-corpus setup.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use sornet::cli::make_dataset;
use sornet::data::save_png;
use sornet::data::toy::{toy_corpus, TOY_TRAIN};
use sornet::Tensor;

/// Mean squared error over every value, as a plain double loop, then dB.
pub fn naive_psnr(a: &Tensor, b: &Tensor, crop: usize) -> f64 {
    let [n, c, h, w] = a.shape().dims();
    let mut se = 0.0f64;
    let mut count = 0usize;
    for i in 0..n {
        for ch in 0..c {
            for y in crop..h - crop {
                for x in crop..w - crop {
                    let d = a.at(i, ch, y, x) as f64 - b.at(i, ch, y, x) as f64;
                    se += d * d;
                    count += 1;
                }
            }
        }
    }
    let mse = se / count as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Sliding 11×11 Gaussian-window SSIM with explicit per-window moments.
pub fn naive_ssim(a: &Tensor, b: &Tensor) -> f64 {
    let [n, c, h, w] = a.shape().dims();
    let k = 11usize;
    let mut win = vec![0.0f64; k * k];
    for u in 0..k {
        for v in 0..k {
            let (du, dv) = (u as f64 - 5.0, v as f64 - 5.0);
            win[u * k + v] = (-(du * du + dv * dv) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|x| *x /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for i in 0..n {
        for ch in 0..c {
            let mut plane_sum = 0.0;
            let mut windows = 0usize;
            for y0 in 0..=h - k {
                for x0 in 0..=w - k {
                    let px = |t: &Tensor, u: usize, v: usize| t.at(i, ch, y0 + u, x0 + v) as f64;
                    let (mut ma, mut mb) = (0.0, 0.0);
                    for u in 0..k {
                        for v in 0..k {
                            ma += win[u * k + v] * px(a, u, v);
                            mb += win[u * k + v] * px(b, u, v);
                        }
                    }
                    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                    for u in 0..k {
                        for v in 0..k {
                            let (da, db) = (px(a, u, v) - ma, px(b, u, v) - mb);
                            va += win[u * k + v] * da * da;
                            vb += win[u * k + v] * db * db;
                            cov += win[u * k + v] * da * db;
                        }
                    }
                    plane_sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    windows += 1;
                }
            }
            acc += plane_sum / windows as f64;
        }
    }
    acc / (n * c) as f64
}

pub struct ToyData {
    pub train: PathBuf,
    pub val: PathBuf,
}

/// Writes the bundled toy corpus under `root` and degrades it at `scale`:
/// the first images become `train`, the rest `val`.
pub fn toy_data(root: &Path, scale: usize) -> ToyData {
    let raw_train = root.join("raw_train");
    let raw_val = root.join("raw_val");
    fs::create_dir_all(&raw_train).unwrap();
    fs::create_dir_all(&raw_val).unwrap();
    for (i, (id, img)) in toy_corpus().into_iter().enumerate() {
        let dir = if i < TOY_TRAIN { &raw_train } else { &raw_val };
        save_png(&img, dir.join(format!("{id}.png"))).unwrap();
    }
    let data = ToyData {
        train: root.join("train"),
        val: root.join("val"),
    };
    make_dataset(&raw_train, &data.train, scale).unwrap();
    make_dataset(&raw_val, &data.val, scale).unwrap();
    data
}
