//! PSNR, SSIM and dataset evaluation.
//!
//! Convention used in every report: metrics over all three RGB channels,
//! a border of `crop` pixels removed on every side, and the super-resolved
//! image snapped to the 8-bit grid first.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::{bicubic_resize, denormalize, normalize, quantize, ChannelMeans, Dataset};
use crate::error::{Error, Result};
use crate::kv;
use crate::model::Model;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub const CONVENTION: &str = "rgb; border crop; 8-bit quantized output";

fn crop_border(x: &Tensor, crop: usize) -> Result<Tensor> {
    if crop == 0 {
        return Ok(x.clone());
    }
    let s = x.shape();
    if s.h() <= 2 * crop || s.w() <= 2 * crop {
        return Err(Error::invalid(
            "crop",
            format!("border {crop} leaves nothing of {s}"),
        ));
    }
    x.crop(crop, crop, s.h() - 2 * crop, s.w() - 2 * crop)
}

/// `10·log10(1 / MSE)` after removing `crop` border pixels; `+∞` for
/// identical images.
pub fn psnr(a: &Tensor, b: &Tensor, crop: usize) -> Result<f64> {
    a.expect_same_shape(b, "psnr")?;
    let (a, b) = (crop_border(a, crop)?, crop_border(b, crop)?);
    let se: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = se / a.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    for v in &mut g {
        *v /= s;
    }
    g
}

/// Valid-region separable Gaussian filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM per plane, averaged over all planes. Dynamic range 1.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_same_shape(b, "ssim")?;
    let s = a.shape();
    let (h, w) = (s.h(), s.w());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let g = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let plane = h * w;
    let mut total = 0.0;
    let mut planes = 0usize;
    for (pa, pb) in a.data().chunks(plane).zip(b.data().chunks(plane)) {
        let pa: Vec<f64> = pa.iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = pb.iter().map(|&v| v as f64).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, h, w, &g);
        let mu_b = filter_valid(&pb, h, w, &g);
        let e_aa = filter_valid(&aa, h, w, &g);
        let e_bb = filter_valid(&bb, h, w, &g);
        let e_ab = filter_valid(&ab, h, w, &g);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        total += sum / mu_a.len() as f64;
        planes += 1;
    }
    Ok(total / planes as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    /// `(psnr dB, ssim)` or the reason the image could not be scored.
    pub result: std::result::Result<(f64, f64), String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub meta: BTreeMap<String, String>,
}

impl EvalReport {
    fn from_rows(rows: Vec<EvalRow>, meta: BTreeMap<String, String>) -> EvalReport {
        let ok: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.result.clone().ok()).collect();
        let n = ok.len() as f64;
        let (mean_psnr, mean_ssim) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                ok.iter().map(|r| r.0).sum::<f64>() / n,
                ok.iter().map(|r| r.1).sum::<f64>() / n,
            )
        };
        EvalReport {
            rows,
            mean_psnr,
            mean_ssim,
            meta,
        }
    }

    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    /// `id  psnr_db  ssim  status` rows with a header line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("id\tpsnr_db\tssim\tstatus\n");
        for r in &self.rows {
            match &r.result {
                Ok((p, q)) => s.push_str(&format!("{}\t{p:.4}\t{q:.6}\tok\n", r.id)),
                Err(e) => s.push_str(&format!("{}\t-\t-\terror: {e}\n", r.id)),
            }
        }
        s
    }

    /// Key-value summary: means, counts and the measurement convention.
    pub fn summary(&self) -> String {
        let mut m = self.meta.clone();
        m.insert("mean_psnr_db".into(), format!("{:.4}", self.mean_psnr));
        m.insert("mean_ssim".into(), format!("{:.6}", self.mean_ssim));
        m.insert("images".into(), self.rows.len().to_string());
        m.insert("failed".into(), self.failed().to_string());
        m.insert("convention".into(), CONVENTION.into());
        kv::render(&m)
    }
}

/// Scores `upscale(lr)` against every HR image of `dataset`.
///
/// `upscale` returns an image in `[0, 1]`; it is quantized to 8 bits before
/// scoring. Failures and non-finite outputs become error rows.
pub fn evaluate_with<F>(dataset: &Dataset, crop: usize, upscale: F) -> Result<EvalReport>
where
    F: Fn(&Tensor) -> Result<Tensor> + Sync,
{
    if dataset.records.is_empty() {
        return Err(Error::invalid("evaluate", "empty dataset"));
    }
    let rows: Vec<EvalRow> = dataset
        .records
        .par_iter()
        .map(|rec| {
            let result = (|| -> std::result::Result<(f64, f64), String> {
                let sr = upscale(&rec.lr).map_err(|e| e.to_string())?;
                if !sr.is_finite() {
                    return Err("non-finite model output".into());
                }
                let sr = quantize(&sr);
                let p = psnr(&sr, &rec.hr, crop).map_err(|e| e.to_string())?;
                let (a, b) = (
                    crop_border(&sr, crop).map_err(|e| e.to_string())?,
                    crop_border(&rec.hr, crop).map_err(|e| e.to_string())?,
                );
                let q = ssim(&a, &b).map_err(|e| e.to_string())?;
                Ok((p, q))
            })();
            EvalRow {
                id: rec.id.clone(),
                result,
            }
        })
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert("scale".into(), dataset.scale.to_string());
    meta.insert("crop".into(), crop.to_string());
    Ok(EvalReport::from_rows(rows, meta))
}

/// Super-resolves one LR image `[1, 3, h, w]` in `[0, 1]`.
pub fn super_resolve(model: &Model, means: &ChannelMeans, lr: &Tensor) -> Result<Tensor> {
    let y = model.infer(&normalize(lr, means))?;
    if !y.is_finite() {
        return Err(Error::Numeric("non-finite model output".into()));
    }
    Ok(denormalize(&y, means))
}

/// Model evaluation: normalize, forward, denormalize, clamp, quantize, score.
pub fn evaluate(model: &Model, means: &ChannelMeans, dataset: &Dataset, crop: usize) -> Result<EvalReport> {
    if model.spec().scale != dataset.scale {
        return Err(Error::Config(format!(
            "model scale {} does not match dataset scale {}",
            model.spec().scale,
            dataset.scale
        )));
    }
    let mut report = evaluate_with(dataset, crop, |lr| super_resolve(model, means, lr))?;
    report.meta.extend(
        model
            .spec()
            .to_kv()
            .into_iter()
            .map(|(k, v)| (format!("spec.{k}"), v)),
    );
    Ok(report)
}

/// Bicubic upscaling baseline scored with the same pipeline.
pub fn evaluate_bicubic(dataset: &Dataset, crop: usize) -> Result<EvalReport> {
    let scale = dataset.scale;
    let mut report = evaluate_with(dataset, crop, |lr| {
        let s = lr.shape();
        Ok(bicubic_resize(lr, s.h() * scale, s.w() * scale, true)?.map(|v| v.clamp(0.0, 1.0)))
    })?;
    report.meta.insert("method".into(), "bicubic".into());
    Ok(report)
}
