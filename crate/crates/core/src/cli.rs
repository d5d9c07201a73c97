//! Command implementations behind the `sornet` binary.
//!
//! Each command is an ordinary function so it can be driven from tests and
//! examples; the binary only parses flags and maps errors to exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::{
    bicubic_resize, compute_channel_means, list_pngs, load_png, lr_dir_name, save_png, Dataset,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, super_resolve, EvalReport};
use crate::model::{count_params, ModelSpec};
use crate::tensor::Tensor;
use crate::train::{checkpoint_means, checkpoint_spec, model_from_checkpoint, train, Checkpoint, TrainOutcome};
use crate::verify::{run_gradcheck, standard_cases, GradCheckReport, GRADCHECK_EPS, GRADCHECK_TOL};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidSpec(_) => exit::CONFIG,
        Error::Data { .. } | Error::Io { .. } | Error::Checkpoint { .. } | Error::Parameter { .. } => {
            exit::DATA
        }
        Error::Numeric(_) => exit::NUMERIC,
        Error::ShapeMismatch { .. } | Error::InvalidArgument { .. } => exit::INTERNAL,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug)]
pub struct MakeDatasetSummary {
    pub images: usize,
    pub manifest: PathBuf,
}

/// Writes `out_dir/HR` and `out_dir/LRx{scale}` by antialiased bicubic
/// downscaling, plus `means.txt` and a `manifest.tsv` of SHA-256 checksums.
///
/// HR images whose sides are not divisible by `scale` are center-cropped to
/// the largest divisible size first.
pub fn make_dataset(hr_dir: &Path, out_dir: &Path, scale: usize) -> Result<MakeDatasetSummary> {
    crate::nn::upsampler_stages(scale).map_err(|_| Error::Config(format!("unsupported scale {scale}")))?;
    let hr_out = out_dir.join("HR");
    let lr_out = out_dir.join(lr_dir_name(scale));
    for d in [&hr_out, &lr_out] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let files = list_pngs(hr_dir)?;
    if files.is_empty() {
        return Err(Error::data(hr_dir, "no PNG images found"));
    }
    let mut manifest: Vec<(String, String)> = Vec::new();
    let mut hrs: Vec<Tensor> = Vec::new();
    for src in &files {
        let name = src.file_name().expect("listed file").to_string_lossy().into_owned();
        let img = load_png(src)?;
        let s = img.shape();
        let (h, w) = (s.h() / scale * scale, s.w() / scale * scale);
        if h == 0 || w == 0 {
            return Err(Error::data(src, format!("image {s} smaller than scale {scale}")));
        }
        let hr_dst = hr_out.join(&name);
        let same_file = hr_dst.canonicalize().ok() == src.canonicalize().ok() && hr_dst.exists();
        let hr = if (h, w) == (s.h(), s.w()) {
            if !same_file {
                fs::copy(src, &hr_dst).map_err(|e| Error::io(&hr_dst, e))?;
            }
            img
        } else {
            if same_file {
                return Err(Error::data(src, "refusing to crop an HR image in place"));
            }
            let cropped = img.crop((s.h() - h) / 2, (s.w() - w) / 2, h, w)?;
            save_png(&cropped, &hr_dst)?;
            cropped
        };
        let lr = bicubic_resize(&hr, h / scale, w / scale, true)?;
        let lr_dst = lr_out.join(&name);
        save_png(&lr, &lr_dst)?;
        for (dir, path) in [("HR", &hr_dst), (lr_dir_name(scale).as_str(), &lr_dst)] {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            manifest.push((format!("{dir}/{name}"), sha256_hex(&bytes)));
        }
        hrs.push(hr);
    }
    let means = compute_channel_means(&hrs.iter().collect::<Vec<_>>())?;
    means.save(out_dir.join("means.txt"))?;
    manifest.sort();
    let text: String = manifest
        .iter()
        .map(|(p, h)| format!("{p}\t{h}\n"))
        .collect();
    let manifest_path = out_dir.join(format!("manifest_x{scale}.tsv"));
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(MakeDatasetSummary {
        images: files.len(),
        manifest: manifest_path,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_report(run_dir: &Path, report: &EvalReport) -> Result<()> {
    write_file(&run_dir.join("report.tsv"), &report.to_tsv())?;
    write_file(&run_dir.join("report.summary"), &report.summary())
}

/// Trains per `cfg` in `runs_dir/name`, then scores the final model on
/// `val_dir` when one is configured.
pub fn cmd_train(cfg: &RunConfig) -> Result<(TrainOutcome, Option<EvalReport>)> {
    let tcfg = cfg.train_config()?;
    write_file(&tcfg.run_dir.join("config.resolved"), &cfg.resolved()?)?;
    let outcome = train(&tcfg)?;
    let report = match cfg.val_dir() {
        Some(dir) => {
            let ds = Dataset::load(dir, tcfg.spec.scale, None)?;
            let mut r = evaluate(&outcome.model, &outcome.means, &ds, cfg.crop(tcfg.spec.scale)?)?;
            r.meta.insert("checkpoint".into(), outcome.final_checkpoint.display().to_string());
            write_report(&tcfg.run_dir, &r)?;
            Some(r)
        }
        None => None,
    };
    Ok((outcome, report))
}

/// Rejects a checkpoint whose spec differs from explicitly configured keys.
fn check_spec(cfg: &RunConfig, ckpt_spec: &ModelSpec) -> Result<()> {
    if !cfg.has_spec_keys() {
        return Ok(());
    }
    let wanted = cfg.model_spec()?;
    let diff = wanted.diff(ckpt_spec);
    if diff.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "config and checkpoint specs differ in: {}",
            diff.join(", ")
        )))
    }
}

/// Scores a checkpoint on `val_dir`, writing `report.tsv` and `report.summary`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let spec = checkpoint_spec(&ckpt)?;
    check_spec(cfg, &spec)?;
    let model = model_from_checkpoint(&ckpt)?;
    let means = checkpoint_means(&ckpt)?;
    let dir = cfg
        .val_dir()
        .ok_or_else(|| Error::Config("val_dir is required for eval".into()))?;
    let ds = Dataset::load(dir, spec.scale, None)?;
    let mut report = evaluate(&model, &means, &ds, cfg.crop(spec.scale)?)?;
    report.meta.insert("checkpoint".into(), checkpoint.display().to_string());
    let run_dir = cfg.run_dir();
    write_file(&run_dir.join("config.resolved"), &cfg.resolved()?)?;
    write_report(&run_dir, &report)?;
    Ok(report)
}

/// Upscales one PNG with a checkpoint.
pub fn cmd_sr(checkpoint: &Path, input: &Path, output: &Path) -> Result<Tensor> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = model_from_checkpoint(&ckpt)?;
    let means = checkpoint_means(&ckpt)?;
    let lr = load_png(input)?;
    let sr = super_resolve(&model, &means, &lr)?;
    save_png(&sr, output)?;
    Ok(sr)
}

/// `1234567` → `"1,234,567"`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// `(blocks, channels, count printed in the reference table)` for the four
/// pure Self-ONN configurations at ×2, q = 3.
pub const TABLE1: [(usize, usize, usize); 4] = [
    (4, 32, 365_059),
    (4, 64, 1_448_963),
    (8, 32, 586_499),
    (8, 64, 2_334_311),
];

pub fn cmd_count_params_table1() -> Result<String> {
    let mut out = String::new();
    for (blocks, ch, printed) in TABLE1 {
        let n = count_params(&ModelSpec::selfonn(blocks, ch, 3, 2))?;
        out.push_str(&format!("{blocks} ({ch}): {}", thousands(n)));
        if n != printed {
            out.push_str(&format!(
                "  [table prints {}, delta {:+}]",
                thousands(printed),
                n as i64 - printed as i64
            ));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_count_params(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.model_spec()?;
    let n = count_params(&spec)?;
    let desc: Vec<String> = spec.to_kv().iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(format!("{}: {}\n", desc.join(" "), thousands(n)))
}

pub fn cmd_gradcheck() -> Result<GradCheckReport> {
    run_gradcheck(&standard_cases(), GRADCHECK_EPS, GRADCHECK_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
        assert_eq!(thousands(365_059), "365,059");
        assert_eq!(thousands(2_334_211), "2,334,211");
    }

    #[test]
    fn table_lines() {
        let t = cmd_count_params_table1().unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "4 (32): 365,059");
        assert_eq!(lines[1], "4 (64): 1,448,963");
        assert_eq!(lines[2], "8 (32): 586,499");
        assert_eq!(lines[3], "8 (64): 2,334,211  [table prints 2,334,311, delta -100]");
    }

    #[test]
    fn count_params_line() {
        let cfg = RunConfig::parse("arch = edsr\n").unwrap();
        assert!(cmd_count_params(&cfg).unwrap().trim_end().ends_with(": 1,369,859"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), exit::CONFIG);
        assert_eq!(exit_code(&Error::data("p", "x")), exit::DATA);
        assert_eq!(exit_code(&Error::Checkpoint { offset: 0, msg: "x".into() }), exit::DATA);
        assert_eq!(exit_code(&Error::Numeric("x".into())), exit::NUMERIC);
        assert_eq!(exit_code(&Error::invalid("op", "x")), exit::INTERNAL);
    }
}
