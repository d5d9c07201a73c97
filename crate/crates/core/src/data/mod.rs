//! Image I/O, dataset layout, normalization and training-patch sampling.
//!
//! A dataset root holds `HR/*.png` and `LRx{2,4}/*.png` with matching file
//! stems. `means.txt` next to them caches the per-channel training means.

mod png_io;
mod resize;
pub mod toy;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::kv;
use crate::tensor::{Shape, Tensor};

pub use png_io::{load_png, quantize, quantize_u8, save_png};
pub use resize::{bicubic_resize, cubic, CUBIC_A};

/// LR patch side length used in training.
pub const PATCH_SIZE: usize = 48;
/// Patches per mini-batch.
pub const BATCH_SIZE: usize = 16;

/// An aligned HR/LR pair; HR sides are `scale` times the LR sides.
#[derive(Clone, Debug)]
pub struct ImageRecord {
    pub id: String,
    pub hr: Tensor,
    pub lr: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelMeans {
    pub r: f32,
    pub g: f32,
    pub b: f32,
}

impl ChannelMeans {
    pub const ZERO: ChannelMeans = ChannelMeans {
        r: 0.0,
        g: 0.0,
        b: 0.0,
    };

    pub fn as_array(&self) -> [f32; 3] {
        [self.r, self.g, self.b]
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("mean_r".into(), self.r.to_string());
        m.insert("mean_g".into(), self.g.to_string());
        m.insert("mean_b".into(), self.b.to_string());
        m
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| -> Result<f32> {
            let v = kv
                .get(k)
                .ok_or_else(|| Error::Config(format!("missing key {k}")))?;
            let x: f32 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{k}: not a number: '{v}'")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Config(format!("{k} = {x} outside [0, 1]")));
            }
            Ok(x)
        };
        Ok(ChannelMeans {
            r: get("mean_r")?,
            g: get("mean_g")?,
            b: get("mean_b")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, kv::render(&self.to_kv())).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ChannelMeans::from_kv(&kv::parse(&text)?)
    }
}

/// Pixel-count-weighted mean of each channel over all images.
pub fn compute_channel_means(images: &[&Tensor]) -> Result<ChannelMeans> {
    if images.is_empty() {
        return Err(Error::invalid("compute_channel_means", "no images"));
    }
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for img in images {
        let s = img.shape();
        if s.c() != 3 {
            return Err(Error::invalid(
                "compute_channel_means",
                format!("expected RGB, got shape {s}"),
            ));
        }
        let plane = s.h() * s.w();
        for (i, chunk) in img.data().chunks(plane).enumerate() {
            sums[i % 3] += chunk.iter().map(|&v| v as f64).sum::<f64>();
        }
        count += s.n() * plane;
    }
    let m = |i: usize| (sums[i] / count as f64) as f32;
    Ok(ChannelMeans {
        r: m(0),
        g: m(1),
        b: m(2),
    })
}

fn shift_channels(x: &Tensor, offsets: [f32; 3]) -> Tensor {
    let s = x.shape();
    let plane = s.h() * s.w();
    debug_assert_eq!(s.c(), 3, "channel means apply to RGB tensors");
    let mut out = x.clone();
    for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let o = offsets[i % 3];
        for v in chunk {
            *v += o;
        }
    }
    out
}

/// Subtracts the per-channel means.
pub fn normalize(x: &Tensor, m: &ChannelMeans) -> Tensor {
    shift_channels(x, [-m.r, -m.g, -m.b])
}

/// Adds the per-channel means back and clamps to `[0, 1]`.
pub fn denormalize(x: &Tensor, m: &ChannelMeans) -> Tensor {
    shift_channels(x, m.as_array()).map(|v| v.clamp(0.0, 1.0))
}

/// `k` counter-clockwise quarter turns of every plane.
pub fn rotate90(x: &Tensor, k: usize) -> Tensor {
    let k = k % 4;
    if k == 0 {
        return x.clone();
    }
    let [n, c, h, w] = x.shape().dims();
    let (oh, ow) = if k % 2 == 1 { (w, h) } else { (h, w) };
    let mut out = Tensor::zeros(Shape::new(n, c, oh, ow));
    for (src, dst) in x.data().chunks(h * w).zip(out.data_mut().chunks_mut(oh * ow)) {
        for i in 0..oh {
            for j in 0..ow {
                let (y, xx) = match k {
                    1 => (j, w - 1 - i),
                    2 => (h - 1 - i, w - 1 - j),
                    _ => (h - 1 - j, i),
                };
                dst[i * ow + j] = src[y * w + xx];
            }
        }
    }
    out
}

/// Draws one training batch.
///
/// Each of the `batch` draws picks a record and an LR top-left corner
/// uniformly, crops the aligned HR region at `scale`× the coordinates, and
/// rotates both crops by the same random multiple of 90°. Returns
/// `(lr [batch, 3, patch, patch], hr [batch, 3, patch·scale, patch·scale])`.
pub fn sample_patch_batch<R: Rng + ?Sized>(
    records: &[ImageRecord],
    rng: &mut R,
    scale: usize,
    patch: usize,
    batch: usize,
) -> Result<(Tensor, Tensor)> {
    if records.is_empty() {
        return Err(Error::invalid("sample_patch_batch", "no records"));
    }
    let mut lrs = Vec::with_capacity(batch);
    let mut hrs = Vec::with_capacity(batch);
    for _ in 0..batch {
        let rec = &records[rng.gen_range(0..records.len())];
        let (lh, lw) = (rec.lr.shape().h(), rec.lr.shape().w());
        if lh < patch || lw < patch {
            return Err(Error::invalid(
                "sample_patch_batch",
                format!("record {} is {lh}x{lw}, smaller than the {patch} patch", rec.id),
            ));
        }
        let top = rng.gen_range(0..=lh - patch);
        let left = rng.gen_range(0..=lw - patch);
        let k = rng.gen_range(0..4);
        let lr = rec.lr.crop(top, left, patch, patch)?;
        let hr = rec
            .hr
            .crop(top * scale, left * scale, patch * scale, patch * scale)?;
        lrs.push(rotate90(&lr, k));
        hrs.push(rotate90(&hr, k));
    }
    Ok((Tensor::stack(&lrs)?, Tensor::stack(&hrs)?))
}

pub fn lr_dir_name(scale: usize) -> String {
    format!("LRx{scale}")
}

/// `*.png` files of a directory, sorted by file name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// HR/LR pairs of a dataset root, sorted by id.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub scale: usize,
    pub records: Vec<ImageRecord>,
}

impl Dataset {
    /// Loads `root/HR` and `root/LRx{scale}`. With `min_lr_size`, any record
    /// whose LR image is smaller on either side is rejected.
    pub fn load(root: impl AsRef<Path>, scale: usize, min_lr_size: Option<usize>) -> Result<Dataset> {
        let root = root.as_ref().to_path_buf();
        let hr_dir = root.join("HR");
        let lr_dir = root.join(lr_dir_name(scale));
        let mut records = Vec::new();
        for hr_path in list_pngs(&hr_dir)? {
            let id = stem(&hr_path);
            let lr_path = lr_dir.join(format!("{id}.png"));
            if !lr_path.exists() {
                return Err(Error::data(&lr_path, "missing LR counterpart"));
            }
            let hr = load_png(&hr_path)?;
            let lr = load_png(&lr_path)?;
            let (hs, ls) = (hr.shape(), lr.shape());
            if hs.h() != ls.h() * scale || hs.w() != ls.w() * scale {
                return Err(Error::data(
                    &lr_path,
                    format!("LR {ls} is not HR {hs} divided by {scale}"),
                ));
            }
            if let Some(min) = min_lr_size {
                if ls.h() < min || ls.w() < min {
                    return Err(Error::data(
                        &lr_path,
                        format!("LR image {}x{} is smaller than the {min} patch", ls.h(), ls.w()),
                    ));
                }
            }
            if !hr.is_finite() || !lr.is_finite() {
                return Err(Error::data(&hr_path, "non-finite pixel values"));
            }
            records.push(ImageRecord { id, hr, lr });
        }
        if records.is_empty() {
            return Err(Error::data(&hr_dir, "no PNG images found"));
        }
        Ok(Dataset {
            root,
            scale,
            records,
        })
    }

    pub fn means_path(&self) -> PathBuf {
        self.root.join("means.txt")
    }

    /// Cached means from `means.txt`, computed from the HR images otherwise.
    pub fn channel_means(&self) -> Result<ChannelMeans> {
        let path = self.means_path();
        if path.exists() {
            return ChannelMeans::load(path);
        }
        let hrs: Vec<&Tensor> = self.records.iter().map(|r| &r.hr).collect();
        compute_channel_means(&hrs)
    }
}
