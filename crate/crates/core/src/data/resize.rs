//! Separable cubic-convolution resampling.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Kernel parameter of the cubic convolution.
pub const CUBIC_A: f64 = -0.5;

/// Cubic convolution kernel with parameter [`CUBIC_A`].
pub fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Per-output-sample taps: `(first source index, weights)`; indices past the
/// edges are clamped when applied.
struct Taps {
    start: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

fn taps(in_len: usize, out_len: usize, antialias: bool) -> Taps {
    let ratio = in_len as f64 / out_len as f64;
    let stretch = if antialias && ratio > 1.0 { ratio } else { 1.0 };
    let support = 2.0 * stretch;
    let mut start = Vec::with_capacity(out_len);
    let mut weights = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = (i as f64 + 0.5) * ratio - 0.5;
        let lo = (center - support).floor() as isize;
        let hi = (center + support).ceil() as isize;
        let mut w: Vec<f64> = (lo..=hi)
            .map(|k| cubic((k as f64 - center) / stretch))
            .collect();
        let sum: f64 = w.iter().sum();
        for v in &mut w {
            *v /= sum;
        }
        start.push(lo);
        weights.push(w);
    }
    Taps { start, weights }
}

fn clamp_index(k: isize, len: usize) -> usize {
    k.clamp(0, len as isize - 1) as usize
}

/// Resamples every plane of `x` to `out_h × out_w`.
///
/// When shrinking with `antialias`, the kernel is stretched by the scale
/// factor so it also acts as a low-pass filter. Samples outside the image
/// take the value of the nearest edge pixel.
pub fn bicubic_resize(x: &Tensor, out_h: usize, out_w: usize, antialias: bool) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("bicubic_resize", "output size must be positive"));
    }
    let [n, c, h, w] = x.shape().dims();
    if h == 0 || w == 0 {
        return Err(Error::invalid("bicubic_resize", "input is empty"));
    }
    let tx = taps(w, out_w, antialias);
    let ty = taps(h, out_h, antialias);
    let mut out = Tensor::zeros(Shape::new(n, c, out_h, out_w));
    let mut rows = vec![0.0f64; h * out_w];
    for (src, dst) in x
        .data()
        .chunks(h * w)
        .zip(out.data_mut().chunks_mut(out_h * out_w))
    {
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            for ox in 0..out_w {
                let s = tx.start[ox];
                rows[y * out_w + ox] = tx.weights[ox]
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * line[clamp_index(s + t as isize, w)] as f64)
                    .sum();
            }
        }
        for oy in 0..out_h {
            let s = ty.start[oy];
            for ox in 0..out_w {
                let v: f64 = ty.weights[oy]
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * rows[clamp_index(s + t as isize, h) * out_w + ox])
                    .sum();
                dst[oy * out_w + ox] = v as f32;
            }
        }
    }
    Ok(out)
}
