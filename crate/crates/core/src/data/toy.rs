//! Procedural toy corpus: small RGB images with hard-edged shapes, stripes
//! and smooth gradients, used for desk-scale training runs and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Shape, Tensor};

/// Side length of bundled toy HR images.
pub const TOY_SIZE: usize = 128;
/// Images in the bundled toy corpus.
pub const TOY_COUNT: usize = 8;
/// Leading images used for training; the rest are held out.
pub const TOY_TRAIN: usize = 6;
pub const TOY_SEED: u64 = 20_211_025;

fn color<R: Rng>(rng: &mut R) -> [f32; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

/// One `[1, 3, size, size]` image drawn from `rng`.
pub fn toy_image<R: Rng>(size: usize, rng: &mut R) -> Tensor {
    let s = size as f32;
    let base = color(rng);
    let tint = color(rng);
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());

    enum Shape2 {
        Disc { cx: f32, cy: f32, r: f32 },
        Rect { x0: f32, y0: f32, x1: f32, y1: f32 },
        Stripes { period: f32, phase: f32, dir: (f32, f32), x0: f32, y0: f32, x1: f32, y1: f32 },
    }
    let mut shapes = Vec::new();
    for _ in 0..rng.gen_range(5..9) {
        let col = color(rng);
        let shape = match rng.gen_range(0..3) {
            0 => Shape2::Disc {
                cx: rng.gen_range(0.0..s),
                cy: rng.gen_range(0.0..s),
                r: rng.gen_range(0.06 * s..0.25 * s),
            },
            1 => {
                let (x0, y0) = (rng.gen_range(0.0..0.8 * s), rng.gen_range(0.0..0.8 * s));
                Shape2::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.gen_range(0.1 * s..0.4 * s),
                    y1: y0 + rng.gen_range(0.1 * s..0.4 * s),
                }
            }
            _ => {
                let a: f32 = rng.gen_range(0.0..std::f32::consts::PI);
                let (x0, y0) = (rng.gen_range(0.0..0.6 * s), rng.gen_range(0.0..0.6 * s));
                Shape2::Stripes {
                    period: rng.gen_range(6.0..14.0),
                    phase: rng.gen_range(0.0..1.0),
                    dir: (a.cos(), a.sin()),
                    x0,
                    y0,
                    x1: x0 + rng.gen_range(0.2 * s..0.4 * s),
                    y1: y0 + rng.gen_range(0.2 * s..0.4 * s),
                }
            }
        };
        shapes.push((shape, col));
    }

    let mut img = Tensor::zeros(Shape::new(1, 3, size, size));
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
            let t = ((fx * ca + fy * sa) / s).clamp(-1.0, 1.0) * 0.5 + 0.5;
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                px[c] = base[c] * (1.0 - t) + tint[c] * t;
            }
            for (shape, col) in &shapes {
                let inside = match *shape {
                    Shape2::Disc { cx, cy, r } => (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r,
                    Shape2::Rect { x0, y0, x1, y1 } => fx >= x0 && fx < x1 && fy >= y0 && fy < y1,
                    Shape2::Stripes { period, phase, dir, x0, y0, x1, y1 } => {
                        let inside_box = fx >= x0 && fx < x1 && fy >= y0 && fy < y1;
                        let u = (fx * dir.0 + fy * dir.1) / period + phase;
                        inside_box && u.rem_euclid(1.0) < 0.5
                    }
                };
                if inside {
                    px = *col;
                }
            }
            for (c, v) in px.iter().enumerate() {
                img.set(0, c, y, x, *v);
            }
        }
    }
    img
}

/// The bundled toy corpus: [`TOY_COUNT`] images of [`TOY_SIZE`]², already on
/// the 8-bit grid so they survive a PNG round trip unchanged.
pub fn toy_corpus() -> Vec<(String, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(TOY_SEED);
    (0..TOY_COUNT)
        .map(|i| {
            let img = super::quantize(&toy_image(TOY_SIZE, &mut rng));
            (format!("toy{i:02}"), img)
        })
        .collect()
}
