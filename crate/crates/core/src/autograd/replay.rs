//! Re-executes a recorded tape in `f64` with naive reference kernels.
//!
//! The finite-difference side of the gradient check runs here, so round-off
//! in the 32-bit forward pass does not drown out small gradients.

use super::{Activation, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// An `f64` tensor produced by replay.
#[derive(Clone, Debug, PartialEq)]
pub struct Values64 {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Values64 {
    pub fn from_tensor(t: &Tensor) -> Values64 {
        Values64 {
            shape: t.shape(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Values64 {
        Values64 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Values64, f: impl Fn(f64, f64) -> f64) -> Values64 {
        Values64 {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

fn conv2d(x: &Values64, w: &Values64, bias: Option<&Values64>) -> Values64 {
    let [n, cin, h, wd] = x.shape.dims();
    let [cout, _, kh, kw] = w.shape.dims();
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = vec![0.0; n * cout * h * wd];
    for b in 0..n {
        for co in 0..cout {
            let b0 = bias.map_or(0.0, |t| t.data[co]);
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b0;
                    for ci in 0..cin {
                        for ky in 0..kh {
                            let iy = y as isize + ky as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = xx as isize + kx as isize - pw as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.data[((co * cin + ci) * kh + ky) * kw + kx]
                                    * x.data[((b * cin + ci) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out[((b * cout + co) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    Values64 {
        shape: Shape::new(n, cout, h, wd),
        data: out,
    }
}

fn pixel_shuffle(x: &Values64, r: usize) -> Values64 {
    let [n, c, h, w] = x.shape.dims();
    let oc = c / (r * r);
    let shape = Shape::new(n, oc, h * r, w * r);
    let mut out = vec![0.0; shape.numel()];
    for b in 0..n {
        for ci in 0..c {
            let (co, i, j) = (ci / (r * r), (ci % (r * r)) / r, ci % r);
            for y in 0..h {
                for xx in 0..w {
                    out[((b * oc + co) * h * r + y * r + i) * w * r + xx * r + j] =
                        x.data[((b * c + ci) * h + y) * w + xx];
                }
            }
        }
    }
    Values64 { shape, data: out }
}

impl Tape {
    /// Recomputes every node up to `output` in `f64`, with the leaf values in
    /// `overrides` replacing the recorded ones. Returns all node values.
    pub fn replay_f64(&self, output: Var, overrides: &[(Var, &Values64)]) -> Result<Vec<Values64>> {
        let mut vals: Vec<Values64> = Vec::with_capacity(output.0 + 1);
        for (idx, node) in self.nodes[..=output.0].iter().enumerate() {
            let v = |x: &Var| &vals[x.0];
            let value = match &node.op {
                Op::Constant | Op::Parameter => match overrides.iter().find(|(o, _)| o.0 == idx) {
                    Some((_, t)) => {
                        if t.shape != node.value.shape() {
                            return Err(Error::ShapeMismatch {
                                op: "replay_f64",
                                left: t.shape,
                                right: node.value.shape(),
                            });
                        }
                        (*t).clone()
                    }
                    None => Values64::from_tensor(&node.value),
                },
                Op::Conv2d { x, w, bias } => conv2d(v(x), v(w), bias.as_ref().map(v)),
                Op::Pow { x, n } => v(x).map(|a| a.powi(*n as i32)),
                Op::Activation { x, kind } => match kind {
                    Activation::Tanh => v(x).map(f64::tanh),
                    Activation::Relu => v(x).map(|a| a.max(0.0)),
                },
                Op::Add { a, b } => v(a).zip(v(b), |p, q| p + q),
                Op::Sub { a, b } => v(a).zip(v(b), |p, q| p - q),
                Op::ScalarMul { x, s } => v(x).map(|a| a * *s as f64),
                Op::ScalarAdd { x, s } => v(x).map(|a| a + *s as f64),
                Op::PixelShuffle { x, r } => pixel_shuffle(v(x), *r),
                Op::MeanAbs { a, b } => {
                    let (a, b) = (v(a), v(b));
                    let s: f64 = a.data.iter().zip(&b.data).map(|(p, q)| (p - q).abs()).sum();
                    scalar(s / a.data.len() as f64)
                }
                Op::WeightedSum { x, weights } => {
                    let s: f64 = v(x)
                        .data
                        .iter()
                        .zip(weights.data())
                        .map(|(a, &w)| a * w as f64)
                        .sum();
                    scalar(s)
                }
                Op::Custom { x, rule } => v(x).map(|a| rule.value(a)),
            };
            vals.push(value);
        }
        Ok(vals)
    }

    /// `f64` replay of a one-element `output`.
    pub fn replay_scalar(&self, output: Var, overrides: &[(Var, &Values64)]) -> Result<f64> {
        let vals = self.replay_f64(output, overrides)?;
        let out = &vals[output.0];
        if out.data.len() != 1 {
            return Err(Error::invalid(
                "replay_scalar",
                format!("output has shape {}", out.shape),
            ));
        }
        Ok(out.data[0])
    }
}

fn scalar(v: f64) -> Values64 {
    Values64 {
        shape: Shape::new(1, 1, 1, 1),
        data: vec![v],
    }
}
