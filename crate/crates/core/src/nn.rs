//! Convolutional and self-organized (generative-neuron) layers, residual and
//! SOR blocks, and the pixel-shuffle upsampler.
//!
//! A self-organized layer (SOL) of order `q` replaces each convolution kernel
//! with a truncated Taylor polynomial of its input:
//!
//! ```text
//! y = w0 + Σ_{n=1..q} conv(( x − a )ⁿ, wₙ)
//! ```
//!
//! with one bias `w0` per output channel and `q` kernel banks `w1..wq`. The
//! expansion point `a` is fixed at 0, which pairs with `tanh` as the
//! activation between layers. With `q = 1` a SOL is exactly a convolution.
//!
//! Parameter containers are generic over the handle type so the same struct
//! holds owned tensors (`ConvParams<Tensor>`) or graph handles bound for one
//! forward pass (`ConvParams<Var>`).

use rand::Rng;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Taylor expansion point of every SOL.
pub const EXPANSION_POINT: f32 = 0.0;

/// Spatial kernel size of every layer.
pub const KERNEL_SIZE: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = Tensor> {
    pub kernel: T,
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolParams<T = Tensor> {
    /// Banks `w1..wq`; `kernels.len()` is the order `q`.
    pub kernels: Vec<T>,
    pub bias: T,
}

impl<T> SolParams<T> {
    pub fn q(&self) -> usize {
        self.kernels.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams<T = Tensor> {
    Conv(ConvParams<T>),
    Sol(SolParams<T>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Sol { q: usize },
}

/// Shape description of one layer, enough to size and initialize it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
}

impl LayerSpec {
    pub fn conv(cin: usize, cout: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            cin,
            cout,
        }
    }

    pub fn sol(cin: usize, cout: usize, q: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Sol { q },
            cin,
            cout,
        }
    }

    pub fn kernel_shape(&self) -> Shape {
        Shape::new(self.cout, self.cin, KERNEL_SIZE, KERNEL_SIZE)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.cout, 1, 1)
    }

    pub fn banks(&self) -> usize {
        match self.kind {
            LayerKind::Conv => 1,
            LayerKind::Sol { q } => q,
        }
    }

    /// Learnable scalars: `banks·Cout·Cin·k² + Cout`.
    pub fn param_count(&self) -> usize {
        self.banks() * self.kernel_shape().numel() + self.cout
    }
}

impl ConvParams<Tensor> {
    pub fn bind<G: Graph>(&self, g: &mut G) -> ConvParams<G::Value> {
        ConvParams {
            kernel: g.parameter(self.kernel.clone()),
            bias: g.parameter(self.bias.clone()),
        }
    }
}

impl SolParams<Tensor> {
    pub fn bind<G: Graph>(&self, g: &mut G) -> SolParams<G::Value> {
        SolParams {
            kernels: self.kernels.iter().map(|k| g.parameter(k.clone())).collect(),
            bias: g.parameter(self.bias.clone()),
        }
    }
}

impl LayerParams<Tensor> {
    pub fn bind<G: Graph>(&self, g: &mut G) -> LayerParams<G::Value> {
        match self {
            LayerParams::Conv(p) => LayerParams::Conv(p.bind(g)),
            LayerParams::Sol(p) => LayerParams::Sol(p.bind(g)),
        }
    }
}

impl<T> LayerParams<T> {
    /// `(suffix, tensor)` pairs in canonical order: `kernel` or
    /// `kernel1..kernelq`, then `bias`.
    pub fn named(&self) -> Vec<(String, &T)> {
        match self {
            LayerParams::Conv(p) => vec![("kernel".into(), &p.kernel), ("bias".into(), &p.bias)],
            LayerParams::Sol(p) => {
                let mut v: Vec<(String, &T)> = p
                    .kernels
                    .iter()
                    .enumerate()
                    .map(|(i, k)| (format!("kernel{}", i + 1), k))
                    .collect();
                v.push(("bias".into(), &p.bias));
                v
            }
        }
    }

    pub fn tensors(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }
}

/// Draws fresh parameters: kernels uniform in `±1/sqrt(fan_in)`, SOL bank
/// `n` additionally scaled by `1/n`, biases zero.
pub fn init_params<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> LayerParams {
    let fan_in = (spec.cin * KERNEL_SIZE * KERNEL_SIZE) as f32;
    let bound = fan_in.sqrt().recip();
    let bias = Tensor::zeros(spec.bias_shape());
    match spec.kind {
        LayerKind::Conv => LayerParams::Conv(ConvParams {
            kernel: Tensor::uniform(spec.kernel_shape(), -bound, bound, rng),
            bias,
        }),
        LayerKind::Sol { q } => LayerParams::Sol(SolParams {
            kernels: (1..=q)
                .map(|n| {
                    let b = bound / n as f32;
                    Tensor::uniform(spec.kernel_shape(), -b, b, rng)
                })
                .collect(),
            bias,
        }),
    }
}

pub fn conv_forward<G: Graph>(g: &mut G, x: &G::Value, p: &ConvParams<G::Value>) -> Result<G::Value> {
    g.conv2d(x, &p.kernel, Some(&p.bias))
}

/// SOL without activation: `bias + Σₙ conv((x − a)ⁿ, kernelₙ)`.
pub fn sol_forward<G: Graph>(g: &mut G, x: &G::Value, p: &SolParams<G::Value>) -> Result<G::Value> {
    if p.kernels.is_empty() {
        return Err(Error::invalid("sol_forward", "order q must be at least 1"));
    }
    let centered = if EXPANSION_POINT != 0.0 {
        g.scalar_add(x, -EXPANSION_POINT)
    } else {
        x.clone()
    };
    let mut out = g.conv2d(&centered, &p.kernels[0], Some(&p.bias))?;
    for (i, kernel) in p.kernels.iter().enumerate().skip(1) {
        let powered = g.pow(&centered, i as u32 + 1)?;
        let term = g.conv2d(&powered, kernel, None)?;
        out = g.add(&out, &term)?;
    }
    Ok(out)
}

pub fn layer_forward<G: Graph>(g: &mut G, x: &G::Value, p: &LayerParams<G::Value>) -> Result<G::Value> {
    match p {
        LayerParams::Conv(p) => conv_forward(g, x, p),
        LayerParams::Sol(p) => sol_forward(g, x, p),
    }
}

/// EDSR residual block: `x + conv(relu(conv(x)))`, no activation after the sum.
pub fn res_block_forward<G: Graph>(
    g: &mut G,
    x: &G::Value,
    p1: &ConvParams<G::Value>,
    p2: &ConvParams<G::Value>,
) -> Result<G::Value> {
    let h = conv_forward(g, x, p1)?;
    let h = g.relu(&h);
    let h = conv_forward(g, &h, p2)?;
    g.add(x, &h)
}

/// SOR block: `tanh(x + sol(tanh(sol(x))))`.
pub fn sor_block_forward<G: Graph>(
    g: &mut G,
    x: &G::Value,
    p1: &SolParams<G::Value>,
    p2: &SolParams<G::Value>,
) -> Result<G::Value> {
    let h = sol_forward(g, x, p1)?;
    let h = g.tanh(&h);
    let h = sol_forward(g, &h, p2)?;
    let s = g.add(x, &h)?;
    Ok(g.tanh(&s))
}

/// Number of ×2 stages for a supported scale.
pub fn upsampler_stages(scale: usize) -> Result<usize> {
    match scale {
        2 => Ok(1),
        4 => Ok(2),
        _ => Err(Error::invalid(
            "upsampler",
            format!("unsupported scale {scale}; expected 2 or 4"),
        )),
    }
}

/// Each stage expands `C → 4C` with its layer, then pixel-shuffles by 2.
pub fn upsampler_forward<G: Graph>(
    g: &mut G,
    x: &G::Value,
    scale: usize,
    stages: &[LayerParams<G::Value>],
) -> Result<G::Value> {
    let expected = upsampler_stages(scale)?;
    if stages.len() != expected {
        return Err(Error::invalid(
            "upsampler",
            format!("scale {scale} needs {expected} stage(s), got {}", stages.len()),
        ));
    }
    let mut h = x.clone();
    for stage in stages {
        let e = layer_forward(g, &h, stage)?;
        h = g.pixel_shuffle(&e, 2)?;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autograd::{kernels, Eval};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sol_params(spec: &LayerSpec, r: &mut ChaCha8Rng) -> SolParams {
        match init_params(spec, r) {
            LayerParams::Sol(p) => p,
            LayerParams::Conv(_) => unreachable!(),
        }
    }

    fn conv_params(spec: &LayerSpec, r: &mut ChaCha8Rng) -> ConvParams {
        match init_params(spec, r) {
            LayerParams::Conv(p) => p,
            LayerParams::Sol(_) => unreachable!(),
        }
    }

    #[test]
    fn sol_zero_kernels_give_bias() {
        let mut r = rng(1);
        let x = Tensor::uniform(Shape::new(1, 2, 4, 4), -1.0, 1.0, &mut r);
        let p = SolParams {
            kernels: vec![Tensor::zeros(Shape::new(3, 2, 3, 3)); 3],
            bias: Tensor::full(Shape::new(1, 3, 1, 1), 0.7),
        };
        let y = sol_forward(&mut Eval, &x, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn sol_scalar_example() {
        let x = Tensor::full(Shape::new(1, 1, 1, 1), 0.5);
        let mut one = Tensor::zeros(Shape::new(1, 1, 3, 3));
        one.set(0, 0, 1, 1, 1.0);
        let p = SolParams {
            kernels: vec![one; 3],
            bias: Tensor::zeros(Shape::new(1, 1, 1, 1)),
        };
        assert_eq!(sol_forward(&mut Eval, &x, &p).unwrap().data(), &[0.875]);
    }

    #[test]
    fn sol_q1_is_conv_exactly() {
        let mut r = rng(2);
        for _ in 0..100 {
            let x = Tensor::uniform(Shape::new(2, 3, 5, 6), -1.0, 1.0, &mut r);
            let mut p = sol_params(&LayerSpec::sol(3, 4, 1), &mut r);
            p.bias = Tensor::uniform(p.bias.shape(), -0.5, 0.5, &mut r);
            let y = sol_forward(&mut Eval, &x, &p).unwrap();
            let c = kernels::conv2d(&x, &p.kernels[0], Some(&p.bias)).unwrap();
            assert!(y.max_abs_diff(&c).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn sol_is_linear_in_each_bank() {
        let mut r = rng(3);
        let x = Tensor::uniform(Shape::new(1, 2, 5, 5), -0.9, 0.9, &mut r);
        let p = sol_params(&LayerSpec::sol(2, 3, 3), &mut r);
        let base = sol_forward(&mut Eval, &x, &p).unwrap();
        for n in 0..3 {
            let mut doubled = p.clone();
            doubled.kernels[n] = p.kernels[n].map(|v| 2.0 * v);
            let y2 = sol_forward(&mut Eval, &x, &doubled).unwrap();
            let delta = y2.zip_map(&base, "sub", |a, b| a - b).unwrap();
            let xn = kernels::pow(&x, n as u32 + 1).unwrap();
            let only = kernels::conv2d(&xn, &p.kernels[n], None).unwrap();
            assert!(delta.max_abs_diff(&only).unwrap() <= 1e-5, "bank {n}");
        }
    }

    #[test]
    fn res_block_zero_weights_is_identity() {
        let mut r = rng(4);
        let x = Tensor::uniform(Shape::new(1, 4, 3, 3), -1.0, 1.0, &mut r);
        let z = ConvParams {
            kernel: Tensor::zeros(Shape::new(4, 4, 3, 3)),
            bias: Tensor::zeros(Shape::new(1, 4, 1, 1)),
        };
        assert_eq!(res_block_forward(&mut Eval, &x, &z, &z).unwrap(), x);
    }

    #[test]
    fn res_block_matches_hand_composition() {
        let mut r = rng(5);
        let x = Tensor::uniform(Shape::new(2, 4, 6, 6), -1.0, 1.0, &mut r);
        let p1 = conv_params(&LayerSpec::conv(4, 4), &mut r);
        let p2 = conv_params(&LayerSpec::conv(4, 4), &mut r);
        let y = res_block_forward(&mut Eval, &x, &p1, &p2).unwrap();
        let h = kernels::conv2d(&x, &p1.kernel, Some(&p1.bias)).unwrap().map(|v| v.max(0.0));
        let h = kernels::conv2d(&h, &p2.kernel, Some(&p2.bias)).unwrap();
        let want = x.zip_map(&h, "add", |a, b| a + b).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.max_abs_diff(&want).unwrap() <= 1e-6);
    }

    #[test]
    fn sor_block_zero_weights_is_tanh() {
        let mut r = rng(6);
        let x = Tensor::uniform(Shape::new(1, 3, 4, 4), -2.0, 2.0, &mut r);
        let z = SolParams {
            kernels: vec![Tensor::zeros(Shape::new(3, 3, 3, 3)); 3],
            bias: Tensor::zeros(Shape::new(1, 3, 1, 1)),
        };
        assert_eq!(sor_block_forward(&mut Eval, &x, &z, &z).unwrap(), x.map(f32::tanh));
    }

    #[test]
    fn sor_block_output_is_bounded_and_shaped() {
        let mut r = rng(7);
        let x = Tensor::uniform(Shape::new(2, 4, 5, 5), -5.0, 5.0, &mut r);
        let p1 = sol_params(&LayerSpec::sol(4, 4, 3), &mut r);
        let p2 = sol_params(&LayerSpec::sol(4, 4, 3), &mut r);
        let y = sor_block_forward(&mut Eval, &x, &p1, &p2).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn sor_q1_differs_from_res_block_only_by_tanh_placement() {
        let mut r = rng(8);
        let x = Tensor::uniform(Shape::new(1, 4, 5, 5), -1.0, 1.0, &mut r);
        let c1 = conv_params(&LayerSpec::conv(4, 4), &mut r);
        let c2 = conv_params(&LayerSpec::conv(4, 4), &mut r);
        let s = |c: &ConvParams| SolParams {
            kernels: vec![c.kernel.clone()],
            bias: c.bias.clone(),
        };
        let y = sor_block_forward(&mut Eval, &x, &s(&c1), &s(&c2)).unwrap();
        let h = conv_forward(&mut Eval, &x, &c1).unwrap().map(f32::tanh);
        let h = conv_forward(&mut Eval, &h, &c2).unwrap();
        let want = x.zip_map(&h, "add", |a, b| (a + b).tanh()).unwrap();
        assert!(y.max_abs_diff(&want).unwrap() <= 1e-6);
    }

    #[test]
    fn upsampler_shapes() {
        let mut r = rng(9);
        let x = Tensor::uniform(Shape::new(1, 8, 3, 5), -1.0, 1.0, &mut r);
        let stage = |r: &mut ChaCha8Rng| init_params(&LayerSpec::sol(8, 32, 3), r);
        let y2 = upsampler_forward(&mut Eval, &x, 2, &[stage(&mut r)]).unwrap();
        assert_eq!(y2.shape(), Shape::new(1, 8, 6, 10));
        let y4 = upsampler_forward(&mut Eval, &x, 4, &[stage(&mut r), stage(&mut r)]).unwrap();
        assert_eq!(y4.shape(), Shape::new(1, 8, 12, 20));
        assert!(upsampler_forward(&mut Eval, &x, 3, &[stage(&mut r)]).is_err());
        assert!(upsampler_forward(&mut Eval, &x, 4, &[stage(&mut r)]).is_err());
    }

    #[test]
    fn upsampler_with_copy_weights_is_nearest_neighbour() {
        let c = 3;
        let mut kernel = Tensor::zeros(Shape::new(4 * c, c, 3, 3));
        for ci in 0..c {
            for sub in 0..4 {
                kernel.set(ci * 4 + sub, ci, 1, 1, 1.0);
            }
        }
        let stage = LayerParams::Conv(ConvParams {
            kernel,
            bias: Tensor::zeros(Shape::new(1, 4 * c, 1, 1)),
        });
        let mut r = rng(10);
        let x = Tensor::uniform(Shape::new(2, c, 3, 4), -1.0, 1.0, &mut r);
        for scale in [2, 4] {
            let stages = vec![stage.clone(); upsampler_stages(scale).unwrap()];
            let y = upsampler_forward(&mut Eval, &x, scale, &stages).unwrap();
            for n in 0..2 {
                for ch in 0..c {
                    for i in 0..3 * scale {
                        for j in 0..4 * scale {
                            assert_eq!(y.at(n, ch, i, j), x.at(n, ch, i / scale, j / scale));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn init_is_seeded_and_biases_zero() {
        let spec = LayerSpec::sol(4, 6, 3);
        let a = init_params(&spec, &mut rng(11));
        let b = init_params(&spec, &mut rng(11));
        assert_eq!(a, b);
        let LayerParams::Sol(p) = a else { unreachable!() };
        assert!(p.bias.data().iter().all(|&v| v == 0.0));
        let bound = 36.0f32.sqrt().recip();
        assert!(p.kernels[0].data().iter().all(|v| v.abs() <= bound));
        assert!(p.kernels[2].data().iter().all(|v| v.abs() <= bound / 3.0));
    }

    #[test]
    fn init_bank_std_ratio() {
        let spec = LayerSpec::sol(64, 200, 3);
        assert!(spec.kernel_shape().numel() >= 100_000);
        let p = sol_params(&spec, &mut rng(12));
        let std = |t: &Tensor| {
            let n = t.numel() as f64;
            let m = t.data().iter().map(|&v| v as f64).sum::<f64>() / n;
            (t.data().iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n).sqrt()
        };
        let ratio = std(&p.kernels[2]) / std(&p.kernels[0]);
        assert!((ratio - 1.0 / 3.0).abs() / (1.0 / 3.0) < 0.05, "{ratio}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let x = Tensor::zeros(Shape::new(1, 2, 3, 3));
        let p = sol_params(&LayerSpec::sol(3, 3, 2), &mut rng(13));
        assert!(sol_forward(&mut Eval, &x, &p).is_err());
    }
}
