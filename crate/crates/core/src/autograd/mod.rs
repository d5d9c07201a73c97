//! Differentiable tensor operations.
//!
//! Operations are expressed against the [`Graph`] trait, which has two
//! implementations: [`Tape`], which records every operation so gradients can
//! be pulled back with [`Tape::backward`], and [`Eval`], which only computes
//! values and drops intermediates as soon as they go out of scope.
//! Both call the same kernels, so they produce bitwise-identical values.

pub mod gradcheck;
pub mod kernels;
mod replay;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub use gradcheck::{finite_diff_check, finite_diff_check_f32, GradCheck};
pub use replay::Values64;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Tanh => x.map(f32::tanh),
            Activation::Relu => x.map(|v| v.max(0.0)),
        }
    }
}

/// A user-supplied element-wise operation with its own pullback.
pub trait UnaryRule: Send + Sync {
    fn name(&self) -> &str;
    /// The scalar function, also used for `f64` replay.
    fn value(&self, x: f64) -> f64;
    fn forward(&self, x: &Tensor) -> Tensor {
        x.map(|v| self.value(v as f64) as f32)
    }
    /// Gradient w.r.t. the input given input `x`, output `y` and upstream `dy`.
    fn backward(&self, x: &Tensor, y: &Tensor, dy: &Tensor) -> Tensor;
}

/// The operation set needed by every layer in the crate.
pub trait Graph {
    type Value: Clone;

    /// Input that never needs a gradient.
    fn constant(&mut self, t: Tensor) -> Self::Value;
    /// Trainable leaf.
    fn parameter(&mut self, t: Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn conv2d(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        bias: Option<&Self::Value>,
    ) -> Result<Self::Value>;
    fn pow(&mut self, x: &Self::Value, n: u32) -> Result<Self::Value>;
    fn activation(&mut self, x: &Self::Value, kind: Activation) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scalar_mul(&mut self, x: &Self::Value, s: f32) -> Self::Value;
    /// `x + s` element-wise.
    fn scalar_add(&mut self, x: &Self::Value, s: f32) -> Self::Value;
    fn pixel_shuffle(&mut self, x: &Self::Value, r: usize) -> Result<Self::Value>;
    /// `mean(|a - b|)` as a one-element tensor.
    fn mean_abs(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// `Σ x·weights` with constant weights, as a one-element tensor.
    fn weighted_sum(&mut self, x: &Self::Value, weights: &Tensor) -> Result<Self::Value>;
    fn custom_unary(&mut self, x: &Self::Value, rule: Arc<dyn UnaryRule>) -> Self::Value;

    fn tanh(&mut self, x: &Self::Value) -> Self::Value {
        self.activation(x, Activation::Tanh)
    }

    fn relu(&mut self, x: &Self::Value) -> Self::Value {
        self.activation(x, Activation::Relu)
    }

    fn sum(&mut self, x: &Self::Value) -> Result<Self::Value> {
        let ones = Tensor::full(self.value(x).shape(), 1.0);
        self.weighted_sum(x, &ones)
    }
}

/// Value-only evaluation, used for inference.
#[derive(Default, Debug, Clone, Copy)]
pub struct Eval;

impl Graph for Eval {
    type Value = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn parameter(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn value<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }

    fn conv2d(&mut self, x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        kernels::conv2d(x, w, bias)
    }

    fn pow(&mut self, x: &Tensor, n: u32) -> Result<Tensor> {
        kernels::pow(x, n)
    }

    fn activation(&mut self, x: &Tensor, kind: Activation) -> Tensor {
        kind.apply(x)
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.zip_map(b, "add", |x, y| x + y)
    }

    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.zip_map(b, "sub", |x, y| x - y)
    }

    fn scalar_mul(&mut self, x: &Tensor, s: f32) -> Tensor {
        x.map(|v| v * s)
    }

    fn scalar_add(&mut self, x: &Tensor, s: f32) -> Tensor {
        x.map(|v| v + s)
    }

    fn pixel_shuffle(&mut self, x: &Tensor, r: usize) -> Result<Tensor> {
        kernels::pixel_shuffle(x, r)
    }

    fn mean_abs(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(kernels::mean_abs(a, b)? as f32))
    }

    fn weighted_sum(&mut self, x: &Tensor, weights: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(kernels::weighted_sum(x, weights)? as f32))
    }

    fn custom_unary(&mut self, x: &Tensor, rule: Arc<dyn UnaryRule>) -> Tensor {
        rule.forward(x)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Constant,
    Parameter,
    Conv2d { x: Var, w: Var, bias: Option<Var> },
    Pow { x: Var, n: u32 },
    Activation { x: Var, kind: Activation },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    ScalarMul { x: Var, s: f32 },
    ScalarAdd { x: Var, s: f32 },
    PixelShuffle { x: Var, r: usize },
    MeanAbs { a: Var, b: Var },
    WeightedSum { x: Var, weights: Tensor },
    Custom { x: Var, rule: Arc<dyn UnaryRule> },
}

struct Node {
    value: Tensor,
    /// Reductions keep their `f64` accumulator for finite-difference checks.
    precise: Option<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order; node inputs always precede the node.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Scalar value of `v`, at `f64` precision when the producing op kept it.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let node = &self.nodes[v.0];
        match node.precise {
            Some(p) => Ok(p),
            None => Ok(node.value.item()? as f64),
        }
    }

    pub fn is_parameter(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Parameter)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Constant => false,
            Op::Parameter => true,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            precise: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_precise(&mut self, value: f64, op: Op, inputs: &[Var]) -> Var {
        let v = self.push(Tensor::scalar(value as f32), op, inputs);
        self.nodes[v.0].precise = Some(value);
        v
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Reverse-mode pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("loss must be a scalar, got shape {}", root.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let wants = |v: Var| self.nodes[v.0].requires_grad;
            let mut contribs: Vec<(Var, Tensor)> = Vec::new();
            match &node.op {
                Op::Constant => {}
                Op::Parameter => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv2d { x, w, bias } => {
                    let cg = kernels::conv2d_backward(
                        self.val(*x),
                        self.val(*w),
                        bias.is_some_and(wants),
                        &g,
                        wants(*x),
                    )?;
                    if let Some(dx) = cg.dx {
                        contribs.push((*x, dx));
                    }
                    if wants(*w) {
                        contribs.push((*w, cg.dw));
                    }
                    if let (Some(b), Some(db)) = (bias, cg.db) {
                        contribs.push((*b, db));
                    }
                }
                Op::Pow { x, n } => {
                    contribs.push((*x, kernels::pow_backward(self.val(*x), *n, &g)));
                }
                Op::Activation { x, kind } => {
                    let y = &node.value;
                    let dx = match kind {
                        Activation::Tanh => y.zip_map(&g, "tanh", |t, d| (1.0 - t * t) * d)?,
                        Activation::Relu => {
                            self.val(*x)
                                .zip_map(&g, "relu", |v, d| if v > 0.0 { d } else { 0.0 })?
                        }
                    };
                    contribs.push((*x, dx));
                }
                Op::Add { a, b } => {
                    contribs.push((*a, g.clone()));
                    contribs.push((*b, g));
                }
                Op::Sub { a, b } => {
                    contribs.push((*b, g.map(|d| -d)));
                    contribs.push((*a, g));
                }
                Op::ScalarMul { x, s } => {
                    let s = *s;
                    contribs.push((*x, g.map(|d| d * s)));
                }
                Op::ScalarAdd { x, .. } => contribs.push((*x, g)),
                Op::PixelShuffle { x, r } => {
                    contribs.push((*x, kernels::pixel_unshuffle(&g, *r)?));
                }
                Op::MeanAbs { a, b } => {
                    let up = g.item()?;
                    let da = kernels::mean_abs_grad(self.val(*a), self.val(*b), up);
                    contribs.push((*b, da.map(|d| -d)));
                    contribs.push((*a, da));
                }
                Op::WeightedSum { x, weights } => {
                    let up = g.item()?;
                    contribs.push((*x, weights.map(|w| w * up)));
                }
                Op::Custom { x, rule } => {
                    contribs.push((*x, rule.backward(self.val(*x), &node.value, &g)));
                }
            }
            for (v, d) in contribs {
                if !wants(v) {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&d),
                    slot @ None => *slot = Some(d),
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

impl Graph for Tape {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, &[])
    }

    fn parameter(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Parameter, &[])
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.val(*v)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, bias: Option<&Var>) -> Result<Var> {
        let y = kernels::conv2d(self.val(*x), self.val(*w), bias.map(|b| self.val(*b)))?;
        let mut inputs = vec![*x, *w];
        inputs.extend(bias.copied());
        Ok(self.push(
            y,
            Op::Conv2d {
                x: *x,
                w: *w,
                bias: bias.copied(),
            },
            &inputs,
        ))
    }

    fn pow(&mut self, x: &Var, n: u32) -> Result<Var> {
        let y = kernels::pow(self.val(*x), n)?;
        Ok(self.push(y, Op::Pow { x: *x, n }, &[*x]))
    }

    fn activation(&mut self, x: &Var, kind: Activation) -> Var {
        let y = kind.apply(self.val(*x));
        self.push(y, Op::Activation { x: *x, kind }, &[*x])
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = self.val(*a).zip_map(self.val(*b), "add", |x, y| x + y)?;
        Ok(self.push(y, Op::Add { a: *a, b: *b }, &[*a, *b]))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = self.val(*a).zip_map(self.val(*b), "sub", |x, y| x - y)?;
        Ok(self.push(y, Op::Sub { a: *a, b: *b }, &[*a, *b]))
    }

    fn scalar_mul(&mut self, x: &Var, s: f32) -> Var {
        let y = self.val(*x).map(|v| v * s);
        self.push(y, Op::ScalarMul { x: *x, s }, &[*x])
    }

    fn scalar_add(&mut self, x: &Var, s: f32) -> Var {
        let y = self.val(*x).map(|v| v + s);
        self.push(y, Op::ScalarAdd { x: *x, s }, &[*x])
    }

    fn pixel_shuffle(&mut self, x: &Var, r: usize) -> Result<Var> {
        let y = kernels::pixel_shuffle(self.val(*x), r)?;
        Ok(self.push(y, Op::PixelShuffle { x: *x, r }, &[*x]))
    }

    fn mean_abs(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let m = kernels::mean_abs(self.val(*a), self.val(*b))?;
        Ok(self.push_precise(m, Op::MeanAbs { a: *a, b: *b }, &[*a, *b]))
    }

    fn weighted_sum(&mut self, x: &Var, weights: &Tensor) -> Result<Var> {
        let s = kernels::weighted_sum(self.val(*x), weights)?;
        Ok(self.push_precise(
            s,
            Op::WeightedSum {
                x: *x,
                weights: weights.clone(),
            },
            &[*x],
        ))
    }

    fn custom_unary(&mut self, x: &Var, rule: Arc<dyn UnaryRule>) -> Var {
        let y = rule.forward(self.val(*x));
        self.push(y, Op::Custom { x: *x, rule }, &[*x])
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Shape>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.0]),
        }
    }

    /// Moves the gradient out, leaving nothing behind.
    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }
}
