//! Gradient-check suite covering every differentiable op, both block types,
//! the upsampler and a small end-to-end model.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::kernels::conv2d;
use crate::autograd::{finite_diff_check, Graph, Tape, UnaryRule, Var};
use crate::error::Result;
use crate::model::{Model, ModelSpec};
use crate::nn::{
    init_params, res_block_forward, sol_forward, sor_block_forward,
    upsampler_forward, ConvParams, LayerParams, LayerSpec, SolParams,
};
use crate::tensor::{Shape, Tensor};

/// Finite-difference step.
pub const GRADCHECK_EPS: f32 = 1e-3;
/// Maximum accepted relative error.
pub const GRADCHECK_TOL: f64 = 1e-3;
/// Coordinates sampled per input tensor.
pub const GRADCHECK_SAMPLES: usize = 24;

type CaseFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

pub struct GradCheckCase {
    pub name: String,
    pub inputs: Vec<Tensor>,
    pub f: CaseFn,
}

impl GradCheckCase {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<Tensor>,
        f: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static,
    ) -> Self {
        GradCheckCase {
            name: name.into(),
            inputs,
            f: Box::new(f),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckRow {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst: Option<(f64, f64)>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>11} {:>7} {:>12} {:>12}  result",
            "item", "max_rel_err", "coords", "analytic", "numeric"
        );
        for r in &self.rows {
            let (a, n) = r.worst.unwrap_or((0.0, 0.0));
            let _ = writeln!(
                s,
                "{:<24} {:>11.3e} {:>7} {:>12.4e} {:>12.4e}  {}",
                r.name,
                r.max_rel_error,
                r.checked,
                a,
                n,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

pub fn run_gradcheck(cases: &[GradCheckCase], eps: f32, tolerance: f64) -> Result<GradCheckReport> {
    let mut rows = Vec::with_capacity(cases.len());
    for case in cases {
        let r = finite_diff_check(|t, v| (case.f)(t, v), &case.inputs, eps, GRADCHECK_SAMPLES)?;
        rows.push(GradCheckRow {
            name: case.name.clone(),
            max_rel_error: r.max_rel_error,
            checked: r.checked,
            worst: r.worst_values,
            passed: r.max_rel_error < tolerance,
        });
    }
    Ok(GradCheckReport { rows, tolerance })
}

fn uniform(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    Tensor::uniform(shape, -0.9, 0.9, rng)
}

/// Scalar loss `Σ y·probe` with a fixed random probe of `y`'s shape.
fn probe_loss(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = uniform(&mut rng, t.value(&y).shape());
    t.weighted_sum(&y, &probe)
}

/// Uniform values in `±[margin, 0.9]`.
fn nonzero(rng: &mut ChaCha8Rng, shape: Shape, margin: f32) -> Tensor {
    let signs = Tensor::uniform(shape, -1.0, 1.0, rng);
    let mags = Tensor::uniform(shape, margin, 0.9, rng);
    signs.zip_map(&mags, "nonzero", |s, m| m.copysign(s)).expect("same shape")
}

/// `x` shifted element-wise by `±[0.2, 0.9]`.
fn away_from(x: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let d = nonzero(rng, x.shape(), 0.2);
    x.zip_map(&d, "away_from", |a, b| a + b).expect("same shape")
}

fn sol_from(vars: &[Var]) -> SolParams<Var> {
    SolParams {
        kernels: vars[..vars.len() - 1].to_vec(),
        bias: vars[vars.len() - 1],
    }
}

/// Every op, both blocks, the upsampler and a 2-block, 8-channel, q=3 model.
pub fn standard_cases() -> Vec<GradCheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = |n, c, h, w| Shape::new(n, c, h, w);
    let mut cases = Vec::new();

    cases.push(GradCheckCase::new(
        "conv2d",
        vec![
            uniform(&mut rng, s(2, 2, 5, 5)),
            uniform(&mut rng, s(3, 2, 3, 3)),
            uniform(&mut rng, s(1, 3, 1, 1)),
        ],
        |t, v| {
            let y = t.conv2d(&v[0], &v[1], Some(&v[2]))?;
            probe_loss(t, y, 1)
        },
    ));
    // Targets sit well away from the conv output so no |y - target| kink
    // lies within one step.
    let (x, w, b) = (
        uniform(&mut rng, s(1, 2, 4, 4)),
        uniform(&mut rng, s(2, 2, 3, 3)),
        uniform(&mut rng, s(1, 2, 1, 1)),
    );
    let y0 = conv2d(&x, &w, Some(&b)).expect("valid shapes");
    let target = away_from(&y0, &mut rng);
    cases.push(GradCheckCase::new(
        "conv2d+mean_abs",
        vec![x, w, b],
        move |t, v| {
            let y = t.conv2d(&v[0], &v[1], Some(&v[2]))?;
            let target = t.constant(target.clone());
            t.mean_abs(&y, &target)
        },
    ));
    // For n = 3 the central difference is off by exactly eps² in absolute
    // terms, which is large relative to 3x² only when x is near zero.
    for n in [1u32, 2, 3] {
        cases.push(GradCheckCase::new(
            format!("elem_pow(n={n})"),
            vec![nonzero(&mut rng, s(1, 2, 3, 3), 0.1)],
            move |t, v| {
                let y = t.pow(&v[0], n)?;
                probe_loss(t, y, 2)
            },
        ));
    }
    cases.push(GradCheckCase::new(
        "tanh",
        vec![uniform(&mut rng, s(1, 2, 3, 3))],
        |t, v| {
            let y = t.tanh(&v[0]);
            probe_loss(t, y, 3)
        },
    ));
    cases.push(GradCheckCase::new(
        "relu",
        vec![nonzero(&mut rng, s(1, 2, 3, 3), 0.05)],
        |t, v| {
            let y = t.relu(&v[0]);
            probe_loss(t, y, 4)
        },
    ));
    cases.push(GradCheckCase::new(
        "add",
        vec![uniform(&mut rng, s(1, 2, 3, 3)), uniform(&mut rng, s(1, 2, 3, 3))],
        |t, v| {
            let y = t.add(&v[0], &v[1])?;
            probe_loss(t, y, 5)
        },
    ));
    cases.push(GradCheckCase::new(
        "sub",
        vec![uniform(&mut rng, s(1, 2, 3, 3)), uniform(&mut rng, s(1, 2, 3, 3))],
        |t, v| {
            let y = t.sub(&v[0], &v[1])?;
            probe_loss(t, y, 6)
        },
    ));
    cases.push(GradCheckCase::new(
        "scalar_mul",
        vec![uniform(&mut rng, s(1, 2, 3, 3))],
        |t, v| {
            let y = t.scalar_mul(&v[0], -1.7);
            probe_loss(t, y, 7)
        },
    ));
    cases.push(GradCheckCase::new(
        "scalar_add",
        vec![uniform(&mut rng, s(1, 2, 3, 3))],
        |t, v| {
            let y = t.scalar_add(&v[0], 0.25);
            probe_loss(t, y, 8)
        },
    ));
    let a = uniform(&mut rng, s(1, 2, 3, 3));
    let b = away_from(&a, &mut rng);
    cases.push(GradCheckCase::new(
        "mean_abs",
        vec![a, b],
        |t, v| t.mean_abs(&v[0], &v[1]),
    ));
    cases.push(GradCheckCase::new(
        "pixel_shuffle",
        vec![uniform(&mut rng, s(1, 8, 3, 2))],
        |t, v| {
            let y = t.pixel_shuffle(&v[0], 2)?;
            probe_loss(t, y, 9)
        },
    ));
    cases.push(GradCheckCase::new(
        "sum",
        vec![uniform(&mut rng, s(1, 2, 3, 3))],
        |t, v| t.sum(&v[0]),
    ));

    // SOL, q = 3, on a 1×2×4×4 input.
    let mut sol_inputs = vec![uniform(&mut rng, s(1, 2, 4, 4))];
    sol_inputs.extend((0..3).map(|_| uniform(&mut rng, s(3, 2, 3, 3))));
    sol_inputs.push(uniform(&mut rng, s(1, 3, 1, 1)));
    cases.push(GradCheckCase::new("sol(q=3)", sol_inputs, |t, v| {
        let y = sol_forward(t, &v[0], &sol_from(&v[1..]))?;
        probe_loss(t, y, 10)
    }));

    let c = 3;
    let conv = |rng: &mut ChaCha8Rng| vec![uniform(rng, s(c, c, 3, 3)), uniform(rng, s(1, c, 1, 1))];
    // Redraw until every relu input is clear of zero by more than a step can
    // move it.
    let res_inputs = loop {
        let mut inputs = vec![uniform(&mut rng, s(1, c, 5, 5))];
        inputs.extend(conv(&mut rng));
        inputs.extend(conv(&mut rng));
        let z = conv2d(&inputs[0], &inputs[1], Some(&inputs[2])).expect("valid shapes");
        if z.data().iter().all(|v| v.abs() > 0.02) {
            break inputs;
        }
    };
    cases.push(GradCheckCase::new("res_block", res_inputs, |t, v| {
        let p1 = ConvParams { kernel: v[1], bias: v[2] };
        let p2 = ConvParams { kernel: v[3], bias: v[4] };
        let y = res_block_forward(t, &v[0], &p1, &p2)?;
        probe_loss(t, y, 11)
    }));

    // SOR block with initialized weights and small random biases, so the
    // tanh layers are not saturated.
    let q = 3;
    let mut sor_inputs = vec![uniform(&mut rng, s(1, c, 5, 5))];
    for _ in 0..2 {
        if let LayerParams::Sol(p) = init_params(&LayerSpec::sol(c, c, q), &mut rng) {
            sor_inputs.extend(p.kernels);
            sor_inputs.push(Tensor::uniform(s(1, c, 1, 1), -0.2, 0.2, &mut rng));
        }
    }
    cases.push(GradCheckCase::new("sor_block(q=3)", sor_inputs, move |t, v| {
        let p1 = sol_from(&v[1..2 + q]);
        let p2 = sol_from(&v[2 + q..3 + 2 * q]);
        let y = sor_block_forward(t, &v[0], &p1, &p2)?;
        probe_loss(t, y, 12)
    }));

    let mut up_inputs = vec![uniform(&mut rng, s(1, 2, 3, 3))];
    up_inputs.extend((0..2).map(|_| uniform(&mut rng, s(8, 2, 3, 3))));
    up_inputs.push(uniform(&mut rng, s(1, 8, 1, 1)));
    cases.push(GradCheckCase::new("upsampler(x2,sol q=2)", up_inputs, |t, v| {
        let stage = LayerParams::Sol(sol_from(&v[1..]));
        let y = upsampler_forward(t, &v[0], 2, &[stage])?;
        probe_loss(t, y, 13)
    }));

    let spec = ModelSpec::selfonn(2, 8, 3, 2);
    let mut model_rng = ChaCha8Rng::seed_from_u64(99);
    let model = Model::build(&spec, &mut model_rng).expect("valid spec");
    // A mean-shifted image lies roughly within ±0.5.
    let mut inputs = vec![Tensor::uniform(s(1, 3, 8, 8), -0.5, 0.5, &mut rng)];
    let mut shapes = Vec::new();
    for (_, p) in model.layers() {
        let n = p.tensors().len();
        shapes.push(n);
        for (i, t) in p.tensors().into_iter().enumerate() {
            if i + 1 == n {
                inputs.push(Tensor::uniform(t.shape(), -0.2, 0.2, &mut rng));
            } else {
                inputs.push(t.clone());
            }
        }
    }
    cases.push(GradCheckCase::new("model(selfonn 2x8 q=3)", inputs, move |t, v| {
        let mut bound = Vec::new();
        let mut at = 1;
        for &n in &shapes {
            bound.push(LayerParams::Sol(sol_from(&v[at..at + n])));
            at += n;
        }
        let y = model.forward_bound(t, &bound, &v[0])?;
        probe_loss(t, y, 14)
    }));
    cases
}

/// Cubes its input but reports a gradient that is off by a factor of two;
/// used to confirm the harness flags broken pullbacks.
pub struct BrokenCube;

impl UnaryRule for BrokenCube {
    fn name(&self) -> &str {
        "broken_cube"
    }

    fn value(&self, x: f64) -> f64 {
        x * x * x
    }

    fn backward(&self, x: &Tensor, _y: &Tensor, dy: &Tensor) -> Tensor {
        x.zip_map(dy, "broken_cube", |v, d| 6.0 * v * v * d).unwrap()
    }
}

pub fn broken_case() -> GradCheckCase {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    GradCheckCase::new(
        "broken_cube",
        vec![uniform(&mut rng, Shape::new(1, 1, 3, 3))],
        |t, v| {
            let y = t.custom_unary(&v[0], Arc::new(BrokenCube));
            probe_loss(t, y, 15)
        },
    )
}
