//! A self-organized operational layer on a 1-D ramp: with q = 1 it is an
//! ordinary convolution, higher orders add polynomial terms of the input.

use sornet::autograd::kernels::conv2d;
use sornet::autograd::Eval;
use sornet::nn::{sol_forward, SolParams};
use sornet::{Shape, Tensor};

fn main() -> sornet::Result<()> {
    let w = 9;
    let ramp: Vec<f32> = (0..w).map(|i| -1.0 + 2.0 * i as f32 / (w - 1) as f32).collect();
    let x = Tensor::from_vec(Shape::new(1, 1, 1, w), ramp)?;
    let centre = |v: f32| {
        let mut k = Tensor::zeros(Shape::new(1, 1, 3, 3));
        k.set(0, 0, 1, 1, v);
        k
    };
    let bias = Tensor::full(Shape::new(1, 1, 1, 1), 0.1);

    let linear = SolParams { kernels: vec![centre(0.5)], bias: bias.clone() };
    let y1 = sol_forward(&mut Eval, &x, &linear)?;
    let conv = conv2d(&x, &centre(0.5), Some(&bias))?;
    println!("q=1 vs conv max |diff|: {:e}", y1.max_abs_diff(&conv)?);

    let cubic = SolParams {
        kernels: vec![centre(0.5), centre(-0.3), centre(0.8)],
        bias,
    };
    let y3 = sol_forward(&mut Eval, &x, &cubic)?;
    println!("{:>6} {:>8} {:>8}", "x", "q=1", "q=3");
    for i in 0..w {
        println!("{:>6.2} {:>8.4} {:>8.4}", x.data()[i], y1.data()[i], y3.data()[i]);
    }
    Ok(())
}
