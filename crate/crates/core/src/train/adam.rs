use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f32,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment tensors",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    if !(lr > 0.0) {
        return Err(Error::invalid("adam_step", format!("learning rate {lr} must be positive")));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        p.expect_same_shape(g, "adam_step")?;
        p.expect_same_shape(m, "adam_step")?;
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = (1.0 - (cfg.beta1 as f64).powi(t)) as f32;
    let bc2 = (1.0 - (cfg.beta2 as f64).powi(t)) as f32;
    let AdamConfig { beta1, beta2, eps } = *cfg;
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
