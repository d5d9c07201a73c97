//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Values64, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest relative error over every sampled coordinate.
    pub max_rel_error: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// `(input index, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
}

/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn coordinates(rng: &mut ChaCha8Rng, n: usize, samples: usize) -> Vec<usize> {
    if n <= samples {
        (0..n).collect()
    } else {
        let mut c = sample(rng, n, samples).into_vec();
        c.sort_unstable();
        c
    }
}

/// Runs the comparison given analytic gradients and a numeric derivative
/// `numeric(input, coord)`.
fn compare(
    analytic: &[Tensor],
    samples: usize,
    mut numeric: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
        worst_values: None,
    };
    for (i, a) in analytic.iter().enumerate() {
        for j in coordinates(&mut rng, a.numel(), samples) {
            let an = a.data()[j] as f64;
            let nu = numeric(i, j)?;
            let err = relative_error(an, nu);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((i, j));
                report.worst_values = Some((an, nu));
            }
        }
    }
    Ok(report)
}

fn record<F>(f: &F, inputs: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| super::Graph::parameter(&mut tape, t.clone()))
        .collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

/// Compares the 32-bit reverse-mode gradients of a scalar function of
/// `inputs` against central differences with step `eps`.
///
/// The function is recorded once; the differences are taken on an `f64`
/// replay of that recording, so they carry no 32-bit round-off. Every input
/// is registered as a parameter. Up to `samples` coordinates per input are
/// checked (all of them when the input is smaller), chosen by a fixed-seed
/// generator so the check is reproducible.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor], eps: f32, samples: usize) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("finite_diff_check", "eps must be positive"));
    }
    let (tape, vars, out) = record(&f, inputs)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(*v)).collect();
    let mut probe: Vec<Values64> = inputs.iter().map(Values64::from_tensor).collect();
    let h = eps as f64;
    compare(&analytic, samples, |i, j| {
        let orig = probe[i].data[j];
        probe[i].data[j] = orig + h;
        let fp = tape.replay_scalar(out, &[(vars[i], &probe[i])])?;
        probe[i].data[j] = orig - h;
        let fm = tape.replay_scalar(out, &[(vars[i], &probe[i])])?;
        probe[i].data[j] = orig;
        Ok((fp - fm) / (2.0 * h))
    })
}

/// Like [`finite_diff_check`] but re-evaluates the function in 32-bit, so
/// the differences include forward round-off.
pub fn finite_diff_check_f32<F>(f: F, inputs: &[Tensor], eps: f32, samples: usize) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("finite_diff_check", "eps must be positive"));
    }
    let (tape, vars, out) = record(&f, inputs)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(*v)).collect();
    let mut probe: Vec<Tensor> = inputs.to_vec();
    compare(&analytic, samples, |i, j| {
        let orig = probe[i].data()[j];
        let (plus, minus) = (orig + eps, orig - eps);
        probe[i].data_mut()[j] = plus;
        let (t, _, o) = record(&f, &probe)?;
        let fp = t.scalar(o)?;
        probe[i].data_mut()[j] = minus;
        let (t, _, o) = record(&f, &probe)?;
        let fm = t.scalar(o)?;
        probe[i].data_mut()[j] = orig;
        Ok((fp - fm) / (plus as f64 - minus as f64))
    })
}
