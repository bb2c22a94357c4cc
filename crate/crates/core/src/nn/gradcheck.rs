//! Central-difference gradient verification.

use ndarray::ArrayView2;
use serde::Serialize;

use super::{bce_loss, half_squared_loss, Network, CLAMP};
use crate::error::Result;

/// Relative errors use `max(|analytic|, |numeric|, REL_FLOOR)` as denominator.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub checked: usize,
    /// Parameters whose perturbation moved a rectifier across its kink; the
    /// central difference is meaningless there so they are not scored.
    pub skipped_kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare `analytic` against central differences of `eval` around `theta`.
///
/// `eval` returns the loss as a list of terms that sum to it, plus a
/// piecewise-linearity signature (e.g. the rectifier sign pattern). The
/// difference quotient is accumulated term by term, which keeps rounding in
/// a large total out of it. A parameter is skipped when the `+step` or
/// `-step` evaluation has a different signature from the base point.
pub fn check_flat<F>(theta: &[f64], analytic: &[f64], step: f64, mut eval: F) -> GradcheckReport
where
    F: FnMut(&[f64]) -> (Vec<f64>, Vec<bool>),
{
    assert_eq!(theta.len(), analytic.len(), "gradient length");
    let (_, base_sig) = eval(theta);
    let mut work = theta.to_vec();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
        skipped_kinks: 0,
    };
    for i in 0..theta.len() {
        work[i] = theta[i] + step;
        let (up, sig_up) = eval(&work);
        work[i] = theta[i] - step;
        let (dn, sig_dn) = eval(&work);
        work[i] = theta[i];
        if sig_up != base_sig || sig_dn != base_sig {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = up.iter().zip(&dn).map(|(u, d)| u - d).sum::<f64>() / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}

/// Loss used by [`gradcheck`].
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Bce(ArrayView2<'a, f64>),
    HalfSquared(ArrayView2<'a, f64>),
}

impl Objective<'_> {
    fn eval(&self, out: ArrayView2<f64>) -> Result<(f64, ndarray::Array2<f64>)> {
        match self {
            Objective::Bce(t) => bce_loss(out, *t),
            Objective::HalfSquared(t) => half_squared_loss(out, *t),
        }
    }

    /// Per-element contributions to the loss.
    fn terms(&self, out: ArrayView2<f64>) -> Vec<f64> {
        let batch = out.nrows().max(1) as f64;
        match self {
            Objective::Bce(t) => out
                .iter()
                .zip(t.iter())
                .map(|(&q, &t)| {
                    let q = q.clamp(CLAMP, 1.0 - CLAMP);
                    -(t * q.ln() + (1.0 - t) * (1.0 - q).ln()) / batch
                })
                .collect(),
            Objective::HalfSquared(t) => out
                .iter()
                .zip(t.iter())
                .map(|(&y, &t)| 0.5 * (y - t) * (y - t) / batch)
                .collect(),
        }
    }
}

fn flatten(tensors: &[&[f64]]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.iter().copied()).collect()
}

fn write_back(net: &mut Network, theta: &[f64]) {
    let mut offset = 0;
    for t in net.params.tensors_mut() {
        t.copy_from_slice(&theta[offset..offset + t.len()]);
        offset += t.len();
    }
}

/// Check every parameter of `net` on one input batch.
pub fn gradcheck(net: &Network, input: ArrayView2<f64>, objective: Objective, step: f64) -> Result<GradcheckReport> {
    let (out, cache) = net.forward(input)?;
    let (_, dout) = objective.eval(out.view())?;
    let (grads, _) = net.backward(&cache, dout.view())?;
    let analytic = flatten(&grads.tensors());
    let theta = flatten(&net.params.tensors());
    let mut probe = net.clone();
    Ok(check_flat(&theta, &analytic, step, |th| {
        write_back(&mut probe, th);
        let (out, cache) = probe.forward(input).expect("shapes already checked");
        (objective.terms(out.view()), cache.relu_pattern(&probe.spec))
    }))
}
