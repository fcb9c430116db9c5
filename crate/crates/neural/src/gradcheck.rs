//! Central finite-difference check of tape gradients.

use serde::Serialize;

use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Gradient norms below this count as zero; central differences only
/// resolve about `machine_eps * |f| / step` per element.
pub const NORM_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.relative_error < self.tolerance)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

/// `‖a - n‖ / max(‖a‖, ‖n‖)`, or 0 when both are below the floor.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < NORM_FLOOR {
        0.0
    } else {
        diff / denom
    }
}

/// Compares analytic and numeric gradients of `loss` for each tensor in `ids`.
///
/// `perturb` may alter analytic gradients before comparison.
pub fn check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    step: f64,
    tolerance: f64,
    loss: F,
    perturb: Option<&dyn Fn(ParamId, &mut [f64])>,
) -> GradcheckReport
where
    F: Fn(&mut Tape) -> Var,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let out = loss(&mut tape);
        tape.backward(out).dense(store)
    };
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new(s);
        let out = loss(&mut tape);
        tape.scalar(out)
    };
    let mut tensors = Vec::with_capacity(ids.len());
    for &id in ids {
        let mut a = analytic[id.0].data.clone();
        if let Some(p) = perturb {
            p(id, &mut a);
        }
        let n = store.get(id).len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = store.get(id).data[i];
            store.get_mut(id).data[i] = orig + step;
            let up = eval(store);
            store.get_mut(id).data[i] = orig - step;
            let down = eval(store);
            store.get_mut(id).data[i] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        tensors.push(TensorCheck {
            name: store.name(id).to_string(),
            analytic_norm: norm(&a),
            numeric_norm: norm(&numeric),
            relative_error: relative_error(&a, &numeric),
        });
    }
    GradcheckReport { step, tolerance, tensors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::row_vector(vec![0.3, -0.7, 1.1]));
        let loss = |t: &mut Tape| {
            let x = t.param(id);
            let y = t.tanh(x);
            let z = t.mul(y, x);
            t.sum_all(z)
        };
        let ok = check(&mut store, &[id], DEFAULT_STEP, DEFAULT_TOLERANCE, loss, None);
        assert!(ok.passed(), "{ok:?}");
        let flip: &dyn Fn(ParamId, &mut [f64]) = &|_, g: &mut [f64]| g[0] *= 1.5;
        let bad = check(&mut store, &[id], DEFAULT_STEP, DEFAULT_TOLERANCE, loss, Some(flip));
        assert!(!bad.passed());
    }
}
