//! Gradient verification by central finite differences.
//!
//! The numeric side only ever runs forward passes, so it stays
//! independent of the reverse-mode code it is checking.

use crate::error::Result;
use crate::tape::{GradientMap, Tape, Var};
use crate::tensor::Tensor;

/// Default perturbation for [`central_difference`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative-error floor: entries where both gradients are smaller than
/// this are compared absolutely instead, to avoid 0/0 blowups.
const DENOM_FLOOR: f64 = 1e-6;

/// Outcome of comparing analytic against numeric gradients.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub max_rel_error: f64,
    /// `(parameter, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl CheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Numeric gradient of `loss` with respect to every entry of every
/// tensor, by central differences with the given step.
pub fn central_difference<F>(
    tensors: &[(String, Tensor)],
    step: f64,
    mut loss: F,
) -> Result<Vec<(String, Tensor)>>
where
    F: FnMut(&[(String, Tensor)]) -> Result<f64>,
{
    let mut work = tensors.to_vec();
    let mut out = Vec::with_capacity(tensors.len());
    for ti in 0..work.len() {
        let numel = work[ti].1.numel();
        let mut grad = Tensor::zeros(work[ti].1.shape());
        for k in 0..numel {
            let orig = work[ti].1.data()[k];
            work[ti].1.data_mut()[k] = orig + step;
            let plus = loss(&work)?;
            work[ti].1.data_mut()[k] = orig - step;
            let minus = loss(&work)?;
            work[ti].1.data_mut()[k] = orig;
            grad.data_mut()[k] = (plus - minus) / (2.0 * step);
        }
        out.push((work[ti].0.clone(), grad));
    }
    Ok(out)
}

/// Worst relative disagreement between an analytic [`GradientMap`] and a
/// numeric gradient set. Missing analytic entries count as zero.
pub fn compare_gradients(analytic: &GradientMap, numeric: &[(String, Tensor)]) -> CheckReport {
    let mut report = CheckReport {
        max_rel_error: 0.0,
        worst: None,
    };
    for (name, num) in numeric {
        let zero = Tensor::zeros(num.shape());
        let ana = analytic.get(name).unwrap_or(&zero);
        for (k, (&a, &n)) in ana.data().iter().zip(num.data()).enumerate() {
            let denom = a.abs().max(n.abs()).max(DENOM_FLOOR);
            let rel = (a - n).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), k, a, n));
            }
        }
    }
    report
}

/// Check a tape-built loss against central differences.
///
/// `build` receives a fresh tape and one [`Var`] per named tensor, in
/// order, and must return the scalar loss node. It is invoked once for
/// the analytic gradient and `2 * total entries` more times for the
/// numeric one.
pub fn check_gradients<F>(
    tensors: &[(String, Tensor)],
    step: f64,
    mut build: F,
) -> Result<CheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|(name, t)| tape.param(name.clone(), t))
            .collect();
        let loss = build(&mut tape, &vars)?;
        tape.backward(loss)?
    };
    let numeric = central_difference(tensors, step, |perturbed| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed
            .iter()
            .map(|(name, t)| tape.param(name.clone(), t))
            .collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0])
    })?;
    Ok(compare_gradients(&analytic, &numeric))
}
