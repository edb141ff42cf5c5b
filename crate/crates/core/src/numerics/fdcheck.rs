//! Central finite-difference gradient verification.

use crate::error::{invalid_argument, Result};
use crate::rng::Pcg32;
use crate::scalar::Scalar;

use super::ParameterStore;

/// Coordinates whose gradient magnitude sits below this floor are judged
/// by scaled absolute error instead of pure relative error: the centered
/// difference carries ~1e-12 of cancellation noise, so relative comparison
/// is meaningless for gradients near that floor.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// One probed coordinate.
#[derive(Clone, Debug)]
pub struct FdProbe {
    pub param: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|numeric - analytic| / max(|numeric|, |analytic|, GRADIENT_FLOOR)`.
    pub error: f64,
}

/// Outcome of a finite-difference sweep.
#[derive(Clone, Debug)]
pub struct FdReport {
    pub probes: Vec<FdProbe>,
    pub max_error: f64,
}

/// Checks analytic gradients against central finite differences.
///
/// `loss_fn` must be a pure function of the parameter values in `params`
/// (same batch, no fresh randomness). The gradients to verify must already
/// be accumulated in `params` for that same loss. Each of `probes`
/// coordinates is drawn uniformly (with replacement) from the trainable
/// parameters; for each, the loss is re-evaluated at `theta ± h` and the
/// centered difference `(l+ - l-) / 2h` is compared against the stored
/// gradient. Values are restored bit-exactly after each probe.
///
/// The reported error per probe is `|fd - g| / max(|fd|, |g|,
/// GRADIENT_FLOOR)`: true relative error for healthy gradients, scaled
/// absolute error once the magnitudes drop under the finite-difference
/// noise floor. A wrong gradient is still caught in the floored regime —
/// a sign flip or a dropped term produces a difference on the order of the
/// gradient itself, orders of magnitude above the noise.
pub fn finite_difference_check<S: Scalar>(
    params: &mut ParameterStore<S>,
    mut loss_fn: impl FnMut(&ParameterStore<S>) -> Result<S>,
    probes: usize,
    h: f64,
    rng: &mut Pcg32,
) -> Result<FdReport> {
    if h <= 0.0 {
        return Err(invalid_argument("finite-difference step must be positive"));
    }
    // Flattened coordinate space over trainable parameters only.
    let mut spans: Vec<(usize, usize)> = Vec::new(); // (param index, len)
    let mut total = 0usize;
    for (i, p) in params.iter().enumerate() {
        if p.trainable {
            spans.push((i, p.value.len()));
            total += p.value.len();
        }
    }
    if total == 0 {
        return Err(invalid_argument("no trainable parameters to probe"));
    }

    let step = S::of(h);
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let mut report = FdReport {
        probes: Vec::with_capacity(probes),
        max_error: 0.0,
    };
    for _ in 0..probes {
        let mut flat = rng.below(total);
        let (param_idx, offset) = spans
            .iter()
            .find_map(|&(i, len)| {
                if flat < len {
                    Some((i, flat))
                } else {
                    flat -= len;
                    None
                }
            })
            .expect("flat index within total");

        let (cols, original, analytic) = {
            let p = params.param(param_idx);
            (
                p.value.cols(),
                p.value.data()[offset],
                p.grad.data()[offset].as_f64(),
            )
        };

        let mut eval_at = |params: &mut ParameterStore<S>, v: S| -> Result<f64> {
            params.param_mut(param_idx).value.data_mut()[offset] = v;
            loss_fn(params).map(Scalar::as_f64)
        };
        let plus = eval_at(params, original + step)?;
        let minus = eval_at(params, original - step)?;
        eval_at(params, original)?; // restore the exact original bits

        let numeric = (plus - minus) / (2.0 * h);
        let denom = numeric.abs().max(analytic.abs()).max(GRADIENT_FLOOR);
        let error = (numeric - analytic).abs() / denom;
        report.max_error = report.max_error.max(error);
        report.probes.push(FdProbe {
            param: names[param_idx].clone(),
            row: offset / cols,
            col: offset % cols,
            analytic,
            numeric,
            error,
        });
    }
    Ok(report)
}
