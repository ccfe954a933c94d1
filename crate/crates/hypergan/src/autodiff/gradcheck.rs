//! Finite-difference validation of analytic gradients.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{Tape, Value};

/// Compare the tape gradient of a scalar-valued function against central
/// finite differences at `point`, returning the max over all parameter
/// elements of |analytic − numeric| / max(1, |analytic|).
///
/// `build` must construct the same computation for any parameter values;
/// inputs should sit away from non-differentiable kinks (shift off 0 for
/// leaky_relu, keep max/min rows untied, keep theta away from the penalty
/// target when curvature is 1).
pub fn gradient_check<F>(build: F, point: &[Matrix], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Value]) -> Result<Value>,
{
    let eval = |params: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<Value> = params.iter().map(|m| tape.leaf(m.clone())).collect();
        let loss = build(&mut tape, &leaves)?;
        if tape.data(loss).numel() != 1 {
            return Err(Error::Shape("gradient_check loss must be scalar".into()));
        }
        let v = tape.scalar_value(loss);
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {v} in gradient_check")));
        }
        Ok(v)
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let leaves: Vec<Value> = point.iter().map(|m| tape.leaf(m.clone())).collect();
    let loss = build(&mut tape, &leaves)?;
    let base = tape.scalar_value(loss);
    if !base.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {base} in gradient_check")));
    }
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = leaves.iter().map(|&v| tape.grad(v).clone()).collect();

    // Central differences, one parameter element at a time.
    let mut worst = 0.0f64;
    let mut shifted: Vec<Matrix> = point.to_vec();
    for (pi, param) in point.iter().enumerate() {
        for e in 0..param.numel() {
            let orig = param.as_slice()[e];
            shifted[pi].as_mut_slice()[e] = orig + step;
            let up = eval(&shifted)?;
            shifted[pi].as_mut_slice()[e] = orig - step;
            let down = eval(&shifted)?;
            shifted[pi].as_mut_slice()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[pi].as_slice()[e];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
