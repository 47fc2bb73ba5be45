use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Compares reverse-mode gradients with central finite differences.
///
/// `forward` builds a scalar from the parameters registered on a fresh tape.
/// Returns the largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`
/// over every parameter scalar, with `numeric = (f(θ+h) - f(θ-h)) / 2h`.
pub fn grad_check<F>(forward: F, params: &[Tensor<f64>], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    if params.is_empty() {
        return Ok(0.0);
    }

    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|p| tape.param(p.clone())).collect();
        let out = forward(&mut tape, &vars)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = forward(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape()))
        })
        .collect();

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for pi in 0..work.len() {
        for j in 0..work[pi].numel() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[pi].data()[j];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_parameters_gives_zero() {
        let err = grad_check(|t, _| Ok(t.constant(Tensor::scalar(1.0))), &[], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_bad_step() {
        let p = [Tensor::scalar(1.0)];
        assert!(grad_check(|_, v| Ok(v[0]), &p, 0.0).is_err());
    }

    #[test]
    fn detects_wrong_gradient() {
        // relu kink straddled by the step: numeric slope 0.5, analytic 1
        let p = [Tensor::scalar(1e-6)];
        let err = grad_check(|t, v| t.relu(v[0]), &p, 1e-5).unwrap();
        assert!(err > 0.1);
    }
}
