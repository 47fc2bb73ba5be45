use crate::error::{Error, Result};

use super::tape::{Op, Tape, Var};
use super::tensor::{Scalar, Tensor};

impl<T: Scalar> Tape<T> {
    /// Mean over the batch of `-log softmax(logits)[label]` for `logits: [N,K]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let vx = self.value(logits);
        let &[n, k] = vx.shape() else {
            return Err(Error::Shape(format!(
                "cross_entropy expects [N,K] logits, got {:?}",
                vx.shape()
            )));
        };
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let mut probs = Vec::with_capacity(n * k);
        let mut total = T::zero();
        for (row, &label) in vx.data().chunks(k).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
            let log_z = max + sum.ln();
            total = total + (log_z - row[label]);
            probs.extend(row.iter().map(|&v| (v - log_z).exp()));
        }
        let loss = Tensor::scalar(total / T::of(n as f64));
        self.push(
            loss,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            "cross_entropy",
        )
    }
}

/// `(softmax - onehot) / N`, scaled by the upstream scalar gradient.
pub(super) fn cross_entropy_backward<T: Scalar>(
    shape: &[usize],
    labels: &[usize],
    probs: &[T],
    g: &Tensor<T>,
) -> Tensor<T> {
    let (n, k) = (shape[0], shape[1]);
    let scale = g.item() / T::of(n as f64);
    let mut gx = Tensor::new(shape.to_vec(), probs.to_vec()).expect("probs match logits");
    for (i, &label) in labels.iter().enumerate() {
        let d = gx.data_mut();
        d[i * k + label] = d[i * k + label] - T::one();
    }
    gx.map(|v| v * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss_and_grad(logits: &[f64], labels: &[usize]) -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![labels.len(), 2], logits.to_vec()).unwrap());
        let l = tape.cross_entropy(x, labels).unwrap();
        tape.backward(l).unwrap();
        (tape.value(l).item(), tape.grad(x).unwrap().data().to_vec())
    }

    #[test]
    fn confident_correct_is_near_zero() {
        let (l, _) = loss_and_grad(&[20.0, -20.0], &[0]);
        assert!(l < 1e-8);
    }

    #[test]
    fn uniform_logits_give_ln2() {
        for label in [0, 1] {
            let (l, _) = loss_and_grad(&[0.0, 0.0], &[label]);
            assert!((l - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_is_probs_minus_onehot_over_n() {
        let logits = [0.3, -1.2, 2.0, 0.5];
        let (_, g) = loss_and_grad(&logits, &[1, 0]);
        let p = |a: f64, b: f64| (a.exp() / (a.exp() + b.exp()), b.exp() / (a.exp() + b.exp()));
        let (p00, p01) = p(0.3, -1.2);
        let (p10, p11) = p(2.0, 0.5);
        let expected = [p00 / 2.0, (p01 - 1.0) / 2.0, (p10 - 1.0) / 2.0, p11 / 2.0];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn label_out_of_range() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros(&[1, 2]));
        assert!(tape.cross_entropy(x, &[2]).is_err());
    }
}
