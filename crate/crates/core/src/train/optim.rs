use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{BoundParams, ModelParams};
use crate::numerics::{Scalar, Tape, Tensor};

/// SGD with heavy-ball momentum: `v = m v + g`, `θ -= lr v`.
#[derive(Clone, Debug, Default)]
pub struct Sgd {
    pub momentum: f64,
    /// When set, [`Sgd::step`] rescales the whole gradient so its global L2
    /// norm does not exceed this value.
    pub clip_norm: Option<f64>,
    velocity: HashMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            clip_norm: None,
            velocity: HashMap::new(),
        }
    }

    pub fn with_clip_norm(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    /// Updates one named tensor in place. No clipping is applied here.
    pub fn update<T: Scalar>(
        &mut self,
        name: &str,
        param: &mut Tensor<T>,
        grad: &Tensor<T>,
        lr: f64,
    ) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} does not match parameter `{name}` {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        let v = self
            .velocity
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; param.numel()]);
        for ((p, g), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(v.iter_mut())
        {
            *v = self.momentum * *v + g.as_f64();
            *p = T::of(p.as_f64() - lr * *v);
        }
        Ok(())
    }

    /// Applies one step to every parameter using the gradients on `tape`,
    /// consuming them.
    pub fn step<T: Scalar>(
        &mut self,
        params: &mut ModelParams<T>,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        lr: f64,
    ) -> Result<()> {
        let grads = bound
            .iter()
            .map(|(name, var)| {
                tape.take_grad(var)
                    .map(|g| (name.to_string(), g))
                    .ok_or_else(|| Error::MissingGradient(name.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = match self.clip_norm {
            Some(c) => {
                let norm = grads
                    .iter()
                    .flat_map(|(_, g)| g.data())
                    .map(|g| g.as_f64() * g.as_f64())
                    .sum::<f64>()
                    .sqrt();
                if !norm.is_finite() {
                    return Err(Error::NonFinite { op: "sgd_step" });
                }
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        for (name, mut grad) in grads {
            if scale != 1.0 {
                grad.data_mut()
                    .iter_mut()
                    .for_each(|g| *g = T::of(g.as_f64() * scale));
            }
            let param = params
                .get_mut(&name)
                .ok_or_else(|| Error::MissingGradient(name.clone()))?;
            self.update(&name, param, &grad, lr)?;
        }
        if !params.all_finite() {
            return Err(Error::NonFinite { op: "sgd_step" });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn plain_gradient_step() {
        let mut sgd = Sgd::new(0.0);
        let mut theta = scalar(3.0);
        let grad = scalar(2.0 * 3.0);
        sgd.update("theta", &mut theta, &grad, 0.1).unwrap();
        assert!((theta.item() - 2.4).abs() < 1e-15);
    }

    #[test]
    fn momentum_matches_unrolled_recurrence() {
        let mut sgd = Sgd::new(0.9);
        let mut theta = scalar(3.0);
        let lr = 0.1;
        for _ in 0..2 {
            let g = scalar(2.0 * theta.item());
            sgd.update("theta", &mut theta, &g, lr).unwrap();
        }
        let v1 = 6.0;
        let t1 = 3.0 - lr * v1;
        let v2 = 0.9 * v1 + 2.0 * t1;
        let t2 = t1 - lr * v2;
        assert!((theta.item() - t2).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut sgd = Sgd::new(0.9);
        let mut theta = Tensor::new(vec![3], vec![1.0f32, -2.0, 0.5]).unwrap();
        let before = theta.clone();
        sgd.update("w", &mut theta, &Tensor::ones(&[3]), 0.0)
            .unwrap();
        assert_eq!(theta, before);
        assert!(sgd
            .update("w", &mut theta, &Tensor::ones(&[2]), 0.1)
            .is_err());
    }

    #[test]
    fn clipping_rescales_global_norm() {
        use crate::model::{build_model, forward, ModelConfig};
        use crate::rng::Rng;
        let cfg = ModelConfig::tiny();
        let run = |clip: Option<f64>, lr: f64| {
            let mut params = build_model(&cfg, &mut Rng::new(3)).unwrap().cast::<f64>();
            let before = params.clone();
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let shape = [2, cfg.renum_ct, cfg.image_size, cfg.image_size];
            let x = tape.constant(Tensor::from_fn(&shape, |i| {
                ((i * 37 % 11) as f64 - 5.0) / 3.0
            }));
            let out = forward(&mut tape, &bound, &cfg, x).unwrap();
            let loss = tape.cross_entropy(out.logits_fused, &[0, 1]).unwrap();
            tape.backward(loss).unwrap();
            Sgd::new(0.0)
                .with_clip_norm(clip)
                .step(&mut params, &mut tape, &bound, lr)
                .unwrap();
            let delta: Vec<f64> = before
                .iter()
                .flat_map(|(n, t)| {
                    t.data()
                        .iter()
                        .zip(params.get(n).unwrap().data())
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>()
                })
                .collect();
            delta
        };
        let raw = run(None, 1.0);
        let norm = raw.iter().map(|d| d * d).sum::<f64>().sqrt();
        let cap = norm / 4.0;
        let clipped = run(Some(cap), 1.0);
        let clipped_norm = clipped.iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(
            (clipped_norm - cap).abs() < 1e-9 * norm,
            "{clipped_norm} vs {cap}"
        );
        for (r, c) in raw.iter().zip(&clipped) {
            assert!((c - r / 4.0).abs() < 1e-9 * norm);
        }
        assert_eq!(run(Some(norm * 2.0), 1.0), raw);
    }
}
