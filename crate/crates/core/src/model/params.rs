use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::rng::Rng;

use super::config::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    /// Uniform in `±sqrt(1 / fan_in)`.
    FanIn(usize),
    Zeros,
    Ones,
}

fn declare(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));

    // A conv feeding a normalization gets no bias: the norm's beta already
    // shifts each channel, and a bias there only adds a direction the norm
    // cannot see.
    let conv = |push: &mut dyn FnMut(String, Vec<usize>, Init),
                prefix: &str,
                cin: usize,
                cout: usize,
                bias: bool| {
        push(
            format!("{prefix}.weight"),
            vec![cout, cin, 3, 3],
            Init::FanIn(cin * 9),
        );
        if bias {
            push(format!("{prefix}.bias"), vec![cout], Init::Zeros);
        }
    };
    let norm = |push: &mut dyn FnMut(String, Vec<usize>, Init), prefix: &str, c: usize| {
        push(format!("{prefix}.gamma"), vec![c], Init::Ones);
        push(format!("{prefix}.beta"), vec![c], Init::Zeros);
    };
    let linear = |push: &mut dyn FnMut(String, Vec<usize>, Init),
                  prefix: &str,
                  fan_in: usize,
                  fan_out: usize| {
        push(
            format!("{prefix}.weight"),
            vec![fan_in, fan_out],
            Init::FanIn(fan_in),
        );
        push(format!("{prefix}.bias"), vec![fan_out], Init::Zeros);
    };

    let stages = &cfg.stage_channels;
    conv(&mut push, "stem.conv", cfg.renum_ct, stages[0], false);
    norm(&mut push, "stem.norm", stages[0]);
    for (s, &c) in stages.iter().enumerate() {
        let p = format!("stage{s}.block");
        conv(&mut push, &format!("{p}.conv1"), c, c, false);
        norm(&mut push, &format!("{p}.norm1"), c);
        conv(&mut push, &format!("{p}.conv2"), c, c, true);
        let hidden = c / cfg.se_reduction;
        linear(&mut push, &format!("{p}.se.fc1"), c, hidden);
        linear(&mut push, &format!("{p}.se.fc2"), hidden, c);
        if let Some(&next) = stages.get(s + 1) {
            conv(&mut push, &format!("stage{s}.down.conv"), c, next, false);
            norm(&mut push, &format!("stage{s}.down.norm"), next);
        }
    }

    let d = cfg.token_width();
    let h = cfg.mlp_hidden();
    norm(&mut push, "transformer.ln1", d);
    for proj in ["q", "k", "v", "out"] {
        linear(&mut push, &format!("transformer.attn.{proj}"), d, d);
    }
    norm(&mut push, "transformer.ln2", d);
    linear(&mut push, "transformer.mlp.fc1", d, h);
    linear(&mut push, "transformer.mlp.fc2", h, d);
    linear(&mut push, "transformer.head", d, cfg.classes);
    linear(&mut push, "fc", cfg.feature_width(), cfg.classes);
    out
}

/// Every parameter name and shape, in construction order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    declare(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Named parameter tensors plus the configuration they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    tensors: BTreeMap<String, Tensor<T>>,
}

/// Instantiates the network with fan-in uniform weights, zero biases and
/// unit/zero normalization affines, drawn in declaration order from `rng`.
pub fn build_model(cfg: &ModelConfig, rng: &mut Rng) -> Result<ModelParams<f32>> {
    cfg.validate()?;
    let tensors = declare(cfg)
        .into_iter()
        .map(|(name, shape, init)| {
            let t = match init {
                Init::FanIn(fan_in) => {
                    let bound = (1.0 / fan_in as f64).sqrt();
                    Tensor::from_fn(&shape, |_| rng.uniform_in(-bound, bound) as f32)
                }
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::ones(&shape),
            };
            (name, t)
        })
        .collect();
    Ok(ModelParams {
        config: cfg.clone(),
        tensors,
    })
}

impl<T: Scalar> ModelParams<T> {
    /// Assembles parameters, checking the names and shapes are exactly the
    /// ones `cfg` declares.
    pub fn from_tensors(config: ModelConfig, tensors: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != tensors.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (name, shape) in &expected {
            match tensors.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Config(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::Config(format!("missing parameter `{name}`"))),
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    /// Parameters in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        self.bind_with(tape, true)
    }

    /// Records every parameter as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> BoundParams {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape<T>, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.param(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        BoundParams { vars }
    }
}

/// Parameter name to tape handle for one pass.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn new(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}
