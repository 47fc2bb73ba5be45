use crate::data::Label;
use crate::error::{Error, Result};
use crate::numerics::{NormMode, Scalar, Tape, Tensor, Var, NORM_EPS};

use super::config::{ModelConfig, NORM_GROUPS};
use super::params::BoundParams;

/// Which logits feed the final softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadMode {
    /// FC branch only.
    Fc,
    /// Element-wise sum of transformer and FC logits.
    Fused,
}

impl HeadMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadMode::Fc => "fc",
            HeadMode::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fc" => Some(HeadMode::Fc),
            "fused" => Some(HeadMode::Fused),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `[p_covid, p_non_covid]`.
    pub probabilities: [f64; 2],
    pub label: Label,
    pub mode: HeadMode,
    /// `(transformer, fc)` logits before fusion.
    pub branch_logits: ([f64; 2], [f64; 2]),
}

/// Handles to the interesting intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Pooled CNN features `[B, N]`.
    pub features: Var,
    pub logits_transformer: Var,
    pub logits_fc: Var,
    /// `logits_transformer + logits_fc`, the training target.
    pub logits_fused: Var,
    /// SE gates `[B, C]` of each stage.
    pub se_gates: Vec<Var>,
    /// Attention probabilities `[B * heads, T, T]`.
    pub attention: Var,
}

fn conv<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    prefix: &str,
    x: Var,
    stride: usize,
    bias: bool,
) -> Result<Var> {
    let w = p.var(&format!("{prefix}.weight"))?;
    let b = if bias {
        Some(p.var(&format!("{prefix}.bias"))?)
    } else {
        None
    };
    tape.conv2d(x, w, b, stride, 1)
}

fn group_norm<T: Scalar>(tape: &mut Tape<T>, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let g = p.var(&format!("{prefix}.gamma"))?;
    let b = p.var(&format!("{prefix}.beta"))?;
    tape.normalize(x, NormMode::Group(NORM_GROUPS), g, b, NORM_EPS)
}

fn layer_norm<T: Scalar>(tape: &mut Tape<T>, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let g = p.var(&format!("{prefix}.gamma"))?;
    let b = p.var(&format!("{prefix}.beta"))?;
    tape.normalize(x, NormMode::Layer, g, b, NORM_EPS)
}

fn linear<T: Scalar>(tape: &mut Tape<T>, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{prefix}.weight"))?;
    let b = p.var(&format!("{prefix}.bias"))?;
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// conv 3x3 -> group norm -> relu.
fn conv_unit<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    prefix: &str,
    x: Var,
    stride: usize,
) -> Result<Var> {
    let y = conv(tape, p, &format!("{prefix}.conv"), x, stride, false)?;
    let y = group_norm(tape, p, &format!("{prefix}.norm"), y)?;
    tape.relu(y)
}

/// Squeeze-and-excitation: `x * sigmoid(fc2(relu(fc1(gap(x)))))` per channel.
///
/// Returns the rescaled map and the gate `[N, C]`.
pub fn se_attention<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    prefix: &str,
    x: Var,
) -> Result<(Var, Var)> {
    let squeezed = tape.global_avg_pool(x)?;
    let h = linear(tape, p, &format!("{prefix}.fc1"), squeezed)?;
    let h = tape.relu(h)?;
    let h = linear(tape, p, &format!("{prefix}.fc2"), h)?;
    let gate = tape.sigmoid(h)?;
    Ok((tape.scale_channels(x, gate)?, gate))
}

/// `relu(x + se(conv2(relu(norm1(conv1(x))))))`; shape preserving.
pub fn se_residual_block<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    prefix: &str,
    x: Var,
) -> Result<(Var, Var)> {
    let y = conv(tape, p, &format!("{prefix}.conv1"), x, 1, false)?;
    let y = group_norm(tape, p, &format!("{prefix}.norm1"), y)?;
    let y = tape.relu(y)?;
    let y = conv(tape, p, &format!("{prefix}.conv2"), y, 1, true)?;
    let (y, gate) = se_attention(tape, p, &format!("{prefix}.se"), y)?;
    let y = tape.add(x, y)?;
    Ok((tape.relu(y)?, gate))
}

/// Cuts `[B, N]` features into `tokens` contiguous chunks, runs one pre-norm
/// encoder block (no positional encoding), mean-pools the tokens and
/// projects to class logits.
///
/// Returns `(logits [B,2], attention [B*heads, T, T])`.
pub fn transformer_branch<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    features: Var,
) -> Result<(Var, Var)> {
    let (t, heads) = (cfg.tokens, cfg.heads);
    let d = cfg.token_width();
    let dh = d / heads;
    let &[b, n] = tape.shape(features) else {
        return Err(Error::Shape(format!(
            "transformer expects [B, N], got {:?}",
            tape.shape(features)
        )));
    };
    if n != t * d {
        return Err(Error::Shape(format!(
            "feature width {n} != {t} tokens x {d}"
        )));
    }

    let x = tape.reshape(features, &[b * t, d])?;
    let h = layer_norm(tape, p, "transformer.ln1", x)?;
    let split = |tape: &mut Tape<T>, v: Var| -> Result<Var> {
        let v = tape.reshape(v, &[b, t, heads, dh])?;
        let v = tape.permute(v, &[0, 2, 1, 3])?;
        tape.reshape(v, &[b * heads, t, dh])
    };
    let q = linear(tape, p, "transformer.attn.q", h)?;
    let q = split(tape, q)?;
    let k = linear(tape, p, "transformer.attn.k", h)?;
    let k = split(tape, k)?;
    let v = linear(tape, p, "transformer.attn.v", h)?;
    let v = split(tape, v)?;

    let kt = tape.permute(k, &[0, 2, 1])?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
    let attention = tape.softmax(scores, 2)?;
    let ctx = tape.matmul(attention, v)?;
    let ctx = tape.reshape(ctx, &[b, heads, t, dh])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[b * t, d])?;
    let attn_out = linear(tape, p, "transformer.attn.out", ctx)?;
    let x = tape.add(x, attn_out)?;

    let h = layer_norm(tape, p, "transformer.ln2", x)?;
    let h = linear(tape, p, "transformer.mlp.fc1", h)?;
    let h = tape.relu(h)?;
    let h = linear(tape, p, "transformer.mlp.fc2", h)?;
    let x = tape.add(x, h)?;

    let x = tape.reshape(x, &[b, t, d])?;
    let pooled = tape.mean_axis(x, 1)?;
    Ok((linear(tape, p, "transformer.head", pooled)?, attention))
}

/// Single linear layer `N -> 2`.
pub fn fc_branch<T: Scalar>(tape: &mut Tape<T>, p: &BoundParams, features: Var) -> Result<Var> {
    linear(tape, p, "fc", features)
}

/// Full network on `input: [B, renum_ct, S, S]`.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    input: Var,
) -> Result<ForwardOutput> {
    let shape = tape.shape(input);
    let expected = [cfg.renum_ct, cfg.image_size, cfg.image_size];
    if shape.len() != 4 || shape[1..] != expected {
        return Err(Error::Shape(format!(
            "model input {shape:?} does not match [B, {}, {}, {}]",
            expected[0], expected[1], expected[2]
        )));
    }

    let mut x = conv_unit(tape, p, "stem", input, 1)?;
    let mut se_gates = Vec::with_capacity(cfg.stage_channels.len());
    for s in 0..cfg.stage_channels.len() {
        let (y, gate) = se_residual_block(tape, p, &format!("stage{s}.block"), x)?;
        se_gates.push(gate);
        x = if s + 1 < cfg.stage_channels.len() {
            conv_unit(tape, p, &format!("stage{s}.down"), y, 2)?
        } else {
            y
        };
    }
    let features = tape.global_avg_pool(x)?;
    let (logits_transformer, attention) = transformer_branch(tape, p, cfg, features)?;
    let logits_fc = fc_branch(tape, p, features)?;
    let logits_fused = tape.add(logits_transformer, logits_fc)?;
    Ok(ForwardOutput {
        features,
        logits_transformer,
        logits_fc,
        logits_fused,
        se_gates,
        attention,
    })
}

fn softmax2(l: [f64; 2]) -> [f64; 2] {
    let m = l[0].max(l[1]);
    let (a, b) = ((l[0] - m).exp(), (l[1] - m).exp());
    [a / (a + b), b / (a + b)]
}

/// Row-wise softmax of the selected logits. Ties go to class 0.
pub fn fuse_and_predict<T: Scalar>(
    logits_transformer: &Tensor<T>,
    logits_fc: &Tensor<T>,
    mode: HeadMode,
) -> Result<Vec<Prediction>> {
    if logits_transformer.shape() != logits_fc.shape()
        || logits_fc.rank() != 2
        || logits_fc.shape()[1] != 2
    {
        return Err(Error::Shape(format!(
            "branch logits {:?} and {:?} must both be [N, 2]",
            logits_transformer.shape(),
            logits_fc.shape()
        )));
    }
    let pairs = logits_transformer
        .data()
        .chunks(2)
        .zip(logits_fc.data().chunks(2));
    Ok(pairs
        .map(|(t, f)| {
            let t = [t[0].as_f64(), t[1].as_f64()];
            let f = [f[0].as_f64(), f[1].as_f64()];
            let selected = match mode {
                HeadMode::Fused => [t[0] + f[0], t[1] + f[1]],
                HeadMode::Fc => f,
            };
            let probabilities = softmax2(selected);
            let label = if probabilities[1] > probabilities[0] {
                Label::NonCovid
            } else {
                Label::Covid
            };
            Prediction {
                probabilities,
                label,
                mode,
                branch_logits: (t, f),
            }
        })
        .collect())
}
