use std::fmt;
use std::path::Path;
use std::time::Instant;

use crate::data::{load_volume, DatasetManifest, Label, Volume};
use crate::error::{Error, Result};
use crate::model::{
    build_model, forward, fuse_and_predict, load_checkpoint, save_checkpoint, HeadMode,
    ModelParams, Prediction,
};
use crate::numerics::{Tape, Tensor};
use crate::resampling::preprocess;
use crate::rng::{hash64, Rng};

use super::metrics::{latency_stats, LatencyStats, MetricsReport};
use super::optim::Sgd;
use super::schedule::{lr_at_epoch, TrainConfig};

/// Seed for the oversampling branch whenever a volume is preprocessed for
/// evaluation, inference or benchmarking.
pub const EVAL_SEED: u64 = 0xC7;

const EVAL_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's samples.
    pub loss: f64,
    pub lr: f64,
    /// Macro F1 of the fused predictions made during the epoch, before each update.
    pub train_macro_f1: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{:.6},{:.3e},{:.6}",
            self.epoch, self.loss, self.lr, self.train_macro_f1
        )
    }
}

fn load_volumes(manifest: &DatasetManifest) -> Result<Vec<Volume>> {
    manifest
        .records
        .iter()
        .map(|r| load_volume(manifest.resolve(r)))
        .collect()
}

fn stack(inputs: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let mut shape = vec![inputs.len()];
    shape.extend_from_slice(inputs[0].shape());
    let data = inputs
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect();
    Tensor::new(shape, data)
}

fn eval_input(volume: &Volume, params: &ModelParams<f32>) -> Result<Tensor<f32>> {
    let cfg = &params.config;
    preprocess(
        volume,
        cfg.renum_ct,
        cfg.image_size,
        &mut Rng::new(EVAL_SEED),
    )
}

fn predict_batch(
    params: &ModelParams<f32>,
    inputs: &[Tensor<f32>],
    mode: HeadMode,
) -> Result<Vec<Prediction>> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let x = tape.constant(stack(inputs)?);
    let out = forward(&mut tape, &bound, &params.config, x)?;
    fuse_and_predict(
        tape.value(out.logits_transformer),
        tape.value(out.logits_fc),
        mode,
    )
}

/// Trains a freshly initialised model on a labeled manifest.
///
/// Every epoch reshuffles the cases, preprocesses each one with a seed derived
/// from `(cfg.seed, case_id, epoch)`, and takes one SGD step per mini-batch on
/// the cross-entropy of the fused logits. `on_epoch` sees each log line as it
/// is produced; the final parameters are written to `out` when given.
pub fn train(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    out: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ModelParams<f32>, Vec<EpochLog>)> {
    cfg.validate()?;
    let labels = manifest.labels()?;
    if labels.is_empty() {
        return Err(Error::Manifest("training manifest is empty".into()));
    }
    let volumes = load_volumes(manifest)?;
    let mut params = build_model(&cfg.model, &mut Rng::new(hash64(cfg.seed, "init", 0)))?;
    let mut sgd = Sgd::new(cfg.momentum).with_clip_norm(cfg.grad_clip);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch)?;
        Rng::new(hash64(cfg.seed, "shuffle", epoch as u64)).shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut truth = Vec::with_capacity(order.len());
        let mut predicted = Vec::with_capacity(order.len());

        for batch in order.chunks(cfg.batch_size) {
            let inputs = batch
                .iter()
                .map(|&i| {
                    let id = &manifest.records[i].case_id;
                    let mut rng = Rng::new(hash64(cfg.seed, id, epoch as u64));
                    preprocess(
                        &volumes[i],
                        cfg.model.renum_ct,
                        cfg.model.image_size,
                        &mut rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let targets: Vec<usize> = batch.iter().map(|&i| labels[i].index()).collect();

            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let x = tape.constant(stack(&inputs)?);
            let fwd = forward(&mut tape, &bound, &cfg.model, x)?;
            let loss = tape.cross_entropy(fwd.logits_fused, &targets)?;
            loss_sum += f64::from(tape.value(loss).item()) * batch.len() as f64;
            let preds = fuse_and_predict(
                tape.value(fwd.logits_transformer),
                tape.value(fwd.logits_fc),
                HeadMode::Fused,
            )?;
            truth.extend(batch.iter().map(|&i| labels[i]));
            predicted.extend(preds.iter().map(|p| p.label));

            tape.backward(loss)?;
            sgd.step(&mut params, &mut tape, &bound, lr)?;
        }

        let f1 = MetricsReport::from_predictions(&truth, &predicted, HeadMode::Fused)?.macro_f1;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / order.len() as f64,
            lr,
            train_macro_f1: f1,
        };
        on_epoch(&entry);
        log.push(entry);
    }

    if let Some(path) = out {
        save_checkpoint(&params, path)?;
    }
    Ok((params, log))
}

/// Predictions for every record, in manifest order.
pub fn predict_manifest(
    params: &ModelParams<f32>,
    manifest: &DatasetManifest,
    mode: HeadMode,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(manifest.records.len());
    for chunk in manifest.records.chunks(EVAL_BATCH) {
        let inputs = chunk
            .iter()
            .map(|r| eval_input(&load_volume(manifest.resolve(r))?, params))
            .collect::<Result<Vec<_>>>()?;
        out.extend(predict_batch(params, &inputs, mode)?);
    }
    Ok(out)
}

pub fn evaluate(
    params: &ModelParams<f32>,
    manifest: &DatasetManifest,
    mode: HeadMode,
) -> Result<MetricsReport> {
    let truth = manifest.labels()?;
    if truth.is_empty() {
        return Err(Error::Manifest("evaluation manifest is empty".into()));
    }
    let predicted: Vec<Label> = predict_manifest(params, manifest, mode)?
        .iter()
        .map(|p| p.label)
        .collect();
    MetricsReport::from_predictions(&truth, &predicted, mode)
}

pub fn evaluate_checkpoint(
    checkpoint: impl AsRef<Path>,
    manifest: &DatasetManifest,
    mode: HeadMode,
) -> Result<MetricsReport> {
    evaluate(&load_checkpoint(checkpoint)?, manifest, mode)
}

/// Classifies a single volume.
pub fn infer(params: &ModelParams<f32>, volume: &Volume, mode: HeadMode) -> Result<Prediction> {
    let input = eval_input(volume, params)?;
    let mut preds = predict_batch(params, std::slice::from_ref(&input), mode)?;
    Ok(preds.remove(0))
}

/// Wall time of preprocessing plus a fused forward pass, over `repeats`
/// timed runs after one warmup.
pub fn benchmark_inference(
    params: &ModelParams<f32>,
    volume: &Volume,
    repeats: usize,
) -> Result<LatencyStats> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    infer(params, volume, HeadMode::Fused)?;
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        infer(params, volume, HeadMode::Fused)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    latency_stats(&samples)
}
