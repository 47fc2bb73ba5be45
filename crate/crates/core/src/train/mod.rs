//! Optimization, schedules, metrics and the training/evaluation loops.

mod metrics;
mod optim;
mod schedule;
mod trainer;

pub use metrics::{latency_stats, macro_f1, Confusion, LatencyStats, MetricsReport};
pub use optim::Sgd;
pub use schedule::{lr_at_epoch, Preset, TrainConfig};
pub use trainer::{
    benchmark_inference, evaluate, evaluate_checkpoint, infer, predict_manifest, train, EpochLog,
    EVAL_SEED,
};
