use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Named bundles of model and training settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Preset::Desk),
            "paper" => Some(Preset::Paper),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Epochs at which the learning rate is multiplied by `lr_decay`.
    pub step_epochs: Vec<usize>,
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// 32x224x224 input, 120 epochs with decays at 50 and 100, batch 32.
    pub fn paper() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            epochs: 120,
            step_epochs: vec![50, 100],
            lr_decay: 0.1,
            batch_size: 32,
            grad_clip: None,
            seed: 0,
            model: ModelConfig::paper(),
        }
    }

    /// The `paper` preset schedule stretched to 200 epochs on the desk model, with the
    /// gradient norm clipped at 1 to keep batch-8 steps from diverging.
    pub fn desk() -> Self {
        Self {
            epochs: 200,
            step_epochs: vec![83, 166],
            batch_size: 8,
            grad_clip: Some(1.0),
            model: ModelConfig::desk(),
            ..Self::paper()
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self::desk(),
            Preset::Paper => Self::paper(),
        }
    }

    /// Changes the epoch count, moving the step epochs proportionally.
    /// Steps that collapse onto each other or onto epoch 0 are dropped.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        let old = self.epochs.max(1);
        let mut steps: Vec<usize> = self
            .step_epochs
            .iter()
            .map(|&s| (s * epochs + old / 2) / old)
            .filter(|&s| s > 0 && s < epochs)
            .collect();
        steps.dedup();
        self.step_epochs = steps;
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!(
                    "grad_clip must be positive, got {c}"
                )));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.step_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "step_epochs {:?} must be strictly increasing",
                self.step_epochs
            )));
        }
        if self.step_epochs.iter().any(|&s| s >= self.epochs) {
            return Err(Error::Config(format!(
                "step_epochs {:?} must be below {} epochs",
                self.step_epochs, self.epochs
            )));
        }
        Ok(())
    }
}

/// `lr * lr_decay^k` where `k` counts the step epochs already reached.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside 0..{}",
            cfg.epochs
        )));
    }
    let steps = cfg.step_epochs.iter().filter(|&&s| s <= epoch).count();
    Ok(cfg.lr * cfg.lr_decay.powi(steps as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_schedule() {
        let cfg = TrainConfig::paper();
        assert_eq!(lr_at_epoch(&cfg, 0).unwrap(), 0.01);
        assert_eq!(lr_at_epoch(&cfg, 49).unwrap(), 0.01);
        assert!((lr_at_epoch(&cfg, 50).unwrap() - 0.001).abs() < 1e-15);
        assert!((lr_at_epoch(&cfg, 99).unwrap() - 0.001).abs() < 1e-15);
        assert!((lr_at_epoch(&cfg, 100).unwrap() - 0.0001).abs() < 1e-15);
        assert!(lr_at_epoch(&cfg, 120).is_err());
    }

    #[test]
    fn schedule_non_increasing() {
        for cfg in [
            TrainConfig::paper(),
            TrainConfig::desk(),
            TrainConfig::desk().with_epochs(7),
        ] {
            let lrs: Vec<f64> = (0..cfg.epochs)
                .map(|e| lr_at_epoch(&cfg, e).unwrap())
                .collect();
            assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn presets_validate() {
        TrainConfig::paper().validate().unwrap();
        TrainConfig::desk().validate().unwrap();
        for e in 1..300 {
            TrainConfig::desk().with_epochs(e).validate().unwrap();
        }
    }

    #[test]
    fn epoch_override_scales_steps() {
        assert_eq!(
            TrainConfig::paper().with_epochs(240).step_epochs,
            vec![100, 200]
        );
        assert_eq!(
            TrainConfig::desk().with_epochs(100).step_epochs,
            vec![42, 83]
        );
        assert!(TrainConfig::desk().with_epochs(1).step_epochs.is_empty());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig {
                lr: 0.0,
                ..TrainConfig::desk()
            },
            TrainConfig {
                lr_decay: 0.0,
                ..TrainConfig::desk()
            },
            TrainConfig {
                lr_decay: 1.5,
                ..TrainConfig::desk()
            },
            TrainConfig {
                step_epochs: vec![100, 50],
                ..TrainConfig::paper()
            },
            TrainConfig {
                step_epochs: vec![50, 120],
                ..TrainConfig::paper()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::desk()
            },
            TrainConfig {
                grad_clip: Some(0.0),
                ..TrainConfig::desk()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
