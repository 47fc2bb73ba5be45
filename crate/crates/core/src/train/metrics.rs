use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::model::HeadMode;

/// 2x2 confusion matrix, rows = true class, columns = predicted class.
pub type Confusion = [[u64; 2]; 2];

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class F1 and their unweighted mean. Any 0/0 counts as 0.
pub fn macro_f1(confusion: &Confusion) -> Result<([f64; 2], f64)> {
    if confusion.iter().flatten().all(|&c| c == 0) {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let mut f1 = [0.0; 2];
    for (c, f) in f1.iter_mut().enumerate() {
        let tp = confusion[c][c] as f64;
        let fp = confusion[1 - c][c] as f64;
        let fn_ = confusion[c][1 - c] as f64;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        *f = ratio(2.0 * precision * recall, precision + recall);
    }
    Ok((f1, (f1[0] + f1[1]) / 2.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub n: usize,
}

/// Mean and nearest-rank percentiles of `samples_ms`.
pub fn latency_stats(samples_ms: &[f64]) -> Result<LatencyStats> {
    if samples_ms.is_empty() {
        return Err(Error::InvalidArgument("no latency samples".into()));
    }
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = |p: f64| sorted[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
    Ok(LatencyStats {
        mean: sorted.iter().sum::<f64>() / n as f64,
        p50: rank(0.50),
        p95: rank(0.95),
        n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub per_class_f1: [f64; 2],
    pub macro_f1: f64,
    pub accuracy: f64,
    pub mode: String,
    pub latency_ms: Option<LatencyStats>,
}

impl MetricsReport {
    pub fn from_predictions(truth: &[Label], predicted: &[Label], mode: HeadMode) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut confusion = [[0u64; 2]; 2];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        Self::from_confusion(confusion, mode)
    }

    pub fn from_confusion(confusion: Confusion, mode: HeadMode) -> Result<Self> {
        let (per_class_f1, macro_f1) = macro_f1(&confusion)?;
        let total: u64 = confusion.iter().flatten().sum();
        Ok(Self {
            confusion,
            per_class_f1,
            macro_f1,
            accuracy: (confusion[0][0] + confusion[1][1]) as f64 / total as f64,
            mode: mode.as_str().to_string(),
            latency_ms: None,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let (f, m) = macro_f1(&[[8, 2], [3, 7]]).unwrap();
        assert!((f[0] - 16.0 / 21.0).abs() < 1e-12);
        assert!((f[1] - 14.0 / 19.0).abs() < 1e-12);
        assert!((m - 299.0 / 399.0).abs() < 1e-12);

        let (f, m) = macro_f1(&[[0, 10], [0, 10]]).unwrap();
        assert_eq!(f[0], 0.0);
        assert!((f[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((m - 1.0 / 3.0).abs() < 1e-12);

        assert_eq!(macro_f1(&[[5, 0], [0, 9]]).unwrap().1, 1.0);
        assert!(macro_f1(&[[0, 0], [0, 0]]).is_err());
    }

    #[test]
    fn percentiles() {
        let s = latency_stats(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.p50, s.p95, s.n), (3.0, 3.0, 5.0, 5));
        let one = latency_stats(&[7.0]).unwrap();
        assert_eq!((one.p50, one.p95), (7.0, 7.0));
        assert!(latency_stats(&[]).is_err());
    }

    #[test]
    fn report_json_keys() {
        let r = MetricsReport::from_confusion([[3, 1], [0, 4]], HeadMode::Fused).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "accuracy",
                "confusion",
                "latency_ms",
                "macro_f1",
                "mode",
                "per_class_f1"
            ]
        );
        assert_eq!(v["mode"], "fused");
        assert_eq!(r.accuracy, 7.0 / 8.0);
        assert_eq!(r.macro_f1, (r.per_class_f1[0] + r.per_class_f1[1]) / 2.0);
    }
}
