use std::path::Path;

use ctnet::data::{generate_synthetic_dataset, load_manifest, DatasetManifest, Split, SynthSpec};
use ctnet::model::{
    build_model, encode_checkpoint, forward, load_checkpoint, save_checkpoint, HeadMode,
    ModelConfig,
};
use ctnet::numerics::{Tape, Tensor};
use ctnet::resampling::preprocess;
use ctnet::rng::hash64;
use ctnet::train::{benchmark_inference, evaluate, infer, predict_manifest, train, TrainConfig};
use ctnet::{Error, Rng};

fn dataset(dir: &Path, n: usize, seed: u64, split: Split) -> DatasetManifest {
    let spec = SynthSpec {
        n_cases: n,
        seed,
        ..SynthSpec::default()
    };
    generate_synthetic_dataset(&spec, dir).unwrap();
    load_manifest(dir.join("manifest.csv"), split).unwrap()
}

#[test]
fn initial_loss_is_near_ln2() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path(), 16, 3, Split::Train);
    let cfg = ModelConfig::desk();
    let labels: Vec<usize> = m.labels().unwrap().iter().map(|l| l.index()).collect();
    for seed in 0..4 {
        let params = build_model(&cfg, &mut Rng::new(seed)).unwrap();
        let inputs: Vec<f32> = m
            .records
            .iter()
            .flat_map(|r| {
                let v = ctnet::data::load_volume(m.resolve(r)).unwrap();
                preprocess(&v, cfg.renum_ct, cfg.image_size, &mut Rng::new(1))
                    .unwrap()
                    .into_data()
            })
            .collect();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(Tensor::new(vec![16, 8, 32, 32], inputs).unwrap());
        let out = forward(&mut tape, &bound, &cfg, x).unwrap();
        let loss = tape.cross_entropy(out.logits_fused, &labels).unwrap();
        let l = f64::from(tape.value(loss).item());
        assert!((l - 2f64.ln()).abs() < 0.2, "seed {seed}: initial loss {l}");
    }
}

#[test]
fn training_is_deterministic_and_checkpoints_are_canonical() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(&tmp.path().join("d"), 12, 4, Split::Train);
    let cfg = TrainConfig {
        seed: 9,
        batch_size: 5,
        ..TrainConfig::desk().with_epochs(3)
    };
    let a = tmp.path().join("a.ckpt");
    let b = tmp.path().join("b.ckpt");
    let mut lines = Vec::new();
    let (pa, log_a) = train(&m, &cfg, Some(&a), |e| lines.push(e.to_string())).unwrap();
    let (_, log_b) = train(&m, &cfg, Some(&b), |_| {}).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(log_a, log_b);
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').count() == 4));
    assert!(log_a
        .iter()
        .all(|e| e.loss.is_finite() && (0.0..=1.0).contains(&e.train_macro_f1)));

    let loaded = load_checkpoint(&a).unwrap();
    assert_eq!(loaded, pa);
    assert_eq!(encode_checkpoint(&loaded), std::fs::read(&a).unwrap());

    let other = TrainConfig { seed: 10, ..cfg };
    let (pc, _) = train(&m, &other, None, |_| {}).unwrap();
    assert_ne!(pc, pa);
}

#[test]
fn unlabeled_training_data_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = dataset(tmp.path(), 4, 5, Split::Test);
    m.records[2].label = None;
    let cfg = TrainConfig::desk().with_epochs(1);
    assert!(matches!(
        train(&m, &cfg, None, |_| {}),
        Err(Error::MissingLabel(_))
    ));
    let params = build_model(&ModelConfig::desk(), &mut Rng::new(0)).unwrap();
    assert!(matches!(
        evaluate(&params, &m, HeadMode::Fc),
        Err(Error::MissingLabel(_))
    ));
    assert_eq!(
        predict_manifest(&params, &m, HeadMode::Fc).unwrap().len(),
        4
    );
}

#[test]
fn evaluation_is_pure() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path(), 10, 6, Split::Val);
    let params = build_model(&ModelConfig::desk(), &mut Rng::new(hash64(1, "x", 0))).unwrap();
    let ckpt = tmp.path().join("m.ckpt");
    save_checkpoint(&params, &ckpt).unwrap();
    for mode in [HeadMode::Fc, HeadMode::Fused] {
        let a = evaluate(&params, &m, mode).unwrap();
        let b = evaluate(&load_checkpoint(&ckpt).unwrap(), &m, mode).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.confusion.iter().flatten().sum::<u64>(), 10);
        assert_eq!(a.macro_f1, (a.per_class_f1[0] + a.per_class_f1[1]) / 2.0);
    }

    let preds = predict_manifest(&params, &m, HeadMode::Fused).unwrap();
    let single = infer(
        &params,
        &ctnet::data::load_volume(m.resolve(&m.records[3])).unwrap(),
        HeadMode::Fused,
    )
    .unwrap();
    assert_eq!(preds[3], single);
}

#[test]
fn benchmark_reports_order_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path(), 1, 7, Split::Test);
    let v = ctnet::data::load_volume(m.resolve(&m.records[0])).unwrap();
    let params = build_model(&ModelConfig::desk(), &mut Rng::new(0)).unwrap();
    let s = benchmark_inference(&params, &v, 5).unwrap();
    assert_eq!(s.n, 5);
    assert!(s.p50 <= s.p95 && s.mean > 0.0);
    assert!(benchmark_inference(&params, &v, 0).is_err());
}
