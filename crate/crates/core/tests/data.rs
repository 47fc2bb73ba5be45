use std::fs;
use std::path::{Path, PathBuf};

use ctnet::data::{
    encode_pgm, generate_synthetic_dataset, load_manifest, load_pgm_stack, load_volume,
    save_manifest, save_pgm_stack, save_volume, synthesize_case, CaseRecord, DatasetManifest,
    Label, Pgm, Split, SynthSpec, Volume,
};
use ctnet::Error;

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().into(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn synthetic_dataset_is_balanced_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_cases: 32,
        positive_fraction: 0.5,
        seed: 1,
        ..SynthSpec::default()
    };
    let a = generate_synthetic_dataset(&spec, tmp.path().join("a")).unwrap();
    generate_synthetic_dataset(&spec, tmp.path().join("b")).unwrap();
    let covid = a
        .records
        .iter()
        .filter(|r| r.label == Some(Label::Covid))
        .count();
    assert_eq!((covid, a.records.len() - covid), (16, 16));
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));

    let reloaded = load_manifest(tmp.path().join("a/manifest.csv"), Split::Train).unwrap();
    assert_eq!(reloaded.records, a.records);
    for r in &reloaded.records {
        assert_eq!(&fs::read(reloaded.resolve(r)).unwrap()[..4], b"CTV1");
    }
}

#[test]
fn lesions_are_brighter_than_background() {
    let spec = SynthSpec::default();
    let mut diffs = Vec::new();
    for i in 0..12 {
        let case = synthesize_case(&spec, &format!("pos{i}"), Label::Covid).unwrap();
        let (v, ph) = (&case.volume, &case.phantom);
        let (mut lesion, mut background, mut n) = (0.0, 0.0, 0usize);
        for z in 0..v.depth() {
            for y in 0..v.height() {
                for x in 0..v.width() {
                    if ph.in_lesion(z, y, x) {
                        lesion += f64::from(v.at(z, y, x));
                        background += ph.background(z, y, x);
                        n += 1;
                    }
                }
            }
        }
        assert!(n > 0);
        diffs.push((lesion - background) / n as f64);
    }
    for d in diffs {
        assert!(d >= spec.lesion.intensity_delta / 2.0, "lesion excess {d}");
    }
}

fn longest_run(flags: impl Iterator<Item = bool>) -> usize {
    let (mut best, mut cur) = (0, 0);
    for f in flags {
        cur = if f { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best
}

#[test]
fn every_positive_has_a_contiguous_slab() {
    let spec = SynthSpec::default();
    let thresh = spec.lesion.intensity_delta / 2.0;
    for i in 0..24 {
        let case = synthesize_case(&spec, &format!("slab{i}"), Label::Covid).unwrap();
        let (v, ph) = (&case.volume, &case.phantom);
        assert!(!ph.lesions.is_empty());
        let best = ph
            .lesions
            .iter()
            .map(|l| {
                longest_run((0..v.depth()).map(|z| {
                    f64::from(v.at(z, l.cy, l.cx)) - ph.background(z, l.cy, l.cx) > thresh
                }))
            })
            .max()
            .unwrap();
        assert!(
            best >= spec.lesion.min_slab_thickness,
            "case {i}: longest slab {best}"
        );
    }
}

#[test]
fn vol_resave_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let vols = [
        Volume::from_u8(
            2,
            3,
            4,
            &(0..24).map(|i| (i * 11) as u8).collect::<Vec<_>>(),
        )
        .unwrap(),
        Volume::from_u16(1, 2, 2, &[0, 1, 65535, 300]).unwrap(),
        Volume::from_f32(2, 2, 1, vec![0.25, -1.5, 3.0e7, 1e-9]).unwrap(),
    ];
    for (i, v) in vols.iter().enumerate() {
        let a = tmp.path().join(format!("{i}a.vol"));
        let b = tmp.path().join(format!("{i}b.vol"));
        save_volume(v, &a).unwrap();
        let loaded = load_volume(&a).unwrap();
        assert_eq!(&loaded, v);
        save_volume(&loaded, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}

fn write_pgm(dir: &Path, name: &str, w: usize, h: usize, maxval: u16, fill: u16) {
    let img = Pgm {
        width: w,
        height: h,
        maxval,
        samples: (0..w * h)
            .map(|i| ((u32::from(fill) + i as u32) % (u32::from(maxval) + 1)) as u16)
            .collect(),
    };
    fs::write(dir.join(name), encode_pgm(&img)).unwrap();
}

#[test]
fn pgm_directory_loads_in_name_order() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, fill) in [("b.pgm", 20), ("a.pgm", 10), ("c.pgm", 30)] {
        write_pgm(tmp.path(), name, 4, 4, 255, fill);
    }
    let v = load_volume(tmp.path()).unwrap();
    assert_eq!((v.depth(), v.height(), v.width()), (3, 4, 4));
    assert_eq!(
        [v.at(0, 0, 0), v.at(1, 0, 0), v.at(2, 0, 0)],
        [10.0, 20.0, 30.0]
    );

    let out = tmp.path().join("out");
    save_pgm_stack(&v, &out).unwrap();
    assert_eq!(load_pgm_stack(&out).unwrap(), v);
    let again = tmp.path().join("again");
    save_pgm_stack(&load_pgm_stack(&out).unwrap(), &again).unwrap();
    assert_eq!(files(&out), files(&again));
}

#[test]
fn pgm_sixteen_bit_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    write_pgm(tmp.path(), "s0.pgm", 3, 2, 65535, 60000);
    write_pgm(tmp.path(), "s1.pgm", 3, 2, 65535, 7);
    let v = load_volume(tmp.path()).unwrap();
    assert_eq!(v.at(0, 0, 0), 60000.0);
    let out = tmp.path().join("out");
    save_pgm_stack(&v, &out).unwrap();
    assert_eq!(
        fs::read(out.join("slice_0000.pgm")).unwrap(),
        fs::read(tmp.path().join("s0.pgm")).unwrap()
    );
}

#[test]
fn mixed_slice_sizes_name_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    write_pgm(tmp.path(), "0.pgm", 4, 4, 255, 0);
    write_pgm(tmp.path(), "1.pgm", 5, 4, 255, 0);
    match load_volume(tmp.path()) {
        Err(Error::InconsistentSlice { path, .. }) => assert!(path.ends_with("1.pgm")),
        other => panic!("expected inconsistent slice, got {other:?}"),
    }
}

#[test]
fn unknown_format_is_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("x.bin");
    fs::write(&p, b"GIF89a....").unwrap();
    assert!(matches!(load_volume(&p), Err(Error::UnknownFormat { .. })));
}

#[test]
fn manifest_round_trip_is_canonical() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["a.vol", "b.vol", "c.vol"] {
        save_volume(&Volume::from_u8(1, 1, 1, &[0]).unwrap(), tmp.path().join(f)).unwrap();
    }
    let text = "case_id,path,label\nA,a.vol,COVID-19\nB,b.vol,Non-COVID-19\nC,c.vol,\n";
    let path = tmp.path().join("m.csv");
    fs::write(&path, text).unwrap();
    let m = load_manifest(&path, Split::Test).unwrap();
    assert_eq!(m.records[2].label, None);
    assert!(matches!(
        load_manifest(&path, Split::Train),
        Err(Error::MissingLabel(_))
    ));

    let out = tmp.path().join("m2.csv");
    save_manifest(&m, &out).unwrap();
    assert_eq!(fs::read_to_string(&out).unwrap(), text);

    let built = DatasetManifest {
        records: vec![CaseRecord {
            case_id: "A".into(),
            path: "a.vol".into(),
            label: Some(Label::Covid),
        }],
        split: Split::Val,
        base_dir: tmp.path().into(),
    };
    save_manifest(&built, &out).unwrap();
    assert_eq!(
        load_manifest(&out, Split::Val).unwrap().records,
        built.records
    );
}
