//! `case_id,path,label` manifests.
//!
//! Paths are stored as written and resolved against the manifest's
//! directory. The label column is `COVID-19`, `Non-COVID-19`, or empty for
//! unlabeled (inference-only) cases.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Class 0 is COVID-19, class 1 Non-COVID-19.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Covid,
    NonCovid,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Covid, Label::NonCovid];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Covid => "COVID-19",
            Label::NonCovid => "Non-COVID-19",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.token() == token)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn requires_labels(self) -> bool {
        matches!(self, Split::Train | Split::Val)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub path: PathBuf,
    pub label: Option<Label>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<CaseRecord>,
    pub split: Split,
    /// Directory that relative record paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, record: &CaseRecord) -> PathBuf {
        self.base_dir.join(&record.path)
    }

    /// Labels in record order; errors on the first unlabeled case.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.records
            .iter()
            .map(|r| {
                r.label
                    .ok_or_else(|| Error::MissingLabel(r.case_id.clone()))
            })
            .collect()
    }
}

const HEADER: [&str; 3] = ["case_id", "path", "label"];

pub fn load_manifest(path: impl AsRef<Path>, split: Split) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_slice());

    let header = reader
        .headers()
        .map_err(|e| Error::Manifest(e.to_string()))?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(Error::Manifest(format!(
            "header must be `case_id,path,label`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Manifest(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let (case_id, rel, token) = (&row[0], &row[1], &row[2]);
        if !seen.insert(case_id.to_string()) {
            return Err(Error::DuplicateCaseId {
                line,
                case_id: case_id.to_string(),
            });
        }
        let label = match token {
            "" => None,
            t => Some(Label::parse(t).ok_or_else(|| Error::BadLabel {
                line,
                token: t.to_string(),
            })?),
        };
        if label.is_none() && split.requires_labels() {
            return Err(Error::MissingLabel(case_id.to_string()));
        }
        let record_path = PathBuf::from(rel);
        if !base_dir.join(&record_path).exists() {
            return Err(Error::MissingFile {
                line,
                path: record_path,
            });
        }
        records.push(CaseRecord {
            case_id: case_id.to_string(),
            path: record_path,
            label,
        });
    }
    if records.is_empty() {
        return Err(Error::Manifest(format!("{}: no records", path.display())));
    }
    Ok(DatasetManifest {
        records,
        split,
        base_dir,
    })
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Manifest(e.to_string());
    writer.write_record(HEADER).map_err(csv_err)?;
    for r in &manifest.records {
        let p = r
            .path
            .to_str()
            .ok_or_else(|| Error::Manifest(format!("non UTF-8 path for `{}`", r.case_id)))?;
        writer
            .write_record([r.case_id.as_str(), p, r.label.map_or("", Label::token)])
            .map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Manifest(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.vol", "b.vol", "c.vol"] {
            fs::write(dir.path().join(name), b"x").unwrap();
        }
        let path = dir.path().join("manifest.csv");
        fs::write(&path, body).unwrap();
        (dir, path)
    }

    #[test]
    fn canonical_round_trip() {
        let body = "case_id,path,label\nc1,a.vol,COVID-19\nc2,b.vol,Non-COVID-19\nc3,c.vol,\n";
        let (_dir, path) = setup(body);
        let m = load_manifest(&path, Split::Test).unwrap();
        assert_eq!(m.records[2].label, None);
        save_manifest(&m, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), body);
        assert_eq!(load_manifest(&path, Split::Test).unwrap(), m);
    }

    #[test]
    fn duplicate_case_id() {
        let (_d, path) = setup("case_id,path,label\nc1,a.vol,COVID-19\nc1,b.vol,COVID-19\n");
        assert!(matches!(
            load_manifest(&path, Split::Train),
            Err(Error::DuplicateCaseId { line: 3, .. })
        ));
    }

    #[test]
    fn bad_label_token() {
        let (_d, path) = setup("case_id,path,label\nc1,a.vol,covid\n");
        assert!(matches!(
            load_manifest(&path, Split::Train),
            Err(Error::BadLabel { .. })
        ));
    }

    #[test]
    fn missing_file() {
        let (_d, path) = setup("case_id,path,label\nc1,zzz.vol,COVID-19\n");
        assert!(matches!(
            load_manifest(&path, Split::Train),
            Err(Error::MissingFile { .. })
        ));
    }

    #[test]
    fn train_split_needs_labels() {
        let (_d, path) = setup("case_id,path,label\nc1,a.vol,\n");
        assert!(matches!(
            load_manifest(&path, Split::Train),
            Err(Error::MissingLabel(_))
        ));
        assert!(load_manifest(&path, Split::Test).is_ok());
    }

    #[test]
    fn header_is_checked() {
        let (_d, path) = setup("id,path,label\nc1,a.vol,\n");
        assert!(matches!(
            load_manifest(&path, Split::Test),
            Err(Error::Manifest(_))
        ));
    }
}
