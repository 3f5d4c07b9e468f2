//! `image,mask,label,split` CSV manifests with paths relative to the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
/// Optional sidecar with one class name per line.
pub const CLASSES_FILE: &str = "classes.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image: String,
    /// Empty when the sample has no mask.
    pub mask: String,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory the row paths are relative to.
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub class_names: Vec<String>,
}

/// Accepts either a manifest file or a directory containing `manifest.csv`.
pub fn resolve_manifest(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn default_class_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("class{i}")).collect()
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let path = resolve_manifest(path);
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut reader = csv::Reader::from_path(&path).map_err(|e| Error::format(&path, e.to_string()))?;
        let headers = reader.headers().map_err(|e| Error::format(&path, e.to_string()))?;
        if headers != vec!["image", "mask", "label", "split"] {
            return Err(Error::format(&path, "header must be `image,mask,label,split`"));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<ManifestRow>().enumerate() {
            rows.push(rec.map_err(|e| Error::format(&path, format!("row {}: {e}", i + 1)))?);
        }
        if rows.is_empty() {
            return Err(Error::Data(format!("{}: manifest has no rows", path.display())));
        }
        let max_label = rows.iter().map(|r| r.label).max().unwrap_or(0);
        let classes_path = root.join(CLASSES_FILE);
        let class_names = if classes_path.exists() {
            let text = std::fs::read_to_string(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
            let names: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
            if names.len() <= max_label {
                return Err(Error::format(
                    &classes_path,
                    format!("{} class names but labels go up to {max_label}", names.len()),
                ));
            }
            names
        } else {
            default_class_names((max_label + 1).max(2))
        };
        Ok(DatasetManifest {
            root,
            rows,
            class_names,
        })
    }

    /// Writes `manifest.csv` and `classes.txt` into `self.root`.
    pub fn write(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(MANIFEST_FILE);
        let mut writer = csv::Writer::from_path(&path).map_err(|e| Error::format(&path, e.to_string()))?;
        for row in &self.rows {
            writer.serialize(row).map_err(|e| Error::format(&path, e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io(&path, e))?;
        let classes = self.root.join(CLASSES_FILE);
        let mut text = self.class_names.join("\n");
        text.push('\n');
        std::fs::write(&classes, text).map_err(|e| Error::io(&classes, e))?;
        Ok(path)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `[split][class]` counts.
    pub fn split_counts(&self) -> [Vec<usize>; 3] {
        let k = self.num_classes();
        let mut counts = [vec![0; k], vec![0; k], vec![0; k]];
        for row in &self.rows {
            let s = Split::ALL.iter().position(|&s| s == row.split).unwrap();
            counts[s][row.label] += 1;
        }
        counts
    }
}
