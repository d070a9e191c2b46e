//! File conventions shared by the subcommands.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use asc_core::eval::DatasetManifest;
use asc_core::fusion::{SCENE_CLASSES, SUPERCLASSES};
use asc_core::nn::{decode_checkpoint, Model, Tensor4};
use asc_core::quant::{decode_quantized, QuantMode, QuantizedModel};

use crate::error::{CliError, CliResult, Context};

/// Feature file for a manifest entry: same relative path, `.ascf` extension.
pub fn feature_path(dir: &Path, filename: &str) -> PathBuf {
    dir.join(filename).with_extension("ascf")
}

/// Sidecar next to a checkpoint listing its class names, one per line.
pub fn classes_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("classes")
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    if dir.as_os_str().is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

pub fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}

pub fn load_manifest(path: &Path) -> CliResult<DatasetManifest> {
    require_file(path, "manifest")?;
    DatasetManifest::load(path).ctx(|| format!("reading manifest {}", path.display()))
}

/// Rows tagged `tag`, or every row when the manifest carries no split
/// column at all.
pub fn select_split(m: &DatasetManifest, tag: &str) -> CliResult<DatasetManifest> {
    if m.rows().iter().all(|r| r.split.is_none()) {
        return Ok(m.clone());
    }
    let s = m.split(tag);
    if s.is_empty() {
        return Err(CliError::Data(format!(
            "manifest has no rows tagged {tag:?}"
        )));
    }
    Ok(s)
}

/// Class order: explicit list, else the builtin 10 scenes or 3 superclasses
/// when the labels fit, else the sorted distinct labels.
pub fn resolve_classes(configured: &[String], m: &DatasetManifest) -> Vec<String> {
    if !configured.is_empty() {
        return configured.to_vec();
    }
    let labels: HashSet<String> = m.rows().iter().map(|r| r.scene_label.clone()).collect();
    for set in [&SCENE_CLASSES[..], &SUPERCLASSES[..]] {
        if labels.iter().all(|l| set.contains(&l.as_str())) {
            return set.iter().map(|s| s.to_string()).collect();
        }
    }
    let mut v: Vec<String> = labels.into_iter().collect();
    v.sort();
    v
}

pub fn read_classes(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Score table: header `filename` then one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub classes: Vec<String>,
    pub filenames: Vec<String>,
    pub scores: Vec<Vec<f32>>,
}

impl Predictions {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("filename");
        for c in &self.classes {
            s.push('\t');
            s.push_str(c);
        }
        s.push('\n');
        for (f, row) in self.filenames.iter().zip(&self.scores) {
            s.push_str(f);
            for v in row {
                // shortest representation that parses back to the same f32
                s.push_str(&format!("\t{v:?}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(text: &str, origin: &Path) -> CliResult<Self> {
        let bad = |m: String| CliError::Data(format!("{}: {m}", origin.display()));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut cols = header.split('\t');
        if cols.next() != Some("filename") {
            return Err(bad("header must start with filename".into()));
        }
        let classes: Vec<String> = cols.map(String::from).collect();
        if classes.is_empty() {
            return Err(bad("no class columns".into()));
        }
        let mut p = Predictions {
            classes,
            filenames: Vec::new(),
            scores: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let mut f = line.split('\t');
            let name = f.next().unwrap_or_default().to_string();
            let row = f
                .map(|v| v.trim().parse::<f32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if row.len() != p.classes.len() {
                return Err(bad(format!("row {} has {} scores", i + 1, row.len())));
            }
            p.filenames.push(name);
            p.scores.push(row);
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        require_file(path, "prediction file")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_tsv(&text, path)
    }

    /// Columns reordered to `order`, which must name every column.
    pub fn reorder(&self, order: &[String]) -> CliResult<Vec<Vec<f32>>> {
        let idx = order
            .iter()
            .map(|c| {
                self.classes
                    .iter()
                    .position(|k| k == c)
                    .ok_or_else(|| CliError::Data(format!("prediction file has no column {c:?}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        if order.len() != self.classes.len() {
            return Err(CliError::Data(format!(
                "expected {} score columns, found {}",
                order.len(),
                self.classes.len()
            )));
        }
        Ok(self
            .scores
            .iter()
            .map(|r| idx.iter().map(|&i| r[i]).collect())
            .collect())
    }
}

/// A float or int8 checkpoint, told apart by the file magic.
pub enum AnyModel {
    Float(Model<f32>),
    Quantized(QuantizedModel),
}

impl AnyModel {
    pub fn load(path: &Path) -> CliResult<Self> {
        require_file(path, "checkpoint")?;
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let what = || format!("loading {}", path.display());
        if bytes.starts_with(b"ASCQ") {
            Ok(AnyModel::Quantized(decode_quantized(&bytes).ctx(what)?))
        } else {
            Ok(AnyModel::Float(decode_checkpoint(&bytes).ctx(what)?))
        }
    }

    pub fn predict(&self, x: &Tensor4<f32>, mode: QuantMode) -> asc_core::Result<Tensor4<f32>> {
        match self {
            AnyModel::Float(m) => m.predict(x),
            AnyModel::Quantized(q) => q.forward(x, mode),
        }
    }
}
