use std::collections::HashSet;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Audio path relative to the manifest's data root.
    pub filename: String,
    pub scene_label: String,
    /// Recording device, `"unknown"` when neither a column nor the file
    /// name gives one.
    pub source_label: String,
    pub split: Option<String>,
}

/// Tab-separated dataset listing with a header row. `filename` and
/// `scene_label` columns are required; `source_label` and `split` are
/// optional and other columns are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    rows: Vec<ManifestRow>,
}

/// Device suffix of a DCASE-style file name, e.g. `...-s2.wav` → `s2`.
fn device_from_filename(name: &str) -> Option<String> {
    let stem = Path::new(name).file_stem()?.to_str()?;
    let dev = stem.rsplit('-').next()?;
    let known = matches!(dev, "a" | "b" | "c")
        || dev
            .strip_prefix('s')
            .and_then(|n| n.parse::<u32>().ok())
            .is_some_and(|n| (1..=11).contains(&n));
    (known && stem.contains('-')).then(|| dev.to_string())
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows carrying split tag `tag`.
    pub fn split(&self, tag: &str) -> DatasetManifest {
        Self::new(
            self.rows
                .iter()
                .filter(|r| r.split.as_deref() == Some(tag))
                .cloned()
                .collect(),
        )
    }

    /// Distinct scene labels in first-seen order.
    pub fn scene_labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.scene_label.as_str()))
            .map(|r| r.scene_label.clone())
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Format {
            format: "manifest",
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(bad(1, "missing header row".into()));
        };
        let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
        let find = |name: &str| cols.iter().position(|c| *c == name);
        let file_col = find("filename").ok_or_else(|| bad(1, "no filename column".into()))?;
        let label_col =
            find("scene_label").ok_or_else(|| bad(1, "no scene_label column".into()))?;
        let (source_col, split_col) = (find("source_label"), find("split"));
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() != cols.len() {
                return Err(bad(
                    n,
                    format!("{} fields, header has {}", f.len(), cols.len()),
                ));
            }
            let filename = f[file_col].to_string();
            if filename.is_empty() || f[label_col].is_empty() {
                return Err(bad(n, "empty filename or scene label".into()));
            }
            if !seen.insert(filename.clone()) {
                return Err(bad(n, format!("duplicate filename {filename}")));
            }
            let source_label = source_col
                .map(|c| f[c].to_string())
                .filter(|s| !s.is_empty())
                .or_else(|| device_from_filename(&filename))
                .unwrap_or_else(|| "unknown".into());
            rows.push(ManifestRow {
                scene_label: f[label_col].to_string(),
                source_label,
                split: split_col
                    .map(|c| f[c].to_string())
                    .filter(|s| !s.is_empty()),
                filename,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_tsv(&self) -> String {
        let with_split = self.rows.iter().any(|r| r.split.is_some());
        let mut s = String::from("filename\tscene_label\tsource_label");
        if with_split {
            s.push_str("\tsplit");
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}",
                r.filename, r.scene_label, r.source_label
            ));
            if with_split {
                s.push('\t');
                s.push_str(r.split.as_deref().unwrap_or(""));
            }
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
