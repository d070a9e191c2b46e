use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

const HEADER: &str = "output\tsource\taugmentation\tparams";

/// One generated item of an augmented corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceRecord {
    pub output: String,
    pub source: String,
    pub augmentation: String,
    pub params: String,
}

fn clean(field: &str) -> Result<&str> {
    if field.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidInput(format!(
            "provenance field {field:?} contains a tab or newline"
        )));
    }
    Ok(field)
}

pub fn write_provenance(path: &Path, records: &[ProvenanceRecord]) -> Result<()> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            clean(&r.output)?,
            clean(&r.source)?,
            clean(&r.augmentation)?,
            clean(&r.params)?
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_provenance(path: &Path) -> Result<Vec<ProvenanceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Format {
            format: "provenance",
            reason: "missing header".into(),
        });
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::Format {
                    format: "provenance",
                    reason: format!("expected 4 fields in {l:?}"),
                });
            }
            Ok(ProvenanceRecord {
                output: f[0].into(),
                source: f[1].into(),
                augmentation: f[2].into(),
                params: f[3].into(),
            })
        })
        .collect()
}
