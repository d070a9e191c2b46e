use std::path::PathBuf;

use asc_core::eval::{evaluate, prediction_overlap, DatasetManifest, ManifestRow};
use asc_core::fusion::argmax;
use clap::Args;
use std::collections::HashMap;

use super::display;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::files::{load_manifest, write_text, Predictions};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Prediction file(s); with two, their overlap is reported too.
    #[arg(long = "predictions", required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    /// Labelled manifest for accuracy tables.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Write the JSON report(s) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn rows_for(p: &Predictions, m: &DatasetManifest) -> CliResult<DatasetManifest> {
    let by_name: HashMap<&str, &ManifestRow> =
        m.rows().iter().map(|r| (r.filename.as_str(), r)).collect();
    let rows = p
        .filenames
        .iter()
        .map(|f| {
            by_name
                .get(f.as_str())
                .map(|r| (*r).clone())
                .ok_or_else(|| CliError::Data(format!("{f} is not in the manifest")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(DatasetManifest::new(rows))
}

pub fn run(cfg: &mut RunConfig, a: ReportArgs) -> CliResult<()> {
    if a.predictions.len() > 2 {
        return Err(CliError::Config(
            "report takes one or two prediction files".into(),
        ));
    }
    let preds = a
        .predictions
        .iter()
        .map(|p| Predictions::load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = match a.manifest.or_else(|| cfg.paths.manifest.clone()) {
        Some(p) => Some(load_manifest(&p)?),
        None => None,
    };
    if let Some(m) = &manifest {
        for (p, path) in preds.iter().zip(&a.predictions) {
            let rows = rows_for(p, m)?;
            let r = evaluate(&p.scores, &rows, &p.classes)
                .ctx(|| format!("scoring {}", display(path)))?;
            println!("== {}", display(path));
            print!("{}", r.to_table());
            if let Some(out) = &a.out {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("report");
                write_text(&out.join(format!("{stem}.report.json")), &r.to_json())?;
            }
        }
    }
    if let [x, y] = &preds[..] {
        if x.filenames != y.filenames {
            return Err(CliError::Data(
                "prediction files list different items".into(),
            ));
        }
        let top = |p: &Predictions| -> CliResult<Vec<String>> {
            Ok(p.scores
                .iter()
                .map(|s| p.classes[argmax(s)].clone())
                .collect())
        };
        let (tx, ty) = (top(x)?, top(y)?);
        let names: Vec<&String> = x.classes.iter().chain(&y.classes).collect();
        let id = |c: &String| names.iter().position(|n| *n == c).expect("class listed");
        let ix: Vec<usize> = tx.iter().map(id).collect();
        let iy: Vec<usize> = ty.iter().map(id).collect();
        let o = prediction_overlap(&ix, &iy).ctx(|| "overlap".into())?;
        println!("prediction overlap: {o:.1}% of {} items", ix.len());
    }
    Ok(())
}
