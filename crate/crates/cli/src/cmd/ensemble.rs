use std::collections::HashMap;
use std::path::PathBuf;

use asc_core::fusion::{ensemble_strategy, ENSEMBLE_STRATEGIES};
use clap::Args;

use super::display;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::files::{load_manifest, write_text, Predictions};

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Member prediction files (at least two).
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "average")]
    pub strategy: String,
    /// Labelled manifest used to fit trainable strategies.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(_cfg: &mut RunConfig, a: EnsembleArgs) -> CliResult<()> {
    if a.inputs.len() < 2 {
        return Err(CliError::Config(
            "an ensemble needs at least two --input files".into(),
        ));
    }
    let mut strategy = ensemble_strategy(&a.strategy)
        .ctx(|| format!("--strategy (one of {ENSEMBLE_STRATEGIES:?})"))?;
    let members = a
        .inputs
        .iter()
        .map(|p| Predictions::load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let first = &members[0];
    let mut scores = Vec::with_capacity(members.len());
    for (m, p) in members.iter().zip(&a.inputs) {
        if m.filenames != first.filenames {
            return Err(CliError::Data(format!(
                "{} lists different items than {}",
                display(p),
                display(&a.inputs[0])
            )));
        }
        scores.push(m.reorder(&first.classes)?);
    }
    if a.strategy != "average" {
        let path = a.manifest.as_ref().ok_or_else(|| {
            CliError::Config(format!(
                "strategy {:?} needs --manifest with labels",
                a.strategy
            ))
        })?;
        let manifest = load_manifest(path)?;
        let label: HashMap<&str, &str> = manifest
            .rows()
            .iter()
            .map(|r| (r.filename.as_str(), r.scene_label.as_str()))
            .collect();
        let labels = first
            .filenames
            .iter()
            .map(|f| {
                let l = label
                    .get(f.as_str())
                    .ok_or_else(|| CliError::Data(format!("{f} is not in the manifest")))?;
                first
                    .classes
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| CliError::Data(format!("{f}: unknown label {l:?}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        strategy
            .fit(&scores, &labels)
            .ctx(|| format!("fitting {} ensemble", a.strategy))?;
    }
    let combined = strategy.combine(&scores).ctx(|| "combining".into())?;
    let out = Predictions {
        classes: first.classes.clone(),
        filenames: first.filenames.clone(),
        scores: combined,
    };
    write_text(&a.out, &out.to_tsv())?;
    println!(
        "{} ensemble of {} members over {} items written to {}",
        strategy.name(),
        members.len(),
        out.filenames.len(),
        display(&a.out)
    );
    Ok(())
}
