use std::path::PathBuf;

use asc_core::fusion::{two_stage_fuse, ClassHierarchy};
use clap::Args;

use super::display;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::files::{require_file, write_text, Predictions};

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Superclass (3-way) predictions.
    #[arg(long)]
    pub coarse: PathBuf,
    /// Scene class predictions.
    #[arg(long)]
    pub fine: PathBuf,
    /// Class hierarchy file; defaults to the builtin indoor/outdoor/transportation grouping.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(_cfg: &mut RunConfig, a: FuseArgs) -> CliResult<()> {
    let h = match &a.hierarchy {
        Some(p) => {
            require_file(p, "hierarchy")?;
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", display(p))))?;
            ClassHierarchy::from_text(&text).ctx(|| format!("parsing {}", display(p)))?
        }
        None => ClassHierarchy::builtin(),
    };
    let coarse = Predictions::load(&a.coarse)?;
    let fine = Predictions::load(&a.fine)?;
    if coarse.filenames != fine.filenames {
        return Err(CliError::Data(
            "coarse and fine prediction files list different items".into(),
        ));
    }
    let f1 = coarse.reorder(h.superclasses())?;
    let f2 = fine.reorder(h.classes())?;
    let mut scores = Vec::with_capacity(f1.len());
    for (i, (a1, a2)) in f1.iter().zip(&f2).enumerate() {
        let (fused, _) =
            two_stage_fuse(a1, a2, &h).ctx(|| format!("fusing {}", fine.filenames[i]))?;
        scores.push(fused);
    }
    let out = Predictions {
        classes: h.classes().to_vec(),
        filenames: fine.filenames,
        scores,
    };
    write_text(&a.out, &out.to_tsv())?;
    println!(
        "fused {} items into {}",
        out.filenames.len(),
        display(&a.out)
    );
    Ok(())
}
