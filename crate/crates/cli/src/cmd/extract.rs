use std::path::PathBuf;

use asc_core::dsp::{apply_scale01, extract_features, fit_scale01, load_wav, write_feature_file};
use clap::Args;
use rayon::prelude::*;

use super::{collect_failures, data_root, display, pick, thread_pool};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::files::{create_dir, feature_path, load_manifest, require_dir};
use crate::GlobalArgs;

pub const STATS_FILE: &str = "scale_stats.txt";

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory the manifest's file names are relative to.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Output directory for feature files and scaling statistics.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Split whose rows fit the scaling statistics.
    #[arg(long, default_value = "train")]
    pub fit_split: String,
}

pub fn run(cfg: &mut RunConfig, g: &GlobalArgs, a: ExtractArgs) -> CliResult<()> {
    cfg.spectro
        .validate()
        .ctx(|| "invalid [spectro] section".into())?;
    let manifest_path = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let manifest = load_manifest(&manifest_path)?;
    if manifest.is_empty() {
        return Err(CliError::Data("empty manifest".into()));
    }
    let root = data_root(a.data_root, &cfg.paths.data_root, &manifest_path);
    require_dir(&root, "data root")?;
    let out = pick(a.out, &cfg.paths.out, "output directory")?;
    create_dir(&out)?;

    let pool = thread_pool(g.workers)?;
    let spectro = cfg.spectro.clone();
    let raw = pool.install(|| {
        manifest
            .rows()
            .par_iter()
            .map(|r| {
                let res = load_wav(&root.join(&r.filename))
                    .and_then(|clip| extract_features(&clip, &spectro));
                (r.filename.clone(), res)
            })
            .collect::<Vec<_>>()
    });
    let raw = collect_failures(raw, "feature extraction")?;

    let has_splits = manifest.rows().iter().any(|r| r.split.is_some());
    let fit: Vec<_> = manifest
        .rows()
        .iter()
        .zip(&raw)
        .filter(|(r, _)| !has_splits || r.split.as_deref() == Some(a.fit_split.as_str()))
        .map(|(_, t)| t)
        .collect();
    if fit.is_empty() {
        return Err(CliError::Data(format!(
            "no rows tagged {:?} to fit scaling statistics",
            a.fit_split
        )));
    }
    let n_fit = fit.len();
    let stats = fit_scale01(fit).ctx(|| "fitting scaling statistics".into())?;
    let stats_path = out.join(STATS_FILE);
    stats
        .save(&stats_path)
        .ctx(|| format!("writing {}", display(&stats_path)))?;

    let written = pool.install(|| {
        manifest
            .rows()
            .par_iter()
            .zip(raw.par_iter())
            .map(|(r, t)| {
                let path = feature_path(&out, &r.filename);
                let res = apply_scale01(t, &stats).and_then(|s| {
                    if let Some(dir) = path.parent() {
                        std::fs::create_dir_all(dir).map_err(|e| asc_core::Error::io(dir, e))?;
                    }
                    write_feature_file(&path, &s)
                });
                (r.filename.clone(), res)
            })
            .collect::<Vec<_>>()
    });
    collect_failures(written, "writing features")?;
    let (t, f, c) = raw[0].dims();
    println!(
        "extracted {} feature files ({t}x{f}x{c} for the first) into {}",
        raw.len(),
        display(&out)
    );
    println!("scaling statistics fitted on {n_fit} rows");
    Ok(())
}
