use std::path::{Path, PathBuf};

use asc_core::augment::{
    fit_spectrum_profiles, wave_augment, write_provenance, ProvenanceRecord, WAVE_AUGMENTS,
};
use asc_core::dsp::{load_wav, save_wav, AudioClip, WavEncoding};
use asc_core::eval::{DatasetManifest, ManifestRow};
use asc_core::rng::item_rng;
use clap::Args;
use rand::Rng as _;
use rayon::prelude::*;

use super::{collect_failures, data_root, display, pick, thread_pool};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::files::{create_dir, load_manifest, require_dir, write_text};
use crate::GlobalArgs;

pub const PROVENANCE_FILE: &str = "provenance.tsv";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const PROFILES_FILE: &str = "spectrum_profiles.json";

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Waveform strategies to apply; overrides `[corpus] strategies`.
    #[arg(long = "strategy")]
    pub strategies: Vec<String>,
}

struct Job<'a> {
    row: &'a ManifestRow,
    source: usize,
    strategy: usize,
}

fn output_name(filename: &str, strategy: &str) -> String {
    let p = Path::new(filename);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
    let name = format!("{stem}__{strategy}.wav");
    match p.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => dir.join(name).to_string_lossy().replace('\\', "/"),
        None => name,
    }
}

pub fn run(cfg: &mut RunConfig, g: &GlobalArgs, a: AugmentArgs) -> CliResult<()> {
    cfg.augment.rng_seed = cfg.seed;
    cfg.augment
        .validate()
        .ctx(|| "invalid [augment] section".into())?;
    if !a.strategies.is_empty() {
        cfg.corpus.strategies = a.strategies;
    }
    if cfg.corpus.strategies.is_empty() {
        return Err(CliError::Config(format!(
            "no waveform strategies selected; choose from {WAVE_AUGMENTS:?}"
        )));
    }
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
    let clips = pool.install(|| {
        manifest
            .rows()
            .par_iter()
            .map(|r| (r.filename.clone(), load_wav(&root.join(&r.filename))))
            .collect::<Vec<_>>()
    });
    let clips: Vec<AudioClip> = collect_failures(clips, "loading audio")?;

    let profiles = if cfg
        .corpus
        .strategies
        .iter()
        .any(|s| s == "spectrum_correction")
    {
        let p = fit_spectrum_profiles(
            manifest
                .rows()
                .iter()
                .zip(&clips)
                .map(|(r, c)| (r.source_label.as_str(), c)),
            &cfg.corpus.target_device,
            cfg.spectro.n_fft,
        )
        .ctx(|| "fitting device spectrum profiles".into())?;
        write_text(&out.join(PROFILES_FILE), &p.to_json())?;
        Some(p)
    } else {
        None
    };
    let strategies = cfg
        .corpus
        .strategies
        .iter()
        .map(|s| wave_augment(s, &cfg.augment, profiles.as_ref()))
        .collect::<asc_core::Result<Vec<_>>>()
        .ctx(|| "selecting waveform strategies".into())?;

    let jobs: Vec<Job> = strategies
        .iter()
        .enumerate()
        .flat_map(|(k, _)| {
            manifest
                .rows()
                .iter()
                .enumerate()
                .filter(|(_, r)| cfg.augment.wave_applies_to(&r.source_label))
                .map(move |(i, row)| Job {
                    row,
                    source: i,
                    strategy: k,
                })
        })
        .collect();

    let seed = cfg.seed;
    let results = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let aug = &strategies[job.strategy];
                let name = aug.name();
                let mut rng = item_rng(seed, &format!("augment/{name}/{}", job.row.filename));
                let mut partner_note = String::new();
                let res: asc_core::Result<Option<String>> = (|| {
                    let partner = if aug.needs_partner() {
                        let same: Vec<usize> = manifest
                            .rows()
                            .iter()
                            .enumerate()
                            .filter(|(i, r)| {
                                *i != job.source && r.scene_label == job.row.scene_label
                            })
                            .map(|(i, _)| i)
                            .collect();
                        if same.is_empty() {
                            return Ok(None);
                        }
                        let p = same[rng.random_range(0..same.len())];
                        partner_note = format!(";partner={}", manifest.rows()[p].filename);
                        Some(&clips[p])
                    } else {
                        None
                    };
                    let clip = aug.apply(&clips[job.source], partner, &mut rng)?;
                    let rel = output_name(&job.row.filename, name);
                    let path = out.join(&rel);
                    if let Some(dir) = path.parent() {
                        std::fs::create_dir_all(dir).map_err(|e| asc_core::Error::io(dir, e))?;
                    }
                    save_wav(&path, &clip, WavEncoding::Float32)?;
                    Ok(Some(rel))
                })();
                let res = res.map(|rel| {
                    rel.map(|rel| ProvenanceRecord {
                        output: rel,
                        source: job.row.filename.clone(),
                        augmentation: name.to_string(),
                        params: format!("{}{partner_note}", aug.describe()),
                    })
                });
                (format!("{} ({name})", job.row.filename), res)
            })
            .collect::<Vec<_>>()
    });
    let produced = collect_failures(results, "augmentation")?;
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (job, rec) in jobs.iter().zip(produced) {
        match rec {
            Some(rec) => {
                rows.push(ManifestRow {
                    filename: rec.output.clone(),
                    ..job.row.clone()
                });
                records.push(rec);
            }
            None => skipped += 1,
        }
    }
    let prov = out.join(PROVENANCE_FILE);
    write_provenance(&prov, &records).ctx(|| format!("writing {}", display(&prov)))?;
    let man = out.join(MANIFEST_FILE);
    DatasetManifest::new(rows)
        .save(&man)
        .ctx(|| format!("writing {}", display(&man)))?;
    println!(
        "generated {} augmented clips into {} ({} skipped without a same-class partner)",
        records.len(),
        display(&out),
        skipped
    );
    Ok(())
}
