use std::path::PathBuf;

use asc_core::augment::feature_augment;
use asc_core::dsp::read_feature_file;
use asc_core::nn::{one_hot, save_checkpoint, train, Example, Model, TrainConfig};
use asc_core::rng::derive_seed;
use asc_core::zoo::build;
use clap::Args;
use serde::Serialize;

use super::{display, pick};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::files::{
    classes_path, feature_path, load_manifest, require_dir, resolve_classes, select_split,
    write_text,
};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory written by `extract`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Checkpoint path; snapshots and the training log are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value = "train")]
    pub split: String,
}

#[derive(Serialize)]
struct TrainLog<'a> {
    arch: &'a str,
    classes: &'a [String],
    items: usize,
    params: usize,
    steps: usize,
    epoch_loss: &'a [f64],
    snapshots: Vec<String>,
}

pub fn run(cfg: &mut RunConfig, a: TrainArgs) -> CliResult<()> {
    if let Some(arch) = a.arch {
        cfg.arch.arch = arch;
    }
    if let Some(w) = a.width {
        cfg.arch.width_mult = Some(w);
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let manifest = load_manifest(&pick(a.manifest, &cfg.paths.manifest, "manifest")?)?;
    let features = pick(a.features, &cfg.paths.features, "feature directory")?;
    require_dir(&features, "feature directory")?;
    let out = pick(a.out, &cfg.paths.out, "checkpoint path")?;
    let rows = select_split(&manifest, &a.split)?;
    if cfg.classes.is_empty() {
        cfg.classes = resolve_classes(&[], &manifest);
    }
    let classes = cfg.classes.clone();

    let mut data = Vec::with_capacity(rows.len());
    for r in rows.rows() {
        let t = classes
            .iter()
            .position(|c| *c == r.scene_label)
            .ok_or_else(|| {
                CliError::Data(format!(
                    "{}: label {:?} not in classes",
                    r.filename, r.scene_label
                ))
            })?;
        let path = feature_path(&features, &r.filename);
        let features = read_feature_file(&path).ctx(|| format!("reading {}", display(&path)))?;
        data.push(Example {
            features,
            target: one_hot(t, classes.len()),
        });
    }
    let (t, f, c) = data[0].features.dims();
    if let Some(bad) = data.iter().position(|e| e.features.dims() != (t, f, c)) {
        return Err(CliError::Data(format!(
            "{} has dims {:?}, expected {:?}",
            rows.rows()[bad].filename,
            data[bad].features.dims(),
            (t, f, c)
        )));
    }
    cfg.arch.input = [t, f, c];
    cfg.arch.n_classes = classes.len();
    cfg.validate()?;

    let graph = build(&cfg.arch).ctx(|| format!("building {}", cfg.arch.arch))?;
    let model = Model::init(graph, derive_seed(cfg.seed, "init")).ctx(|| "initialising".into())?;
    let augments = cfg
        .train
        .feature_augments
        .iter()
        .map(|n| feature_augment(n, &cfg.augment))
        .collect::<asc_core::Result<Vec<_>>>()
        .ctx(|| "selecting feature augmentations".into())?;
    let tc = TrainConfig {
        schedule: cfg.schedule.clone(),
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: derive_seed(cfg.seed, "train"),
    };
    let params = model.param_count();
    let outcome = train(model, &data, &tc, &augments).ctx(|| "training".into())?;

    if let Some(dir) = out.parent() {
        crate::files::create_dir(dir)?;
    }
    save_checkpoint(&out, &outcome.model).ctx(|| format!("writing {}", display(&out)))?;
    write_text(&classes_path(&out), &(classes.join("\n") + "\n"))?;
    let mut snaps = Vec::new();
    for (i, m) in outcome.snapshots.iter().enumerate() {
        let p = out.with_extension(format!("snap{i}.ascm"));
        save_checkpoint(&p, m).ctx(|| format!("writing {}", display(&p)))?;
        write_text(&classes_path(&p), &(classes.join("\n") + "\n"))?;
        snaps.push(display(&p));
    }
    let log = TrainLog {
        arch: &cfg.arch.arch,
        classes: &classes,
        items: data.len(),
        params,
        steps: outcome.steps,
        epoch_loss: &outcome.epoch_loss,
        snapshots: snaps,
    };
    write_text(
        &out.with_extension("log.json"),
        &serde_json::to_string_pretty(&log).expect("log serialises"),
    )?;
    for (e, l) in outcome.epoch_loss.iter().enumerate() {
        println!("epoch {:>3}  loss {l:.5}", e + 1);
    }
    println!(
        "trained {} ({params} parameters) on {} items; {} snapshots; checkpoint {}",
        cfg.arch.arch,
        data.len(),
        outcome.snapshots.len(),
        display(&out)
    );
    Ok(())
}
