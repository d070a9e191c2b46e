use std::path::PathBuf;

use asc_core::dsp::{read_feature_file, FeatureTensor};
use asc_core::eval::evaluate;
use asc_core::nn::{snapshot_average, stack_batch};
use asc_core::quant::QuantMode;
use clap::Args;

use super::{display, pick};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Context};
use crate::files::{
    classes_path, feature_path, load_manifest, read_classes, require_dir, resolve_classes,
    select_split, write_text, AnyModel, Predictions,
};

pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint(s), float or int8; several are averaged.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output directory for predictions and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Inference path for int8 checkpoints: dynamic or weight_only.
    #[arg(long, default_value = "dynamic")]
    pub quant_mode: String,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

/// Scores for `items` in order, `batch` at a time.
pub fn predict_all(
    model: &AnyModel,
    items: &[FeatureTensor],
    batch: usize,
    mode: QuantMode,
) -> asc_core::Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch.max(1)) {
        let refs: Vec<&FeatureTensor> = chunk.iter().collect();
        let y = model.predict(&stack_batch(&refs)?, mode)?;
        out.extend(y.rows().map(<[f32]>::to_vec));
    }
    Ok(out)
}

pub fn run(cfg: &mut RunConfig, a: EvaluateArgs) -> CliResult<()> {
    let mode: QuantMode = a.quant_mode.parse().ctx(|| "--quant-mode".into())?;
    let manifest = load_manifest(&pick(a.manifest, &cfg.paths.manifest, "manifest")?)?;
    let features = pick(a.features, &cfg.paths.features, "feature directory")?;
    require_dir(&features, "feature directory")?;
    let out = pick(a.out, &cfg.paths.out, "output directory")?;
    let rows = select_split(&manifest, &a.split)?;
    let sidecar = classes_path(&a.checkpoints[0]);
    let classes = if !cfg.classes.is_empty() {
        cfg.classes.clone()
    } else if sidecar.is_file() {
        read_classes(&sidecar)?
    } else {
        resolve_classes(&[], &manifest)
    };
    cfg.classes = classes.clone();

    let items = rows
        .rows()
        .iter()
        .map(|r| {
            let p = feature_path(&features, &r.filename);
            read_feature_file(&p).ctx(|| format!("reading {}", display(&p)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut runs = Vec::new();
    for path in &a.checkpoints {
        let model = AnyModel::load(path)?;
        let scores = predict_all(&model, &items, a.batch, mode)
            .ctx(|| format!("running {}", display(path)))?;
        if scores[0].len() != classes.len() {
            return Err(CliError::Data(format!(
                "{} outputs {} classes, expected {}",
                display(path),
                scores[0].len(),
                classes.len()
            )));
        }
        runs.push(scores);
    }
    let scores = if runs.len() == 1 {
        runs.pop().expect("one run")
    } else {
        snapshot_average(&runs).ctx(|| "averaging checkpoints".into())?
    };
    let report = evaluate(&scores, &rows, &classes).ctx(|| "scoring".into())?;
    let preds = Predictions {
        classes,
        filenames: rows.rows().iter().map(|r| r.filename.clone()).collect(),
        scores,
    };
    write_text(&out.join(PREDICTIONS_FILE), &preds.to_tsv())?;
    write_text(&out.join(REPORT_JSON), &report.to_json())?;
    let table = report.to_table();
    write_text(&out.join(REPORT_TABLE), &table)?;
    print!("{table}");
    Ok(())
}
