use std::path::PathBuf;

use asc_core::nn::load_checkpoint;
use asc_core::quant::{quantize_model, save_quantized, SizeReport};
use clap::Args;

use super::display;
use crate::config::RunConfig;
use crate::error::{CliResult, Context};
use crate::files::{classes_path, require_file, write_text};

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Float checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Quantized checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(_cfg: &mut RunConfig, a: QuantizeArgs) -> CliResult<()> {
    require_file(&a.checkpoint, "checkpoint")?;
    let model =
        load_checkpoint(&a.checkpoint).ctx(|| format!("loading {}", display(&a.checkpoint)))?;
    let qm = quantize_model(&model).ctx(|| "quantizing".into())?;
    if let Some(dir) = a.out.parent() {
        crate::files::create_dir(dir)?;
    }
    save_quantized(&a.out, &qm).ctx(|| format!("writing {}", display(&a.out)))?;
    let sidecar = classes_path(&a.checkpoint);
    if sidecar.is_file() {
        let text = std::fs::read_to_string(&sidecar).unwrap_or_default();
        write_text(&classes_path(&a.out), &text)?;
    }
    let report = SizeReport::new(&model, &qm);
    write_text(
        &a.out.with_extension("size.json"),
        &serde_json::to_string_pretty(&report).expect("report serialises"),
    )?;
    print!("{}", report.to_table());
    println!("wrote {}", display(&a.out));
    Ok(())
}
