pub mod augment;
pub mod ensemble;
pub mod evaluate;
pub mod extract;
pub mod fuse;
pub mod quantize;
pub mod report;
pub mod train;

use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// A path from the command line, else from the config, else an error.
pub fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Config(format!("no {what} given (flag or [paths] entry)")))
}

/// Audio root: flag, config, else the manifest's own directory.
pub fn data_root(flag: Option<PathBuf>, configured: &Option<PathBuf>, manifest: &Path) -> PathBuf {
    flag.or_else(|| configured.clone())
        .unwrap_or_else(|| match manifest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        })
}

pub fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Report every per-item failure, then fail the command once.
pub fn collect_failures<T>(
    results: Vec<(String, asc_core::Result<T>)>,
    what: &str,
) -> CliResult<Vec<T>> {
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (name, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                eprintln!("{what} failed for {name}: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Data(format!(
            "{what} failed for {failed} file(s)"
        )));
    }
    Ok(ok)
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
