//! The `ingest` subcommand: manifest in, binary corpus cache out.

use std::path::{Path, PathBuf};

use crate::data::{build_corpus, save_cache, BalanceReport, Manifest};

use super::{cache_root, CliError, IngestArgs};

/// Default cache location: `<manifest stem>.corpus` under the cache root
/// from the environment, else beside the manifest.
fn default_out(manifest_path: &Path) -> PathBuf {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    let dir = cache_root()
        .unwrap_or_else(|| manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf());
    dir.join(format!("{stem}.corpus"))
}

fn print_report(report: &BalanceReport) {
    println!("{:<40} {:>12} {:>8}", "source", "points", "share");
    for (source, points, fraction) in &report.entries {
        println!("{source:<40} {points:>12} {:>7.2}%", fraction * 100.0);
    }
    for warning in &report.warnings {
        println!("warning: {warning}");
    }
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<i32, CliError> {
    let manifest = Manifest::from_path(&args.manifest)
        .map_err(|e| CliError::Usage(format!("manifest {}: {e}", args.manifest.display())))?;
    let base_dir = args.manifest.parent().unwrap_or(Path::new("."));
    let (corpus, report, warnings) = build_corpus(&manifest, base_dir)
        .map_err(|e| CliError::Usage(format!("building corpus: {e}")))?;

    print_report(&report);
    for warning in &warnings {
        println!("warning: {warning}");
    }

    let out = args.out.clone().unwrap_or_else(|| default_out(&args.manifest));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Run(format!("creating {}: {e}", dir.display())))?;
    }
    save_cache(&out, &corpus).map_err(|e| CliError::Run(format!("writing cache: {e}")))?;
    println!(
        "cache written: {} (train series {}, test series {}, window {})",
        out.display(),
        corpus.train.len(),
        corpus.test.len(),
        corpus.l_seq,
    );
    Ok(0)
}
