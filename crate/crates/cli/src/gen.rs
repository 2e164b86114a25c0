//! `gen-sbm`: writes the configured dataset as edge-list, label and feature
//! files.

use std::path::{Path, PathBuf};

use randalign_core::graph::{write_edge_list, write_features, write_labels};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Writes `{split}_{index:03}.{edges,labels,features}` for every graph and
/// returns the paths written.
pub fn gen_sbm(config_path: &Path, output_override: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(config_path)?;
    let data = cfg
        .dataset
        .generate()
        .map_err(|e| CliError::Config(format!("dataset: {e}")))?;
    let dir = output_override.unwrap_or(&cfg.output_dir);
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, g) in data.graphs().iter().enumerate() {
        let stem = format!("{}_{i:03}", g.split.as_str());
        for (ext, text) in [
            ("edges", write_edge_list(&g.graph)),
            ("labels", write_labels(&g.labels)),
            ("features", write_features(&g.features)),
        ] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, text)?;
            written.push(path);
        }
    }
    Ok(written)
}
