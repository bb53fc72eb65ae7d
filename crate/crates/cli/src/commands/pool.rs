use std::path::Path;

use weldeval_core::dataset::ImageSource;
use weldeval_core::prompting::{read_run_results, ReferencePool, Strategy};

use crate::config::{ArtifactPaths, PipelineConfig};
use crate::stages::{ensure_dir, load_dataset};
use crate::CliError;

/// Materialize the reference pool as an inspectable artifact. Retrieval
/// runs rebuild the pool from the same inputs, so this stage is optional.
pub fn cmd_build_pool(
    config_path: &Path,
    source: Option<ImageSource>,
    output_override: Option<&Path>,
) -> Result<(), CliError> {
    let config = PipelineConfig::load(config_path)?;
    let loaded = load_dataset(&config, source)?;
    let paths = ArtifactPaths::new(&config, source, output_override);
    let zero_shot_path = paths.results(Strategy::ZeroShot);
    if !zero_shot_path.is_file() {
        return Err(CliError::Config(format!(
            "zero-shot results {} not found; run `weldeval run --strategy zero-shot` first",
            zero_shot_path.display()
        )));
    }
    let results = read_run_results(&zero_shot_path)
        .map_err(|e| CliError::Config(format!("zero-shot results: {e}")))?;
    let pool = ReferencePool::build(&results, &loaded.dataset);
    ensure_dir(paths.output_dir())?;
    let pool_path = paths.pool();
    pool.write(&pool_path)
        .map_err(|e| CliError::Config(format!("cannot write pool: {e}")))?;
    println!(
        "reference pool holds {} (image, context) entr{} -> {}",
        pool.len(),
        if pool.len() == 1 { "y" } else { "ies" },
        pool_path.display()
    );
    Ok(())
}
