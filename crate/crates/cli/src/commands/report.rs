use std::path::Path;

use weldeval_core::dataset::ImageSource;
use weldeval_core::evaluation::{render_text, MetricsReport};
use weldeval_core::prompting::Strategy;

use crate::config::{source_suffix, ArtifactPaths, PipelineConfig};
use crate::CliError;

/// Re-render a stored metrics file as the text table.
pub fn cmd_report(
    config_path: &Path,
    strategy: Strategy,
    source: Option<ImageSource>,
    output_override: Option<&Path>,
) -> Result<(), CliError> {
    let config = PipelineConfig::load(config_path)?;
    let paths = ArtifactPaths::new(&config, source, output_override);
    let json_path = paths.metrics_json(strategy);
    if !json_path.is_file() {
        return Err(CliError::Config(format!(
            "metrics file {} not found; run `weldeval evaluate --strategy {}` first",
            json_path.display(),
            strategy.label()
        )));
    }
    let text = std::fs::read_to_string(&json_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", json_path.display())))?;
    let report: MetricsReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", json_path.display())))?;
    let title = format!("{}{}", strategy.label(), source_suffix(source));
    print!("{}", render_text(&report, &title));
    Ok(())
}
