use std::path::Path;

use weldeval_core::dataset::ImageSource;
use weldeval_core::evaluation::{evaluate, render_text, EvaluationError};
use weldeval_core::prompting::{read_run_results, Strategy};

use crate::config::{source_suffix, ArtifactPaths, PipelineConfig};
use crate::stages::{ensure_dir, load_dataset};
use crate::CliError;

/// Score a completed results file: per-context metrics plus micro, macro,
/// weighted, and samples averages, written as JSON and as a text table.
/// Incomplete results fail with every missing cell itemized.
pub fn cmd_evaluate(
    config_path: &Path,
    strategy: Strategy,
    source: Option<ImageSource>,
    results_override: Option<&Path>,
    output_override: Option<&Path>,
) -> Result<(), CliError> {
    let config = PipelineConfig::load(config_path)?;
    let loaded = load_dataset(&config, source)?;
    let paths = ArtifactPaths::new(&config, source, output_override);
    let results_path = results_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| paths.results(strategy));
    if !results_path.is_file() {
        return Err(CliError::Config(format!(
            "results file {} not found; run `weldeval run --strategy {}` first",
            results_path.display(),
            strategy.label()
        )));
    }
    let results = read_run_results(&results_path)
        .map_err(|e| CliError::Config(format!("results: {e}")))?;

    let report = match evaluate(&results, &loaded.dataset, config.run.runs) {
        Ok(report) => report,
        Err(EvaluationError::MissingCells(cells)) => {
            for cell in cells.iter().take(20) {
                eprintln!(
                    "error: missing prediction for image {} context {} run {}",
                    cell.image_id,
                    cell.context.as_str(),
                    cell.run_index
                );
            }
            if cells.len() > 20 {
                eprintln!("... and {} more", cells.len() - 20);
            }
            return Err(CliError::Items(format!(
                "results file incomplete: {} missing cell(s)",
                cells.len()
            )));
        }
        Err(e) => return Err(CliError::Items(e.to_string())),
    };

    ensure_dir(paths.output_dir())?;
    let json_path = paths.metrics_json(strategy);
    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
    json.push('\n');
    std::fs::write(&json_path, json)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", json_path.display())))?;

    let title = format!("{}{}", strategy.label(), source_suffix(source));
    let text = render_text(&report, &title);
    let text_path = paths.metrics_text(strategy);
    std::fs::write(&text_path, &text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", text_path.display())))?;

    print!("{text}");
    println!("\nmetrics: {}", json_path.display());
    println!("table: {}", text_path.display());
    Ok(())
}
