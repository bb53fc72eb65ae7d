use std::path::Path;

use weldeval_core::dataset::load_manifest;

use crate::config::PipelineConfig;
use crate::CliError;

/// Check everything the pipeline will rely on and itemize each problem:
/// config constraints, the dataset manifest (full load, including content
/// hashes and label completeness), and the prompt templates.
pub fn cmd_validate(config_path: &Path) -> Result<(), CliError> {
    let config = PipelineConfig::load(config_path)?;
    let mut errors = config.constraint_errors();

    if config.dataset.manifest.is_file() {
        match load_manifest(&config.dataset.manifest) {
            Ok(dataset) => {
                if !config.dataset.contexts.is_empty() {
                    let mut expected = config.dataset.contexts.clone();
                    expected.sort();
                    let mut declared: Vec<String> = dataset
                        .contexts()
                        .iter()
                        .map(|c| c.as_str().to_string())
                        .collect();
                    declared.sort();
                    if expected != declared {
                        errors.push(format!(
                            "dataset declares contexts {declared:?} but the config expects {expected:?}"
                        ));
                    }
                }
                match crate::stages::load_templates(&config) {
                    Ok(templates) => {
                        if let Err(e) = templates.validate(dataset.contexts()) {
                            errors.push(format!("prompt templates: {e}"));
                        }
                    }
                    Err(e) => errors.push(e.to_string()),
                }
            }
            Err(e) => errors.push(format!("dataset: {e}")),
        }
    }

    if errors.is_empty() {
        println!("configuration valid: {}", config_path.display());
        Ok(())
    } else {
        for error in &errors {
            eprintln!("error: {error}");
        }
        Err(CliError::Config(format!(
            "{} validation error(s)",
            errors.len()
        )))
    }
}
