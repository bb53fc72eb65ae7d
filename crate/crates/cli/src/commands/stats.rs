use std::path::Path;

use weldeval_core::dataset::ImageSource;
use weldeval_core::MetricScalar;

use crate::config::PipelineConfig;
use crate::stages::load_dataset;
use crate::CliError;

/// Print descriptive statistics per context and source: positive count,
/// negative count, and the imbalance ratio (POS/NEG) at three decimals.
/// Sources with no negatives get an undefined marker instead of a ratio.
pub fn cmd_stats(config_path: &Path, source: Option<ImageSource>) -> Result<(), CliError> {
    let config = PipelineConfig::load(config_path)?;
    let loaded = load_dataset(&config, None)?;

    let sources: &[ImageSource] = match source {
        Some(ref s) => std::slice::from_ref(s),
        None => &ImageSource::ALL,
    };
    let context_width = loaded
        .dataset
        .contexts()
        .iter()
        .map(|c| c.as_str().len())
        .max()
        .unwrap_or(0)
        .max("CONTEXT".len());

    println!(
        "{:<context_width$}  {:<10}  {:>4}  {:>4}  {:>6}",
        "CONTEXT", "SOURCE", "POS", "NEG", "IMB"
    );
    for src in sources {
        let subset = loaded.dataset.filter_source(*src);
        for context in loaded.dataset.contexts() {
            let stats = subset
                .descriptive_stats(context)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let imbalance = match stats.imbalance::<MetricScalar>() {
                Some(ratio) => format!("{ratio:.3}"),
                None => "-".into(),
            };
            println!(
                "{:<context_width$}  {:<10}  {:>4}  {:>4}  {:>6}",
                context.as_str(),
                src.label(),
                stats.pos,
                stats.neg,
                imbalance
            );
        }
    }
    if loaded.excluded_flagged > 0 {
        println!(
            "\n{} image(s) with annotation overlays excluded",
            loaded.excluded_flagged
        );
    }
    Ok(())
}
