use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use weldeval_core::dataset::ImageSource;
use weldeval_core::embedding::{build_index, PrecomputedEmbedder};
use weldeval_core::prompting::{
    read_run_results, weldprompt_classify, write_run_results, zero_shot_classify,
    ClassifyOutcome, PromptRun, ReferencePool, Strategy,
};

use crate::config::{source_name, ArtifactPaths, PipelineConfig};
use crate::manifest::{
    dataset_digest, sha256_file, unix_now, FileDigest, RunCounters, RunManifest,
};
use crate::stages::{build_gateway, ensure_dir, load_dataset, load_templates, worker_pool};
use crate::CliError;

/// Execute one prompting strategy over every (image, context, run) cell.
/// Work is scheduled per image on a bounded pool; results keep dataset
/// order regardless of scheduling. The run manifest is written last, after
/// the results artifact it certifies.
pub fn cmd_run(
    config_path: &Path,
    strategy: Strategy,
    source: Option<ImageSource>,
    output_override: Option<&Path>,
) -> Result<(), CliError> {
    let config = PipelineConfig::load(config_path)?;
    let issues = config.constraint_errors();
    if !issues.is_empty() {
        return Err(CliError::Config(issues.join("; ")));
    }
    let loaded = load_dataset(&config, source)?;
    if loaded.dataset.is_empty() {
        return Err(CliError::Config("no images left after filtering".into()));
    }
    let paths = ArtifactPaths::new(&config, source, output_override);
    ensure_dir(paths.output_dir())?;

    let gateway = build_gateway(&config)?;
    let templates = load_templates(&config)?;
    templates
        .validate(loaded.dataset.contexts())
        .map_err(|e| CliError::Config(format!("prompt templates: {e}")))?;
    let base_cfg = config.model_config();
    let runner = PromptRun {
        gateway: &gateway,
        templates: &templates,
        base_cfg: &base_cfg,
        seed_base: config.run.seed_base,
        runs: config.run.runs,
    };

    let started_unix = unix_now();
    let pool = worker_pool(config.run.parallelism)?;
    let contexts = loaded.dataset.contexts();
    let outcome = match strategy {
        Strategy::ZeroShot => pool.install(|| {
            loaded
                .dataset
                .images()
                .par_iter()
                .map(|image| {
                    let bytes = loaded.store.bytes(&image.id).expect("store is complete");
                    zero_shot_classify(image, bytes, contexts, &runner)
                })
                .collect::<Vec<ClassifyOutcome>>()
        }),
        Strategy::WeldPrompt => {
            let embeddings_path = paths.embeddings(&config);
            if !embeddings_path.is_file() {
                return Err(CliError::Config(format!(
                    "embeddings file {} not found; run `weldeval embed` first",
                    embeddings_path.display()
                )));
            }
            let zero_shot_path = paths.results(Strategy::ZeroShot);
            if !zero_shot_path.is_file() {
                return Err(CliError::Config(format!(
                    "zero-shot results {} not found; run `weldeval run --strategy zero-shot` first",
                    zero_shot_path.display()
                )));
            }
            let prior = read_run_results(&zero_shot_path)
                .map_err(|e| CliError::Config(format!("zero-shot results: {e}")))?;
            let reference_pool = ReferencePool::build(&prior, &loaded.dataset);
            let embedder = PrecomputedEmbedder::from_path(&embeddings_path)
                .map_err(|e| CliError::Config(format!("embeddings: {e}")))?;
            let index = build_index(&loaded.dataset, &loaded.store, &embedder)
                .map_err(|e| CliError::Config(format!("embedding index: {e}")))?;
            pool.install(|| {
                loaded
                    .dataset
                    .images()
                    .par_iter()
                    .map(|image| {
                        let bytes = loaded.store.bytes(&image.id).expect("store is complete");
                        weldprompt_classify(
                            image,
                            bytes,
                            contexts,
                            &reference_pool,
                            &index,
                            &loaded.store,
                            config.run.k,
                            &runner,
                        )
                    })
                    .collect::<Vec<ClassifyOutcome>>()
            })
        }
    };
    let outcome = outcome
        .into_iter()
        .fold(ClassifyOutcome::default(), |mut acc, o| {
            acc.merge(o);
            acc
        });

    let results_path = paths.results(strategy);
    write_run_results(&results_path, &outcome.results)
        .map_err(|e| CliError::Config(format!("cannot write results: {e}")))?;

    let counters = RunCounters {
        results: outcome.results.len(),
        failures: outcome.failures.len(),
        fallbacks: outcome.results.iter().filter(|r| r.fallback).count(),
        unparseable: outcome.results.iter().filter(|r| r.parsed.is_none()).count(),
        completions: gateway.completions_issued(),
        // served counts every completion, hits included.
        cache_hits: gateway.completions_served() - gateway.completions_issued(),
    };
    let manifest = RunManifest {
        strategy: strategy.label().into(),
        source_filter: source.map(|s| source_name(s).to_string()),
        config_sha256: sha256_file(config_path)
            .map_err(|e| CliError::Config(format!("cannot digest config: {e}")))?,
        dataset_sha256: dataset_digest(&loaded.dataset),
        runs: config.run.runs,
        k: config.run.k,
        seed_base: config.run.seed_base,
        seeds: (0..config.run.runs as u64)
            .map(|r| config.run.seed_base + r)
            .collect(),
        started_unix,
        finished_unix: unix_now(),
        outputs: BTreeMap::from([(
            "results".to_string(),
            FileDigest {
                path: results_path.display().to_string(),
                sha256: sha256_file(&results_path)
                    .map_err(|e| CliError::Config(format!("cannot digest results: {e}")))?,
            },
        )]),
        counters,
    };
    let manifest_path = paths.run_manifest(strategy);
    manifest
        .write(&manifest_path)
        .map_err(|e| CliError::Config(format!("cannot write manifest: {e}")))?;

    println!(
        "{}: {} result(s), {} failure(s) ({} fallback(s), {} unparseable)",
        strategy.label(),
        counters.results,
        counters.failures,
        counters.fallbacks,
        counters.unparseable
    );
    println!(
        "completions: {} issued, {} served from cache",
        counters.completions, counters.cache_hits
    );
    println!("results: {}", results_path.display());
    println!("manifest: {}", manifest_path.display());

    if outcome.failures.is_empty() {
        Ok(())
    } else {
        for failure in outcome.failures.iter().take(20) {
            eprintln!(
                "error: image {} context {} run {}: {}",
                failure.image_id,
                failure.context.as_str(),
                failure.run_index,
                failure.error
            );
        }
        if outcome.failures.len() > 20 {
            eprintln!("... and {} more", outcome.failures.len() - 20);
        }
        Err(CliError::Items(format!(
            "{} cell(s) failed",
            outcome.failures.len()
        )))
    }
}
