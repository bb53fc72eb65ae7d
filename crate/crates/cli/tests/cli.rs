//! Binary-level tests: subcommand behavior, exit codes, and artifact flow
//! against the mock backend.

mod common;

use common::*;
use tempfile::TempDir;

const CONTEXTS: [&str; 3] = ["RV & Marine", "Aeronautical", "Farming"];

#[test]
fn validate_accepts_a_complete_config() {
    let dir = TempDir::new().unwrap();
    let images = parity_images("v", "real_world", 2, &CONTEXTS);
    let manifest = write_manifest(dir.path(), &CONTEXTS, &images);
    write_config(dir.path(), &manifest, "");
    let output = weldeval(dir.path(), &["validate"]);
    assert_success(&output);
    assert!(stdout_of(&output).contains("configuration valid"));
}

#[test]
fn validate_itemizes_a_missing_manifest_with_exit_2() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), &dir.path().join("absent.json"), "");
    let output = weldeval(dir.path(), &["validate"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("absent.json"));
}

#[test]
fn validate_flags_constraint_violations_by_field_name() {
    let dir = TempDir::new().unwrap();
    let images = parity_images("v", "real_world", 1, &CONTEXTS);
    let manifest = write_manifest(dir.path(), &CONTEXTS, &images);
    let config = write_config(dir.path(), &manifest, "");
    let body = std::fs::read_to_string(&config)
        .unwrap()
        .replace("runs = 3", "runs = 0");
    std::fs::write(&config, body).unwrap();
    let output = weldeval(dir.path(), &["validate"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("run.runs"));
}

#[test]
fn validate_checks_the_context_list_against_the_manifest() {
    let dir = TempDir::new().unwrap();
    let images = parity_images("v", "real_world", 1, &CONTEXTS);
    let manifest = write_manifest(dir.path(), &CONTEXTS, &images);
    write_config(
        dir.path(),
        &manifest,
        "\n[dataset.unused]\n", // placeholder replaced below
    );
    // Rewrite with an expected-contexts list that does not match.
    let config = dir.path().join("weldeval.toml");
    let body = format!(
        "[dataset]\nmanifest = {:?}\ncontexts = [\"Farming\", \"Automotive\", \"RV & Marine\"]\n",
        manifest.display().to_string()
    );
    std::fs::write(&config, body).unwrap();
    let output = weldeval(dir.path(), &["validate"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("Automotive"));
}

#[test]
fn stats_prints_counts_and_ratio_rows() {
    let dir = TempDir::new().unwrap();
    let mut images = counted_images("rw", "real_world", 5, &[("A", 2), ("B", 0)]);
    images.extend(counted_images("on", "online", 4, &[("A", 3), ("B", 4)]));
    let manifest = write_manifest(dir.path(), &["A", "B"], &images);
    write_config(dir.path(), &manifest, "");
    let output = weldeval(dir.path(), &["stats"]);
    assert_success(&output);
    let stdout = stdout_of(&output);
    // A real-world: 2 pos, 3 neg -> 0.667; B real-world: 0/5 -> 0.000.
    assert!(stdout.contains("0.667"), "{stdout}");
    assert!(stdout.contains("0.000"), "{stdout}");
    // B online: 4 pos, 0 neg -> undefined marker.
    assert!(
        stdout.lines().any(|l| l.contains('B') && l.contains("Online") && l.ends_with('-')),
        "{stdout}"
    );
    // A online: 3/1 -> 3.000.
    assert!(stdout.contains("3.000"), "{stdout}");
}

#[test]
fn stats_excludes_annotated_images_and_says_so() {
    let dir = TempDir::new().unwrap();
    let mut images = counted_images("s", "real_world", 4, &[("A", 2)]);
    images[0].annotation_overlay = true;
    let manifest = write_manifest(dir.path(), &["A"], &images);
    write_config(dir.path(), &manifest, "");
    let output = weldeval(dir.path(), &["stats"]);
    assert_success(&output);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("1 image(s) with annotation overlays excluded"), "{stdout}");
    // Image s-000 was positive in A; with it gone the counts are 1/2.
    assert!(
        stdout.lines().any(|l| l.contains("Real World") && l.contains("   1") && l.contains("   2")),
        "{stdout}"
    );
}

#[test]
fn source_filter_restricts_stats_rows() {
    let dir = TempDir::new().unwrap();
    let mut images = counted_images("rw", "real_world", 3, &[("A", 1)]);
    images.extend(counted_images("on", "online", 3, &[("A", 2)]));
    let manifest = write_manifest(dir.path(), &["A"], &images);
    write_config(dir.path(), &manifest, "");
    let output = weldeval(dir.path(), &["stats", "--source", "online"]);
    assert_success(&output);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("Online"));
    assert!(!stdout.contains("Real World"));
}

#[test]
fn full_mock_pipeline_produces_all_artifacts() {
    let dir = TempDir::new().unwrap();
    let images = parity_images("p", "real_world", 6, &CONTEXTS);
    let manifest = write_manifest(dir.path(), &CONTEXTS, &images);
    write_config(dir.path(), &manifest, "");

    assert_success(&weldeval(dir.path(), &["embed"]));
    assert_success(&weldeval(dir.path(), &["run", "--strategy", "zero-shot"]));
    assert_success(&weldeval(dir.path(), &["build-pool"]));
    assert_success(&weldeval(dir.path(), &["run", "--strategy", "weldprompt"]));
    assert_success(&weldeval(dir.path(), &["evaluate", "--strategy", "zero-shot"]));
    assert_success(&weldeval(dir.path(), &["evaluate", "--strategy", "weldprompt"]));

    let out = dir.path().join("out");
    for name in [
        "embeddings.jsonl",
        "results-zero-shot.jsonl",
        "pool.json",
        "results-weldprompt.jsonl",
        "run-manifest-zero-shot.json",
        "run-manifest-weldprompt.json",
        "metrics-zero-shot.json",
        "metrics-zero-shot.txt",
        "metrics-weldprompt.json",
        "metrics-weldprompt.txt",
    ] {
        assert!(out.join(name).is_file(), "missing artifact {name}");
    }

    let report = weldeval(dir.path(), &["report", "--strategy", "weldprompt"]);
    assert_success(&report);
    let stdout = stdout_of(&report);
    assert!(stdout.contains("per context"), "{stdout}");
    assert!(stdout.contains("averages"), "{stdout}");
    assert!(stdout.contains("Farming"), "{stdout}");

    // Parity labels make the mock backend a perfect classifier, so the
    // count-based averages are all ones. The samples average still pays
    // for all-negative images, whose per-image metrics are undefined and
    // enter as zero: it equals the fraction of images with a positive label.
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("metrics-zero-shot.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metrics["runs"], 3);
    assert_eq!(metrics["micro"]["precision"], 1.0);
    assert_eq!(metrics["micro"]["recall"], 1.0);
    assert_eq!(metrics["micro"]["f1"], 1.0);
    assert_eq!(metrics["weighted"]["f1"], 1.0);
    let positives = images
        .iter()
        .filter(|spec| spec.labels.iter().any(|(_, v)| *v))
        .count();
    let expected = positives as f64 / images.len() as f64;
    let samples_f1 = metrics["samples"]["f1"].as_f64().unwrap();
    assert!((samples_f1 - expected).abs() < 1e-12, "{samples_f1} vs {expected}");
}

#[test]
fn rerun_is_served_from_the_cache() {
    let dir = TempDir::new().unwrap();
    let images = parity_images("c", "real_world", 2, &["A"]);
    let manifest = write_manifest(dir.path(), &["A"], &images);
    write_config(dir.path(), &manifest, "");

    assert_success(&weldeval(dir.path(), &["run", "--strategy", "zero-shot"]));
    let manifest_path = dir.path().join("out/run-manifest-zero-shot.json");
    let first: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    // 2 images x 1 context x 3 runs x 2 calls.
    assert_eq!(first["counters"]["completions"], 12);
    assert_eq!(first["counters"]["cache_hits"], 0);

    assert_success(&weldeval(dir.path(), &["run", "--strategy", "zero-shot"]));
    let second: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(second["counters"]["completions"], 0, "{second}");
    assert_eq!(second["counters"]["cache_hits"], 12);
}

#[test]
fn weldprompt_requires_the_earlier_stages() {
    let dir = TempDir::new().unwrap();
    let images = parity_images("w", "real_world", 2, &["A"]);
    let manifest = write_manifest(dir.path(), &["A"], &images);
    write_config(dir.path(), &manifest, "");

    let output = weldeval(dir.path(), &["run", "--strategy", "weldprompt"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("weldeval embed"), "{}", stderr_of(&output));

    assert_success(&weldeval(dir.path(), &["embed"]));
    let output = weldeval(dir.path(), &["run", "--strategy", "weldprompt"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr_of(&output).contains("zero-shot"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn evaluate_itemizes_missing_cells_with_exit_1() {
    let dir = TempDir::new().unwrap();
    let images = parity_images("m", "real_world", 2, &["A"]);
    let manifest = write_manifest(dir.path(), &["A"], &images);
    write_config(dir.path(), &manifest, "");
    assert_success(&weldeval(dir.path(), &["run", "--strategy", "zero-shot"]));

    let results_path = dir.path().join("out/results-zero-shot.jsonl");
    let full = std::fs::read_to_string(&results_path).unwrap();
    let truncated: Vec<&str> = full.lines().skip(1).collect();
    let partial_path = dir.path().join("out/partial.jsonl");
    std::fs::write(&partial_path, truncated.join("\n") + "\n").unwrap();

    let output = weldeval(
        dir.path(),
        &[
            "evaluate",
            "--strategy",
            "zero-shot",
            "--results",
            partial_path.to_str().unwrap(),
        ],
    );
    assert_eq!(output.status.code(), Some(1));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("missing prediction"), "{stderr}");
    assert!(stderr.contains("run 0"), "{stderr}");
}

#[test]
fn source_filter_suffixes_artifacts_end_to_end() {
    let dir = TempDir::new().unwrap();
    let mut images = parity_images("rw", "real_world", 3, &["A"]);
    images.extend(parity_images("on", "online", 3, &["A"]));
    let manifest = write_manifest(dir.path(), &["A"], &images);
    write_config(dir.path(), &manifest, "");

    assert_success(&weldeval(dir.path(), &["embed", "--source", "real_world"]));
    assert_success(&weldeval(
        dir.path(),
        &["run", "--strategy", "zero-shot", "--source", "real_world"],
    ));
    assert_success(&weldeval(
        dir.path(),
        &["evaluate", "--strategy", "zero-shot", "--source", "real_world"],
    ));
    let out = dir.path().join("out");
    assert!(out.join("embeddings.real_world.jsonl").is_file());
    assert!(out.join("results-zero-shot.real_world.jsonl").is_file());
    assert!(out.join("metrics-zero-shot.real_world.json").is_file());

    // The filtered run covers only real-world images: 3 x 1 x 3 results.
    let results =
        std::fs::read_to_string(out.join("results-zero-shot.real_world.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 9);
    assert!(!results.contains("on-0"));
}

#[test]
fn config_parse_failures_exit_2() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("weldeval.toml"), "not valid toml [").unwrap();
    let output = weldeval(dir.path(), &["stats"]);
    assert_eq!(output.status.code(), Some(2));
}
