//! Shared helpers for binary-level tests: fixture manifests, configs, and
//! invocations of the weldeval executable.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use sha2::{Digest, Sha256};

pub fn image_bytes(id: &str) -> Vec<u8> {
    format!("fixture-image:{id}").into_bytes()
}

pub fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The deterministic verdict the mock backend gives an image: acceptable
/// iff the first hex digit of its content hash is even.
pub fn parity_acceptable(content_sha: &str) -> bool {
    let first = content_sha.as_bytes()[0];
    let value = (first as char).to_digit(16).expect("hex digest");
    value % 2 == 0
}

pub struct FixtureSpec {
    pub id: String,
    pub source: &'static str,
    pub annotation_overlay: bool,
    pub labels: Vec<(String, bool)>,
}

/// Images whose expert labels equal the mock backend's parity verdicts in
/// every context, making the mock a perfect classifier on them.
pub fn parity_images(
    prefix: &str,
    source: &'static str,
    total: usize,
    contexts: &[&str],
) -> Vec<FixtureSpec> {
    (0..total)
        .map(|i| {
            let id = format!("{prefix}-{i:03}");
            let verdict = parity_acceptable(&sha_hex(&image_bytes(&id)));
            FixtureSpec {
                id,
                source,
                annotation_overlay: false,
                labels: contexts.iter().map(|c| (c.to_string(), verdict)).collect(),
            }
        })
        .collect()
}

/// Images with exact per-context positive counts: image i is positive in a
/// context iff i < that context's count.
pub fn counted_images(
    prefix: &str,
    source: &'static str,
    total: usize,
    positives: &[(&str, usize)],
) -> Vec<FixtureSpec> {
    (0..total)
        .map(|i| FixtureSpec {
            id: format!("{prefix}-{i:03}"),
            source,
            annotation_overlay: false,
            labels: positives
                .iter()
                .map(|(context, pos)| (context.to_string(), i < *pos))
                .collect(),
        })
        .collect()
}

/// Write image files and a manifest; returns the manifest path.
pub fn write_manifest(dir: &Path, contexts: &[&str], images: &[FixtureSpec]) -> PathBuf {
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir).unwrap();
    let mut entries = Vec::new();
    for spec in images {
        let file = image_dir.join(format!("{}.png", spec.id));
        std::fs::write(&file, image_bytes(&spec.id)).unwrap();
        entries.push(json!({
            "id": spec.id,
            "path": format!("images/{}.png", spec.id),
            "source": spec.source,
            "annotation_overlay": spec.annotation_overlay,
            "labels": spec
                .labels
                .iter()
                .map(|(context, acceptable)| json!({
                    "context": context,
                    "acceptable": acceptable,
                }))
                .collect::<Vec<_>>(),
        }));
    }
    let manifest = json!({ "contexts": contexts, "images": entries });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

/// Write a pipeline config pointing at `manifest`, with the mock model
/// backend and the hash embedder. `extra` is appended verbatim.
pub fn write_config(dir: &Path, manifest: &Path, extra: &str) -> PathBuf {
    let body = format!(
        "[dataset]\nmanifest = {manifest:?}\n\n\
         [embedding]\nbackend = \"hash\"\ndim = 32\n\n\
         [run]\nruns = 3\nk = 5\nseed_base = 7\nparallelism = 2\n\
         cache_dir = \"cache\"\noutput_dir = \"out\"\n{extra}",
        manifest = manifest.display().to_string(),
    );
    let path = dir.join("weldeval.toml");
    std::fs::write(&path, body).unwrap();
    path
}

pub fn weldeval(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weldeval"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("weldeval binary runs")
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        stdout_of(output),
        stderr_of(output)
    );
}
