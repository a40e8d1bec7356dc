//! JSONL task files and sequence manifests.
//!
//! Task file: one JSON object per line with fields
//! `{"text": string, "label": string, "split": "train"|"val"|"test"}`
//! (`split` optional, default `"train"`). Manifest: a JSON object
//! `{"order_id": string, "tasks": [paths]}` with paths relative to the
//! manifest file.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize_hash;
use super::{Example, Provenance, TaskSequence, TaskSpec};
use crate::error::{Error, Result};

/// Load one task from a JSONL file. Labels are indexed by first appearance
/// in the train/val splits; a label seen only in test is an error.
pub fn load_jsonl_task(
    path: &Path,
    task_id: usize,
    label_field: &str,
    text_field: &str,
    vocab_size: usize,
    max_text_len: usize,
) -> Result<TaskSpec> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows: Vec<(String, String, String)> = Vec::new(); // (text, label, split)
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        let get = |field: &str| -> Result<String> {
            match value.get(field) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(other) => Ok(other.to_string()),
                None => Err(Error::MalformedLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("missing field {field:?}"),
                }),
            }
        };
        let text = get(text_field)?;
        let label = get(label_field)?;
        let split = match value.get("split") {
            Some(serde_json::Value::String(s)) => s.clone(),
            None => "train".to_string(),
            Some(other) => {
                return Err(Error::MalformedLine {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("split must be a string, got {other}"),
                })
            }
        };
        if !matches!(split.as_str(), "train" | "val" | "test") {
            return Err(Error::MalformedLine {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("unknown split {split:?}"),
            });
        }
        rows.push((text, label, split));
    }

    let mut labels: Vec<String> = Vec::new();
    for (_, label, split) in &rows {
        if split != "test" && !labels.contains(label) {
            labels.push(label.clone());
        }
    }
    let mut task = TaskSpec {
        task_id,
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("task{task_id}")),
        labels: labels.clone(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        provenance: Provenance::File,
    };
    for (text, label, split) in rows {
        let label_index = match labels.iter().position(|l| *l == label) {
            Some(i) => i,
            None => {
                return Err(Error::UnknownLabel {
                    label,
                    split: "test",
                })
            }
        };
        let example = Example {
            token_ids: tokenize_hash(&text, vocab_size, max_text_len),
            text,
            label: label_index,
        };
        match split.as_str() {
            "train" => task.train.push(example),
            "val" => task.val.push(example),
            _ => task.test.push(example),
        }
    }
    Ok(task)
}

/// Write a task back out as JSONL with explicit split fields.
pub fn write_jsonl_task(task: &TaskSpec, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let mut emit = |examples: &[Example], split: &str| -> Result<()> {
        for ex in examples {
            let line = serde_json::json!({
                "text": ex.text,
                "label": task.labels[ex.label],
                "split": split,
            });
            writeln!(file, "{line}")?;
        }
        Ok(())
    };
    emit(&task.train, "train")?;
    emit(&task.val, "val")?;
    emit(&task.test, "test")?;
    Ok(())
}

/// Manifest listing an order id and its task files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub order_id: String,
    pub tasks: Vec<String>,
}

/// Load a manifest and all its tasks. Task ids are 1-based positions.
pub fn load_manifest(path: &Path, vocab_size: usize, max_text_len: usize) -> Result<TaskSequence> {
    let manifest: SequenceManifest = serde_json::from_reader(std::fs::File::open(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut tasks = Vec::with_capacity(manifest.tasks.len());
    for (i, rel) in manifest.tasks.iter().enumerate() {
        tasks.push(load_jsonl_task(
            &base.join(rel),
            i + 1,
            "label",
            "text",
            vocab_size,
            max_text_len,
        )?);
    }
    let sequence = TaskSequence {
        order_id: manifest.order_id,
        tasks,
    };
    sequence.validate()?;
    Ok(sequence)
}

/// Write a sequence as one JSONL file per task plus a manifest.
pub fn write_manifest(sequence: &TaskSequence, dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut task_files = Vec::new();
    for task in &sequence.tasks {
        let file = format!("task{}.jsonl", task.task_id);
        write_jsonl_task(task, &dir.join(&file))?;
        task_files.push(file);
    }
    let manifest = SequenceManifest {
        order_id: sequence.order_id.clone(),
        tasks: task_files,
    };
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    #[test]
    fn three_line_file_two_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            dir.path(),
            "t.jsonl",
            &[
                r#"{"text": "good movie", "label": "pos"}"#,
                r#"{"text": "bad movie", "label": "neg"}"#,
                r#"{"text": "great movie", "label": "pos"}"#,
            ],
        );
        let task = load_jsonl_task(&path, 1, "label", "text", 512, 32).unwrap();
        assert_eq!(task.labels, vec!["pos", "neg"]);
        assert_eq!(task.train.len(), 3);
    }

    #[test]
    fn duplicate_lines_are_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"text": "same", "label": "a"}"#;
        let path = write_lines(dir.path(), "t.jsonl", &[line, line]);
        let task = load_jsonl_task(&path, 1, "label", "text", 512, 32).unwrap();
        assert_eq!(task.train.len(), 2);
        assert_eq!(task.train[0], task.train[1]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            dir.path(),
            "t.jsonl",
            &[r#"{"text": "ok", "label": "a"}"#, "{not json"],
        );
        let err = load_jsonl_task(&path, 1, "label", "text", 512, 32).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn unknown_test_label_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            dir.path(),
            "t.jsonl",
            &[
                r#"{"text": "x", "label": "a", "split": "train"}"#,
                r#"{"text": "y", "label": "b", "split": "test"}"#,
            ],
        );
        let err = load_jsonl_task(&path, 1, "label", "text", 512, 32).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { .. }));
    }

    #[test]
    fn export_reload_roundtrip() {
        let suite = super::super::gen_synthetic_suite(2, 2, 8, 3, false);
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(&suite, dir.path()).unwrap();
        let loaded = load_manifest(&manifest, 512, 64).unwrap();
        assert_eq!(loaded.order_id, suite.order_id);
        assert_eq!(loaded.tasks.len(), suite.tasks.len());
        for (a, b) in suite.tasks.iter().zip(&loaded.tasks) {
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.train, b.train);
            assert_eq!(a.test, b.test);
        }
    }
}
