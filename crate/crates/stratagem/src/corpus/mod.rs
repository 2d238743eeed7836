//! Task definitions and datasets.
//!
//! A task is described by a small JSON manifest (name, prose definition,
//! answer kind, dataset path) and a JSONL dataset where every line is one
//! example tagged with its split. Seed examples drive strategy execution,
//! validation examples score candidate prompts, test examples are held out
//! for inference.

pub mod answers;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which benchmark split an example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Seed,
    Validation,
    Test,
}

/// How gold answers for a task are normalized and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Number,
    FractionOrExpression,
    BooleanYesNo,
    DateMmddyyyy,
    WordSequence,
    FreeText,
}

impl fmt::Display for AnswerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AnswerKind::Number => "number",
            AnswerKind::FractionOrExpression => "fraction_or_expression",
            AnswerKind::BooleanYesNo => "boolean_yes_no",
            AnswerKind::DateMmddyyyy => "date_mmddyyyy",
            AnswerKind::WordSequence => "word_sequence",
            AnswerKind::FreeText => "free_text",
        };
        f.write_str(name)
    }
}

/// One dataset example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<u8>,
    pub split: Split,
}

/// A loaded task: definition text plus its examples grouped by split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub definition: String,
    pub answer_kind: AnswerKind,
    /// Marker that introduces the final answer in model output.
    pub marker: String,
    pub seed: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

impl TaskSpec {
    /// Looks an example up by id across all splits.
    pub fn example(&self, id: &str) -> Option<&Example> {
        self.seed
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .find(|e| e.id == id)
    }
}

#[derive(Deserialize)]
struct TaskManifest {
    name: String,
    definition: String,
    answer_kind: AnswerKind,
    dataset: PathBuf,
    #[serde(default)]
    marker: Option<String>,
}

/// Loads a task manifest and its JSONL dataset. The dataset path is resolved
/// relative to the manifest file. Split sizes are logged; an empty seed
/// split is an error because nothing downstream can run without it.
pub fn load_task(manifest_path: &Path) -> Result<TaskSpec> {
    let raw = fs::read_to_string(manifest_path).map_err(|source| Error::ReadFile {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: TaskManifest =
        serde_json::from_str(&raw).map_err(|e| Error::ParseFile {
            path: manifest_path.to_path_buf(),
            message: e.to_string(),
        })?;

    let dataset_path = if manifest.dataset.is_absolute() {
        manifest.dataset.clone()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.dataset)
    };
    let data = fs::read_to_string(&dataset_path).map_err(|source| Error::ReadFile {
        path: dataset_path.clone(),
        source,
    })?;

    let mut seen = HashSet::new();
    let mut seed = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (idx, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example: Example =
            serde_json::from_str(line).map_err(|e| Error::DatasetParse {
                path: dataset_path.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(example.id.clone()) {
            return Err(Error::DuplicateExampleId {
                id: example.id,
                path: dataset_path,
            });
        }
        match example.split {
            Split::Seed => seed.push(example),
            Split::Validation => validation.push(example),
            Split::Test => test.push(example),
        }
    }

    if seed.is_empty() {
        return Err(Error::InvalidTask {
            name: manifest.name,
            message: format!("no seed examples in {}", dataset_path.display()),
        });
    }
    log::info!(
        "task {}: {} seed, {} validation, {} test examples",
        manifest.name,
        seed.len(),
        validation.len(),
        test.len()
    );

    Ok(TaskSpec {
        name: manifest.name,
        definition: manifest.definition,
        answer_kind: manifest.answer_kind,
        marker: manifest
            .marker
            .unwrap_or_else(|| answers::ANSWER_MARKER.to_string()),
        seed,
        validation,
        test,
    })
}
