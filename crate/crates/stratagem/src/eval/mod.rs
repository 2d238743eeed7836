//! Accuracy, coverage, and report assembly.
//!
//! ## Inputs
//! Inference runs write one JSON line per test example. Reports aggregate
//! those lines per method: overall accuracy, accuracy split by example
//! difficulty, and for multi-strategy methods the coverage curve (fraction
//! of examples at least one of the first m strategies gets right).

pub mod similarity;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::answers::answers_match;
use crate::corpus::{AnswerKind, Example, TaskSpec};
use crate::error::{Error, Result};
use crate::gateway::TokenCount;

/// Examples drawn together when sampling solvable example groups.
pub const DEFAULT_GROUP_SIZE: usize = 4;
/// Number of groups drawn.
pub const DEFAULT_GROUP_COUNT: usize = 5;
/// Examples picked by similarity ranking.
pub const DEFAULT_SIMILARITY_COUNT: usize = 4;

/// Coverage is reported at these strategy counts, clipped to the number of
/// strategies a method actually used.
pub const COVERAGE_POINTS: [usize; 5] = [1, 3, 5, 7, 9];

/// Fraction of predictions matching the gold answer. An abstention
/// (`None`) is incorrect. An empty slice has no accuracy.
pub fn accuracy(pairs: &[(Option<String>, String)], kind: AnswerKind) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::OutOfRange {
            what: "prediction count".to_string(),
            got: "0".to_string(),
        });
    }
    let correct = pairs
        .iter()
        .filter(|(predicted, gold)| {
            predicted
                .as_deref()
                .is_some_and(|p| answers_match(p, gold, kind))
        })
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Per-strategy correctness over a set of examples. Rows are strategies in
/// priority order, columns are examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessMatrix {
    pub strategy_ids: Vec<String>,
    pub example_ids: Vec<String>,
    pub cells: Vec<Vec<bool>>,
}

impl CorrectnessMatrix {
    /// Fraction of examples solved by at least one of the first `m`
    /// strategies.
    pub fn coverage(&self, m: usize) -> Result<f64> {
        if m == 0 || m > self.cells.len() {
            return Err(Error::OutOfRange {
                what: "strategy count m".to_string(),
                got: m.to_string(),
            });
        }
        if self.example_ids.is_empty() {
            return Err(Error::OutOfRange {
                what: "example count".to_string(),
                got: "0".to_string(),
            });
        }
        let covered = (0..self.example_ids.len())
            .filter(|&col| self.cells[..m].iter().any(|row| row[col]))
            .count();
        Ok(covered as f64 / self.example_ids.len() as f64)
    }
}

/// Draws `groups` groups of `group_size` distinct examples with a seeded
/// generator, so the same seed always picks the same groups. Within a
/// group examples are distinct; groups may overlap each other.
pub fn sample_example_groups(
    train: &[Example],
    group_size: usize,
    groups: usize,
    seed: u64,
) -> Result<Vec<Vec<Example>>> {
    use rand::SeedableRng;
    if group_size == 0 || group_size > train.len() {
        return Err(Error::OutOfRange {
            what: "group size".to_string(),
            got: group_size.to_string(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(groups);
    for _ in 0..groups {
        let picked = rand::seq::index::sample(&mut rng, train.len(), group_size);
        out.push(picked.iter().map(|i| train[i].clone()).collect());
    }
    Ok(out)
}

/// One strategy's (or sample's) verdict on one example, as stored in the
/// inference log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyVerdict {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub abstained: bool,
    pub correct: bool,
}

/// One JSON line of an inference log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub example_id: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_strategy: Vec<StrategyVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub correct: bool,
}

/// Aggregated results for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub accuracy: f64,
    pub examples: usize,
    /// Accuracy per difficulty tier, for tasks that annotate one.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_difficulty: BTreeMap<u8, f64>,
    /// Coverage at each reported strategy count.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub coverage: BTreeMap<usize, f64>,
    /// Token totals this run spent, when a ledger was available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Builds the correctness matrix from the per-strategy verdicts of a
/// record set. Records must agree on their strategy rows; methods without
/// per-strategy verdicts yield no matrix.
pub fn correctness_matrix(records: &[InferenceRecord]) -> Option<CorrectnessMatrix> {
    let first = records.iter().find(|r| !r.per_strategy.is_empty())?;
    let strategy_ids: Vec<String> = first
        .per_strategy
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.strategy_id
                .clone()
                .unwrap_or_else(|| format!("sample{}", i + 1))
        })
        .collect();
    let mut example_ids = Vec::new();
    let mut columns: Vec<Vec<bool>> = Vec::new();
    for record in records {
        if record.per_strategy.len() != strategy_ids.len() {
            return None;
        }
        example_ids.push(record.example_id.clone());
        columns.push(record.per_strategy.iter().map(|v| v.correct).collect());
    }
    let cells = (0..strategy_ids.len())
        .map(|row| columns.iter().map(|col| col[row]).collect())
        .collect();
    Some(CorrectnessMatrix {
        strategy_ids,
        example_ids,
        cells,
    })
}

/// Aggregates one method's records into a report. `cost_usd` is attached
/// as given; difficulty tiers come from the task's test split.
pub fn build_report(
    method: &str,
    records: &[InferenceRecord],
    task: &TaskSpec,
    cost_usd: Option<f64>,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::OutOfRange {
            what: format!("record count for method {method}"),
            got: "0".to_string(),
        });
    }
    let accuracy =
        records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64;

    let mut tiers: BTreeMap<u8, (usize, usize)> = BTreeMap::new();
    for record in records {
        let difficulty = task
            .example(&record.example_id)
            .and_then(|example| example.difficulty);
        if let Some(difficulty) = difficulty {
            let (correct, total) = tiers.entry(difficulty).or_insert((0, 0));
            *total += 1;
            if record.correct {
                *correct += 1;
            }
        }
    }
    let per_difficulty = tiers
        .into_iter()
        .map(|(tier, (correct, total))| (tier, correct as f64 / total as f64))
        .collect();

    let mut coverage = BTreeMap::new();
    if let Some(matrix) = correctness_matrix(records) {
        for m in COVERAGE_POINTS {
            if m <= matrix.cells.len() {
                coverage.insert(m, matrix.coverage(m)?);
            }
        }
    }

    Ok(EvalReport {
        method: method.to_string(),
        accuracy,
        examples: records.len(),
        per_difficulty,
        coverage,
        tokens: None,
        cost_usd,
        metadata: BTreeMap::new(),
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::WriteFile {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes report.md, report.csv, and coverage.csv under `dir`.
pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut md = String::from("# Results\n\n| method | accuracy | examples | cost (USD) |\n|---|---|---|---|\n");
    let mut csv = String::from("method,accuracy,examples,cost_usd\n");
    let mut coverage_csv = String::from("method,m,coverage\n");

    for report in reports {
        let cost = report
            .cost_usd
            .map(|c| format!("{c:.4}"))
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            md,
            "| {} | {:.4} | {} | {} |",
            report.method, report.accuracy, report.examples, cost
        );
        let _ = writeln!(
            csv,
            "{},{:.6},{},{}",
            report.method,
            report.accuracy,
            report.examples,
            report
                .cost_usd
                .map(|c| format!("{c:.6}"))
                .unwrap_or_default()
        );
        for (m, value) in &report.coverage {
            let _ = writeln!(coverage_csv, "{},{m},{value:.6}", report.method);
        }
    }

    let with_difficulty: Vec<&EvalReport> = reports
        .iter()
        .filter(|r| !r.per_difficulty.is_empty())
        .collect();
    if !with_difficulty.is_empty() {
        md.push_str("\n## Accuracy by difficulty\n\n| method | difficulty | accuracy |\n|---|---|---|\n");
        for report in &with_difficulty {
            for (tier, value) in &report.per_difficulty {
                let _ = writeln!(md, "| {} | {tier} | {value:.4} |", report.method);
            }
        }
    }
    let with_coverage: Vec<&EvalReport> =
        reports.iter().filter(|r| !r.coverage.is_empty()).collect();
    if !with_coverage.is_empty() {
        md.push_str("\n## Coverage\n\n| method | m | coverage |\n|---|---|---|\n");
        for report in &with_coverage {
            for (m, value) in &report.coverage {
                let _ = writeln!(md, "| {} | {m} | {value:.4} |", report.method);
            }
        }
    }

    // Spend is recorded per run, so one block covers every method.
    if let Some(report) = reports.iter().find(|r| r.tokens.is_some()) {
        let tokens = report.tokens.expect("tokens present");
        md.push_str("\n## Cost\n\n");
        let _ = writeln!(
            md,
            "- input tokens: {}\n- output tokens: {}",
            tokens.input_tokens, tokens.output_tokens
        );
        if let Some(cost) = report.cost_usd {
            let _ = writeln!(md, "- estimated cost: ${cost:.4}");
        }
    }

    write_file(&dir.join("report.md"), &md)?;
    write_file(&dir.join("report.csv"), &csv)?;
    write_file(&dir.join("coverage.csv"), &coverage_csv)
}
