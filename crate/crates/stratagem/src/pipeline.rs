//! Strategy qualification pipeline.
//!
//! ## Loop shape
//! Iteration 1 generates n strategies and executes each on the seed split.
//! Strategies whose execution accuracy reaches the threshold enter the
//! qualified cache; the rest stay active. Each later iteration optimizes
//! every active strategy and executes the children, until the cache holds
//! k strategies, the iteration budget runs out, or nothing is left to
//! optimize. With a budget of max_iterations there are at most
//! max_iterations - 1 optimization rounds. If the cache ends short of k it
//! is backfilled with the best remaining executed strategies. The top k by
//! execution accuracy are then scored on the validation split and sorted
//! by validation accuracy.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{Agents, CandidateStrategy, ExecutionResult, Strategy, StrategyOrigin};
use crate::corpus::TaskSpec;
use crate::error::{Error, Result};
use crate::gateway::UsageSnapshot;
use crate::prompts::strategy::assemble_strategy_prompt;

/// Knobs for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Strategies sampled by the generator.
    pub n: usize,
    /// Strategies kept for validation scoring.
    pub k: usize,
    /// Execution accuracy needed to qualify.
    pub threshold: f64,
    /// Iteration budget, counting the generation round as iteration 1.
    pub max_iterations: u32,
    pub gen_temperature: f64,
    pub exec_temperature: f64,
    pub optimize_temperature: f64,
    pub eval_temperature: f64,
    /// Strategies consulted by vote-based inference.
    pub top_m_inference: usize,
    /// Cap on validation examples scored per strategy.
    pub validation_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 30,
            k: 10,
            threshold: 0.75,
            max_iterations: 3,
            gen_temperature: 1.0,
            exec_temperature: 0.0,
            optimize_temperature: 0.0,
            eval_temperature: 0.0,
            top_m_inference: 3,
            validation_size: 100,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad<T>(what: &str, got: impl ToString) -> Result<T> {
            Err(Error::OutOfRange {
                what: what.to_string(),
                got: got.to_string(),
            })
        }
        if self.n == 0 {
            return bad("strategy sample count n", self.n);
        }
        if self.k == 0 {
            return bad("qualified strategy count k", self.k);
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("qualification threshold", self.threshold);
        }
        if self.max_iterations == 0 {
            return bad("iteration budget", self.max_iterations);
        }
        for (name, t) in [
            ("generation temperature", self.gen_temperature),
            ("execution temperature", self.exec_temperature),
            ("optimization temperature", self.optimize_temperature),
            ("evaluation temperature", self.eval_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return bad(name, t);
            }
        }
        if self.top_m_inference == 0 {
            return bad("inference strategy count", self.top_m_inference);
        }
        if self.validation_size == 0 {
            return bad("validation size", self.validation_size);
        }
        Ok(())
    }
}

/// Threshold test used by the loop.
pub fn qualify(eacc: f64, threshold: f64) -> bool {
    eacc >= threshold
}

/// A strategy with its seed-split execution result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedStrategy {
    pub strategy: Strategy,
    pub result: ExecutionResult,
}

/// Append-only record of what the pipeline did, written as one JSON line
/// per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Generated {
        iteration: u32,
        strategy_id: String,
    },
    Executed {
        iteration: u32,
        strategy_id: String,
        eacc: f64,
    },
    Qualified {
        iteration: u32,
        strategy_id: String,
        eacc: f64,
    },
    Optimized {
        iteration: u32,
        parent_id: String,
        strategy_id: String,
    },
    Backfilled {
        strategy_id: String,
        eacc: f64,
    },
    Ranked {
        ids: Vec<String>,
    },
    Evaluated {
        strategy_id: String,
        vacc: f64,
    },
}

/// Final pipeline product: evaluated candidates in descending validation
/// accuracy order, plus the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub candidates: Vec<CandidateStrategy>,
    pub events: Vec<Event>,
}

/// Ranks by execution accuracy, breaking ties toward earlier iterations
/// and then lower ids, and keeps the best `k`.
pub fn rank_top_k(pool: &[ExecutedStrategy], k: usize) -> Vec<ExecutedStrategy> {
    let mut ranked = pool.to_vec();
    ranked.sort_by(rank_order);
    ranked.truncate(k);
    ranked
}

fn rank_order(a: &ExecutedStrategy, b: &ExecutedStrategy) -> Ordering {
    b.result
        .eacc
        .total_cmp(&a.result.eacc)
        .then(a.strategy.created_iteration.cmp(&b.strategy.created_iteration))
        .then(a.strategy.id.cmp(&b.strategy.id))
}

/// Runs the full qualification loop and evaluation.
pub fn run(
    agents: &Agents,
    task: &TaskSpec,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    config.validate()?;
    let mut events = Vec::new();
    let mut cache: Vec<ExecutedStrategy> = Vec::new();
    let mut active: Vec<ExecutedStrategy> = Vec::new();
    let mut archive: Vec<ExecutedStrategy> = Vec::new();
    let mut iteration = 1u32;

    let strategies = agents.generate_strategies(task, config.n, config.gen_temperature)?;
    for strategy in &strategies {
        events.push(Event::Generated {
            iteration,
            strategy_id: strategy.id.clone(),
        });
    }
    for strategy in strategies {
        let result = agents.execute_strategy(task, &strategy, config.exec_temperature)?;
        events.push(Event::Executed {
            iteration,
            strategy_id: strategy.id.clone(),
            eacc: result.eacc,
        });
        let executed = ExecutedStrategy { strategy, result };
        archive.push(executed.clone());
        if qualify(executed.result.eacc, config.threshold) {
            events.push(Event::Qualified {
                iteration,
                strategy_id: executed.strategy.id.clone(),
                eacc: executed.result.eacc,
            });
            cache.push(executed);
        } else {
            active.push(executed);
        }
    }

    while cache.len() < config.k && iteration < config.max_iterations && !active.is_empty() {
        iteration += 1;
        let mut next_active = Vec::new();
        for parent in active {
            let child = match agents.optimize_strategy(
                task,
                &parent.strategy,
                &parent.result,
                config.optimize_temperature,
            ) {
                Ok(child) => child,
                Err(e @ (Error::OptimizationFailed { .. } | Error::NothingToOptimize { .. })) => {
                    log::warn!("dropping {}: {e}", parent.strategy.id);
                    continue;
                }
                Err(e) => return Err(e),
            };
            events.push(Event::Optimized {
                iteration,
                parent_id: parent.strategy.id.clone(),
                strategy_id: child.id.clone(),
            });
            let result = agents.execute_strategy(task, &child, config.exec_temperature)?;
            events.push(Event::Executed {
                iteration,
                strategy_id: child.id.clone(),
                eacc: result.eacc,
            });
            let executed = ExecutedStrategy {
                strategy: child,
                result,
            };
            archive.push(executed.clone());
            if qualify(executed.result.eacc, config.threshold) {
                events.push(Event::Qualified {
                    iteration,
                    strategy_id: executed.strategy.id.clone(),
                    eacc: executed.result.eacc,
                });
                cache.push(executed);
            } else {
                next_active.push(executed);
            }
        }
        active = next_active;
    }

    // Short cache gets the best remaining executed strategies, qualified
    // or not.
    let mut pool = cache;
    if pool.len() < config.k {
        let taken: BTreeSet<String> = pool.iter().map(|e| e.strategy.id.clone()).collect();
        let mut rest: Vec<ExecutedStrategy> = archive
            .iter()
            .filter(|e| !taken.contains(&e.strategy.id))
            .cloned()
            .collect();
        rest.sort_by(rank_order);
        for executed in rest {
            if pool.len() == config.k {
                break;
            }
            events.push(Event::Backfilled {
                strategy_id: executed.strategy.id.clone(),
                eacc: executed.result.eacc,
            });
            pool.push(executed);
        }
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }

    let ranked = rank_top_k(&pool, config.k);
    events.push(Event::Ranked {
        ids: ranked.iter().map(|e| e.strategy.id.clone()).collect(),
    });

    let validation = &task.validation[..task.validation.len().min(config.validation_size)];
    let mut candidates = Vec::with_capacity(ranked.len());
    for executed in ranked {
        let prompt = assemble_strategy_prompt(&executed.strategy, &executed.result)?;
        let vacc = agents.evaluate_strategy(task, &prompt, validation, config.eval_temperature)?;
        events.push(Event::Evaluated {
            strategy_id: executed.strategy.id.clone(),
            vacc,
        });
        candidates.push(CandidateStrategy {
            strategy: executed.strategy,
            result: executed.result,
            prompt,
            vacc: Some(vacc),
        });
    }
    candidates.sort_by(|a, b| {
        b.vacc
            .unwrap_or(0.0)
            .total_cmp(&a.vacc.unwrap_or(0.0))
            .then(b.result.eacc.total_cmp(&a.result.eacc))
            .then(a.strategy.id.cmp(&b.strategy.id))
    });

    Ok(PipelineOutcome { candidates, events })
}

/// Summary row stored in candidates.json, one per kept strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMeta {
    pub id: String,
    pub origin: StrategyOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub created_iteration: u32,
    pub eacc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vacc: Option<f64>,
}

pub fn candidates_path(dir: &Path) -> PathBuf {
    dir.join("candidates.json")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::WriteFile {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::ReadFile {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, raw: &str) -> Result<T> {
    serde_json::from_str(raw).map_err(|e| Error::ParseFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes the run artifacts under `dir`: per-strategy text and execution
/// files, the candidate summary, the event log, and the usage ledger.
pub fn save_run(dir: &Path, outcome: &PipelineOutcome, usage: &UsageSnapshot) -> Result<()> {
    let strategies = dir.join("strategies");
    let executions = dir.join("executions");
    fs::create_dir_all(&strategies)?;
    fs::create_dir_all(&executions)?;

    let mut metas = Vec::with_capacity(outcome.candidates.len());
    for candidate in &outcome.candidates {
        let strategy = &candidate.strategy;
        write_text(
            &strategies.join(format!("{}.txt", strategy.id)),
            &strategy.text,
        )?;
        write_text(
            &executions.join(format!("{}.json", strategy.id)),
            &serde_json::to_string_pretty(&candidate.result)?,
        )?;
        metas.push(CandidateMeta {
            id: strategy.id.clone(),
            origin: strategy.origin,
            parent_id: strategy.parent_id.clone(),
            created_iteration: strategy.created_iteration,
            eacc: candidate.result.eacc,
            vacc: candidate.vacc,
        });
    }
    write_text(
        &candidates_path(dir),
        &serde_json::to_string_pretty(&metas)?,
    )?;

    let mut log = String::new();
    for event in &outcome.events {
        log.push_str(&serde_json::to_string(event)?);
        log.push('\n');
    }
    write_text(&dir.join("events.jsonl"), &log)?;
    save_usage(dir, usage)
}

pub fn save_usage(dir: &Path, usage: &UsageSnapshot) -> Result<()> {
    write_text(
        &dir.join("ledger.json"),
        &serde_json::to_string_pretty(usage)?,
    )
}

/// Reads back the candidates saved by [`save_run`], reassembling each
/// few-shot prompt from the stored strategy and execution records. Makes
/// no model calls.
pub fn load_candidates(dir: &Path) -> Result<Vec<CandidateStrategy>> {
    let meta_path = candidates_path(dir);
    if !meta_path.exists() {
        return Err(Error::MissingArtifact { path: meta_path });
    }
    let metas: Vec<CandidateMeta> = parse_json(&meta_path, &read_text(&meta_path)?)?;

    let mut candidates = Vec::with_capacity(metas.len());
    for meta in metas {
        let text_path = dir.join("strategies").join(format!("{}.txt", meta.id));
        if !text_path.exists() {
            return Err(Error::MissingArtifact { path: text_path });
        }
        let exec_path = dir.join("executions").join(format!("{}.json", meta.id));
        if !exec_path.exists() {
            return Err(Error::MissingArtifact { path: exec_path });
        }
        let strategy = Strategy {
            id: meta.id,
            text: read_text(&text_path)?,
            origin: meta.origin,
            parent_id: meta.parent_id,
            created_iteration: meta.created_iteration,
        };
        let result: ExecutionResult = parse_json(&exec_path, &read_text(&exec_path)?)?;
        let prompt = assemble_strategy_prompt(&strategy, &result)?;
        candidates.push(CandidateStrategy {
            strategy,
            result,
            prompt,
            vacc: meta.vacc,
        });
    }
    Ok(candidates)
}

pub fn load_events(dir: &Path) -> Result<Vec<Event>> {
    let path = dir.join("events.jsonl");
    if !path.exists() {
        return Err(Error::MissingArtifact { path });
    }
    let mut events = Vec::new();
    for line in read_text(&path)?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_json(&path, line)?);
    }
    Ok(events)
}

/// Reads the saved ledger; a run directory without one counts as empty
/// usage.
pub fn load_usage(dir: &Path) -> Result<UsageSnapshot> {
    let path = dir.join("ledger.json");
    if !path.exists() {
        return Ok(UsageSnapshot::default());
    }
    parse_json(&path, &read_text(&path)?)
}
