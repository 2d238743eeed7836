//! The four model-backed agents: strategy generation, execution,
//! optimization, and evaluation.
//!
//! ## Flow
//! Generation samples n candidate strategies at high temperature. Execution
//! runs one strategy over every seed example with greedy decoding and
//! scores it by execution accuracy. Optimization examines a strategy's
//! mistakes, asks for an analysis, then asks for a modified strategy.
//! Evaluation scores the assembled few-shot prompt on the validation split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::answers::{answers_match, extract_answer};
use crate::corpus::{Example, TaskSpec};
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, Role};
use crate::prompts::strategy::StrategyPrompt;
use crate::prompts::{format_qa_example, format_task_examples, render, TemplateId};
use crate::workers::par_map;

/// Where a strategy came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyOrigin {
    Generated,
    Optimized,
}

/// A numbered-list strategy for solving a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub id: String,
    pub text: String,
    pub origin: StrategyOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub created_iteration: u32,
}

/// Outcome of running a strategy on one seed example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub example_id: String,
    pub question: String,
    pub solution: String,
    /// Answer pulled from the reply, absent when the marker was missing.
    pub extracted_answer: Option<String>,
    pub correct: bool,
}

/// A strategy's execution records over the seed split, in seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub strategy_id: String,
    pub records: Vec<ExecutionRecord>,
    /// Fraction of seed examples answered correctly.
    pub eacc: f64,
}

/// Strategy packaged with its execution result, prompt, and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStrategy {
    pub strategy: Strategy,
    pub result: ExecutionResult,
    pub prompt: StrategyPrompt,
    /// Validation accuracy, set once the evaluator has run.
    pub vacc: Option<f64>,
}

/// Shared call settings for all agent operations.
pub struct Agents<'a> {
    pub gateway: &'a Gateway,
    pub model_id: String,
    pub max_tokens: u32,
    pub workers: usize,
}

impl Agents<'_> {
    fn request(&self, prompt: String, temperature: f64, sample_index: u32) -> ChatRequest {
        ChatRequest::sampled(&self.model_id, prompt, temperature, sample_index)
            .with_max_tokens(self.max_tokens)
    }

    /// Samples `n` strategies for `task`. Duplicate texts are collapsed and
    /// failed samples are skipped with a warning; only a total loss is an
    /// error. Ids are assigned in sample order: s1, s2, ...
    pub fn generate_strategies(
        &self,
        task: &TaskSpec,
        n: usize,
        temperature: f64,
    ) -> Result<Vec<Strategy>> {
        let prompt = render(
            TemplateId::Generator,
            &BTreeMap::from([
                ("task definition", task.definition.clone()),
                ("task examples", format_task_examples(&task.seed)),
            ]),
        )?;
        let indices: Vec<u32> = (0..n as u32).collect();
        let replies = par_map(&indices, self.workers, |_, &sample_index| {
            let request = self.request(prompt.clone(), temperature, sample_index);
            match self.gateway.complete(Role::Generator, &request) {
                Ok(completion) => Ok(Some(completion.text.trim().to_string())),
                Err(e) => {
                    log::warn!("generation sample {sample_index} failed: {e}");
                    Ok(None)
                }
            }
        })?;

        let mut seen = std::collections::HashSet::new();
        let mut strategies = Vec::new();
        for text in replies.into_iter().flatten() {
            if text.is_empty() {
                log::warn!("generation sample returned empty text, skipped");
                continue;
            }
            if !seen.insert(text.clone()) {
                log::info!("duplicate strategy text collapsed");
                continue;
            }
            strategies.push(Strategy {
                id: format!("s{}", strategies.len() + 1),
                text,
                origin: StrategyOrigin::Generated,
                parent_id: None,
                created_iteration: 1,
            });
        }
        if strategies.is_empty() {
            return Err(Error::GenerationFailed { attempts: n });
        }
        Ok(strategies)
    }

    /// Runs `strategy` over every seed example with greedy decoding. A
    /// missing answer marker scores the record incorrect rather than
    /// failing the call.
    pub fn execute_strategy(
        &self,
        task: &TaskSpec,
        strategy: &Strategy,
        temperature: f64,
    ) -> Result<ExecutionResult> {
        let records = par_map(&task.seed, self.workers, |_, example| {
            let prompt = render(
                TemplateId::Executor,
                &BTreeMap::from([
                    ("task definition", task.definition.clone()),
                    ("example", format_qa_example(example)),
                    ("strategy", strategy.text.clone()),
                ]),
            )?;
            let request = self.request(prompt, temperature, 0);
            let completion = self.gateway.complete(Role::Executor, &request)?;
            Ok(record_from_reply(task, example, &completion.text))
        })?;
        let correct = records.iter().filter(|r| r.correct).count();
        Ok(ExecutionResult {
            strategy_id: strategy.id.clone(),
            eacc: correct as f64 / records.len().max(1) as f64,
            records,
        })
    }

    /// Improves an unqualified strategy in three stages: deterministic
    /// examination text over every seed record, one analysis call, one
    /// modification call. An empty modification reply drops the strategy.
    pub fn optimize_strategy(
        &self,
        task: &TaskSpec,
        strategy: &Strategy,
        result: &ExecutionResult,
        temperature: f64,
    ) -> Result<Strategy> {
        if result.records.iter().all(|r| r.correct) {
            return Err(Error::NothingToOptimize {
                strategy_id: strategy.id.clone(),
            });
        }

        let mut examinations = Vec::with_capacity(result.records.len());
        for record in &result.records {
            let example = task.example(&record.example_id).ok_or_else(|| {
                Error::InvalidTask {
                    name: task.name.clone(),
                    message: format!("execution record references unknown example {}", record.example_id),
                }
            })?;
            examinations.push(render(
                TemplateId::OptimizerExamination,
                &BTreeMap::from([
                    ("example", format_qa_example(example)),
                    ("execution result", format_execution(record)),
                    (
                        "predicted answer",
                        record
                            .extracted_answer
                            .clone()
                            .unwrap_or_else(|| "none".to_string()),
                    ),
                    ("gold answer", example.answer.clone()),
                    (
                        "different or the same",
                        if record.correct { "the same" } else { "different" }.to_string(),
                    ),
                ]),
            )?);
        }

        let analysis_prompt = render(
            TemplateId::OptimizerAnalysis,
            &BTreeMap::from([
                ("task definition", task.definition.clone()),
                ("strategy", strategy.text.clone()),
                ("examination results", examinations.join("\n\n")),
            ]),
        )?;
        let analysis = self
            .gateway
            .complete(Role::Optimizer, &self.request(analysis_prompt, temperature, 0))?;

        let modification_prompt = render(
            TemplateId::OptimizerModification,
            &BTreeMap::from([
                ("task definition", task.definition.clone()),
                ("task examples", format_task_examples(&task.seed)),
                ("original strategy", strategy.text.clone()),
                ("feedback", analysis.text.trim().to_string()),
            ]),
        )?;
        let modified = self
            .gateway
            .complete(Role::Optimizer, &self.request(modification_prompt, temperature, 0))?;
        let text = modified.text.trim().to_string();
        if text.is_empty() {
            return Err(Error::OptimizationFailed {
                strategy_id: strategy.id.clone(),
            });
        }

        let created_iteration = strategy.created_iteration + 1;
        Ok(Strategy {
            id: format!("{}o{created_iteration}", strategy.id),
            text,
            origin: StrategyOrigin::Optimized,
            parent_id: Some(strategy.id.clone()),
            created_iteration,
        })
    }

    /// Scores `prompt` on `validation` with greedy decoding and returns the
    /// fraction answered correctly.
    pub fn evaluate_strategy(
        &self,
        task: &TaskSpec,
        prompt: &StrategyPrompt,
        validation: &[Example],
        temperature: f64,
    ) -> Result<f64> {
        if validation.is_empty() {
            return Err(Error::InvalidTask {
                name: task.name.clone(),
                message: "validation split is empty".to_string(),
            });
        }
        let verdicts = par_map(validation, self.workers, |_, example| {
            let text = prompt.render_with_question(&example.question);
            let request = self.request(text, temperature, 0);
            let completion = self.gateway.complete(Role::Evaluator, &request)?;
            let correct = extract_answer(&completion.text, &task.marker)
                .map(|answer| answers_match(&answer, &example.answer, task.answer_kind))
                .unwrap_or(false);
            Ok(correct)
        })?;
        let correct = verdicts.iter().filter(|v| **v).count();
        Ok(correct as f64 / verdicts.len() as f64)
    }
}

/// Splits a sectioned reply into the text under each header. Headers match
/// at line starts; content runs until the next header.
pub fn split_sections<'h>(reply: &str, headers: &[&'h str]) -> BTreeMap<&'h str, String> {
    let mut sections: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for line in reply.lines() {
        let trimmed = line.trim_start();
        if let Some(header) = headers
            .iter()
            .find(|h| trimmed.starts_with(&format!("{h}:")))
        {
            current = Some(header);
            let after = trimmed[header.len() + 1..].trim_start();
            sections.entry(header).or_default().push(after);
        } else if let Some(header) = current {
            sections.entry(header).or_default().push(line);
        }
    }
    sections
        .into_iter()
        .map(|(header, lines)| (header, lines.join("\n").trim().to_string()))
        .collect()
}

fn record_from_reply(task: &TaskSpec, example: &Example, reply: &str) -> ExecutionRecord {
    let sections = split_sections(reply, &["Question", "Solution", "Answer"]);
    let solution = sections
        .get("Solution")
        .filter(|s| !s.is_empty())
        .cloned()
        .unwrap_or_else(|| reply.trim().to_string());
    let extracted_answer = extract_answer(reply, &task.marker).ok();
    let correct = extracted_answer
        .as_deref()
        .map(|answer| answers_match(answer, &example.answer, task.answer_kind))
        .unwrap_or(false);
    ExecutionRecord {
        example_id: example.id.clone(),
        question: example.question.clone(),
        solution,
        extracted_answer,
        correct,
    }
}

/// Reconstructs the executed solution block for examination text.
fn format_execution(record: &ExecutionRecord) -> String {
    format!(
        "Question: {}\nSolution: {}\nAnswer: The answer is {}.",
        record.question,
        record.solution,
        record.extracted_answer.as_deref().unwrap_or_default()
    )
}
