//! Baseline prompting methods to compare strategies against.
//!
//! ## Methods
//! Standard prompting shows question and answer shots with no reasoning.
//! Chain-of-thought shows human-written solutions, optionally sampled
//! several times and majority-voted. The model-written variant asks the
//! model itself to write each shot's solution and forces the gold answer
//! when it keeps getting its own shot wrong. The combined variant appends
//! a strategy-development instruction to the chain-of-thought prompt.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::split_sections;
use crate::corpus::answers::{answers_match, extract_answer, normalize_answer, ANSWER_MARKER};
use crate::corpus::{Example, TaskSpec};
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, Role};
use crate::inference::{majority_vote, InferenceOutcome, ScResult};
use crate::prompts::{format_qa_example, render, TemplateId};

/// Model-written solution shots get this many tries to reproduce the gold
/// answer before it is forced.
pub const DEFAULT_SOLUTION_ATTEMPTS: usize = 3;

/// Prompt family a baseline prompt belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Question and answer shots only.
    Sp,
    /// Question, written solution, answer.
    Cot,
    /// Like Cot, but the solutions were written by the model.
    Solutionllm,
    /// Cot prompt plus a strategy-development instruction.
    CotPlusStrategy,
}

/// Who wrote the shot solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    HumanAsset,
    ModelGenerated,
}

/// One worked (or bare) example in a baseline prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineShot {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    /// Full answer line including the answer marker.
    pub answer_line: String,
    /// True when the model never reproduced the gold answer and the line
    /// was overwritten with it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
}

/// A complete baseline few-shot prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselinePrompt {
    pub kind: BaselineKind,
    pub source: PromptSource,
    pub shots: Vec<BaselineShot>,
}

impl BaselinePrompt {
    /// Checks the shot shape matches the kind: bare shots for Sp, written
    /// solutions for everything else, and the answer marker everywhere.
    pub fn validate(&self) -> Result<()> {
        if self.shots.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        for (i, shot) in self.shots.iter().enumerate() {
            let has_solution = shot
                .solution
                .as_deref()
                .is_some_and(|s| !s.trim().is_empty());
            match self.kind {
                BaselineKind::Sp if shot.solution.is_some() => {
                    return Err(Error::Usage {
                        message: format!("standard prompt shot {} carries a solution", i + 1),
                    });
                }
                BaselineKind::Sp => {}
                _ if !has_solution => {
                    return Err(Error::Usage {
                        message: format!("prompt shot {} has no solution", i + 1),
                    });
                }
                _ => {}
            }
            if !shot.answer_line.contains(ANSWER_MARKER) {
                return Err(Error::Usage {
                    message: format!(
                        "prompt shot {} answer line lacks {ANSWER_MARKER:?}",
                        i + 1
                    ),
                });
            }
        }
        Ok(())
    }

    /// Shot blocks joined by blank lines.
    pub fn render_text(&self) -> String {
        let blocks: Vec<String> = self
            .shots
            .iter()
            .map(|shot| match &shot.solution {
                Some(solution) => format!(
                    "Question: {}\nSolution: {}\nAnswer: {}",
                    shot.question, solution, shot.answer_line
                ),
                None => format!("Question: {}\nAnswer: {}", shot.question, shot.answer_line),
            })
            .collect();
        blocks.join("\n\n")
    }

    /// Prompt text ending with an opener for `question`. Bare prompts open
    /// with `Answer:`, worked prompts with `Solution:`.
    pub fn render_with_question(&self, question: &str) -> String {
        let opener = match self.kind {
            BaselineKind::Sp => "Answer:",
            _ => "Solution:",
        };
        format!("{}\n\nQuestion: {question}\n{opener}", self.render_text())
    }
}

/// Builds the bare question-answer prompt from the seed split.
pub fn build_sp_prompt(task: &TaskSpec) -> Result<BaselinePrompt> {
    let prompt = BaselinePrompt {
        kind: BaselineKind::Sp,
        source: PromptSource::HumanAsset,
        shots: task
            .seed
            .iter()
            .map(|example| BaselineShot {
                question: example.question.clone(),
                solution: None,
                answer_line: format!("{ANSWER_MARKER} {}", example.answer),
                forced: false,
            })
            .collect(),
    };
    prompt.validate()?;
    Ok(prompt)
}

/// Parses a worked-example prompt asset: `Question:` / `Solution:` /
/// `Answer:` blocks separated by blank lines, solutions may span lines.
pub fn parse_cot_asset(text: &str, path: &Path) -> Result<BaselinePrompt> {
    parse_prompt_asset(text, path, BaselineKind::Cot)
}

/// Parses a bare prompt asset: `Question:` / `Answer:` blocks only.
pub fn parse_sp_asset(text: &str, path: &Path) -> Result<BaselinePrompt> {
    parse_prompt_asset(text, path, BaselineKind::Sp)
}

fn parse_prompt_asset(text: &str, path: &Path, kind: BaselineKind) -> Result<BaselinePrompt> {
    let bad = |message: String| Error::BadPromptAsset {
        path: path.to_path_buf(),
        message,
    };

    struct Partial {
        question: String,
        solution_lines: Option<Vec<String>>,
        answer: Option<String>,
    }
    let mut shots: Vec<BaselineShot> = Vec::new();
    let mut partial: Option<Partial> = None;

    let flush = |partial: &mut Option<Partial>, shots: &mut Vec<BaselineShot>| -> Result<()> {
        let Some(p) = partial.take() else {
            return Ok(());
        };
        let n = shots.len() + 1;
        let answer_line = p
            .answer
            .ok_or_else(|| bad(format!("shot {n} has no Answer line")))?;
        let solution = p.solution_lines.map(|lines| lines.join("\n").trim().to_string());
        shots.push(BaselineShot {
            question: p.question.trim().to_string(),
            solution,
            answer_line,
            forced: false,
        });
        Ok(())
    };

    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("Question:") {
            flush(&mut partial, &mut shots)?;
            partial = Some(Partial {
                question: rest.trim().to_string(),
                solution_lines: None,
                answer: None,
            });
        } else if let Some(p) = partial.as_mut() {
            if let Some(rest) = line.strip_prefix("Solution:") {
                p.solution_lines = Some(vec![rest.trim().to_string()]);
            } else if let Some(rest) = line.strip_prefix("Answer:") {
                p.answer = Some(rest.trim().to_string());
            } else if p.answer.is_some() {
                // Trailing prose after the answer line is ignored.
            } else if let Some(lines) = p.solution_lines.as_mut() {
                lines.push(line.to_string());
            } else if !line.trim().is_empty() {
                p.question.push('\n');
                p.question.push_str(line);
            }
        }
    }
    flush(&mut partial, &mut shots)?;

    if shots.is_empty() {
        return Err(bad("no Question blocks found".to_string()));
    }
    let prompt = BaselinePrompt {
        kind,
        source: PromptSource::HumanAsset,
        shots,
    };
    prompt.validate().map_err(|e| bad(e.to_string()))?;
    Ok(prompt)
}

/// Sampling settings for the voted chain-of-thought baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CotScConfig {
    pub samples: u32,
    pub temperature: f64,
}

impl Default for CotScConfig {
    fn default() -> Self {
        CotScConfig {
            samples: 3,
            temperature: 0.7,
        }
    }
}

/// Result of the combined chain-of-thought and strategy baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotStrategyOutcome {
    /// Strategy the model developed for itself, when its reply had one.
    pub strategy: Option<String>,
    pub outcome: InferenceOutcome,
}

/// Runs baseline prompts against one model.
pub struct BaselineRunner<'a> {
    pub gateway: &'a Gateway,
    pub model_id: String,
    pub max_tokens: u32,
}

impl BaselineRunner<'_> {
    fn outcome_from_reply(
        &self,
        task: &TaskSpec,
        example: &Example,
        reply: &str,
    ) -> InferenceOutcome {
        let answer = extract_answer(reply, &task.marker)
            .ok()
            .map(|raw| normalize_answer(&raw, task.answer_kind));
        InferenceOutcome {
            example_id: example.id.clone(),
            strategy_id: None,
            solution: reply.trim().to_string(),
            abstained: answer.is_none(),
            answer,
        }
    }

    /// One greedy completion of `prompt` for `example`.
    pub fn run_single(
        &self,
        task: &TaskSpec,
        prompt: &BaselinePrompt,
        example: &Example,
    ) -> Result<InferenceOutcome> {
        let request = ChatRequest::greedy(&self.model_id, prompt.render_with_question(&example.question))
            .with_max_tokens(self.max_tokens);
        let completion = self.gateway.complete(Role::Baseline, &request)?;
        Ok(self.outcome_from_reply(task, example, &completion.text))
    }

    /// Samples the prompt several times and majority-votes the answers.
    /// All samples carry equal weight; ties break lexicographically.
    pub fn run_cot_sc(
        &self,
        task: &TaskSpec,
        prompt: &BaselinePrompt,
        example: &Example,
        config: &CotScConfig,
    ) -> Result<ScResult> {
        if config.samples == 0 {
            return Err(Error::OutOfRange {
                what: "sample count".to_string(),
                got: "0".to_string(),
            });
        }
        let text = prompt.render_with_question(&example.question);
        let mut outcomes = Vec::with_capacity(config.samples as usize);
        for sample_index in 0..config.samples {
            let request =
                ChatRequest::sampled(&self.model_id, text.clone(), config.temperature, sample_index)
                    .with_max_tokens(self.max_tokens);
            let completion = self.gateway.complete(Role::Baseline, &request)?;
            outcomes.push(self.outcome_from_reply(task, example, &completion.text));
        }
        let tally = majority_vote(&outcomes, &BTreeMap::new());
        Ok(ScResult { outcomes, tally })
    }

    /// Asks the model to write one solution per seed example, retrying with
    /// fresh draws while the written solution misses the gold answer. After
    /// `attempts` misses the last solution is kept and its answer line is
    /// overwritten with the gold answer. Examples where every attempt
    /// failed outright are reported together.
    pub fn build_solutionllm_prompt(
        &self,
        task: &TaskSpec,
        attempts: usize,
    ) -> Result<BaselinePrompt> {
        let attempts = attempts.max(1);
        let mut shots = Vec::with_capacity(task.seed.len());
        let mut failed_ids = Vec::new();

        for example in &task.seed {
            let prompt = render(
                TemplateId::SolutionLlm,
                &BTreeMap::from([
                    ("task definition", task.definition.clone()),
                    ("example", format_qa_example(example)),
                ]),
            )?;
            let request =
                ChatRequest::greedy(&self.model_id, prompt).with_max_tokens(self.max_tokens);

            let mut accepted = None;
            let mut last_solution: Option<String> = None;
            for attempt in 0..attempts {
                // Retries must bypass the cache or they would replay the
                // same wrong solution.
                let completion = if attempt == 0 {
                    self.gateway.complete(Role::Baseline, &request)
                } else {
                    self.gateway.complete_fresh(Role::Baseline, &request)
                };
                let completion = match completion {
                    Ok(c) => c,
                    Err(e) => {
                        log::warn!(
                            "solution attempt {} for {} failed: {e}",
                            attempt + 1,
                            example.id
                        );
                        continue;
                    }
                };
                let sections = split_sections(&completion.text, &["Question", "Solution", "Answer"]);
                let solution = sections
                    .get("Solution")
                    .filter(|s| !s.is_empty())
                    .cloned()
                    .unwrap_or_else(|| completion.text.trim().to_string());
                last_solution = Some(solution.clone());
                let Ok(extracted) = extract_answer(&completion.text, &task.marker) else {
                    continue;
                };
                if answers_match(&extracted, &example.answer, task.answer_kind) {
                    accepted = Some(BaselineShot {
                        question: example.question.clone(),
                        solution: Some(solution),
                        answer_line: format!("{ANSWER_MARKER} {extracted}"),
                        forced: false,
                    });
                    break;
                }
            }

            match (accepted, last_solution) {
                (Some(shot), _) => shots.push(shot),
                (None, Some(solution)) => shots.push(BaselineShot {
                    question: example.question.clone(),
                    solution: Some(solution),
                    answer_line: format!("{ANSWER_MARKER} {}", example.answer),
                    forced: true,
                }),
                (None, None) => failed_ids.push(example.id.clone()),
            }
        }

        if !failed_ids.is_empty() {
            return Err(Error::SolutionGeneration { ids: failed_ids });
        }
        let prompt = BaselinePrompt {
            kind: BaselineKind::Solutionllm,
            source: PromptSource::ModelGenerated,
            shots,
        };
        prompt.validate()?;
        // Every kept answer line must agree with the gold answer, matched
        // ones by construction and forced ones verbatim.
        for (shot, example) in prompt.shots.iter().zip(&task.seed) {
            let line_answer = extract_answer(&shot.answer_line, ANSWER_MARKER)?;
            debug_assert!(answers_match(&line_answer, &example.answer, task.answer_kind));
        }
        Ok(prompt)
    }

    /// Shows the worked prompt, asks the model to develop its own strategy,
    /// and solves `example` with it. A reply without the answer marker
    /// abstains.
    pub fn run_cot_strategy(
        &self,
        task: &TaskSpec,
        cot: &BaselinePrompt,
        example: &Example,
    ) -> Result<CotStrategyOutcome> {
        let prompt = render(
            TemplateId::CotPlusStrategy,
            &BTreeMap::from([
                ("CoT Prompt", cot.render_text()),
                ("question", example.question.clone()),
            ]),
        )?;
        let request = ChatRequest::greedy(&self.model_id, prompt).with_max_tokens(self.max_tokens);
        let completion = self.gateway.complete(Role::Baseline, &request)?;
        let sections = split_sections(&completion.text, &["Strategy", "Question", "Solution", "Answer"]);
        let strategy = sections.get("Strategy").filter(|s| !s.is_empty()).cloned();
        Ok(CotStrategyOutcome {
            strategy,
            outcome: self.outcome_from_reply(task, example, &completion.text),
        })
    }
}
