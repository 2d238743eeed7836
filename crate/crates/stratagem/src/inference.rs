//! Test-time inference with qualified strategies.
//!
//! ## Methods
//! Single asks the best strategy's prompt for one greedy solution. The
//! consistency method asks the top m strategies and majority-votes their
//! normalized answers, breaking ties toward the better-validated strategy.
//! The aggregation method shows all candidate solutions to the model in a
//! fresh zero-shot prompt and trusts its stated final answer, falling back
//! to the majority vote when that reply is malformed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::answers::{
    extract_answer, normalize_answer, CanonicalAnswer, FINAL_ANSWER_MARKER,
};
use crate::corpus::{Example, TaskSpec};
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, Role};
use crate::prompts::strategy::StrategyPrompt;
use crate::prompts::{render, TemplateId};

/// One strategy's attempt at one test question. `answer` is `None` when
/// the reply had no answer marker, which counts as an abstention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub example_id: String,
    /// Absent for outcomes that are not tied to one strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_id: Option<String>,
    pub solution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<CanonicalAnswer>,
    pub abstained: bool,
}

/// Vote counts over normalized answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub counts: BTreeMap<String, u32>,
    pub winner: Option<String>,
    /// True when the top count was shared and a tiebreaker picked the
    /// winner.
    pub tie_broken: bool,
}

/// Majority vote over non-abstaining outcomes. Ties go to the answer
/// backed by the best-ranked strategy (`priorities` maps strategy id to
/// rank, lower is better), then to the lexicographically smaller answer.
pub fn majority_vote(
    outcomes: &[InferenceOutcome],
    priorities: &BTreeMap<String, usize>,
) -> VoteTally {
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut best_rank: BTreeMap<String, usize> = BTreeMap::new();
    for outcome in outcomes {
        let Some(answer) = &outcome.answer else {
            continue;
        };
        *counts.entry(answer.text.clone()).or_insert(0) += 1;
        let rank = outcome
            .strategy_id
            .as_ref()
            .and_then(|id| priorities.get(id).copied())
            .unwrap_or(usize::MAX);
        let entry = best_rank.entry(answer.text.clone()).or_insert(usize::MAX);
        *entry = (*entry).min(rank);
    }

    let mut ordered: Vec<(&String, u32, usize)> = counts
        .iter()
        .map(|(text, count)| (text, *count, best_rank[text]))
        .collect();
    ordered.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.2.cmp(&b.2))
            .then(a.0.cmp(b.0))
    });
    let winner = ordered.first().map(|(text, _, _)| (*text).clone());
    let tie_broken = ordered.len() > 1 && ordered[0].1 == ordered[1].1;
    VoteTally {
        counts,
        winner,
        tie_broken,
    }
}

/// Consistency-method product: every strategy's outcome plus the vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScResult {
    pub outcomes: Vec<InferenceOutcome>,
    pub tally: VoteTally,
}

/// Aggregation-method product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZsResult {
    pub final_answer: Option<CanonicalAnswer>,
    /// True when the aggregation reply was malformed and the majority vote
    /// decided instead.
    pub used_fallback: bool,
    pub reply: String,
}

/// Runs inference calls against one model.
pub struct Inferencer<'a> {
    pub gateway: &'a Gateway,
    pub model_id: String,
    pub max_tokens: u32,
}

impl Inferencer<'_> {
    fn greedy(&self, prompt: String) -> ChatRequest {
        ChatRequest::greedy(&self.model_id, prompt).with_max_tokens(self.max_tokens)
    }

    /// One greedy solution from one strategy prompt. A reply without the
    /// answer marker abstains rather than failing.
    pub fn infer_single(
        &self,
        task: &TaskSpec,
        prompt: &StrategyPrompt,
        example: &Example,
    ) -> Result<InferenceOutcome> {
        let request = self.greedy(prompt.render_with_question(&example.question));
        let completion = self.gateway.complete(Role::Inference, &request)?;
        let answer = match extract_answer(&completion.text, &task.marker) {
            Ok(raw) => Some(normalize_answer(&raw, task.answer_kind)),
            Err(Error::MarkerNotFound { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(InferenceOutcome {
            example_id: example.id.clone(),
            strategy_id: Some(prompt.strategy_id.clone()),
            solution: completion.text.trim().to_string(),
            abstained: answer.is_none(),
            answer,
        })
    }

    /// Asks every prompt and majority-votes the answers. `prompts` must be
    /// in priority order, best first; ties break toward earlier prompts.
    pub fn infer_sc(
        &self,
        task: &TaskSpec,
        prompts: &[&StrategyPrompt],
        example: &Example,
    ) -> Result<ScResult> {
        let priorities: BTreeMap<String, usize> = prompts
            .iter()
            .enumerate()
            .map(|(rank, p)| (p.strategy_id.clone(), rank))
            .collect();
        let outcomes = prompts
            .iter()
            .map(|prompt| self.infer_single(task, prompt, example))
            .collect::<Result<Vec<_>>>()?;
        let tally = majority_vote(&outcomes, &priorities);
        Ok(ScResult { outcomes, tally })
    }

    /// Aggregates already-produced candidate solutions with a zero-shot
    /// prompt. When the aggregation reply lacks the final-answer marker and
    /// `fallback` is set, the majority vote over `sc` decides; without
    /// fallback the example abstains. Every candidate abstaining leaves
    /// nothing to aggregate, which is an error.
    pub fn infer_zs(
        &self,
        task: &TaskSpec,
        sc: &ScResult,
        example: &Example,
        fallback: bool,
    ) -> Result<ZsResult> {
        let solutions: Vec<&InferenceOutcome> =
            sc.outcomes.iter().filter(|o| !o.abstained).collect();
        if solutions.is_empty() {
            return Err(Error::AllAbstained {
                example_id: example.id.clone(),
            });
        }
        let blocks: Vec<String> = solutions
            .iter()
            .enumerate()
            .map(|(i, o)| format!("Candidate Solution {}:\n{}", i + 1, o.solution))
            .collect();
        let prompt = render(
            TemplateId::ZsAggregation,
            &BTreeMap::from([
                ("question", example.question.clone()),
                ("candidate solutions", blocks.join("\n\n")),
            ]),
        )?;
        let completion = self.gateway.complete(Role::Inference, &self.greedy(prompt))?;
        match extract_answer(&completion.text, FINAL_ANSWER_MARKER) {
            Ok(raw) => Ok(ZsResult {
                final_answer: Some(normalize_answer(&raw, task.answer_kind)),
                used_fallback: false,
                reply: completion.text,
            }),
            Err(Error::MarkerNotFound { .. }) => {
                let final_answer = if fallback {
                    sc.tally.winner.as_ref().map(|text| CanonicalAnswer {
                        kind: task.answer_kind,
                        text: text.clone(),
                    })
                } else {
                    None
                };
                Ok(ZsResult {
                    final_answer,
                    used_fallback: fallback,
                    reply: completion.text,
                })
            }
            Err(e) => Err(e),
        }
    }
}
