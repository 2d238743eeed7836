//! Few-shot prompts assembled from a strategy's execution results.
//!
//! ## Layout
//! The strategy text sits under a `Strategy:` header, followed by one
//! `Question:` / `Solution:` / `Answer:` block per seed example in seed
//! order. At inference time a trailing `Question: ... Solution:` opener
//! invites the model to continue in the same shape. Mixed prompts drop the
//! header so the model sees worked examples with no stated strategy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ExecutionResult, Strategy};
use crate::corpus::answers::ANSWER_MARKER;
use crate::error::{Error, Result};

/// One worked example inside a strategy prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptShot {
    pub question: String,
    pub solution: String,
    /// Full answer line including the answer marker.
    pub answer_line: String,
}

/// A few-shot prompt pairing a strategy with its worked seed examples.
/// `strategy` is empty for mixed prompts, which render without a header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyPrompt {
    pub strategy_id: String,
    pub strategy: String,
    pub shots: Vec<PromptShot>,
    pub rendered_text: String,
}

impl StrategyPrompt {
    fn build(strategy_id: String, strategy: String, shots: Vec<PromptShot>) -> Self {
        let rendered_text = render_text(&strategy, &shots);
        StrategyPrompt {
            strategy_id,
            strategy,
            shots,
            rendered_text,
        }
    }

    /// Prompt text ending with an opener for `question`.
    pub fn render_with_question(&self, question: &str) -> String {
        format!("{}\n\nQuestion: {question}\nSolution:", self.rendered_text)
    }
}

fn render_text(strategy: &str, shots: &[PromptShot]) -> String {
    let mut blocks = Vec::with_capacity(shots.len() + 1);
    if !strategy.is_empty() {
        blocks.push(format!("Strategy:\n{strategy}"));
    }
    for shot in shots {
        blocks.push(format!(
            "Question: {}\nSolution: {}\nAnswer: {}",
            shot.question, shot.solution, shot.answer_line
        ));
    }
    blocks.join("\n\n")
}

fn shot_from_record(record: &crate::agents::ExecutionRecord, strategy_id: &str) -> Result<PromptShot> {
    if record.solution.trim().is_empty() {
        return Err(Error::MissingSolution {
            strategy_id: strategy_id.to_string(),
            example_id: record.example_id.clone(),
        });
    }
    Ok(PromptShot {
        question: record.question.clone(),
        solution: record.solution.clone(),
        answer_line: format!(
            "{ANSWER_MARKER} {}.",
            record.extracted_answer.as_deref().unwrap_or_default()
        ),
    })
}

/// Builds the few-shot prompt for one strategy from its execution result.
/// Shots keep seed order; each must carry a solution.
pub fn assemble_strategy_prompt(
    strategy: &Strategy,
    result: &ExecutionResult,
) -> Result<StrategyPrompt> {
    if result.records.is_empty() {
        return Err(Error::EmptyExecution {
            strategy_id: strategy.id.clone(),
        });
    }
    let shots = result
        .records
        .iter()
        .map(|r| shot_from_record(r, &strategy.id))
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategyPrompt::build(
        strategy.id.clone(),
        strategy.text.clone(),
        shots,
    ))
}

/// Builds a headerless prompt whose slots are filled from different
/// strategies' execution results. Slot `i` holds seed example `i`, solved by
/// a source strategy drawn uniformly with a seeded generator, so the same
/// seed always yields the same prompt.
pub fn assemble_inconsistent_prompt(
    sources: &[(&Strategy, &ExecutionResult)],
    slots: usize,
    seed: u64,
) -> Result<StrategyPrompt> {
    if sources.len() < 2 {
        return Err(Error::NotEnoughStrategies { got: sources.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shots = Vec::with_capacity(slots);
    for slot in 0..slots {
        let pick = rng.gen_range(0..sources.len());
        let (strategy, result) = sources[pick];
        let record = result.records.get(slot).ok_or_else(|| Error::MissingShotRecord {
            strategy_id: strategy.id.clone(),
            slot,
        })?;
        shots.push(shot_from_record(record, &strategy.id)?);
    }
    Ok(StrategyPrompt::build(
        "inconsistent".to_string(),
        String::new(),
        shots,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{ExecutionRecord, StrategyOrigin};

    fn strategy(id: &str, text: &str) -> Strategy {
        Strategy {
            id: id.into(),
            text: text.into(),
            origin: StrategyOrigin::Generated,
            parent_id: None,
            created_iteration: 1,
        }
    }

    fn result(id: &str, answers: &[&str]) -> ExecutionResult {
        let records = answers
            .iter()
            .enumerate()
            .map(|(i, a)| ExecutionRecord {
                example_id: format!("e{}", i + 1),
                question: format!("q{}", i + 1),
                solution: format!("{id} solves q{}", i + 1),
                extracted_answer: Some((*a).to_string()),
                correct: true,
            })
            .collect();
        ExecutionResult {
            strategy_id: id.into(),
            records,
            eacc: 1.0,
        }
    }

    #[test]
    fn prompt_keeps_seed_order_and_header() {
        let s = strategy("s1", "1. Add.\n2. Report.");
        let r = result("s1", &["2", "4"]);
        let prompt = assemble_strategy_prompt(&s, &r).unwrap();
        assert!(prompt.rendered_text.starts_with("Strategy:\n1. Add."));
        let q1 = prompt.rendered_text.find("Question: q1").unwrap();
        let q2 = prompt.rendered_text.find("Question: q2").unwrap();
        assert!(q1 < q2);
        assert!(prompt.shots.iter().all(|s| s.answer_line.contains(ANSWER_MARKER)));
    }

    #[test]
    fn inference_rendering_appends_question_opener() {
        let s = strategy("s1", "1. Add.");
        let prompt = assemble_strategy_prompt(&s, &result("s1", &["2"])).unwrap();
        let text = prompt.render_with_question("q9");
        assert!(text.ends_with("Question: q9\nSolution:"));
    }

    #[test]
    fn serialization_round_trips_shots() {
        let s = strategy("s1", "1. Add.");
        let prompt = assemble_strategy_prompt(&s, &result("s1", &["2", "4"])).unwrap();
        let json = serde_json::to_string(&prompt).unwrap();
        let back: StrategyPrompt = serde_json::from_str(&json).unwrap();
        assert_eq!(back, prompt);
    }

    #[test]
    fn missing_solution_is_an_error() {
        let s = strategy("s1", "1. Add.");
        let mut r = result("s1", &["2"]);
        r.records[0].solution = "  ".into();
        assert!(matches!(
            assemble_strategy_prompt(&s, &r),
            Err(Error::MissingSolution { .. })
        ));
    }

    #[test]
    fn mixed_prompt_needs_two_strategies_and_omits_header() {
        let s1 = strategy("s1", "1. Add.");
        let r1 = result("s1", &["2", "4"]);
        assert!(matches!(
            assemble_inconsistent_prompt(&[(&s1, &r1)], 2, 7),
            Err(Error::NotEnoughStrategies { got: 1 })
        ));

        let s2 = strategy("s2", "1. Count.");
        let r2 = result("s2", &["2", "4"]);
        let prompt =
            assemble_inconsistent_prompt(&[(&s1, &r1), (&s2, &r2)], 2, 7).unwrap();
        assert!(!prompt.rendered_text.contains("Strategy:"));
        assert_eq!(prompt.shots.len(), 2);
    }

    #[test]
    fn mixed_prompt_is_seed_stable() {
        let s1 = strategy("s1", "1. Add.");
        let s2 = strategy("s2", "1. Count.");
        let r1 = result("s1", &["2", "4", "6"]);
        let r2 = result("s2", &["2", "4", "6"]);
        let sources = [(&s1, &r1), (&s2, &r2)];
        let a = assemble_inconsistent_prompt(&sources, 3, 99).unwrap();
        let b = assemble_inconsistent_prompt(&sources, 3, 99).unwrap();
        assert_eq!(a, b);
    }
}
