//! Prompt templates and rendering.
//!
//! Templates are plain-text assets compiled into the binary. Placeholders
//! are written in braces, e.g. `{task definition}`, and only names from a
//! fixed vocabulary are treated as placeholders, so braces inside bound
//! values (LaTeX, JSON) are never re-expanded.

pub mod strategy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};

/// Every placeholder name any template may use.
pub const PLACEHOLDERS: &[&str] = &[
    "task definition",
    "task examples",
    "example",
    "strategy",
    "execution result",
    "examination results",
    "predicted answer",
    "gold answer",
    "different or the same",
    "question",
    "candidate solutions",
    "original strategy",
    "feedback",
    "CoT Prompt",
];

/// Identifies one of the built-in prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Generator,
    Executor,
    OptimizerExamination,
    OptimizerAnalysis,
    OptimizerModification,
    ZsAggregation,
    #[serde(rename = "solutionllm")]
    SolutionLlm,
    CotPlusStrategy,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Generator,
        TemplateId::Executor,
        TemplateId::OptimizerExamination,
        TemplateId::OptimizerAnalysis,
        TemplateId::OptimizerModification,
        TemplateId::ZsAggregation,
        TemplateId::SolutionLlm,
        TemplateId::CotPlusStrategy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Generator => "generator",
            TemplateId::Executor => "executor",
            TemplateId::OptimizerExamination => "optimizer_examination",
            TemplateId::OptimizerAnalysis => "optimizer_analysis",
            TemplateId::OptimizerModification => "optimizer_modification",
            TemplateId::ZsAggregation => "zs_aggregation",
            TemplateId::SolutionLlm => "solutionllm",
            TemplateId::CotPlusStrategy => "cot_plus_strategy",
        }
    }

    /// Raw template text with `\n` line endings.
    pub fn body(self) -> &'static str {
        match self {
            TemplateId::Generator => include_str!("../../assets/templates/generator.txt"),
            TemplateId::Executor => include_str!("../../assets/templates/executor.txt"),
            TemplateId::OptimizerExamination => {
                include_str!("../../assets/templates/optimizer_examination.txt")
            }
            TemplateId::OptimizerAnalysis => {
                include_str!("../../assets/templates/optimizer_analysis.txt")
            }
            TemplateId::OptimizerModification => {
                include_str!("../../assets/templates/optimizer_modification.txt")
            }
            TemplateId::ZsAggregation => {
                include_str!("../../assets/templates/zs_aggregation.txt")
            }
            TemplateId::SolutionLlm => include_str!("../../assets/templates/solutionllm.txt"),
            TemplateId::CotPlusStrategy => {
                include_str!("../../assets/templates/cot_plus_strategy.txt")
            }
        }
    }

    /// Placeholder names appearing in this template, in first-use order.
    pub fn placeholders(self) -> Vec<&'static str> {
        let body = self.body();
        let mut found: Vec<(usize, &'static str)> = PLACEHOLDERS
            .iter()
            .filter_map(|p| body.find(&format!("{{{p}}}")).map(|at| (at, *p)))
            .collect();
        found.sort_by_key(|(at, _)| *at);
        found.into_iter().map(|(_, p)| p).collect()
    }
}

/// Renders `template`, substituting every placeholder from `bindings`.
/// A placeholder without a binding and a binding without a placeholder are
/// both errors so prompt bugs surface before any model call. Substituted
/// values are copied verbatim and never re-scanned. Output line endings are
/// normalized to `\n`.
pub fn render(template: TemplateId, bindings: &BTreeMap<&str, String>) -> Result<String> {
    let required = template.placeholders();
    for key in bindings.keys() {
        if !required.contains(key) {
            return Err(Error::UnknownBinding {
                template: template.name(),
                placeholder: (*key).to_string(),
            });
        }
    }

    let body = template.body();
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    'outer: while let Some(brace) = rest.find('{') {
        let (before, tail) = rest.split_at(brace);
        out.push_str(before);
        for name in &required {
            let token_len = name.len() + 2;
            if tail.len() >= token_len
                && tail[1..].starts_with(name)
                && tail[token_len - 1..].starts_with('}')
            {
                let value = bindings.get(name).ok_or_else(|| Error::MissingBinding {
                    template: template.name(),
                    placeholder: (*name).to_string(),
                })?;
                out.push_str(value);
                rest = &tail[token_len..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    Ok(normalize_newlines(&out))
}

/// Converts `\r\n` and bare `\r` to `\n`.
pub fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n")
}

/// Question plus gold answer, the form templates expect for one example.
pub fn format_qa_example(example: &Example) -> String {
    format!("Question: {}\nAnswer: {}", example.question, example.answer)
}

/// Blank-line separated example blocks for `{task examples}`.
pub fn format_task_examples(examples: &[Example]) -> String {
    examples
        .iter()
        .map(format_qa_example)
        .collect::<Vec<_>>()
        .join("\n\n")
}
