//! Deterministic scripted backend for offline runs and tests.
//!
//! Responses come from pattern rules checked in declaration order, then
//! from per-role FIFO queues. Rules match on request content alone, so
//! concurrent workers get the same answers no matter how calls interleave;
//! queues are for simple sequential tests where arrival order is known.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{approx_tokens, temperature_milli, Backend, ChatRequest, RawCompletion, Role};
use crate::error::{Error, Result};

/// One pattern rule. A rule matches when every constraint that is present
/// holds: the role equals `role`, the prompt contains every `contains`
/// needle, and temperature / sample index equal the given values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, role: Role, request: &ChatRequest, prompt: &str) -> bool {
        if let Some(want) = self.role {
            if want != role {
                return false;
            }
        }
        if let Some(want) = self.temperature {
            if temperature_milli(want) != temperature_milli(request.temperature) {
                return false;
            }
        }
        if let Some(want) = self.sample_index {
            if want != request.sample_index {
                return false;
            }
        }
        self.contains.iter().all(|needle| prompt.contains(needle))
    }
}

/// Serialized script: rules plus optional per-role response queues.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub queues: BTreeMap<Role, Vec<String>>,
}

/// Backend that replays a [`ScriptFile`].
#[derive(Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    queues: Mutex<BTreeMap<Role, VecDeque<String>>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_script(script: ScriptFile) -> Self {
        ScriptedBackend {
            rules: script.rules,
            queues: Mutex::new(
                script
                    .queues
                    .into_iter()
                    .map(|(role, items)| (role, items.into()))
                    .collect(),
            ),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|source| Error::ReadFile {
            path: path.to_path_buf(),
            source,
        })?;
        let script: ScriptFile = serde_json::from_str(&raw).map_err(|e| Error::ParseFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self::from_script(script))
    }

    pub fn add_rule(&mut self, rule: ScriptRule) {
        self.rules.push(rule);
    }

    /// Queues `text` as the next FIFO response for `role`.
    pub fn push_response(&self, role: Role, text: &str) {
        self.queues
            .lock()
            .expect("queue lock")
            .entry(role)
            .or_default()
            .push_back(text.to_string());
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, role: Role, request: &ChatRequest) -> Result<RawCompletion> {
        let prompt = request.prompt_text();
        let text = self
            .rules
            .iter()
            .find(|rule| rule.matches(role, request, &prompt))
            .map(|rule| rule.response.clone())
            .or_else(|| {
                self.queues
                    .lock()
                    .expect("queue lock")
                    .get_mut(&role)
                    .and_then(VecDeque::pop_front)
            })
            .ok_or_else(|| Error::MissingScript {
                role: role.name().to_string(),
                preview: prompt.chars().take(80).collect(),
            })?;
        Ok(RawCompletion {
            input_tokens: approx_tokens(&prompt),
            output_tokens: approx_tokens(&text),
            text,
        })
    }
}
