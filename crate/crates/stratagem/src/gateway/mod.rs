//! Chat-model access: request shaping, caching, and usage accounting.
//!
//! All model traffic flows through [`Gateway`], which owns the response
//! cache and the per-role token ledger. Backends only turn a request into
//! text; everything observable (cache hits, ledger totals) is decided here
//! so both live and scripted runs behave identically.

pub mod http;
pub mod scripted;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default completion budget per request.
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

/// Which pipeline role issued a request. Usage is accounted per role.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Executor,
    Optimizer,
    Evaluator,
    Inference,
    Baseline,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Generator,
        Role::Executor,
        Role::Optimizer,
        Role::Evaluator,
        Role::Inference,
        Role::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Executor => "executor",
            Role::Optimizer => "optimizer",
            Role::Evaluator => "evaluator",
            Role::Inference => "inference",
            Role::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".to_string(),
            content: content.into(),
        }
    }
}

/// A fully specified completion request. Greedy requests always carry
/// sample index 0, which the constructors enforce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub sample_index: u32,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Greedy request: temperature 0, sample index 0.
    pub fn greedy(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages: vec![Message::user(prompt)],
            temperature: 0.0,
            sample_index: 0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Sampled request. Temperature 0 forces sample index 0 because greedy
    /// decoding has only one draw.
    pub fn sampled(
        model_id: impl Into<String>,
        prompt: impl Into<String>,
        temperature: f64,
        sample_index: u32,
    ) -> Self {
        let sample_index = if temperature == 0.0 { 0 } else { sample_index };
        ChatRequest {
            model_id: model_id.into(),
            messages: vec![Message::user(prompt)],
            temperature,
            sample_index,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// All message text joined for digesting and pattern matching.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Cache and script lookup key for this request.
    pub fn key(&self) -> RequestKey {
        let serialized = serde_json::to_string(&self.messages).expect("messages serialize");
        let digest = Sha256::digest(serialized.as_bytes());
        RequestKey {
            model_id: self.model_id.clone(),
            prompt_sha256: format!("{digest:x}"),
            temperature_milli: temperature_milli(self.temperature),
            sample_index: self.sample_index,
        }
    }
}

/// Temperatures are stored in the key at milli-unit resolution so the key
/// stays hashable without floating point equality.
pub fn temperature_milli(t: f64) -> u32 {
    (t.max(0.0) * 1000.0).round() as u32
}

/// Identifies a request for caching and scripting: model, prompt digest,
/// decode settings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestKey {
    pub model_id: String,
    pub prompt_sha256: String,
    pub temperature_milli: u32,
    pub sample_index: u32,
}

impl RequestKey {
    /// Stable filename for the on-disk cache.
    fn file_name(&self) -> String {
        let model: String = self
            .model_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        format!(
            "{model}-{}-{}-{}.json",
            self.prompt_sha256, self.temperature_milli, self.sample_index
        )
    }
}

/// Backend reply before cache bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Completion as seen by callers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// True when served from cache; cached replies add nothing to the ledger.
    pub cached: bool,
}

/// Whitespace token estimate for backends that do not report usage.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Turns a request into text. Implementations must be callable from worker
/// threads.
pub trait Backend: Send + Sync {
    fn complete(&self, role: Role, request: &ChatRequest) -> Result<RawCompletion>;
}

/// Input and output token totals.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenCount {
    pub fn add(&mut self, other: TokenCount) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
    }
}

/// Thread-safe per-role token accounting.
#[derive(Debug, Default)]
pub struct UsageLedger {
    inner: Mutex<BTreeMap<Role, TokenCount>>,
}

impl UsageLedger {
    pub fn record(&self, role: Role, input_tokens: u64, output_tokens: u64) {
        let mut inner = self.inner.lock().expect("ledger lock");
        inner.entry(role).or_default().add(TokenCount {
            input_tokens,
            output_tokens,
        });
    }

    /// Adds a previously saved snapshot, used when a run directory is
    /// reopened and its ledger must keep accumulating.
    pub fn preload(&self, snapshot: &UsageSnapshot) {
        let mut inner = self.inner.lock().expect("ledger lock");
        for (role, count) in &snapshot.roles {
            inner.entry(*role).or_default().add(*count);
        }
    }

    pub fn snapshot(&self) -> UsageSnapshot {
        UsageSnapshot {
            roles: self.inner.lock().expect("ledger lock").clone(),
        }
    }
}

/// Point-in-time copy of the ledger.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSnapshot {
    pub roles: BTreeMap<Role, TokenCount>,
}

impl UsageSnapshot {
    pub fn role(&self, role: Role) -> TokenCount {
        self.roles.get(&role).copied().unwrap_or_default()
    }

    pub fn total(&self) -> TokenCount {
        let mut total = TokenCount::default();
        for count in self.roles.values() {
            total.add(*count);
        }
        total
    }
}

/// Per-million-token prices for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

/// Model prices, loadable from a JSON object `{model_id: {input_per_million,
/// output_per_million}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    pub entries: BTreeMap<String, Price>,
}

impl PriceTable {
    /// Published list prices for a couple of widely used chat models; a
    /// price file overrides these.
    pub fn builtin() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(
            "gpt-3.5-turbo-0125".to_string(),
            Price {
                input_per_million: 0.50,
                output_per_million: 1.50,
            },
        );
        entries.insert(
            "gpt-3.5-turbo-16k-0613".to_string(),
            Price {
                input_per_million: 3.00,
                output_per_million: 4.00,
            },
        );
        PriceTable { entries }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|source| Error::ReadFile {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| Error::ParseFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Dollar cost of `usage` under `model_id`: tokens times price per
    /// million, input and output separately.
    pub fn estimate_cost(&self, model_id: &str, usage: TokenCount) -> Result<f64> {
        let price = self.entries.get(model_id).ok_or_else(|| Error::MissingPrice {
            model_id: model_id.to_string(),
        })?;
        Ok(usage.input_tokens as f64 * price.input_per_million / 1_000_000.0
            + usage.output_tokens as f64 * price.output_per_million / 1_000_000.0)
    }
}

/// Front door for all model calls.
pub struct Gateway {
    backend: Box<dyn Backend>,
    ledger: UsageLedger,
    memory: Mutex<HashMap<RequestKey, RawCompletion>>,
    disk: Option<PathBuf>,
}

impl Gateway {
    /// Wraps `backend`; `cache_dir` enables the on-disk response cache (one
    /// JSON file per request key).
    pub fn new(backend: Box<dyn Backend>, cache_dir: Option<PathBuf>) -> Result<Self> {
        if let Some(dir) = &cache_dir {
            fs::create_dir_all(dir)?;
        }
        Ok(Gateway {
            backend,
            ledger: UsageLedger::default(),
            memory: Mutex::new(HashMap::new()),
            disk: cache_dir,
        })
    }

    /// Completes `request`, serving from cache when possible. Cache hits
    /// return the original token counts but record nothing in the ledger.
    pub fn complete(&self, role: Role, request: &ChatRequest) -> Result<Completion> {
        self.complete_inner(role, request, true)
    }

    /// Completes `request` without consulting the cache. The fresh reply
    /// still replaces any cached one. Used when a caller must re-draw a
    /// reply that was acceptable to the backend but wrong for the task.
    pub fn complete_fresh(&self, role: Role, request: &ChatRequest) -> Result<Completion> {
        self.complete_inner(role, request, false)
    }

    fn complete_inner(
        &self,
        role: Role,
        request: &ChatRequest,
        read_cache: bool,
    ) -> Result<Completion> {
        let key = request.key();
        if read_cache {
            if let Some(hit) = self.cache_get(&key) {
                return Ok(Completion {
                    text: hit.text,
                    input_tokens: hit.input_tokens,
                    output_tokens: hit.output_tokens,
                    cached: true,
                });
            }
        }
        let raw = self.backend.complete(role, request)?;
        self.ledger.record(role, raw.input_tokens, raw.output_tokens);
        self.cache_put(&key, &raw);
        Ok(Completion {
            text: raw.text,
            input_tokens: raw.input_tokens,
            output_tokens: raw.output_tokens,
            cached: false,
        })
    }

    fn cache_get(&self, key: &RequestKey) -> Option<RawCompletion> {
        if let Some(hit) = self.memory.lock().expect("cache lock").get(key) {
            return Some(hit.clone());
        }
        let dir = self.disk.as_ref()?;
        let raw = fs::read_to_string(dir.join(key.file_name())).ok()?;
        let completion: RawCompletion = serde_json::from_str(&raw).ok()?;
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key.clone(), completion.clone());
        Some(completion)
    }

    fn cache_put(&self, key: &RequestKey, raw: &RawCompletion) {
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key.clone(), raw.clone());
        if let Some(dir) = &self.disk {
            let path = dir.join(key.file_name());
            match serde_json::to_string_pretty(raw) {
                Ok(json) => {
                    if let Err(e) = fs::write(&path, json) {
                        log::warn!("cannot write cache entry {}: {e}", path.display());
                    }
                }
                Err(e) => log::warn!("cannot serialize cache entry: {e}"),
            }
        }
    }

    pub fn usage(&self) -> UsageSnapshot {
        self.ledger.snapshot()
    }

    /// Seeds the ledger with totals from an earlier session.
    pub fn preload_usage(&self, snapshot: &UsageSnapshot) {
        self.ledger.preload(snapshot);
    }
}

#[cfg(test)]
mod tests {
    use super::scripted::ScriptedBackend;
    use super::*;
    use proptest::prelude::*;

    fn scripted_gateway(responses: &[(&str, Role)]) -> Gateway {
        let backend = ScriptedBackend::new();
        for (text, role) in responses {
            backend.push_response(*role, text);
        }
        Gateway::new(Box::new(backend), None).unwrap()
    }

    #[test]
    fn greedy_requests_pin_sample_index_zero() {
        let req = ChatRequest::sampled("m", "p", 0.0, 7);
        assert_eq!(req.sample_index, 0);
        let req = ChatRequest::sampled("m", "p", 0.7, 7);
        assert_eq!(req.sample_index, 7);
    }

    #[test]
    fn request_key_separates_decode_settings() {
        let a = ChatRequest::sampled("m", "p", 0.7, 0).key();
        let b = ChatRequest::sampled("m", "p", 0.7, 1).key();
        let c = ChatRequest::greedy("m", "p").key();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.prompt_sha256, b.prompt_sha256);
    }

    #[test]
    fn repeat_greedy_call_is_served_from_cache() {
        let gw = scripted_gateway(&[("first", Role::Executor)]);
        let req = ChatRequest::greedy("m", "2 + 2?");
        let a = gw.complete(Role::Executor, &req).unwrap();
        let b = gw.complete(Role::Executor, &req).unwrap();
        assert!(!a.cached);
        assert!(b.cached);
        assert_eq!(a.text, b.text);
        // Second call added nothing.
        let usage = gw.usage().role(Role::Executor);
        assert_eq!(usage.input_tokens, approx_tokens("2 + 2?"));
        assert_eq!(usage.output_tokens, approx_tokens("first"));
    }

    #[test]
    fn fresh_completion_skips_cache_read() {
        let gw = scripted_gateway(&[("first", Role::Baseline), ("second", Role::Baseline)]);
        let req = ChatRequest::greedy("m", "prompt");
        assert_eq!(gw.complete(Role::Baseline, &req).unwrap().text, "first");
        assert_eq!(gw.complete_fresh(Role::Baseline, &req).unwrap().text, "second");
        // The fresh reply replaced the cached one.
        assert_eq!(gw.complete(Role::Baseline, &req).unwrap().text, "second");
    }

    #[test]
    fn disk_cache_survives_gateway_restart() {
        let dir = tempfile::tempdir().unwrap();
        let req = ChatRequest::greedy("m", "prompt");
        {
            let backend = ScriptedBackend::new();
            backend.push_response(Role::Inference, "stored");
            let gw =
                Gateway::new(Box::new(backend), Some(dir.path().to_path_buf())).unwrap();
            gw.complete(Role::Inference, &req).unwrap();
        }
        // No scripted responses left; only the disk cache can answer.
        let gw = Gateway::new(
            Box::new(ScriptedBackend::new()),
            Some(dir.path().to_path_buf()),
        )
        .unwrap();
        let hit = gw.complete(Role::Inference, &req).unwrap();
        assert!(hit.cached);
        assert_eq!(hit.text, "stored");
        assert_eq!(gw.usage().total(), TokenCount::default());
    }

    #[test]
    fn builtin_prices_cover_expected_models() {
        let table = PriceTable::builtin();
        let cost = table
            .estimate_cost(
                "gpt-3.5-turbo-0125",
                TokenCount {
                    input_tokens: 1_000_000,
                    output_tokens: 1_000_000,
                },
            )
            .unwrap();
        assert!((cost - 2.0).abs() < 1e-9);
        assert!(matches!(
            table.estimate_cost("unknown-model", TokenCount::default()),
            Err(Error::MissingPrice { .. })
        ));
    }

    proptest! {
        #[test]
        fn ledger_totals_are_additive(
            events in proptest::collection::vec((0usize..6, 0u64..10_000, 0u64..10_000), 0..40)
        ) {
            let ledger = UsageLedger::default();
            let mut expected: BTreeMap<Role, TokenCount> = BTreeMap::new();
            for (role_idx, input, output) in &events {
                let role = Role::ALL[*role_idx];
                ledger.record(role, *input, *output);
                expected.entry(role).or_default().add(TokenCount {
                    input_tokens: *input,
                    output_tokens: *output,
                });
            }
            let snapshot = ledger.snapshot();
            let total = snapshot.total();
            prop_assert_eq!(snapshot.roles, expected);
            let sum_in: u64 = events.iter().map(|(_, i, _)| i).sum();
            let sum_out: u64 = events.iter().map(|(_, _, o)| o).sum();
            prop_assert_eq!(total.input_tokens, sum_in);
            prop_assert_eq!(total.output_tokens, sum_out);
        }

        #[test]
        fn cost_is_monotone_in_tokens(
            base_in in 0u64..1_000_000, base_out in 0u64..1_000_000,
            extra_in in 0u64..1_000_000, extra_out in 0u64..1_000_000
        ) {
            let table = PriceTable::builtin();
            let small = table.estimate_cost("gpt-3.5-turbo-0125", TokenCount {
                input_tokens: base_in, output_tokens: base_out,
            }).unwrap();
            let large = table.estimate_cost("gpt-3.5-turbo-0125", TokenCount {
                input_tokens: base_in + extra_in, output_tokens: base_out + extra_out,
            }).unwrap();
            prop_assert!(large >= small);
        }
    }
}
