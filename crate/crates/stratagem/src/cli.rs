//! Command-line operator surface.
//!
//! Four subcommands work against a run directory: `pipeline` builds and
//! evaluates strategies, `infer` answers the test split with a chosen
//! method, `report` aggregates the inference logs, and `cost` prices the
//! recorded token usage. Configuration lives in a JSON manifest; flags
//! override manifest fields. All outputs stay inside the run directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::agents::Agents;
use crate::baselines::{
    build_sp_prompt, parse_cot_asset, parse_sp_asset, BaselinePrompt, BaselineRunner,
    CotScConfig, DEFAULT_SOLUTION_ATTEMPTS,
};
use crate::corpus::answers::answers_match;
use crate::corpus::{load_task, Example, TaskSpec};
use crate::error::{Error, Result};
use crate::eval::{build_report, write_reports, EvalReport, InferenceRecord, StrategyVerdict};
use crate::gateway::http::{HttpBackend, HttpConfig};
use crate::gateway::scripted::ScriptedBackend;
use crate::gateway::{Backend, Gateway, PriceTable};
use crate::inference::{InferenceOutcome, Inferencer};
use crate::pipeline::{self, candidates_path, load_candidates, PipelineConfig};
use crate::prompts::strategy::{assemble_inconsistent_prompt, StrategyPrompt};
use crate::workers::par_map;

#[derive(Parser)]
#[command(
    name = "stratagem",
    version,
    about = "Builds task-solving strategies with model agents and answers questions with them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, qualify, and evaluate strategies for a task.
    Pipeline(PipelineArgs),
    /// Answer the task's test questions with a chosen method.
    Infer(InferArgs),
    /// Aggregate inference logs into report files.
    Report(ReportArgs),
    /// Price the run's recorded token usage.
    Cost(CostArgs),
}

/// Manifest fields that flags may override. Flags win.
#[derive(Debug, Default, Args)]
struct OverrideArgs {
    /// Task manifest path.
    #[arg(long)]
    task: Option<PathBuf>,
    /// Backend kind.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Model identifier.
    #[arg(long)]
    model: Option<String>,
    /// Worker threads for model calls.
    #[arg(long)]
    workers: Option<usize>,
    /// Base seed for seeded draws.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Run directory to create or reuse.
    run_dir: PathBuf,
    /// Run manifest (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overwrite an existing run in place.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Debug, Args)]
struct InferArgs {
    /// Run directory holding pipeline artifacts.
    run_dir: PathBuf,
    /// Inference method.
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Strategies consulted by vote-based methods.
    #[arg(long)]
    top_m: Option<usize>,
    /// Abstain instead of majority-voting when the aggregation reply is
    /// malformed.
    #[arg(long)]
    no_zs_fallback: bool,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directory holding inference outputs.
    run_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CostArgs {
    /// Run directory holding a usage ledger.
    run_dir: PathBuf,
}

/// Every way this tool can answer a test question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Best strategy's prompt, greedy.
    Single,
    /// Top-m strategy prompts, majority vote.
    Sc,
    /// Top-m strategy prompts, answer-aggregation call.
    Zs,
    /// Question-answer shots with no reasoning.
    Sp,
    /// Human-written worked examples.
    Cot,
    /// Cot sampled several times, majority vote.
    CotSc,
    /// Model-written worked examples.
    Solutionllm,
    /// Cot prompt plus a strategy-development instruction.
    CotStrategy,
    /// Few-shot prompt mixing shots from different strategies.
    Inconsistent,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::Sc => "sc",
            Method::Zs => "zs",
            Method::Sp => "sp",
            Method::Cot => "cot",
            Method::CotSc => "cot-sc",
            Method::Solutionllm => "solutionllm",
            Method::CotStrategy => "cot-strategy",
            Method::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

fn default_max_tokens() -> u32 {
    crate::gateway::DEFAULT_MAX_TOKENS
}
fn default_max_attempts() -> u32 {
    5
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_method() -> Method {
    Method::Sc
}
fn default_workers() -> usize {
    1
}
fn default_true() -> bool {
    true
}

/// How to reach the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    /// Http only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Environment variable holding the bearer token, http only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Script file, scripted only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Response cache directory; omit to cache in memory only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

/// One run's full configuration. Relative paths resolve against the
/// manifest's own directory; the copy saved into a run directory carries
/// absolute paths so later subcommands agree on locations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: PathBuf,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub backend: BackendConfig,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Overrides pipeline.top_m_inference when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_m: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Root directory of baseline prompt assets, laid out per task name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_assets: Option<PathBuf>,
    /// Price file; omitted falls back to the built-in table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub zs_fallback: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = read_text(path)?;
        let mut manifest: RunManifest =
            serde_json::from_str(&raw).map_err(|e| Error::ParseFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.resolve_paths(base);
        Ok(manifest)
    }

    /// Joins relative paths onto `base` and then onto the working
    /// directory, leaving absolute paths alone.
    fn resolve_paths(&mut self, base: &Path) {
        absolutize(base, &mut self.task);
        for path in [
            self.backend.script.as_mut(),
            self.backend.cache_dir.as_mut(),
            self.baseline_assets.as_mut(),
            self.prices.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            absolutize(base, path);
        }
    }

    pub fn effective_top_m(&self) -> usize {
        self.top_m.unwrap_or(self.pipeline.top_m_inference)
    }
}

fn absolutize(base: &Path, path: &mut PathBuf) {
    let joined = if path.is_relative() {
        base.join(&*path)
    } else {
        std::mem::take(path)
    };
    *path = if joined.is_relative() {
        match std::env::current_dir() {
            Ok(cwd) => cwd.join(joined),
            Err(_) => joined,
        }
    } else {
        joined
    };
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::ReadFile {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::WriteFile {
        path: path.to_path_buf(),
        source,
    })
}

fn apply_overrides(manifest: &mut RunManifest, overrides: &OverrideArgs) {
    if let Some(task) = &overrides.task {
        manifest.task = task.clone();
    }
    if let Some(kind) = overrides.backend {
        manifest.backend.kind = kind;
    }
    if let Some(model) = &overrides.model {
        manifest.backend.model_id = model.clone();
    }
    if let Some(workers) = overrides.workers {
        manifest.workers = workers;
    }
    if let Some(seed) = overrides.seed {
        manifest.seed = seed;
    }
    // Flag paths are relative to the working directory.
    manifest.resolve_paths(Path::new("."));
}

fn build_gateway(manifest: &RunManifest) -> Result<Gateway> {
    let backend: Box<dyn Backend> = match manifest.backend.kind {
        BackendKind::Scripted => {
            let script = manifest.backend.script.as_ref().ok_or_else(|| Error::Usage {
                message: "scripted backend needs a script path in the manifest".to_string(),
            })?;
            Box::new(ScriptedBackend::from_file(script)?)
        }
        BackendKind::Http => {
            let base_url = manifest.backend.base_url.clone().ok_or_else(|| Error::Usage {
                message: "http backend needs a base_url in the manifest".to_string(),
            })?;
            Box::new(HttpBackend::new(HttpConfig {
                base_url,
                api_key_env: manifest.backend.api_key_env.clone(),
                timeout_secs: manifest.backend.timeout_secs,
                max_attempts: manifest.backend.max_attempts,
                ..HttpConfig::default()
            }))
        }
    };
    Gateway::new(backend, manifest.backend.cache_dir.clone())
}

/// Fans one base seed out to a stable per-label seed.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(base.to_be_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 8 bytes"))
}

fn price_table(manifest: &RunManifest) -> Result<PriceTable> {
    match &manifest.prices {
        Some(path) => PriceTable::from_file(path),
        None => Ok(PriceTable::builtin()),
    }
}

fn load_run_manifest(run_dir: &Path) -> Result<RunManifest> {
    let path = run_dir.join("config.json");
    if !path.exists() {
        return Err(Error::MissingArtifact { path });
    }
    RunManifest::load(&path)
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let mut manifest = RunManifest::load(&args.config)?;
    apply_overrides(&mut manifest, &args.overrides);
    manifest.pipeline.validate()?;
    let task = load_task(&manifest.task)?;

    if candidates_path(&args.run_dir).exists() && !args.force {
        return Err(Error::RunDirOccupied {
            path: args.run_dir.clone(),
        });
    }
    fs::create_dir_all(&args.run_dir)?;

    let gateway = build_gateway(&manifest)?;
    let agents = Agents {
        gateway: &gateway,
        model_id: manifest.backend.model_id.clone(),
        max_tokens: manifest.backend.max_tokens,
        workers: manifest.workers,
    };
    let outcome = pipeline::run(&agents, &task, &manifest.pipeline)?;
    pipeline::save_run(&args.run_dir, &outcome, &gateway.usage())?;
    write_text(
        &args.run_dir.join("config.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;

    println!(
        "task {}: kept {} candidate strategies",
        task.name,
        outcome.candidates.len()
    );
    for candidate in &outcome.candidates {
        println!(
            "  {} eacc {:.3} vacc {:.3}",
            candidate.strategy.id,
            candidate.result.eacc,
            candidate.vacc.unwrap_or(0.0)
        );
    }
    Ok(())
}

fn verdict(task: &TaskSpec, example: &Example, outcome: &InferenceOutcome) -> StrategyVerdict {
    let answer = outcome.answer.as_ref().map(|a| a.text.clone());
    let correct = answer
        .as_deref()
        .map(|a| answers_match(a, &example.answer, task.answer_kind))
        .unwrap_or(false);
    StrategyVerdict {
        strategy_id: outcome.strategy_id.clone(),
        answer,
        abstained: outcome.abstained,
        correct,
    }
}

fn build_record(
    method: Method,
    task: &TaskSpec,
    example: &Example,
    outcomes: &[InferenceOutcome],
    final_answer: Option<String>,
) -> InferenceRecord {
    let correct = final_answer
        .as_deref()
        .map(|a| answers_match(a, &example.answer, task.answer_kind))
        .unwrap_or(false);
    InferenceRecord {
        example_id: example.id.clone(),
        method: method.name().to_string(),
        per_strategy: outcomes.iter().map(|o| verdict(task, example, o)).collect(),
        final_answer,
        correct,
    }
}

fn assets_dir(manifest: &RunManifest, task: &TaskSpec) -> Result<PathBuf> {
    let root = manifest.baseline_assets.as_ref().ok_or_else(|| Error::Usage {
        message: format!(
            "method {} needs baseline_assets in the manifest",
            manifest.method.name()
        ),
    })?;
    Ok(root.join(&task.name))
}

fn sp_prompt(manifest: &RunManifest, task: &TaskSpec) -> Result<BaselinePrompt> {
    if let Some(root) = &manifest.baseline_assets {
        let path = root.join(&task.name).join("sp.txt");
        if path.exists() {
            return parse_sp_asset(&read_text(&path)?, &path);
        }
    }
    build_sp_prompt(task)
}

fn cot_prompt(manifest: &RunManifest, task: &TaskSpec) -> Result<BaselinePrompt> {
    let path = assets_dir(manifest, task)?.join("cot.txt");
    if !path.exists() {
        return Err(Error::MissingArtifact { path });
    }
    parse_cot_asset(&read_text(&path)?, &path)
}

fn run_method(
    manifest: &RunManifest,
    task: &TaskSpec,
    gateway: &Gateway,
    run_dir: &Path,
) -> Result<Vec<InferenceRecord>> {
    let method = manifest.method;
    let workers = manifest.workers;
    let model_id = manifest.backend.model_id.clone();
    let max_tokens = manifest.backend.max_tokens;

    match method {
        Method::Single | Method::Sc | Method::Zs | Method::Inconsistent => {
            let candidates = load_candidates(run_dir)?;
            if candidates.is_empty() {
                return Err(Error::EmptyPool);
            }
            let inferencer = Inferencer {
                gateway,
                model_id,
                max_tokens,
            };
            match method {
                Method::Single => {
                    let prompt = &candidates[0].prompt;
                    par_map(&task.test, workers, |_, example| {
                        let outcome = inferencer.infer_single(task, prompt, example)?;
                        let final_answer = outcome.answer.as_ref().map(|a| a.text.clone());
                        Ok(build_record(
                            method,
                            task,
                            example,
                            std::slice::from_ref(&outcome),
                            final_answer,
                        ))
                    })
                }
                Method::Sc | Method::Zs => {
                    let m = manifest.effective_top_m().min(candidates.len()).max(1);
                    let prompts: Vec<&StrategyPrompt> =
                        candidates[..m].iter().map(|c| &c.prompt).collect();
                    par_map(&task.test, workers, |_, example| {
                        let sc = inferencer.infer_sc(task, &prompts, example)?;
                        let final_answer = if method == Method::Sc {
                            sc.tally.winner.clone()
                        } else {
                            match inferencer.infer_zs(task, &sc, example, manifest.zs_fallback) {
                                Ok(zs) => zs.final_answer.map(|a| a.text),
                                Err(Error::AllAbstained { example_id }) => {
                                    log::warn!(
                                        "every strategy abstained on {example_id}, nothing to aggregate"
                                    );
                                    None
                                }
                                Err(e) => return Err(e),
                            }
                        };
                        Ok(build_record(method, task, example, &sc.outcomes, final_answer))
                    })
                }
                Method::Inconsistent => {
                    if candidates.len() < 2 {
                        return Err(Error::NotEnoughStrategies {
                            got: candidates.len(),
                        });
                    }
                    let sources: Vec<_> = candidates
                        .iter()
                        .map(|c| (&c.strategy, &c.result))
                        .collect();
                    let slots = task.seed.len();
                    par_map(&task.test, workers, |_, example| {
                        let seed = derive_seed(manifest.seed, &example.id);
                        let prompt = assemble_inconsistent_prompt(&sources, slots, seed)?;
                        let outcome = inferencer.infer_single(task, &prompt, example)?;
                        let final_answer = outcome.answer.as_ref().map(|a| a.text.clone());
                        Ok(build_record(
                            method,
                            task,
                            example,
                            std::slice::from_ref(&outcome),
                            final_answer,
                        ))
                    })
                }
                _ => unreachable!("strategy methods handled above"),
            }
        }
        Method::Sp | Method::Cot | Method::CotSc | Method::Solutionllm | Method::CotStrategy => {
            let runner = BaselineRunner {
                gateway,
                model_id,
                max_tokens,
            };
            let single = |prompt: BaselinePrompt| -> Result<Vec<InferenceRecord>> {
                prompt.validate()?;
                par_map(&task.test, workers, |_, example| {
                    let outcome = runner.run_single(task, &prompt, example)?;
                    let final_answer = outcome.answer.as_ref().map(|a| a.text.clone());
                    Ok(build_record(
                        method,
                        task,
                        example,
                        std::slice::from_ref(&outcome),
                        final_answer,
                    ))
                })
            };
            match method {
                Method::Sp => single(sp_prompt(manifest, task)?),
                Method::Cot => single(cot_prompt(manifest, task)?),
                Method::Solutionllm => {
                    let prompt =
                        runner.build_solutionllm_prompt(task, DEFAULT_SOLUTION_ATTEMPTS)?;
                    let dir = run_dir.join("baselines");
                    fs::create_dir_all(&dir)?;
                    write_text(
                        &dir.join("solutionllm.json"),
                        &serde_json::to_string_pretty(&prompt)?,
                    )?;
                    single(prompt)
                }
                Method::CotSc => {
                    let prompt = cot_prompt(manifest, task)?;
                    let config = CotScConfig::default();
                    par_map(&task.test, workers, |_, example| {
                        let sc = runner.run_cot_sc(task, &prompt, example, &config)?;
                        let final_answer = sc.tally.winner.clone();
                        Ok(build_record(method, task, example, &sc.outcomes, final_answer))
                    })
                }
                Method::CotStrategy => {
                    let cot = cot_prompt(manifest, task)?;
                    par_map(&task.test, workers, |_, example| {
                        let result = runner.run_cot_strategy(task, &cot, example)?;
                        let final_answer =
                            result.outcome.answer.as_ref().map(|a| a.text.clone());
                        Ok(build_record(
                            method,
                            task,
                            example,
                            std::slice::from_ref(&result.outcome),
                            final_answer,
                        ))
                    })
                }
                _ => unreachable!("baseline methods handled above"),
            }
        }
    }
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let mut manifest = load_run_manifest(&args.run_dir)?;
    apply_overrides(&mut manifest, &args.overrides);
    if let Some(method) = args.method {
        manifest.method = method;
    }
    if let Some(top_m) = args.top_m {
        manifest.top_m = Some(top_m);
    }
    if args.no_zs_fallback {
        manifest.zs_fallback = false;
    }
    let task = load_task(&manifest.task)?;
    if task.test.is_empty() {
        return Err(Error::InvalidTask {
            name: task.name.clone(),
            message: "test split is empty".to_string(),
        });
    }

    let gateway = build_gateway(&manifest)?;
    gateway.preload_usage(&pipeline::load_usage(&args.run_dir)?);

    let records = run_method(&manifest, &task, &gateway, &args.run_dir)?;

    let dir = args.run_dir.join("inference");
    fs::create_dir_all(&dir)?;
    let mut out = String::new();
    for record in &records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    write_text(&dir.join(format!("{}.jsonl", manifest.method.name())), &out)?;
    pipeline::save_usage(&args.run_dir, &gateway.usage())?;

    let correct = records.iter().filter(|r| r.correct).count();
    println!(
        "{}: accuracy {:.4} ({correct}/{} examples)",
        manifest.method.name(),
        correct as f64 / records.len() as f64,
        records.len()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let manifest = load_run_manifest(&args.run_dir)?;
    let task = load_task(&manifest.task)?;

    let dir = args.run_dir.join("inference");
    let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|path| path.extension().is_some_and(|ext| ext == "jsonl"))
            .collect(),
        Err(_) => Vec::new(),
    };
    files.sort();
    if files.is_empty() {
        return Err(Error::Usage {
            message: format!("nothing to report: no inference logs under {}", dir.display()),
        });
    }

    let ledger_present = args.run_dir.join("ledger.json").exists();
    let usage = pipeline::load_usage(&args.run_dir)?;
    let total = usage.total();
    let cost = if ledger_present {
        match price_table(&manifest)?.estimate_cost(&manifest.backend.model_id, total) {
            Ok(cost) => Some(cost),
            Err(Error::MissingPrice { model_id }) => {
                log::warn!("no price entry for {model_id}, omitting cost");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let mut reports = Vec::new();
    for file in &files {
        let method = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("unknown")
            .to_string();
        let mut records = Vec::new();
        for line in read_text(file)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let record: InferenceRecord =
                serde_json::from_str(line).map_err(|e| Error::ParseFile {
                    path: file.clone(),
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        let mut report: EvalReport = build_report(&method, &records, &task, cost)?;
        if ledger_present {
            report.tokens = Some(total);
        }
        report.metadata.insert("task".to_string(), task.name.clone());
        report
            .metadata
            .insert("model".to_string(), manifest.backend.model_id.clone());
        reports.push(report);
    }
    write_reports(&args.run_dir, &reports)?;

    for report in &reports {
        println!(
            "{}: accuracy {:.4} over {} examples",
            report.method, report.accuracy, report.examples
        );
    }
    if ledger_present {
        let cost_note = cost
            .map(|c| format!(" ~ ${c:.4}"))
            .unwrap_or_default();
        println!(
            "cost: {} input + {} output tokens{cost_note}",
            total.input_tokens, total.output_tokens
        );
    }
    Ok(())
}

/// Shape of costs.json.
#[derive(Debug, Serialize, Deserialize)]
struct CostBreakdown {
    model_id: String,
    input_tokens: u64,
    output_tokens: u64,
    cost_usd: f64,
    per_role: BTreeMap<String, RoleCost>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RoleCost {
    input_tokens: u64,
    output_tokens: u64,
    cost_usd: f64,
}

fn cmd_cost(args: CostArgs) -> Result<()> {
    let manifest = load_run_manifest(&args.run_dir)?;
    let ledger_path = args.run_dir.join("ledger.json");
    if !ledger_path.exists() {
        return Err(Error::MissingArtifact { path: ledger_path });
    }
    let usage = pipeline::load_usage(&args.run_dir)?;
    let prices = price_table(&manifest)?;
    let model_id = &manifest.backend.model_id;
    let total = usage.total();
    let cost_usd = prices.estimate_cost(model_id, total)?;

    let mut per_role = BTreeMap::new();
    for (role, count) in &usage.roles {
        per_role.insert(
            role.name().to_string(),
            RoleCost {
                input_tokens: count.input_tokens,
                output_tokens: count.output_tokens,
                cost_usd: prices.estimate_cost(model_id, *count)?,
            },
        );
    }
    let breakdown = CostBreakdown {
        model_id: model_id.clone(),
        input_tokens: total.input_tokens,
        output_tokens: total.output_tokens,
        cost_usd,
        per_role,
    };
    write_text(
        &args.run_dir.join("costs.json"),
        &serde_json::to_string_pretty(&breakdown)?,
    )?;
    println!(
        "model {model_id}: {} input + {} output tokens ~ ${cost_usd:.4}",
        total.input_tokens, total.output_tokens
    );
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Report(args) => cmd_report(args),
        Command::Cost(args) => cmd_cost(args),
    }
}

/// Parses arguments, runs the chosen subcommand, and maps errors onto the
/// exit-code contract: 0 success, 1 internal failure, 2 usage error.
pub fn main_entry() -> i32 {
    let _ = env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("warn"),
    )
    .try_init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
