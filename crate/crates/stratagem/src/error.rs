//! Crate-wide error type and exit-code classification.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // model gateway
    #[error("no scripted response for a {role} request (prompt begins {preview:?})")]
    MissingScript { role: String, preview: String },
    #[error("backend transport failure: {message}")]
    Transport { message: String },
    #[error("backend returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("chat response is missing {field}")]
    MalformedResponse { field: String },
    #[error("no price entry for model {model_id:?}")]
    MissingPrice { model_id: String },

    // task corpus
    #[error("{}:{line}: {message}", path.display())]
    DatasetParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate example id {id:?} in {}", path.display())]
    DuplicateExampleId { id: String, path: PathBuf },
    #[error("task {name:?} is invalid: {message}")]
    InvalidTask { name: String, message: String },
    #[error("answer marker {marker:?} not found in model output")]
    MarkerNotFound { marker: String },

    // prompt assembly
    #[error("template {template} is missing a binding for {placeholder:?}")]
    MissingBinding {
        template: &'static str,
        placeholder: String,
    },
    #[error("template {template} has no placeholder {placeholder:?}")]
    UnknownBinding {
        template: &'static str,
        placeholder: String,
    },
    #[error("execution result for strategy {strategy_id} has no records")]
    EmptyExecution { strategy_id: String },
    #[error("execution record for example {example_id} of strategy {strategy_id} has no solution")]
    MissingSolution {
        strategy_id: String,
        example_id: String,
    },
    #[error("mixed prompt needs at least 2 strategies, got {got}")]
    NotEnoughStrategies { got: usize },
    #[error("strategy {strategy_id} has no execution record for seed slot {slot}")]
    MissingShotRecord { strategy_id: String, slot: usize },

    // agents and pipeline
    #[error("all {attempts} strategy generation samples failed")]
    GenerationFailed { attempts: usize },
    #[error("optimizing strategy {strategy_id} produced an empty strategy")]
    OptimizationFailed { strategy_id: String },
    #[error("strategy {strategy_id} already solves every seed example, nothing to optimize")]
    NothingToOptimize { strategy_id: String },
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("run directory {} already holds pipeline output, pass --force to overwrite", path.display())]
    RunDirOccupied { path: PathBuf },
    #[error("run artifact missing: {}", path.display())]
    MissingArtifact { path: PathBuf },

    // inference and baselines
    #[error("every candidate solution abstained for example {example_id}")]
    AllAbstained { example_id: String },
    #[error("solution generation failed for examples: {}", ids.join(", "))]
    SolutionGeneration { ids: Vec<String> },
    #[error("baseline prompt has no shots")]
    EmptyPrompt,
    #[error("cannot parse prompt asset {}: {message}", path.display())]
    BadPromptAsset { path: PathBuf, message: String },

    // evaluation
    #[error("{what} out of range: {got}")]
    OutOfRange { what: String, got: String },

    // configuration and filesystem
    #[error("{message}")]
    Usage { message: String },
    #[error("cannot read {}: {source}", path.display())]
    ReadFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    WriteFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {}: {message}", path.display())]
    ParseFile { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("worker thread panicked")]
    WorkerPanic,
}

impl Error {
    /// Process exit code for this error: 2 when the operator can fix the
    /// invocation or configuration, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingPrice { .. }
            | Error::DatasetParse { .. }
            | Error::DuplicateExampleId { .. }
            | Error::InvalidTask { .. }
            | Error::NotEnoughStrategies { .. }
            | Error::RunDirOccupied { .. }
            | Error::MissingArtifact { .. }
            | Error::BadPromptAsset { .. }
            | Error::Usage { .. }
            | Error::ReadFile { .. }
            | Error::ParseFile { .. } => 2,
            _ => 1,
        }
    }
}
