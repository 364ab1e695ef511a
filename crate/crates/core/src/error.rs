use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("input not sorted by timestamp: {0}")]
    Unsorted(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("bin sparsity: {0}")]
    BinSparsity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("model selection failed: {}", format_reasons(.0))]
    ModelSelection(Vec<(usize, String)>),

    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("infeasible schedule: parent quantity {requested} exceeds max feasible {max_feasible}")]
    InfeasibleSchedule { requested: u64, max_feasible: u64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn format_reasons(reasons: &[(usize, String)]) -> String {
    reasons
        .iter()
        .map(|(k, r)| format!("k={k}: {r}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
