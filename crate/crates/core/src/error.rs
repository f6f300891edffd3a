use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingestion error at row {row}, column {column:?}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty table: {0}")]
    EmptyTable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rule syntax error at position {position}: {message}")]
    RuleSyntax { position: usize, message: String },

    #[error("unknown feature {name:?} at position {position}{}", suggest(.suggestions))]
    UnknownFeature {
        name: String,
        position: usize,
        suggestions: Vec<String>,
    },

    #[error("unknown value {value:?} for feature {feature:?} at position {position}{}", suggest(.suggestions))]
    UnknownValue {
        feature: String,
        value: String,
        position: usize,
        suggestions: Vec<String>,
    },

    #[error("duplicate feature {0:?} in rule")]
    DuplicateFeature(String),

    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("empty source: {0}")]
    EmptySource(String),

    #[error("search space too large: estimated {estimated} rules exceeds cap {cap}")]
    SearchSpaceTooLarge { estimated: u128, cap: u128 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

fn suggest(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!(" (did you mean: {})", s.join(", "))
    }
}

impl Error {
    /// Character offset into rule text, for errors raised while parsing one.
    pub fn position(&self) -> Option<usize> {
        match self {
            Error::RuleSyntax { position, .. }
            | Error::UnknownFeature { position, .. }
            | Error::UnknownValue { position, .. } => Some(*position),
            _ => None,
        }
    }

    /// True for errors caused by bad user input rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}
