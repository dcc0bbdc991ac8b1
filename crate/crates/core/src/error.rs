use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found")]
    UnknownColumn(String),

    #[error("non-binary outcome `{value}` at row {row}")]
    NonBinaryOutcome { row: usize, value: String },

    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { row: usize, column: String },

    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { row: usize, column: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("column mismatch: model expects {expected:?}, data has {actual:?}")]
    ColumnMismatch { expected: Vec<String>, actual: Vec<String> },

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("requested {requested} rows from a dataset of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("invalid threshold {0}: must lie in [0, 1)")]
    InvalidThreshold(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("too few events: {events} < {required}")]
    TooFewEvents { events: usize, required: usize },

    #[error("no non-events in the data")]
    NoNonEvents,

    #[error("c-statistic needs at least one event and one non-event")]
    DegenerateOutcome,

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("complete separation detected (term `{term}`, standardized coefficient {coefficient:.2})")]
    Separation { term: String, coefficient: f64 },

    #[error("singular information matrix")]
    Singular,

    #[error("empty lambda grid")]
    EmptyLambdaGrid,

    #[error("draw {draw_index}: {source}")]
    Draw {
        draw_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("draw {draw_index}: no replicate met the event guard after {attempts} attempts")]
    ExcessRedraws { draw_index: usize, attempts: usize },

    #[error("only {succeeded} of {attempted} bootstrap fits succeeded (80% required)")]
    TooManyFailures { succeeded: usize, attempted: usize },

    #[error("empty draw set")]
    NoDraws,

    #[error("sample size {size}: {attempts} consecutive subsamples discarded")]
    AllDiscarded { size: usize, attempts: usize },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::Separation { .. }
            | Error::Singular
            | Error::ExcessRedraws { .. }
            | Error::TooManyFailures { .. }
            | Error::AllDiscarded { .. }
            | Error::TooFewEvents { .. }
            | Error::NoNonEvents
            | Error::DegenerateOutcome => true,
            Error::Draw { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// True for configuration mistakes a user can fix on the command line.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidThreshold(_) | Error::InvalidConfig(_) | Error::EmptyLambdaGrid
        )
    }

    pub(crate) fn in_draw(self, draw_index: usize) -> Error {
        match self {
            e @ (Error::Draw { .. } | Error::ExcessRedraws { .. }) => e,
            e => Error::Draw {
                draw_index,
                source: Box::new(e),
            },
        }
    }
}
