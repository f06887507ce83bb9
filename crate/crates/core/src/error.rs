use std::fmt;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Validation(#[from] ValidationError),

    #[error("symbol index {index} is outside an alphabet of size {size}")]
    UnknownSymbol { index: usize, size: usize },

    #[error("unknown symbol label `{0}`")]
    UnknownLabel(String),

    #[error("state index {index} is outside a machine with {size} states")]
    UnknownState { index: usize, size: usize },

    #[error("stationary distribution did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("transition structure is not irreducible")]
    NotIrreducible,

    #[error("alphabets differ")]
    AlphabetMismatch,

    #[error("machines do not share the same structure")]
    StructureMismatch,

    #[error("a table of depth {depth} over {symbols} symbols exceeds the size guard")]
    TableTooLarge { depth: usize, symbols: usize },

    #[error("measure tables have different depths ({0} vs {1})")]
    DepthMismatch(usize, usize),

    #[error("stream of length {length} is shorter than the required {required}")]
    StreamTooShort { length: usize, required: usize },

    #[error("pattern library is empty")]
    EmptyLibrary,

    #[error("model is symbolic white noise; the strict annihilation bound does not apply (beta1 = {beta1}, |S|/|Q| = {ratio_bound})")]
    WhiteNoiseInput { beta1: f64, ratio_bound: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("row sum {0:e} underflowed during renormalization")]
    Underflow(f64),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Every invariant a candidate model violates.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl std::error::Error for ValidationError {}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.violations.len();
        write!(f, "{n} violation{}", if n == 1 { "" } else { "s" })?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateLabel { kind: LabelKind, label: String },
    AlphabetTooSmall { size: usize },
    NoStates,
    UnknownStart { label: String },
    UnknownStateLabel { label: String },
    UnknownSymbolLabel { label: String },
    PartialDelta { state: String, symbol: String },
    MissingMorphRow { state: String },
    MorphRowLength { state: String, expected: usize, found: usize },
    ZeroMorphEntry { state: String, symbol: String, value: f64 },
    NonStochasticRow { state: String, sum: f64 },
    NotStronglyConnected { unreachable: Vec<String>, cannot_return: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Symbol,
    State,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateLabel { kind, label } => {
                let kind = match kind {
                    LabelKind::Symbol => "symbol",
                    LabelKind::State => "state",
                };
                write!(f, "duplicate {kind} label `{label}`")
            }
            Violation::AlphabetTooSmall { size } => {
                write!(f, "alphabet has {size} symbols, at least 2 required")
            }
            Violation::NoStates => write!(f, "no states"),
            Violation::UnknownStart { label } => write!(f, "start state `{label}` is not declared"),
            Violation::UnknownStateLabel { label } => write!(f, "undeclared state `{label}`"),
            Violation::UnknownSymbolLabel { label } => write!(f, "undeclared symbol `{label}`"),
            Violation::PartialDelta { state, symbol } => {
                write!(f, "no transition from `{state}` on `{symbol}`")
            }
            Violation::MissingMorphRow { state } => write!(f, "no morph row for `{state}`"),
            Violation::MorphRowLength { state, expected, found } => write!(
                f,
                "morph row for `{state}` has {found} entries, expected {expected}"
            ),
            Violation::ZeroMorphEntry { state, symbol, value } => write!(
                f,
                "morph entry ({state}, {symbol}) = {value} is not strictly positive"
            ),
            Violation::NonStochasticRow { state, sum } => {
                write!(f, "morph row for `{state}` sums to {sum}")
            }
            Violation::NotStronglyConnected { unreachable, cannot_return } => write!(
                f,
                "transition graph is not strongly connected (unreachable: [{}]; cannot return: [{}])",
                unreachable.join(", "),
                cannot_return.join(", ")
            ),
        }
    }
}
