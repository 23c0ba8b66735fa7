use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("volume of {sites} sites exceeds the configured cap of {cap}")]
    SizeLimit { sites: u128, cap: usize },

    #[error("radius {radius} exceeds the configured cap of {cap}")]
    RadiusLimit { radius: usize, cap: usize },

    #[error("box {index:?} lies outside the truncated volume")]
    OutOfVolume { index: Vec<i64> },

    #[error("disorder sample has no value for box {missing:?}")]
    IncompleteSample { missing: Vec<i64> },

    #[error("spectral parameter z = {z} is too close to the spectrum ({detail}; residual {residual:e})")]
    SpectralProximity {
        z: f64,
        residual: f64,
        detail: String,
    },

    #[error("radius {radius} is too small, at least {required} shells are needed")]
    InsufficientVolume { radius: usize, required: usize },

    #[error("eigensolver did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("singular matrix encountered at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("unknown expansion order `{0}`")]
    InvalidOrder(String),

    #[error("mode {mode} outside 1..={max} in direction {direction}")]
    ModeOutOfRange {
        direction: usize,
        mode: usize,
        max: usize,
    },

    #[error("combinatorial limit exceeded: {count} > {cap}")]
    CombinatorialLimit { count: u128, cap: u128 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("magnitude {magnitude:e} is not representable at this precision; use extended precision")]
    Magnitude { magnitude: f64 },

    #[error("cannot embed cos(pi n/{p}) into the field of 2*{big_p}-th roots of unity: {p} does not divide {big_p}")]
    Embedding { p: u64, big_p: u64 },

    #[error("modulus {m} outside the supported range 1..={cap}")]
    ModulusRange { m: u64, cap: u64 },

    #[error("ambiguous eigenvalue matching at sorted indices {indices:?}")]
    Matching { indices: Vec<usize> },

    #[error("config error{}: field `{field}`: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(line: Option<usize>, field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
