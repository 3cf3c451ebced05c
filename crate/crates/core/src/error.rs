use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid detuning tolerance {tolerance} GHz: must be positive and below the minimal process spacing {min_spacing} GHz")]
    InvalidTolerance { tolerance: f64, min_spacing: f64 },

    #[error("no process resonant with pump at {pump_ghz} GHz")]
    EmptySelection { pump_ghz: f64 },

    #[error("pump at {pump_ghz} GHz activates several inequivalent processes: {processes:?}")]
    AmbiguousSelection {
        pump_ghz: f64,
        processes: Vec<String>,
    },

    #[error("cutoff {cutoff} of mode {mode} cannot hold a monomial needing {required} quanta")]
    CutoffTooSmall {
        mode: usize,
        cutoff: usize,
        required: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("expectation of a Hermitian operator has imaginary part {imag:e}")]
    NonRealExpectation { imag: f64 },

    #[error("rejection envelope does not cover the Q function (ratio {ratio}) near {region}")]
    QBoundFailure { ratio: f64, region: String },

    #[error("variance of a sample stream is zero or not finite")]
    DegenerateVariance,

    #[error("sample streams have different lengths: {0:?}")]
    LengthMismatch(Vec<usize>),

    #[error("histogram bin grids differ")]
    BinMismatch,

    #[error("grids of the two fingerprint maps differ")]
    GridMismatch,

    #[error("unsupported Hamiltonian: {0}")]
    UnsupportedHamiltonian(String),

    #[error("mode {mode} out of range for a {n_modes}-mode record")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("protocol {protocol} needs a {required}-mode record, got {found} modes")]
    ProtocolMismatch {
        protocol: &'static str,
        required: usize,
        found: usize,
    },

    #[error("a sweep needs at least {required} phases, got {found}")]
    TooFewPhases { required: usize, found: usize },

    #[error("not a record file (bad magic)")]
    BadMagic,

    #[error("record format version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u16, supported: u16 },

    #[error("file truncated: header promises {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("payload checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumFailure { stored: u32, computed: u32 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user input (bad config, flags or files the
    /// user pointed at) rather than a numerical or runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidParams(_) | Error::InvalidTolerance { .. }
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
