use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown potential preset {0:?} (expected X, A or A_tilde)")]
    UnknownPreset(String),

    #[error("x = {x} lies outside the tabulated range [{min}, {max}]")]
    OutOfRange { x: f64, min: f64, max: f64 },

    #[error("time {time} is not an integer multiple of the step {step}")]
    Incommensurate { time: f64, step: f64 },

    #[error("wavepacket reached the grid edge: edge/max amplitude {ratio:.3e} exceeds {limit:.1e}")]
    BoundaryLeak { ratio: f64, limit: f64 },

    #[error("Nyquist guard: pi/step = {nyquist:.6e} Eh must exceed 1.1 * {omega_max:.6e} Eh; reduce the tau32 step")]
    Nyquist { nyquist: f64, omega_max: f64 },

    #[error("level {level} is not bound (bound count {bound})")]
    Unbound { level: usize, bound: usize },

    #[error("every grid point is masked out")]
    AllMasked,

    #[error("exhaustive sign search is limited to N <= 16, got N = {0}")]
    ExhaustiveTooLarge(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("array format: {0}")]
    Format(String),

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
