use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{function}: argument {value} outside supported domain ({expected})")]
    Domain {
        function: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("empty signal")]
    EmptySignal,

    #[error("autocorrelation has non-positive zero lag ({0})")]
    NonPositiveEnergy(f64),

    #[error("Nakagami shape m = {0} <= 1: use the Rayleigh fallback")]
    RayleighRequired(f64),

    #[error("clean reference is silent in every frame")]
    SilentReference,

    #[error("mono required, found {0} channels")]
    NotMono(u16),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    RateMismatch { expected: u32, found: u32 },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub(crate) fn domain(function: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            function,
            value,
            expected,
        }
    }
}
