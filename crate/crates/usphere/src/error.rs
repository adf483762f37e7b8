use thiserror::Error;

/// One failed plan rule, reported as data so callers can list every problem at once.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanViolation {
    /// Index of the offending channel, or `None` for cross-channel rules.
    pub channel: Option<usize>,
    pub rule: String,
}

impl std::fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.channel {
            Some(i) => write!(f, "channel {i}: {}", self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Filter or resampler design parameters outside the supported region.
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// A call-site contract was violated (rate mismatch, wrong channel count, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Modulation index times audio peak exceeds 1.0; the envelope would fold over.
    #[error(
        "overmodulation rejected: mod_index {mod_index} * peak {measured_peak:.6} = {:.6} > 1.0",
        mod_index * measured_peak
    )]
    Overmodulation { mod_index: f64, measured_peak: f64 },

    /// One or more frequency-plan rules failed.
    #[error("illegal channel plan: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    PlanViolations(Vec<PlanViolation>),

    /// Cross-correlation has no usable peak (silence or unrelated signals).
    #[error("interaural delay undefined: no usable cross-correlation peak")]
    UndefinedItd,

    /// Analysis band has lo >= hi.
    #[error("inverted band: {lo_hz} Hz .. {hi_hz} Hz")]
    InvertedBand { lo_hz: f64, hi_hz: f64 },

    /// Not enough overlapping signal to align (shorter than the required window).
    #[error("insufficient overlap for alignment: {got_s:.3} s, need >= {need_s:.3} s")]
    InsufficientOverlap { got_s: f64, need_s: f64 },

    /// WAV header is not a parseable RIFF/WAVE structure.
    #[error("malformed wav file: {0}")]
    MalformedWav(String),

    /// WAV parses but uses an encoding outside pcm16/pcm24/float32.
    #[error("unsupported wav format: {0}")]
    UnsupportedWav(String),

    /// WAV header promises more sample data than the file holds.
    #[error("truncated wav data: {0}")]
    TruncatedWav(String),

    /// PCM write would clip and clipping was not allowed.
    #[error("samples exceed full scale for pcm output: peak {peak:.6}")]
    WouldClip { peak: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn invalid_design(msg: impl Into<String>) -> Self {
        Error::InvalidDesign(msg.into())
    }
}
