use std::path::PathBuf;

use thiserror::Error;

use crate::frames::FrameKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bitrate must be positive and finite, got {0} Mbps")]
    InvalidBitrate(f64),

    #[error("association id {aid} does not fit a {len}-bit TIM (bit {} out of range)", aid + 1)]
    AidOutOfRange { aid: u16, len: usize },

    #[error("{0:?} has no response frame")]
    NoResponse(FrameKind),

    #[error("{0:?} is not a valid attack query kind")]
    InvalidQueryKind(FrameKind),

    #[error("invalid MAC address {0:?}")]
    InvalidMac(String),

    #[error("reply-rate table: {0}")]
    ReplyRateTable(String),

    #[error("cannot schedule an event at {at} us, clock is already at {now} us")]
    ScheduleInPast { at: u64, now: u64 },

    #[error("run_until({t_end}) is before the current clock {now}")]
    ClockRewind { t_end: u64, now: u64 },

    #[error("target discovery failed: {0}")]
    DiscoveryFailed(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace line {line}: {msg}")]
    TraceParse { line: u64, msg: String },

    #[error("signal processing: {0}")]
    Signal(String),

    #[error("trace spans {duration_s:.3} s but at least {min_s} s (one window) is required")]
    TraceTooShort { duration_s: f64, min_s: f64 },

    #[error("unknown {what} {name:?}; available: {}", available.join(", "))]
    UnknownName {
        what: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("{path}: {msg}")]
    Scenario { path: String, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI's `--json` error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBitrate(_) => "invalid_bitrate",
            Error::AidOutOfRange { .. } => "aid_out_of_range",
            Error::NoResponse(_) => "no_response",
            Error::InvalidQueryKind(_) => "invalid_query_kind",
            Error::InvalidMac(_) => "invalid_mac",
            Error::ReplyRateTable(_) => "reply_rate_table",
            Error::ScheduleInPast { .. } | Error::ClockRewind { .. } => "clock",
            Error::DiscoveryFailed(_) => "discovery_failed",
            Error::Config(_) => "config",
            Error::TraceParse { .. } => "trace_parse",
            Error::Signal(_) => "signal",
            Error::TraceTooShort { .. } => "trace_too_short",
            Error::UnknownName { .. } => "unknown_name",
            Error::Scenario { .. } => "scenario",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
