use mperf::platform::PlatformError;
use mperf::roofline_analysis::AnalysisError;
use mperf::sampling::SamplingError;

pub const USAGE: u8 = 1;
pub const PLATFORM: u8 = 2;
pub const CHILD: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn platform(message: impl Into<String>) -> Self {
        Self {
            code: PLATFORM,
            message: message.into(),
        }
    }

    pub fn child(message: impl Into<String>) -> Self {
        Self {
            code: CHILD,
            message: message.into(),
        }
    }
}

impl From<PlatformError> for CliError {
    fn from(e: PlatformError) -> Self {
        CliError::platform(e.to_string())
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        use SamplingError::*;
        match e {
            EmptyRequest
            | InvalidFrequency(_)
            | FrequencyMismatch(..)
            | TraceFormatError { .. }
            | RecordCorrupt { .. }
            | TidMismatch(..) => CliError::usage(e.to_string()),
            SamplingUnsupported { .. } | PermissionDenied { .. } | BackendUnavailable(_) | Io { .. } => {
                CliError::platform(e.to_string())
            }
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        use AnalysisError::*;
        match e {
            ChildFailed { .. } | Launch { .. } | ReportMissing { .. } | ReportInvalid { .. } => {
                CliError::child(e.to_string())
            }
            InvalidModel(_) | ZeroTime(_) | ZeroTraffic(_) | EmptyInput | EmptyCommand => {
                CliError::usage(e.to_string())
            }
        }
    }
}

pub fn io(context: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::usage(format!("{context} {}: {e}", path.display()))
}
