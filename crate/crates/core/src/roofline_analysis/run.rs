use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::AnalysisError;
use crate::roofline_runtime::{Phase, RunReport, MODE_ENV, OUT_ENV};

fn report_path(out_dir: &Path, phase: Phase) -> PathBuf {
    out_dir.join(format!("{phase}.json"))
}

/// Child stdout is sent to our stderr so that anything the program prints
/// does not mix with the analysis output.
fn child_stdout() -> Stdio {
    #[cfg(unix)]
    {
        use std::os::fd::AsFd;
        if let Ok(fd) = std::io::stderr().as_fd().try_clone_to_owned() {
            return Stdio::from(fd);
        }
    }
    Stdio::inherit()
}

fn run_phase<S: AsRef<OsStr>>(
    argv: &[S],
    out_dir: &Path,
    phase: Phase,
    extra_env: &[(&str, &str)],
) -> Result<RunReport, AnalysisError> {
    let path = report_path(out_dir, phase);
    // A stale report from an earlier run must not be mistaken for this one.
    let _ = std::fs::remove_file(&path);

    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .env(MODE_ENV, phase.to_string())
        .env(OUT_ENV, &path)
        .stdout(child_stdout());
    for (k, v) in extra_env {
        cmd.env(k, v);
    }
    let status = cmd.status().map_err(|source| AnalysisError::Launch { phase, source })?;
    if !status.success() {
        return Err(AnalysisError::ChildFailed {
            phase,
            code: status.code(),
        });
    }
    let text = std::fs::read_to_string(&path).map_err(|_| AnalysisError::ReportMissing {
        phase,
        path: path.display().to_string(),
    })?;
    let report = RunReport::from_json(&text).map_err(|e| AnalysisError::ReportInvalid {
        phase,
        reason: e.to_string(),
    })?;
    if report.phase != phase {
        return Err(AnalysisError::ReportInvalid {
            phase,
            reason: format!("report says phase {}", report.phase),
        });
    }
    Ok(report)
}

/// Runs `argv` once in baseline mode and once in instrumented mode, one
/// after the other, and returns both reports. Reports are written to
/// `out_dir/baseline.json` and `out_dir/instrumented.json`.
pub fn two_phase_run<S: AsRef<OsStr>>(argv: &[S], out_dir: &Path) -> Result<(RunReport, RunReport), AnalysisError> {
    two_phase_run_with_env(argv, out_dir, &[])
}

/// [`two_phase_run`] with additional environment variables for both runs.
pub fn two_phase_run_with_env<S: AsRef<OsStr>>(
    argv: &[S],
    out_dir: &Path,
    extra_env: &[(&str, &str)],
) -> Result<(RunReport, RunReport), AnalysisError> {
    if argv.is_empty() {
        return Err(AnalysisError::EmptyCommand);
    }
    let baseline = run_phase(argv, out_dir, Phase::Baseline, extra_env)?;
    let instrumented = run_phase(argv, out_dir, Phase::Instrumented, extra_env)?;
    Ok((baseline, instrumented))
}
