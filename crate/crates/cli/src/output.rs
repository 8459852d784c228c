//! Exit-code mapping, atomic file output and the summary table.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use tempfile::NamedTempFile;
use walshdiv::witness::{Check, Verdict};
use walshdiv::Error;

/// Failure classes of a run; each maps to a process exit code.
#[derive(Debug)]
pub enum CliError {
    /// A verification failed (exit 1).
    Check(String),
    /// Bad flags, config or inputs (exit 2).
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvariantViolation { .. } => CliError::Check(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Writes via a temporary file in the target directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io_err = |e: io::Error| config_err(format!("cannot write {}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.flush().map_err(io_err)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Artifact to `out`, or to standard output when no path is given.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| config_err(format!("stdout: {e}"))),
    }
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifacts serialize");
    v.push(b'\n');
    v
}

/// One row of the summary table.
pub struct Row {
    pub tag: String,
    pub status: String,
    pub detail: String,
}

impl Row {
    pub fn value(tag: &str, value: impl fmt::Display) -> Self {
        Row {
            tag: tag.into(),
            status: "value".into(),
            detail: value.to_string(),
        }
    }
}

impl From<&Check> for Row {
    fn from(c: &Check) -> Self {
        Row {
            tag: c.tag.clone(),
            status: match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::Unverified => "unverified",
            }
            .into(),
            detail: c.detail.clone(),
        }
    }
}

/// Prints the table (to stderr when the artifact went to stdout) and turns
/// any failed row into an exit-1 error.
pub fn summarize(rows: &[Row], artifact_on_stdout: bool) -> CliResult<()> {
    let width = rows.iter().map(|r| r.tag.chars().count()).max().unwrap_or(0);
    let mut text = String::new();
    for r in rows {
        let pad = width - r.tag.chars().count();
        text.push_str(&format!("{}{}  {:<10}  {}\n", r.tag, " ".repeat(pad), r.status, r.detail));
    }
    if artifact_on_stdout {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
    match rows.iter().find(|r| r.status == "fail") {
        Some(r) => Err(CliError::Check(format!("{}: {}", r.tag, r.detail))),
        None => Ok(()),
    }
}
