//! Configuration documents, trajectory export/import and check reports.

mod config;
mod export;

pub use config::{load_config, parse_config, set_key, Format, RunConfig};
pub use export::{
    diagnostics_header, export_trajectory, format_report, read_states_csv, read_trajectory_json, states_header,
    write_diagnostics_csv, write_report, write_states_csv, CheckReportDocument, TrajectoryDocument, CONFIG_TOML,
    DIAGNOSTICS_CSV, REPORT_JSON, STATES_CSV, TRAJECTORY_JSON,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Version stamped into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}syntax error at line {line}, column {column}: {message}", file_prefix(.file))]
    Syntax {
        line: usize,
        column: usize,
        message: String,
        #[doc(hidden)]
        file: Option<PathBuf>,
    },
    #[error("{}invalid `{field}`{}: {message}", file_prefix(.file), line_suffix(.line))]
    Validation {
        line: Option<usize>,
        field: String,
        message: String,
        #[doc(hidden)]
        file: Option<PathBuf>,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed data: {0}")]
    Format(String),
}

fn file_prefix(file: &Option<PathBuf>) -> String {
    file.as_ref().map_or(String::new(), |p| format!("{}: ", p.display()))
}

fn line_suffix(line: &Option<usize>) -> String {
    line.map_or(String::new(), |l| format!(" (line {l})"))
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_file(mut self, path: &Path) -> Self {
        match &mut self {
            IoError::Syntax { file, .. } | IoError::Validation { file, .. } => *file = Some(path.to_path_buf()),
            _ => {}
        }
        self
    }
}
