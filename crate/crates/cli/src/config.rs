use std::collections::BTreeMap;
use std::path::Path;

use polypscan::params::{parse_assignment, parse_key_values};
use polypscan::{Error, PipelineParams};

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Input = 1,
    Config = 2,
    Internal = 3,
}

/// A failure together with its exit class.
#[derive(Debug)]
pub struct Failure {
    pub class: ExitClass,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn config(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            class: ExitClass::Config,
            kind: kind.into(),
            message: message.into(),
        }
    }

    /// Machine-readable one-line form.
    pub fn json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.class as i32,
            "message": self.message,
        })
        .to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Input(_)
            | Error::Io { .. }
            | Error::Image(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Metric(_) => ExitClass::Input,
            Error::Parameter(_) | Error::Calibration(_) | Error::Spec(_) => ExitClass::Config,
            _ => ExitClass::Internal,
        };
        Failure {
            class,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

/// Defaults, then the parameter file, then `--set` assignments.
pub fn load_params(file: Option<&Path>, sets: &[String]) -> Result<PipelineParams, Failure> {
    let mut overrides = BTreeMap::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config("io", format!("{}: {e}", path.display())))?;
        let parsed = parse_key_values(&text)
            .map_err(|e| Failure::config(e.kind(), format!("{}: {e}", path.display())))?;
        overrides.extend(parsed);
    }
    for s in sets {
        let (k, v) = parse_assignment(s).map_err(|m| Failure::config("parse", format!("--set {m}")))?;
        overrides.insert(k, v);
    }
    PipelineParams::from_overrides(&overrides).map_err(|e| Failure::config(e.kind(), e.to_string()))
}
