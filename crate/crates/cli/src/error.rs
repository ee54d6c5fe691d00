use serde_json::json;

/// Failure of a CLI run, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent input (exit 1).
    Validation { message: String, key: Option<String> },
    /// A solver or analysis failed (exit 2).
    Solver(fracobstacle::Error),
    /// The complementarity oracle failed (exit 3).
    Oracle(fracobstacle::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Solver(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation { .. } => "validation",
            CliError::Solver(_) => "solver",
            CliError::Oracle(_) => "oracle",
        }
    }

    /// One-line JSON record for stderr and for sweep cell directories.
    pub fn diagnostic(&self) -> serde_json::Value {
        let mut record = json!({
            "event": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Validation { key: Some(key), .. } => record["key"] = json!(key),
            CliError::Solver(fracobstacle::Error::Step { time_index, iterations, residual }) => {
                record["time_index"] = json!(time_index);
                record["iterations"] = json!(iterations);
                record["residual"] = json!(residual);
            }
            CliError::Oracle(fracobstacle::Error::Oracle { time_index, sweeps, residual }) => {
                record["time_index"] = json!(time_index);
                record["sweeps"] = json!(sweeps);
                record["residual"] = json!(residual);
            }
            _ => {}
        }
        record
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation { message, key: Some(key) } => write!(f, "invalid configuration at `{key}`: {message}"),
            CliError::Validation { message, key: None } => write!(f, "invalid input: {message}"),
            CliError::Solver(e) | CliError::Oracle(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fracobstacle::Error> for CliError {
    fn from(e: fracobstacle::Error) -> Self {
        use fracobstacle::Error as E;
        match e {
            E::Oracle { .. } => CliError::Oracle(e),
            E::Step { .. } | E::Accuracy { .. } | E::InsufficientData(_) | E::Io(_) | E::Csv(_) => CliError::Solver(e),
            other => CliError::Validation {
                message: other.to_string(),
                key: None,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Solver(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Solver(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Solver(e.into())
    }
}
