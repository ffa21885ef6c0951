//! Error classes and exit codes.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Config(String),
    /// Exit 3.
    Data(String),
    /// Exit 4.
    Numeric(String),
    /// Exit 130, after the final checkpoint was written.
    Interrupted,
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
            CliError::Interrupted => "interrupted",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Interrupted => 130,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
            CliError::Interrupted => f.write_str("interrupted; final checkpoint written"),
        }
    }
}

impl From<trsvi::Error> for CliError {
    fn from(e: trsvi::Error) -> Self {
        use trsvi::Error as E;
        let msg = e.to_string().replace('\n', " ");
        match e {
            E::Usage(_) => CliError::Config(msg),
            E::Domain(_) => CliError::Numeric(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
