use std::fmt;

/// Failure classes with fixed process exit codes.
///
/// The split follows who has to act: `Validation` means the input data is
/// wrong (2), `Configuration` means the invocation is wrong (3),
/// `Transport` means a remote end misbehaved and retrying may help (4),
/// `Infeasible` means a calibration run stopped at its size floor or
/// iteration cap with the distance still above threshold (5). Plain I/O
/// trouble exits 1.
#[derive(Debug)]
pub enum Failure {
    Io(String),
    Validation(String),
    Configuration(String),
    Transport(String),
    Infeasible(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Configuration(_) => 3,
            Failure::Transport(_) => 4,
            Failure::Infeasible(_) => 5,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Failure::Configuration(message.into())
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Failure::Validation(message.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, message) = match self {
            Failure::Io(m) => ("io", m),
            Failure::Validation(m) => ("validation", m),
            Failure::Configuration(m) => ("configuration", m),
            Failure::Transport(m) => ("transport", m),
            Failure::Infeasible(m) => ("infeasible", m),
        };
        write!(f, "error ({kind}): {message}")
    }
}

impl From<std::io::Error> for Failure {
    fn from(error: std::io::Error) -> Self {
        Failure::Io(error.to_string())
    }
}
