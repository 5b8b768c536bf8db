use driftband::Error;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_CERTIFICATION: u8 = 4;

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    /// `(w0, d(w0))` pairs of a failed outer search.
    pub trace: Vec<(f64, Option<f64>)>,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            trace: Vec::new(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidConfig { .. } | Error::InvalidInstance(_) | Error::Discretization(_) => {
                Failure::new(EXIT_CONFIG, message)
            }
            Error::SolveFailure { trace, .. } => Failure {
                code: EXIT_SOLVER,
                message,
                trace,
            },
            Error::Certification(_) => Failure::new(EXIT_CERTIFICATION, message),
            _ => Failure::new(EXIT_OTHER, message),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_OTHER, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(EXIT_OTHER, e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::new(EXIT_OTHER, e.to_string())
    }
}
