use serde::Serialize;
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        FieldError {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(Vec<FieldError>),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        RunError::Config(vec![FieldError::new(field, message)])
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }

    /// Machine-readable report written to stderr on failure.
    pub fn report(&self) -> serde_json::Value {
        match self {
            RunError::Config(errs) => json!({
                "status": "error",
                "kind": "config",
                "exit_code": self.exit_code(),
                "errors": errs,
            }),
            RunError::Numerical(msg) => json!({
                "status": "error",
                "kind": "numerical",
                "exit_code": self.exit_code(),
                "message": msg,
            }),
            RunError::Io(msg) => json!({
                "status": "error",
                "kind": "io",
                "exit_code": self.exit_code(),
                "message": msg,
            }),
        }
    }
}

impl From<rqw::Error> for RunError {
    fn from(e: rqw::Error) -> Self {
        if e.is_numerical() {
            RunError::Numerical(e.to_string())
        } else {
            RunError::config("", e.to_string())
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}
