use std::fmt;
use std::path::Path;

use serde_json::json;
use turnscope::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Input could not be read as the expected format or processed.
    Parse,
    Config,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Parse => 1,
            Kind::Config => 2,
            Kind::Io => 3,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Kind::Parse => "parse",
            Kind::Config => "config",
            Kind::Io => "io",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
    pub field: Option<String>,
    pub path: Option<String>,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
            field: None,
            path: None,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Failure::new(Kind::Config, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            path: Some(path.display().to_string()),
            ..Failure::new(Kind::Io, e.to_string())
        }
    }

    /// Tags the failure with the input it came from, unless already set.
    pub fn at(mut self, path: &Path) -> Self {
        self.path.get_or_insert_with(|| path.display().to_string());
        self
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        let mut v = json!({
            "error": self.kind.as_str(),
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        });
        if let Some(f) = &self.field {
            v["field"] = json!(f);
        }
        if let Some(p) = &self.path {
            v["path"] = json!(p);
        }
        v.to_string()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Io { path, source } => Failure {
                path: Some(path.display().to_string()),
                ..Failure::new(Kind::Io, source.to_string())
            },
            Error::Param { name, .. } => Failure {
                field: Some(name.to_string()),
                ..Failure::new(Kind::Config, message)
            },
            Error::Config(_) | Error::UnknownChannel(_) | Error::Montage(_) | Error::Window(_) => {
                Failure::new(Kind::Config, message)
            }
            _ => Failure::new(Kind::Parse, message),
        }
    }
}

pub type CliResult<T = ()> = std::result::Result<T, Failure>;
