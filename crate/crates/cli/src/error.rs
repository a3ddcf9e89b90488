use std::fmt;

use biolite_core::ErrorKind;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(biolite_core::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e.kind() {
                ErrorKind::Shape | ErrorKind::Data | ErrorKind::Io => "data",
                ErrorKind::Format => "format",
                ErrorKind::Internal => "internal",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "usage" => 2,
            "data" => 3,
            "format" => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        // One line, always.
        write!(f, "error[{}]: {}", self.category(), msg.replace('\n', " "))
    }
}

impl From<biolite_core::Error> for CliError {
    fn from(e: biolite_core::Error) -> Self {
        CliError::Core(e)
    }
}
