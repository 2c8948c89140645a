use serde::{Deserialize, Serialize};

use crate::lang::{parse, AstUnit, SyntaxError};

/// A candidate solution as supplied by a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProgram {
    pub id: String,
    /// Who wrote the code (a model name, `human`, ...).
    pub origin: String,
    pub text: String,
    pub entry_point: String,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error("syntax error: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("entry point '{0}' is not defined")]
    MissingEntry(String),
}

impl SourceProgram {
    pub fn new(id: impl Into<String>, origin: impl Into<String>, text: impl Into<String>, entry_point: impl Into<String>) -> Self {
        SourceProgram { id: id.into(), origin: origin.into(), text: text.into(), entry_point: entry_point.into() }
    }

    /// Parses the text and checks that the entry point exists.
    pub fn parse(&self) -> Result<AstUnit, ProgramError> {
        let unit = parse(&self.text)?;
        if !unit.has_function(&self.entry_point) {
            return Err(ProgramError::MissingEntry(self.entry_point.clone()));
        }
        Ok(unit)
    }
}
