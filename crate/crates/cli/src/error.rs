use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(#[from] fbp_core::Error),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Output(_) => 1,
        }
    }

    /// Short machine-readable tag for the report.
    pub fn tag(&self) -> String {
        match self {
            CliError::Config(_) => "config".into(),
            CliError::Output(_) => "output".into(),
            CliError::Solver(e) => {
                let dbg = format!("{e:?}");
                let end = dbg
                    .find(|c: char| c == '(' || c == ' ' || c == '{')
                    .unwrap_or(dbg.len());
                dbg[..end].to_string()
            }
        }
    }
}

/// Turns a core error raised while building the inputs into a configuration
/// error, keeping its message.
pub fn bad_input(e: fbp_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
