use decontam_core::Error as CoreError;

/// Command failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or input data (exit code 1).
    #[error("{0:#}")]
    Validation(anyhow::Error),
    /// Failure while running (exit code 2).
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn validation(msg: impl std::fmt::Display) -> Self {
        CliError::Validation(anyhow::anyhow!("{msg}"))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if let CoreError::Records { count, failures } = &e {
            let listed: Vec<String> = failures.iter().map(|(id, err)| format!("  {id}: {err}")).collect();
            return CliError::Runtime(anyhow::anyhow!("{count} record(s) failed:\n{}", listed.join("\n")));
        }
        let validation = matches!(
            e,
            CoreError::InvalidParameter { .. }
                | CoreError::UnknownBenchmark(_)
                | CoreError::InvalidCorpus(_)
                | CoreError::UnreachableAuroc { .. }
        );
        let err = anyhow::Error::new(e);
        if validation {
            CliError::Validation(err)
        } else {
            CliError::Runtime(err)
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
