use rsen::{CheckpointError, Error};

pub const VERIFY: u8 = 1;
pub const USAGE: u8 = 2;
pub const CHECKPOINT: u8 = 3;

/// A message with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: USAGE, message: message.into() }
    }

    pub fn verify(message: impl Into<String>) -> Self {
        Failure { code: VERIFY, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Checkpoint(_) => CHECKPOINT,
            Error::Divergence { .. } | Error::NonFiniteGradient { .. } => VERIFY,
            _ => USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure { code: CHECKPOINT, message: e.to_string() }
    }
}

macro_rules! usage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::usage(e.to_string())
            }
        }
    )*};
}

usage_from!(rsen::ConfigError, rsen::DataError, rsen::TensorError, std::io::Error);

/// Applies `RSEN_THREADS` (0 or unset = one thread per core).
pub fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("RSEN_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("RSEN_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}
