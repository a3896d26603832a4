use std::fmt;

use caseidx::bench::BenchError;
use caseidx::cluster::store::StoreError;
use caseidx::cluster::ClusterError;
use caseidx::config::ConfigError;
use caseidx::ingest::IngestError;
use caseidx::transport::error_code;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, config or spec. Exit 2.
    Usage(String),
    /// Anything that went wrong while doing the work. Exit 1.
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        Failure::Runtime(msg.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::runtime(e),
            _ => Failure::usage(e),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::MissingColumn(_) | IngestError::Mapping(_) | IngestError::BadShardCount => Failure::usage(e),
            IngestError::Config(c) => c.into(),
            _ => Failure::runtime(e),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Ingest(i) => i.into(),
            _ => Failure::runtime(e),
        }
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::BadQuery(_) | ClusterError::Dimension { .. } | ClusterError::Config(_) => Failure::usage(e),
            ClusterError::Remote { code, .. } if code == error_code::BAD_QUERY || code == error_code::DIMENSION => {
                Failure::usage(e)
            }
            _ => Failure::runtime(e),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Spec(_) => Failure::usage(e),
            BenchError::Config(c) => c.into(),
            BenchError::Ingest(i) => i.into(),
            _ => Failure::runtime(e),
        }
    }
}
