use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tev_core::TevError;

pub const DATA_DIR_VAR: &str = "TEV_DATA_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Anything that failed while running; exit code 1.
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<TevError> for CliError {
    fn from(e: TevError) -> Self {
        match e {
            TevError::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<tev_numerics::NumericsError> for CliError {
    fn from(e: tev_numerics::NumericsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub struct Context {
    config: toml::Table,
    pub jobs: usize,
    data_dir: Option<PathBuf>,
}

impl Context {
    pub fn new(config: Option<&Path>, jobs: usize) -> CliResult<Self> {
        let config = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| usage(format!("config {}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        Ok(Context {
            config,
            jobs,
            data_dir: std::env::var_os(DATA_DIR_VAR).map(PathBuf::from),
        })
    }

    /// Settings for `name` from the config file, or the defaults.
    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> CliResult<T> {
        match self.config.get(name) {
            Some(value) => value
                .clone()
                .try_into()
                .map_err(|e| usage(format!("config table [{name}]: {e}"))),
            None => Ok(T::default()),
        }
    }

    /// Prints the settings actually used, as a config table that reproduces
    /// the run.
    pub fn echo<T: Serialize>(&self, name: &str, settings: &T) -> CliResult<()> {
        let mut table = toml::Table::new();
        table.insert(
            name.to_string(),
            toml::Value::try_from(settings).map_err(|e| CliError::Runtime(e.to_string()))?,
        );
        let text = toml::to_string(&table).map_err(|e| CliError::Runtime(e.to_string()))?;
        eprintln!("# effective configuration (jobs = {})", self.jobs);
        for line in text.lines() {
            eprintln!("{line}");
        }
        eprintln!();
        Ok(())
    }

    /// Relative paths are taken from `TEV_DATA_DIR` when it is set.
    pub fn path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

/// Copies every flag that was given onto the settings.
macro_rules! overlay {
    ($settings:expr, $args:expr, [$($field:ident),* $(,)?]) => {
        $( if let Some(v) = $args.$field.clone() { $settings.$field = v.into(); } )*
    };
}

pub(crate) use overlay;
