//! Flag/config-file merging and the exit-code mapping.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use floodrefine::config::RunConfig;
use floodrefine::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numeric(String),
    Other(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numeric(m) | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::BadMagic(_) | Error::Truncated(_) | Error::Manifest(_) | Error::Checkpoint(_) => {
                CliError::Io(msg)
            }
            Error::NonFinite(_) | Error::MissingGradient(_) => CliError::Numeric(msg),
            Error::InvalidParam(_) | Error::Config(_) | Error::Shape(_) | Error::CoverageUnreachable { .. } => {
                CliError::Usage(msg)
            }
            Error::Invariant(_) | Error::NoBoundary => CliError::Other(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("i/o error on {}: {e}", path.display()))
}

/// One command's settings: config file first, then flags on top, then
/// defaults for whatever is still unset.
pub struct Settings {
    cfg: RunConfig,
}

impl Settings {
    pub fn load(config: Option<&Path>, keys: &[&str]) -> CliResult<Self> {
        let cfg = match config {
            Some(p) => RunConfig::load(p, keys)?,
            None => RunConfig::new(),
        };
        Ok(Settings { cfg })
    }

    pub fn flag<T: ToString>(&mut self, key: &str, value: &Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.cfg.set(key, v.to_string());
        }
        self
    }

    pub fn path_flag(&mut self, key: &str, value: &Option<PathBuf>) -> &mut Self {
        if let Some(p) = value {
            self.cfg.set(key, p.display());
        }
        self
    }

    pub fn default(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.cfg.default_to(key, value);
        self
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T> {
        self.cfg
            .get_parsed(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting {key:?} (flag or config file)")))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.cfg.get(key)
    }

    /// `None` for an absent key or the literal `none`.
    pub fn optional(&self, key: &str) -> Option<&str> {
        self.cfg.get(key).filter(|v| *v != "none" && !v.is_empty())
    }

    pub fn path(&self, key: &str) -> CliResult<PathBuf> {
        self.optional(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Usage(format!("missing required path {key:?}")))
    }

    /// Absolute paths so the echoed config can be replayed from anywhere.
    pub fn absolutize(&mut self, keys: &[&str]) -> CliResult<()> {
        for k in keys {
            if let Some(v) = self.optional(k).map(PathBuf::from) {
                let abs = std::path::absolute(&v).map_err(|e| io_err(&v, e))?;
                self.cfg.set(k, abs.display());
            }
        }
        Ok(())
    }

    /// Write `<out>/<cmd>.config`.
    pub fn echo(&self, out: &Path, cmd: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let path = out.join(format!("{cmd}.config"));
        self.cfg.save(&path)?;
        Ok(path)
    }
}

pub fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let seeds: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| CliError::Usage(format!("bad seed {t:?} in {s:?}"))))
        .collect::<CliResult<_>>()?;
    if seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    Ok(seeds)
}
