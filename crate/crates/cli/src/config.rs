//! Flat `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the long
//! flag names of the command (`batch-size = 8`, `variant = hrge-1l`); the
//! manifest written into every run directory uses the same format, so it
//! can be passed back with `--config` to repeat a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    /// Parses config text. Errors name the 1-based line.
    pub fn parse(text: &str) -> Result<Self, hrge::Error> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| hrge::Error::Syntax { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(err(format!("invalid key {key:?}")));
            }
            if value.is_empty() {
                return Err(err(format!("missing value for {key}")));
            }
            let key = key.replace('_', "-");
            if entries.insert(key.clone(), (line_no, value.to_string())).is_some() {
                return Err(err(format!("duplicate key {key}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| hrge::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// Typed lookup; a value that does not parse is a usage error naming
    /// the line.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config line {line}: invalid value {v:?} for {key}"))),
        }
    }

    /// Rejects keys the command does not understand.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {line}: unknown key {key:?} (accepted: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Resolution order for one setting: flag, then config file, then default.
pub fn resolve<T: FromStr>(flag: Option<T>, config: &ConfigFile, key: &str, default: T) -> Result<T, CliError> {
    Ok(match flag {
        Some(v) => v,
        None => config.get(key)?.unwrap_or(default),
    })
}

/// Like [`resolve`] without a default.
pub fn resolve_opt<T: FromStr>(flag: Option<T>, config: &ConfigFile, key: &str) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => config.get(key),
    }
}

/// Ordered `key = value` lines for a run manifest.
#[derive(Debug, Default)]
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.push("# command", command);
        m.push("# hrge-version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.lines.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            if k.starts_with('#') {
                let _ = writeln!(s, "{k}: {v}");
            } else {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}
