//! Plain-text `key=value` config files, flag/file/default resolution, and
//! manifest writing.
//!
//! Precedence is flags > config file > defaults. A config file may only
//! carry keys the active subcommand understands; anything else is rejected
//! so typos cannot silently fall back to defaults. Every run writes a
//! `manifest` file with the fully resolved configuration before doing any
//! work, and a manifest is itself a valid config file for re-running.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Parsed config file with consumption tracking.
pub struct FileConfig {
    entries: BTreeMap<String, String>,
    path: Option<PathBuf>,
}

impl FileConfig {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
            path: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self {
            entries,
            path: Some(path.to_path_buf()),
        })
    }

    /// Removes and returns a raw value, marking the key as understood.
    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Errors when un-consumed keys remain; called after resolution.
    pub fn ensure_consumed(&self) -> Result<(), CliError> {
        if let Some(key) = self.entries.keys().next() {
            let from = self
                .path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            return Err(CliError::usage(format!(
                "unknown config key '{key}' in {from}"
            )));
        }
        Ok(())
    }

    /// Validates a `command=` entry against the active subcommand, if one
    /// is present (manifests carry it).
    pub fn check_command(&mut self, command: &str) -> Result<(), CliError> {
        if let Some(found) = self.take_raw("command") {
            if found != command {
                return Err(CliError::usage(format!(
                    "config was written by '{found}', not '{command}'"
                )));
            }
        }
        Ok(())
    }
}

/// flag > file > default, with file values parsed into the flag's type.
pub fn resolve<T: FromStr + Clone>(
    flag: &Option<T>,
    file: &mut FileConfig,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    if let Some(v) = flag {
        file.take_raw(key); // flag overrides; still consume the file entry
        return Ok(v.clone());
    }
    match file.take_raw(key) {
        Some(raw) => raw
            .parse::<T>()
            .map_err(|_| CliError::usage(format!("config key '{key}': cannot parse '{raw}'"))),
        None => Ok(default),
    }
}

/// Ordered key-value pairs that describe one resolved run.
pub struct Manifest {
    pairs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            pairs: vec![("command".into(), command.into())],
        }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.pairs.push((key.into(), value.to_string()));
    }

    /// Writes `<out_dir>/manifest`, creating the directory if needed.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest");
        let mut text = String::new();
        for (k, v) in &self.pairs {
            text.push_str(&format!("{k}={v}\n"));
        }
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Comma-separated list parsing for flags like `--dims 2,3,8,32`.
pub fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| CliError::usage(format!("bad {what} entry '{s}'")))
        })
        .collect()
}
