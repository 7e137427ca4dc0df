//! Flat run-configuration files and the flags > file > defaults resolver.
//!
//! The format is one `key = value` pair per line; `#` starts a comment and
//! blank lines are ignored. Keys use the same spelling as the long
//! command-line flags (without the leading `--`). A value read from the
//! file is used only where the corresponding flag was not given.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::IoError;

/// Parses a flat key-value file into a map, with line-numbered errors.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, IoError> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Layered option lookup: command-line flag, then config file, then the
/// built-in default. Records every resolved value so the final
/// configuration can be printed and hashed.
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    /// A resolver over an already-parsed config file (empty map for none).
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            resolved: Vec::new(),
        }
    }

    /// Loads the config file when a path is given, otherwise resolves
    /// against defaults only.
    pub fn from_path(path: Option<&Path>) -> Result<Self, IoError> {
        Ok(Self::new(match path {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        }))
    }

    fn lookup<T: FromStr>(&self, key: &str) -> Result<Option<T>, IoError> {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                IoError::Schema(format!("config key '{key}': cannot parse '{raw}'"))
            }),
        }
    }

    /// Resolves one option: `flag` wins, then the file, then `default`.
    pub fn resolve<T: FromStr + ToString>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, IoError> {
        let value = match flag {
            Some(v) => v,
            None => self.lookup(key)?.unwrap_or(default),
        };
        self.resolved.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// Resolves one option with no default; `None` when neither the flag
    /// nor the file provides it.
    pub fn resolve_optional<T: FromStr + ToString>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, IoError> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.lookup(key)?,
        };
        if let Some(v) = &value {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    /// Rejects config-file keys outside the command's known set, mirroring
    /// the unknown-flag rejection on the command line.
    pub fn reject_unknown_keys(&self, known: &[&str]) -> Result<(), IoError> {
        for key in self.file.keys() {
            if !known.contains(&key.as_str()) {
                return Err(IoError::Schema(format!(
                    "unknown config key '{key}' (known: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Every resolved `(key, value)` in resolution order.
    pub fn resolved(&self) -> &[(String, String)] {
        &self.resolved
    }

    /// FNV-1a hash over the resolved configuration, the fingerprint CSV
    /// outputs record alongside the seed.
    pub fn config_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf29ce484222325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        };
        for (k, v) in &self.resolved {
            feed(k.as_bytes());
            feed(b"=");
            feed(v.as_bytes());
            feed(b"\n");
        }
        hash
    }

    /// Renders the resolved configuration block printed by every run.
    pub fn render(&self, command: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "resolved config ({command})");
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "  {k} = {v}");
        }
        let _ = writeln!(out, "  config-hash = {:016x}", self.config_hash());
        out
    }
}
