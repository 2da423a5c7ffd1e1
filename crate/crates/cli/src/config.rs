//! Plain-text configuration files: `key = value` lines grouped under
//! `[section]` headers, `#` comments, blank lines ignored.
//!
//! Every value stays a string until a command resolves it; resolution
//! order is CLI flag → config file → built-in default, so any flag
//! overrides the file.

use dg_core::error::{DgError, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// One parsed config file (or the empty config when none was given).
#[derive(Debug, Default)]
pub struct FileConfig {
    /// `section.key` → (value, 1-based line number).
    entries: BTreeMap<String, (String, usize)>,
}

impl FileConfig {
    /// The empty configuration.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parse `path`. Keys before any `[section]` land in the `""` section.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(DgError::Parse {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(DgError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(DgError::Parse {
                    line: line_no,
                    message: "empty key".to_string(),
                });
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            entries.insert(full, (value.trim().to_string(), line_no));
        }
        Ok(Self { entries })
    }

    /// Raw value of `section.key`, if present.
    fn raw(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        self.entries.get(&full)
    }

    /// Resolver scoped to one section.
    pub fn section<'a>(&'a self, name: &'a str) -> Resolve<'a> {
        Resolve {
            cfg: self,
            section: name,
        }
    }
}

/// Flag-over-file-over-default resolution for one config section.
pub struct Resolve<'a> {
    cfg: &'a FileConfig,
    section: &'a str,
}

impl Resolve<'_> {
    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.cfg.raw(self.section, key) {
            None => Ok(None),
            Some((value, line)) => value.parse::<T>().map(Some).map_err(|_| DgError::Parse {
                line: *line,
                message: format!(
                    "key `{}{}{}`: cannot parse `{value}` as {}",
                    self.section,
                    if self.section.is_empty() { "" } else { "." },
                    key,
                    std::any::type_name::<T>()
                ),
            }),
        }
    }

    /// Flag → file → default.
    pub fn or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Flag → file → `None`.
    pub fn opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.parsed(key)
    }

    /// Flag → file → error naming the missing key.
    pub fn required<T: FromStr>(&self, key: &'static str, flag: Option<T>) -> Result<T> {
        self.opt(key, flag)?
            .ok_or(DgError::MissingInputs { missing: vec![key] })
    }
}
