//! `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are consumed by
//! typed getters; [`KeyValues::finish`] rejects anything left unconsumed.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {k}", lineno + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Removes and parses `key`, falling back to `default` when absent.
    pub fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Parse(format!("bad value for {key}: {v:?}"))),
        }
    }

    pub fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.entries.remove(key).as_deref() {
            None => Ok(default),
            Some("true" | "1" | "on" | "yes") => Ok(true),
            Some("false" | "0" | "off" | "no") => Ok(false),
            Some(v) => Err(Error::Parse(format!("bad boolean for {key}: {v:?}"))),
        }
    }

    pub fn finish(self) -> Result<()> {
        if let Some(k) = self.entries.keys().next() {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        Ok(())
    }
}
