//! Ordered `key: value` run reports.

use std::fmt::{self, Display};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(algorithm: &str) -> Self {
        let mut r = Report::default();
        r.push("algorithm", algorithm);
        r
    }

    /// Append a line; keys may repeat.
    pub fn push(&mut self, key: &str, value: impl Display) {
        let v = value.to_string().replace('\n', " ");
        self.entries.push((key.to_string(), v));
    }

    /// Replace the first line with this key, or append.
    pub fn set(&mut self, key: &str, value: impl Display) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value.to_string().replace('\n', " "),
            None => self.push(key, value),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn all(&self, key: &str) -> Vec<&str> {
        self.entries.iter().filter(|(k, _)| k == key).map(|(_, v)| v.as_str()).collect()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend(&mut self, other: &Report) {
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}
