//! Flat `key=value` run configuration.
//!
//! Values come from an optional file and are then overridden by command-line
//! flags. Every default consulted by a command is written back into the map,
//! so the header of an output file is the complete configuration of the run.

use anyhow::{anyhow, bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parse `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value, got {line:?}", n + 1))?;
            let k = normalize_key(k.trim());
            if k.is_empty() {
                bail!("line {}: empty key", n + 1);
            }
            cfg.values.insert(k, v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize_key(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Typed value, recording `default` when the key is absent.
    pub fn value_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            Some(v) => v.parse().map_err(|e| anyhow!("config key {key}={v}: {e}")),
            None => {
                self.values.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.value_or(key, default)?;
        if !v.is_finite() {
            bail!("config key {key} must be finite, got {v}");
        }
        Ok(v)
    }

    pub fn positive_or(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if v <= 0.0 {
            bail!("config key {key} must be positive, got {v}");
        }
        Ok(v)
    }

    pub fn str_or(&mut self, key: &str, default: &str) -> String {
        self.values.entry(key.to_string()).or_insert_with(|| default.to_string()).clone()
    }

    /// Comma-separated list, recording `default` when the key is absent.
    pub fn list_or<T>(&mut self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: FromStr + ToString + Clone,
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            Some(v) if v.trim().is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| anyhow!("config key {key}: {s:?}: {e}")))
                .collect(),
            None => {
                let joined: Vec<String> = default.iter().map(ToString::to_string).collect();
                self.values.insert(key.to_string(), joined.join(","));
                Ok(default.to_vec())
            }
        }
    }

    /// Optional list without a default.
    pub fn list_opt(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("config key {key}: {s:?}: {e}")))
                    .collect()
            })
            .transpose()
    }

    /// `key=value` lines in key order.
    pub fn lines(&self) -> Vec<String> {
        self.values.iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    /// Header comment block for an output file.
    pub fn header(&self, command: &str) -> String {
        let mut s = format!("# command={command}\n");
        for l in self.lines() {
            s.push_str("# ");
            s.push_str(&l);
            s.push('\n');
        }
        s
    }
}

/// Flags use dashes, keys use underscores.
pub fn normalize_key(k: &str) -> String {
    k.replace('-', "_")
}
