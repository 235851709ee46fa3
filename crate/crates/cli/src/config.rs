//! `key = value` configuration files and their merge with command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

/// Parsed `key = value` lines. Blank lines and `#` comments are skipped;
/// dashes and underscores in keys are interchangeable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", no + 1))?;
            let key = normalize(k);
            if key.is_empty() {
                bail!("line {}: empty key", no + 1);
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{key}`", no + 1);
            }
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Resolves each parameter from its flag, then the config file, then a
/// default, and records the value for the run manifest.
#[derive(Debug)]
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    pub resolved: BTreeMap<String, Value>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Resolver {
            file,
            resolved: BTreeMap::new(),
        }
    }

    fn from_file<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("invalid value `{raw}` for `{key}` in config file: {e}")),
        }
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Clone + Into<Value>,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.clone().into());
        }
        Ok(v)
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Clone + Into<Value>,
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.clone().into());
        Ok(v)
    }

    pub fn req<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Clone + Into<Value>,
        T::Err: Display,
    {
        self.opt(key, flag)?.ok_or_else(|| {
            anyhow!(
                "missing required parameter --{} (flag or config key `{key}`)",
                key.replace('_', "-")
            )
        })
    }

    /// Comma-separated list of floats.
    pub fn list(
        &mut self,
        key: &str,
        flag: Option<Vec<f64>>,
        default: Vec<f64>,
    ) -> Result<Vec<f64>> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => parse_list(raw).with_context(|| format!("config key `{key}`"))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), v.clone().into());
        Ok(v)
    }

    /// Raw string list separated by `;` in the file.
    pub fn strings(&mut self, key: &str, flag: Vec<String>) -> Vec<String> {
        let v = if flag.is_empty() {
            self.file
                .get(key)
                .map(|raw| {
                    raw.split(';')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                })
                .unwrap_or_default()
        } else {
            flag
        };
        if !v.is_empty() {
            self.resolved.insert(key.to_string(), v.clone().into());
        }
        v
    }

    /// Keys of the file that no parameter of the command consumed.
    pub fn unused(&self) -> Vec<String> {
        self.file
            .keys()
            .filter(|k| !self.resolved.contains_key(*k) && !GLOBAL_KEYS.contains(k))
            .map(str::to_string)
            .collect()
    }
}

const GLOBAL_KEYS: [&str; 2] = ["out", "workers"];

pub fn parse_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("invalid number `{}`: {e}", s.trim()))
        })
        .collect()
}
