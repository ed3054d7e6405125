//! Flat `key=value` config files, overridden by command-line flags.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default)]
pub struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    /// Parses `key = value` lines. Blank lines and lines starting with `#`
    /// are skipped; keys use the long flag names without dashes (`batch-size`
    /// and `batch_size` are equivalent).
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key=value", n + 1))?;
            let key = key.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                bail!("config line {}: unknown key `{key}`", n + 1);
            }
            values.insert(key, value.trim().to_owned());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text, allowed).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    /// The flag value if given, else the config value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key `{key}` = `{v}`: {e}")))
            .transpose()
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn required<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?.ok_or_else(|| anyhow!("missing required --{key}"))
    }

    /// Switches are true when set by flag or by a truthy config value.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.values.get(key).map(String::as_str) {
            None | Some("false" | "0" | "no") => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some(v) => bail!("config key `{key}` = `{v}`: expected true or false"),
        }
    }
}

/// Comma-separated triple such as `14,2,4` or `64,64,16`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triple(pub usize, pub usize, pub usize);

impl FromStr for Triple {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let nums = parts
            .iter()
            .map(|p| p.parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        match nums[..] {
            [a, b, c] => Ok(Triple(a, b, c)),
            _ => Err(format!("expected three comma-separated integers, got `{s}`")),
        }
    }
}
