//! Flat `key = value` configuration files. Lists are written `a,b,c`; `#`
//! starts a comment. Keys match the long flag names, with `-` and `_`
//! interchangeable. Command-line flags take precedence over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", n + 1))?;
            let key = normalize(k);
            if key.is_empty() {
                bail!("config line {}: empty key", n + 1);
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("config line {}: duplicate key {key}", n + 1);
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    /// The flag value if given, otherwise the config value, otherwise `None`.
    pub fn opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key}: cannot parse {s:?}: {e}")),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| anyhow!("missing required setting --{}", key.replace('_', "-")))
    }

    pub fn list<T: FromStr>(&self, key: &str, flag: Option<String>) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.opt::<String>(key, flag)? {
            None => Ok(None),
            Some(s) => parse_list(&s).map(Some).with_context(|| format!("setting {key}")),
        }
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse().map_err(|e| anyhow!("cannot parse list item {p:?}: {e}"))
        })
        .collect()
}
