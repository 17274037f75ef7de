//! Flat `key = value` configuration.
//!
//! Grammar: one pair per line, `#` starts a comment, blank lines are
//! ignored, keys are `[a-z0-9_]+`, values run to the end of the line with
//! surrounding whitespace trimmed. Lists are comma-separated. A later
//! assignment (including command-line overrides) replaces an earlier one.
//! Keys an experiment does not read are reported as errors.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got '{raw}'", n + 1))?;
            s.set(k.trim(), v.trim()).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Settings::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            bail!("invalid key '{key}'");
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for p in pairs {
            let (k, v) = p.split_once('=').ok_or_else(|| anyhow!("override '{p}' is not key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| anyhow!("{key} = '{v}': {e}")),
        }
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse().map_err(|e| anyhow!("{key} = '{v}': {e}")))
            .transpose()
    }

    pub fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => {
                let items = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e| anyhow!("{key}: '{s}': {e}")))
                    .collect::<Result<Vec<T>>>()?;
                if items.is_empty() {
                    bail!("{key} must not be empty");
                }
                Ok(items)
            }
        }
    }

    /// Errors on keys nobody read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.values.keys().filter(|k| !used.contains(*k)).collect();
        if !unknown.is_empty() {
            bail!("unknown configuration keys: {unknown:?}");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_and_overrides() {
        let mut s = Settings::parse("# header\nepochs = 5\nseeds = 1, 2,3 # trailing\n\nlambda=0.01\n").unwrap();
        s.apply_overrides(["epochs=7"]).unwrap();
        assert_eq!(s.get("epochs", 0usize).unwrap(), 7);
        assert_eq!(s.list("seeds", vec![9u64]).unwrap(), vec![1, 2, 3]);
        assert_eq!(s.get("lambda", 0.0f64).unwrap(), 0.01);
        assert_eq!(s.get("missing", 4u8).unwrap(), 4);
        s.finish().unwrap();
    }

    #[test]
    fn errors() {
        assert!(Settings::parse("novalue\n").is_err());
        assert!(Settings::parse("Bad-Key = 1\n").is_err());
        let s = Settings::parse("epochs = x\nextra = 1\n").unwrap();
        assert!(s.get("epochs", 1usize).is_err());
        assert!(s.finish().unwrap_err().to_string().contains("extra"));
        assert!(Settings::parse("seeds = ,\n").unwrap().list::<u64>("seeds", vec![]).is_err());
    }
}
