//! Flat `key = value` configuration text.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::io::{read_text, write_text, Lines};

/// Ordered key/value map with typed accessors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment. Repeated keys are
    /// an error.
    pub fn parse(source: &str, text: &str) -> Result<Self> {
        let lines = Lines::new(source, text);
        let mut map = BTreeMap::new();
        let mut it = Lines::new(source, text);
        for (n, line) in it.by_ref() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| lines.err(n, format!("expected key = value, found {line:?}")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(lines.err(n, "empty key"));
            }
            if map.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(lines.err(n, format!("duplicate key {k}")));
            }
        }
        Ok(KeyValues { map })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&path.display().to_string(), &read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }

    pub fn to_text(&self) -> String {
        self.map
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Entries of `other` replace entries here.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.map {
            self.map.insert(k.clone(), v.clone());
        }
    }

    /// Typed value, or `default` when absent.
    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}"))),
        }
    }

    /// Comma-separated list value.
    pub fn get_list_or<T>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) if v.trim().is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
                })
                .collect(),
        }
    }

    /// Fails on any key outside `known`.
    pub fn ensure_known(&self, known: &[&str]) -> Result<()> {
        for k in self.map.keys() {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown configuration key {k:?}")));
            }
        }
        Ok(())
    }
}

pub fn join_list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
