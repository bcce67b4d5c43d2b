use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::io::{parse_field, read_text, write_text, Lines};

pub const SPEED_HEADER_PREFIX: &str = "s";
pub const VOLUME_HEADER_PREFIX: &str = "h";

/// Fixed-width day profiles keyed by `(node, day)`. A `None` entry marks a
/// profile that exists but has missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    width: usize,
    rows: BTreeMap<(usize, usize), Option<Vec<f64>>>,
}

impl Profiles {
    pub fn new(width: usize) -> Self {
        Profiles {
            width,
            rows: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, node: usize, day: usize, values: Vec<f64>) -> Result<()> {
        if values.len() != self.width {
            return Err(Error::Shape {
                op: "profile insert",
                left: vec![self.width],
                right: vec![values.len()],
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {v} in profile ({node}, {day})"
            )));
        }
        self.rows.insert((node, day), Some(values));
        Ok(())
    }

    pub fn insert_missing(&mut self, node: usize, day: usize) {
        self.rows.insert((node, day), None);
    }

    /// Complete profile, if present.
    pub fn get(&self, node: usize, day: usize) -> Option<&[f64]> {
        self.rows.get(&(node, day)).and_then(|r| r.as_deref())
    }

    pub fn get_mut(&mut self, node: usize, day: usize) -> Option<&mut Vec<f64>> {
        self.rows.get_mut(&(node, day)).and_then(|r| r.as_mut())
    }

    pub fn contains(&self, node: usize, day: usize) -> bool {
        self.rows.contains_key(&(node, day))
    }

    pub fn is_missing(&self, node: usize, day: usize) -> bool {
        matches!(self.rows.get(&(node, day)), Some(None))
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), Option<&[f64]>)> {
        self.rows.iter().map(|(&k, v)| (k, v.as_deref()))
    }

    pub fn nodes(&self) -> BTreeSet<usize> {
        self.rows.keys().map(|&(n, _)| n).collect()
    }

    pub fn days(&self) -> BTreeSet<usize> {
        self.rows.keys().map(|&(_, d)| d).collect()
    }

    /// Keeps only rows whose node satisfies `keep`.
    pub fn filter_nodes(&self, keep: impl Fn(usize) -> bool) -> Profiles {
        Profiles {
            width: self.width,
            rows: self
                .rows
                .iter()
                .filter(|((n, _), _)| keep(*n))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// CSV text: `node_id,weekday,<prefix>0..` with one row per profile and
    /// empty fields for missing values.
    pub fn to_csv(&self, prefix: &str) -> String {
        let mut out = String::from("node_id,weekday");
        for t in 0..self.width {
            let _ = write!(out, ",{prefix}{t}");
        }
        out.push('\n');
        for (&(node, day), row) in &self.rows {
            let _ = write!(out, "{node},{day}");
            match row {
                Some(values) => {
                    for v in values {
                        let _ = write!(out, ",{v}");
                    }
                }
                None => out.push_str(&",".repeat(self.width)),
            }
            out.push('\n');
        }
        out
    }

    /// Parses CSV produced by [`Profiles::to_csv`]. A header line starting
    /// with `node_id` is skipped. Rows with any empty value field are kept
    /// as missing.
    pub fn parse_csv(source: &str, text: &str, width: usize) -> Result<Self> {
        let lines = Lines::new(source, text);
        let mut out = Profiles::new(width);
        for (ln, line) in Lines::new(source, text) {
            if line.starts_with("node_id") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != width + 2 {
                return Err(lines.err(
                    ln,
                    format!("expected {} fields, found {}", width + 2, fields.len()),
                ));
            }
            let node: usize = parse_field(&lines, ln, "node_id", fields[0])?;
            let day: usize = parse_field(&lines, ln, "weekday", fields[1])?;
            if out.contains(node, day) {
                return Err(lines.err(ln, format!("duplicate profile for node {node}, day {day}")));
            }
            if fields[2..].iter().any(|f| f.is_empty()) {
                out.insert_missing(node, day);
                continue;
            }
            let mut values = Vec::with_capacity(width);
            for (t, f) in fields[2..].iter().enumerate() {
                let v: f64 = parse_field(&lines, ln, &format!("value {t}"), f)?;
                if !v.is_finite() {
                    return Err(lines.err(ln, format!("value {t} is not finite")));
                }
                values.push(v);
            }
            out.insert(node, day, values)?;
        }
        Ok(out)
    }

    /// Like [`Profiles::parse_csv`] with the width taken from the header.
    pub fn parse_csv_auto(source: &str, text: &str) -> Result<Self> {
        let header = text.lines().next().unwrap_or("");
        if !header.starts_with("node_id") {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 1,
                msg: "expected a header starting with node_id".into(),
            });
        }
        let width = header.split(',').count().saturating_sub(2);
        if width == 0 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 1,
                msg: "header lists no value columns".into(),
            });
        }
        Self::parse_csv(source, text, width)
    }

    pub fn read_auto(path: &Path) -> Result<Self> {
        Self::parse_csv_auto(&path.display().to_string(), &read_text(path)?)
    }

    pub fn read(path: &Path, width: usize) -> Result<Self> {
        Self::parse_csv(&path.display().to_string(), &read_text(path)?, width)
    }

    pub fn save(&self, path: &Path, prefix: &str) -> Result<()> {
        write_text(path, &self.to_csv(prefix))
    }
}
