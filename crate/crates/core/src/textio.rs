//! Line-oriented helpers shared by the dataset and checkpoint containers.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Full-precision float formatting: 17 significant digits, round-trips exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn join_f64(values: &[f64], sep: &str) -> String {
    let mut out = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        let _ = write!(out, "{v:.16e}");
    }
    out
}

pub(crate) struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }

    /// Next non-empty line; end of input is a parse error.
    pub fn next_line(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim_end();
            if !l.is_empty() {
                return Ok(l);
            }
        }
        Err(Error::parse(self.line + 1, "unexpected end of file"))
    }

    /// Reads `<key> <rest>` and returns the whitespace-separated rest.
    pub fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            other => Err(self.err(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    pub fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let parts = self.keyed(key)?;
        match parts.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| self.err(format!("`{key}` expects an integer, found `{v}`"))),
            _ => Err(self.err(format!("`{key}` expects one integer"))),
        }
    }

    pub fn keyed_f64s(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let parts = self.keyed(key)?;
        if parts.len() != count {
            return Err(self.err(format!("`{key}` expects {count} values, found {}", parts.len())));
        }
        self.floats(&parts)
    }

    pub fn floats(&self, parts: &[&str]) -> Result<Vec<f64>> {
        parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| self.err(format!("invalid number `{p}`"))))
            .collect()
    }

    pub fn expect(&mut self, exact: &str) -> Result<()> {
        let l = self.next_line()?;
        if l == exact {
            Ok(())
        } else {
            Err(self.err(format!("expected `{exact}`, found `{l}`")))
        }
    }

    /// Checks a `version <v>` line against `expected`.
    pub fn version(&mut self, expected: u32) -> Result<()> {
        let parts = self.keyed("version")?;
        let found = parts.join(" ");
        if found.parse::<u32>().ok() == Some(expected) {
            Ok(())
        } else {
            Err(Error::Version { expected, found })
        }
    }

    pub fn finish(&mut self) -> Result<()> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                return Err(Error::parse(i + 1, "trailing content after end of container"));
            }
        }
        Ok(())
    }
}
