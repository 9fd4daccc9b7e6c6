//! Helpers for reading structured key-value documents (TOML) field by field
//! so that every violation in a document is reported at once, each tagged
//! with its dotted field path.

use std::fmt;

use toml::{Table, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Renders a list of field errors one per line.
pub fn render_errors(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads typed fields out of a TOML table, accumulating errors instead of
/// failing on the first one.
pub struct FieldReader<'a> {
    table: &'a Table,
    prefix: String,
    seen: Vec<&'static str>,
    pub errors: Vec<FieldError>,
}

impl<'a> FieldReader<'a> {
    pub fn new(table: &'a Table, prefix: &str) -> Self {
        Self {
            table,
            prefix: prefix.to_string(),
            seen: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.prefix, key)
        }
    }

    fn lookup(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.table.get(key)
    }

    pub fn opt_value(&mut self, key: &'static str) -> Option<&'a Value> {
        self.lookup(key)
    }

    pub fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    pub fn fail(&mut self, key: &str, message: impl Into<String>) {
        let path = self.path(key);
        self.errors.push(FieldError::new(path, message));
    }

    fn as_number(value: &Value) -> Option<f64> {
        match value {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn opt_f64(&mut self, key: &'static str) -> Option<f64> {
        let value = self.lookup(key)?;
        match Self::as_number(value) {
            Some(x) if x.is_finite() => Some(x),
            Some(_) => {
                self.fail(key, "must be a finite number");
                None
            }
            None => {
                self.fail(key, "expected a number");
                None
            }
        }
    }

    pub fn req_f64(&mut self, key: &'static str) -> Option<f64> {
        if !self.has(key) {
            self.seen.push(key);
            self.fail(key, "missing required field");
            return None;
        }
        self.opt_f64(key)
    }

    pub fn f64_or(&mut self, key: &'static str, default: f64) -> f64 {
        self.opt_f64(key).unwrap_or(default)
    }

    pub fn opt_usize(&mut self, key: &'static str) -> Option<usize> {
        let value = self.lookup(key)?;
        match value {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            Value::Integer(_) => {
                self.fail(key, "must be a non-negative integer");
                None
            }
            _ => {
                self.fail(key, "expected an integer");
                None
            }
        }
    }

    pub fn usize_or(&mut self, key: &'static str, default: usize) -> usize {
        self.opt_usize(key).unwrap_or(default)
    }

    pub fn opt_bool(&mut self, key: &'static str) -> Option<bool> {
        let value = self.lookup(key)?;
        match value {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.fail(key, "expected a boolean");
                None
            }
        }
    }

    pub fn opt_str(&mut self, key: &'static str) -> Option<String> {
        let value = self.lookup(key)?;
        match value {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.fail(key, "expected a string");
                None
            }
        }
    }

    /// A `[lo, hi]` pair.
    pub fn opt_interval(&mut self, key: &'static str) -> Option<(f64, f64)> {
        let value = self.lookup(key)?;
        let pair = value.as_array().and_then(|a| {
            if a.len() == 2 {
                Some((Self::as_number(&a[0])?, Self::as_number(&a[1])?))
            } else {
                None
            }
        });
        match pair {
            Some((lo, hi)) if lo.is_finite() && hi.is_finite() => Some((lo, hi)),
            _ => {
                self.fail(key, "expected a two-element numeric array [lower, upper]");
                None
            }
        }
    }

    pub fn opt_table(&mut self, key: &'static str) -> Option<&'a Table> {
        let value = self.lookup(key)?;
        match value {
            Value::Table(t) => Some(t),
            _ => {
                self.fail(key, "expected a table");
                None
            }
        }
    }

    /// Flags keys that were never looked up.
    pub fn reject_unknown(&mut self) {
        let mut unknown: Vec<String> = self
            .table
            .keys()
            .filter(|k| !self.seen.iter().any(|s| s == k))
            .cloned()
            .collect();
        unknown.sort();
        for key in unknown {
            self.fail(&key, "unknown field");
        }
    }

    pub fn finish(mut self, into: &mut Vec<FieldError>) {
        into.append(&mut self.errors);
    }
}
