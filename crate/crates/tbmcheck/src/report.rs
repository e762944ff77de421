//! Line-delimited report records.
//!
//! One record per line, `type=<kind>` first, then fields as `key=value`
//! pairs in the order they were added. Floats are printed with `{:.17e}`
//! so identical runs produce byte-identical records.

use std::fmt;

#[derive(Debug, Clone)]
pub struct Record {
    kind: &'static str,
    fields: Vec<(String, String)>,
}

impl Record {
    pub fn new(kind: &'static str) -> Self {
        Record {
            kind,
            fields: Vec::new(),
        }
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn str(mut self, key: &str, value: impl AsRef<str>) -> Self {
        self.fields
            .push((key.to_string(), value.as_ref().to_string()));
        self
    }

    pub fn f64(mut self, key: &str, value: f64) -> Self {
        self.fields.push((key.to_string(), fmt_f64(value)));
        self
    }

    pub fn int(mut self, key: &str, value: i64) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn usize(mut self, key: &str, value: usize) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn bool(mut self, key: &str, value: bool) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn vec(mut self, key: &str, value: &[f64]) -> Self {
        let joined = value
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(",");
        self.fields.push((key.to_string(), joined));
        self
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type={}", self.kind)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Deterministic float formatting for records.
pub fn fmt_f64(value: f64) -> String {
    if value == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if value == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{value:.17e}")
    }
}
