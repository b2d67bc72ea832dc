//! Plain-text `key: value` reports with named numeric metrics for `--check`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Default, Clone)]
pub struct Report {
    text: String,
    metrics: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self { text: format!("# {title}\n"), metrics: BTreeMap::new() }
    }

    pub fn section(&mut self, name: &str) {
        let _ = write!(self.text, "\n[{name}]\n");
    }

    pub fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key}: {value}");
    }

    /// A numeric line that `--check` can refer to by `key`.
    pub fn metric(&mut self, key: &str, value: f64) {
        self.line(key, num(value));
        self.metrics.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Plain notation for moderate magnitudes, scientific otherwise.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e7).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("[{}]", items.join(", "))
}

pub fn parts(p: &[Vec<usize>]) -> String {
    let items: Vec<String> =
        p.iter().map(|c| format!("{{{}}}", c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", "))).collect();
    format!("[{}]", items.join(", "))
}
