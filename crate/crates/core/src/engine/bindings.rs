//! Cross-step variable store.

use serde::{Deserialize, Serialize};

use crate::ir::{numeric_view, Env};

/// Insertion-ordered bindings. Writes append, so backtracking is a
/// truncation; lookups see the latest write.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Bindings {
    entries: Vec<(String, String)>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.entries.push((name.into(), value.into()));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    /// Numeric view: present when the text is a plain decimal.
    pub fn number(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(numeric_view)
    }

    pub(crate) fn len(&self) -> usize {
        self.entries.len()
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    /// Final value per variable, in first-binding order.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for (k, v) in &self.entries {
            match out.iter_mut().find(|(name, _)| name == k) {
                Some(slot) => slot.1 = v.clone(),
                None => out.push((k.clone(), v.clone())),
            }
        }
        out
    }

    /// Bindings document: `{"bindings": [{"name", "value", "number"}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let items: Vec<serde_json::Value> = self
            .resolved()
            .into_iter()
            .map(|(name, value)| {
                let number = numeric_view(&value);
                serde_json::json!({ "name": name, "value": value, "number": number })
            })
            .collect();
        serde_json::json!({ "bindings": items })
    }
}

impl Env for Bindings {
    fn lookup(&self, name: &str) -> Option<&str> {
        self.get(name)
    }
}
