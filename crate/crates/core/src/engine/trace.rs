//! Decode trace: ordered events plus token counters.

use serde::{Deserialize, Serialize};

use crate::token::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    StepStarted {
        step: String,
    },
    TokensEmitted {
        step: String,
        tokens: Vec<TokenId>,
        text: String,
    },
    MaskApplied {
        step: String,
        valid: usize,
    },
    ValidationFailed {
        #[serde(rename = "loop")]
        loop_name: String,
        iteration: u32,
        predicate: String,
    },
    BacktrackPerformed {
        anchor: String,
        erased: usize,
    },
    FallbackApplied {
        variable: String,
        value: String,
    },
    StepCompleted {
        step: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    /// Every token appended to the context: sampled, scaffolding, retry
    /// preambles, and re-tokenized text after stop truncation.
    pub tokens_emitted: u64,
    /// Tokens removed by backtracking or stop truncation, plus injected
    /// preambles (never part of the output).
    pub tokens_discarded: u64,
    pub output_tokens: u64,
    pub regenerations: u64,
    pub backend_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub events: Vec<Event>,
    pub counters: Counters,
}

impl DecodeTrace {
    pub(crate) fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn backtracks(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::BacktrackPerformed { .. }))
            .count()
    }

    pub fn validation_failures(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::ValidationFailed { .. }))
            .count()
    }

    pub fn fallbacks(&self) -> impl Iterator<Item = (&str, &str)> {
        self.events.iter().filter_map(|e| match e {
            Event::FallbackApplied { variable, value } => Some((variable.as_str(), value.as_str())),
            _ => None,
        })
    }

    /// One JSON object per event, then a `{"summary": counters}` record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&serde_json::json!({ "summary": self.counters }))
                .expect("counters serialize"),
        );
        out.push('\n');
        out
    }

    /// Inverse of [`DecodeTrace::to_jsonl`].
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut trace = DecodeTrace::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line)?;
            if let Some(summary) = v.get("summary") {
                trace.counters = serde_json::from_value(summary.clone())?;
            } else {
                trace.events.push(serde_json::from_value(v)?);
            }
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut t = DecodeTrace::default();
        t.push(Event::ValidationFailed {
            loop_name: "check".into(),
            iteration: 1,
            predicate: "r <= 4".into(),
        });
        t.push(Event::BacktrackPerformed {
            anchor: "r".into(),
            erased: 3,
        });
        t.counters.tokens_emitted = 7;
        let text = t.to_jsonl();
        assert!(text.starts_with(r#"{"event":"validation_failed","loop":"check""#));
        assert!(text.lines().last().unwrap().starts_with(r#"{"summary":"#));
        assert_eq!(DecodeTrace::from_jsonl(&text).unwrap(), t);
    }
}
