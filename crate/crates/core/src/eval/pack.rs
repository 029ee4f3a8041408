//! Task packs: instances, a rule program and a scorer in one JSON container.
//!
//! ```json
//! {"id": "...", "prompt": "...", "program": "scidc-ir v1 ...",
//!  "scorer": {"validity": {"kind": "staging"}, "accuracy": {"kind": "exact_match"}},
//!  "oracle": {"cues": [{"text": "T category: ", "field": "t_stage"}], "answer_field": "answer"},
//!  "instances": [{"id": "r0", "input": "...", "gold": ["T1aN0M0"], "fields": {...}}]}
//! ```
//!
//! The program may contain `{{field}}` slots filled from each instance's
//! fields before parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::score::{Accuracy, ValiditySpec};
use super::EvalError;
use crate::ir::{lint_program, parse_program, Options, RuleProgram, StepKind};
use crate::token::{TokenError, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPack {
    pub id: String,
    /// Text placed before every instance input.
    #[serde(default)]
    pub prompt: String,
    pub program: String,
    pub scorer: Scorer,
    #[serde(default)]
    pub oracle: OracleSpec,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorer {
    pub validity: ValiditySpec,
    #[serde(default)]
    pub accuracy: Option<Accuracy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub input: String,
    /// One label, or the accepted set; empty when the pack scores validity only.
    #[serde(default)]
    pub gold: Vec<String>,
    #[serde(default)]
    pub fields: BTreeMap<String, String>,
}

/// How the oracle mock answers: the field to produce after each cue, and
/// the whole-answer field for spans with no cue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(default)]
    pub cues: Vec<Cue>,
    #[serde(default = "default_answer_field")]
    pub answer_field: String,
    /// Chance that a span's answer gets an " or <alternative>" tail.
    #[serde(default)]
    pub hedge_rate: f64,
    /// Alternatives for hedging the whole answer.
    #[serde(default)]
    pub answer_alternatives: Vec<String>,
}

fn default_answer_field() -> String {
    "answer".into()
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            cues: Vec::new(),
            answer_field: default_answer_field(),
            hedge_rate: 0.0,
            answer_alternatives: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cue {
    /// Context suffix that starts the span.
    pub text: String,
    pub field: String,
    #[serde(default)]
    pub alternatives: Vec<String>,
}

impl TaskPack {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Pack(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pack serializes")
    }

    /// The program for one instance, slots filled.
    pub fn program_for(&self, instance: &Instance) -> Result<RuleProgram, EvalError> {
        let text = fill_slots(&self.program, &instance.fields)
            .map_err(|slot| EvalError::Pack(format!("instance {}: no field for slot {{{{{slot}}}}}", instance.id)))?;
        parse_program(&text).map_err(|e| EvalError::Pack(format!("instance {}: {e}", instance.id)))
    }

    /// Prompt the engine runs under for one instance.
    pub fn prompt_for(&self, instance: &Instance) -> String {
        format!("{}{}\n", self.prompt, instance.input)
    }

    /// Checks the pack invariants: instances present, every instantiated
    /// program lint-clean, gold labels inside the scorer's label space.
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.instances.is_empty() {
            return Err(EvalError::Pack("pack has no instances".into()));
        }
        let mut ids = BTreeSet::new();
        for inst in &self.instances {
            if !ids.insert(&inst.id) {
                return Err(EvalError::Pack(format!("duplicate instance id {}", inst.id)));
            }
            let program = self.program_for(inst)?;
            let errors: Vec<String> = lint_program(&program)
                .into_iter()
                .filter(|f| f.is_error())
                .map(|f| f.to_string())
                .collect();
            if !errors.is_empty() {
                return Err(EvalError::Pack(format!("instance {}: {}", inst.id, errors.join("; "))));
            }
            if self.scorer.accuracy.is_some() && inst.gold.is_empty() {
                return Err(EvalError::Pack(format!("instance {} has no gold label", inst.id)));
            }
            let spec = self.scorer.validity.for_instance(inst);
            for g in &inst.gold {
                if !spec.label_in_space(g) {
                    return Err(EvalError::Pack(format!(
                        "instance {}: gold {g:?} is outside the label space",
                        inst.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Printable ASCII and newline as single-byte tokens, every option string
    /// of every instance program as a whole token, and an end token.
    pub fn vocabulary(&self) -> Result<Arc<Vocabulary>, EvalError> {
        let programs = self
            .instances
            .iter()
            .map(|inst| self.program_for(inst))
            .collect::<Result<Vec<_>, _>>()?;
        default_vocabulary(&programs).map_err(|e| EvalError::Pack(e.to_string()))
    }
}

/// Printable ASCII, newline and `<eos>`, plus every multi-character select
/// option of `programs` as a single token.
pub fn default_vocabulary(programs: &[RuleProgram]) -> Result<Arc<Vocabulary>, TokenError> {
    let mut entries: Vec<String> = (0x20u8..0x7f).map(|b| (b as char).to_string()).collect();
    entries.push("\n".into());
    let mut words = BTreeSet::new();
    for program in programs {
        for (step, _) in program.walk() {
            if let StepKind::Select(o) = &step.kind {
                let lists: Vec<&Vec<String>> = match o {
                    Options::Static(v) => vec![v],
                    Options::Dynamic(d) => d.all_lists().collect(),
                };
                words.extend(lists.into_iter().flatten().filter(|w| w.len() > 1).cloned());
            }
        }
    }
    entries.extend(words);
    Vocabulary::from_strs_with_eos(&entries, "<eos>").map(Arc::new)
}

/// Replaces each `{{name}}` with `fields[name]`; Err(name) if one is missing.
pub fn fill_slots(text: &str, fields: &BTreeMap<String, String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else {
            break;
        };
        let name = &rest[open + 2..open + 2 + close];
        let value = fields.get(name.trim()).ok_or_else(|| name.trim().to_string())?;
        out.push_str(&rest[..open]);
        out.push_str(value);
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_filled() {
        let fields = BTreeMap::from([("a".to_string(), "1".to_string())]);
        assert_eq!(fill_slots("x {{a}} y {{ a }}", &fields).unwrap(), "x 1 y 1");
        assert_eq!(fill_slots("{{b}}", &fields), Err("b".into()));
        assert_eq!(fill_slots("{ {x}", &fields).unwrap(), "{ {x}");
    }
}
