//! Expert review: the model explains the program, an expert suggests a
//! change, and the general model revises the program under lint guards.

use std::collections::BTreeSet;

use super::{explain_program, program_from_reply, prompts, CompilerError, Gllm, ProgramProblems};
use crate::ir::{serialize_program, RuleProgram};

pub const MAX_EXPERT_TURNS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Turn {
    ModelExplanation(String),
    ExpertSuggestion(String),
}

/// Alternating turns, starting with an explanation, with at most
/// [`MAX_EXPERT_TURNS`] suggestions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerificationTranscript {
    turns: Vec<Turn>,
}

impl VerificationTranscript {
    /// Opens a review with the program's explanation.
    pub fn start(program: &RuleProgram) -> Self {
        Self {
            turns: vec![Turn::ModelExplanation(explain_program(program))],
        }
    }

    pub fn from_turns(turns: Vec<Turn>) -> Result<Self, CompilerError> {
        let mut t = Self::default();
        for turn in turns {
            t.push(turn)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, turn: Turn) -> Result<(), CompilerError> {
        let expected_explanation = self.turns.len().is_multiple_of(2);
        match (&turn, expected_explanation) {
            (Turn::ModelExplanation(_), true) => {}
            (Turn::ExpertSuggestion(_), false) => {
                if self.expert_turns() >= MAX_EXPERT_TURNS {
                    return Err(CompilerError::Transcript(format!(
                        "at most {MAX_EXPERT_TURNS} expert turns"
                    )));
                }
            }
            (Turn::ModelExplanation(_), false) => {
                return Err(CompilerError::Transcript("expected an expert suggestion".into()))
            }
            (Turn::ExpertSuggestion(_), true) => {
                return Err(CompilerError::Transcript("expected a model explanation".into()))
            }
        }
        self.turns.push(turn);
        Ok(())
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn expert_turns(&self) -> usize {
        self.turns
            .iter()
            .filter(|t| matches!(t, Turn::ExpertSuggestion(_)))
            .count()
    }

    /// The latest explanation and the suggestion answering it, if the
    /// transcript ends with a suggestion.
    fn pending(&self) -> Option<(&str, &str)> {
        match self.turns.as_slice() {
            [.., Turn::ModelExplanation(e), Turn::ExpertSuggestion(s)] => Some((e, s)),
            _ => None,
        }
    }
}

/// Revises `program` according to the transcript's last suggestion. An empty
/// suggestion returns the program unchanged. The revision must be lint-clean
/// and must keep every step that produces a concluding variable.
pub fn apply_expert_feedback(
    program: &RuleProgram,
    transcript: &VerificationTranscript,
    gllm: &mut dyn Gllm,
) -> Result<RuleProgram, CompilerError> {
    let (explanation, suggestion) = transcript
        .pending()
        .ok_or_else(|| CompilerError::Transcript("transcript does not end with a suggestion".into()))?;
    if suggestion.trim().is_empty() {
        return Ok(program.clone());
    }
    let prompt = prompts::revision(explanation, suggestion, serialize_program(program).trim_end());
    let reply = gllm.complete(&prompt)?;
    let mut revised = program_from_reply(&reply).map_err(|p| match p {
        ProgramProblems::Parse(m) => CompilerError::RevisionRejected(vec![m]),
        ProgramProblems::Lint(f) => CompilerError::RevisionRejected(f.iter().map(|f| f.to_string()).collect()),
    })?;
    let missing: Vec<String> = conclude_variables(program)
        .into_iter()
        .filter(|v| !revised.find(v).is_some_and(|s| s.kind.binds()))
        .map(|v| format!("revision drops concluding step `{v}`"))
        .collect();
    if !missing.is_empty() {
        return Err(CompilerError::RevisionRejected(missing));
    }
    for (k, v) in &program.metadata {
        if revised.meta(k).is_none() {
            revised.set_meta(k, v);
        }
    }
    Ok(revised)
}

/// Variables named by the `conclude` metadata, else the last binding step.
pub fn conclude_variables(program: &RuleProgram) -> BTreeSet<String> {
    if let Some(list) = program.meta("conclude") {
        return list
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
    }
    program
        .walk()
        .into_iter()
        .rev()
        .find(|(s, _)| s.kind.binds())
        .map(|(s, _)| s.name.clone())
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_alternates_and_is_bounded() {
        let e = || Turn::ModelExplanation("e".into());
        let s = || Turn::ExpertSuggestion("s".into());
        assert!(VerificationTranscript::from_turns(vec![e(), s(), e(), s()]).is_ok());
        assert!(VerificationTranscript::from_turns(vec![s()]).is_err());
        assert!(VerificationTranscript::from_turns(vec![e(), e()]).is_err());
        assert!(VerificationTranscript::from_turns(vec![e(), s(), e(), s(), e(), s()]).is_err());
    }
}
