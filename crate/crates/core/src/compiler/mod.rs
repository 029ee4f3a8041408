//! Turns a knowledge document into a rule program with a general model:
//! first a reasoning framework, then the program itself.

pub mod explain;
pub mod framework;
pub mod gllm;
pub mod prompts;
pub mod revise;

use thiserror::Error;

use crate::ir::{lint_program, parse_program, Finding, RuleProgram};

pub use explain::explain_program;
pub use framework::{CotFramework, FrameworkError, FrameworkStep, StepRole};
pub use gllm::{
    prompt_hash, Fixture, FixtureGllm, Gllm, GllmError, HttpGllm, HttpGllmConfig, RecordingGllm,
    ScriptedGllm,
};
pub use revise::{apply_expert_feedback, Turn, VerificationTranscript, MAX_EXPERT_TURNS};

/// Identifies programs produced by this module in their metadata.
pub const COMPILED_BY: &str = "scidc-compiler";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompilerError {
    #[error("knowledge document is empty")]
    EmptyDocument,
    #[error("task description is empty")]
    EmptyTask,
    #[error("framework is invalid: {0}")]
    InvalidFramework(FrameworkError),
    #[error("framework reply is malformed after repair: {0}")]
    MalformedFrameworkReply(FrameworkError),
    #[error("program reply does not parse after repair: {0}")]
    UnparseableProgram(String),
    #[error("program has lint errors after repair: {}", join(.0))]
    LintErrors(Vec<Finding>),
    #[error("revision rejected: {}", .0.join("; "))]
    RevisionRejected(Vec<String>),
    #[error("invalid transcript: {0}")]
    Transcript(String),
    #[error("general model: {0}")]
    GllmTransport(#[from] GllmError),
}

fn join(findings: &[Finding]) -> String {
    findings.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeDoc {
    pub text: String,
    /// Where the text came from, e.g. a file name.
    pub provenance: String,
}

impl KnowledgeDoc {
    pub fn new(text: impl Into<String>, provenance: impl Into<String>) -> Result<Self, CompilerError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CompilerError::EmptyDocument);
        }
        Ok(Self {
            text,
            provenance: provenance.into(),
        })
    }

    /// Rough size in model tokens (four bytes per token).
    pub fn token_estimate(&self) -> usize {
        self.text.len().div_ceil(4)
    }
}

/// Renders the decomposition prompt and parses the reply, re-asking once
/// with the structural problems listed if the first reply is invalid.
pub fn decompose_task(
    doc: &KnowledgeDoc,
    problem_class: &str,
    gllm: &mut dyn Gllm,
) -> Result<CotFramework, CompilerError> {
    if doc.text.trim().is_empty() {
        return Err(CompilerError::EmptyDocument);
    }
    if problem_class.trim().is_empty() {
        return Err(CompilerError::EmptyTask);
    }
    let prompt = prompts::task_decomposition(&doc.text, problem_class);
    let reply = gllm.complete(&prompt)?;
    let problems = match framework_problems(&reply) {
        Ok(fw) => return Ok(fw),
        Err(problems) => problems,
    };
    let messages: Vec<String> = problems.iter().map(|p| p.to_string()).collect();
    let second = gllm.complete(&prompts::repair(&prompt, &reply, &messages))?;
    framework_problems(&second).map_err(|mut p| CompilerError::MalformedFrameworkReply(p.remove(0)))
}

fn framework_problems(reply: &str) -> Result<CotFramework, Vec<FrameworkError>> {
    let fw = CotFramework::parse_unchecked(reply).map_err(|e| vec![e])?;
    let problems = fw.validate();
    if problems.is_empty() {
        Ok(fw)
    } else {
        Err(problems)
    }
}

/// Renders the program-generation prompt and returns a lint-clean program,
/// re-asking once with parse errors or ERROR findings attached.
pub fn generate_rule_program(
    doc: &KnowledgeDoc,
    question_class: &str,
    framework: &CotFramework,
    gllm: &mut dyn Gllm,
) -> Result<RuleProgram, CompilerError> {
    if let Some(e) = framework.validate().into_iter().next() {
        return Err(CompilerError::InvalidFramework(e));
    }
    let prompt = prompts::rule_generation(&doc.text, question_class, &framework.render());
    let reply = gllm.complete(&prompt)?;
    let problems = match program_from_reply(&reply) {
        Ok(p) => return Ok(stamp(p, doc)),
        Err(problems) => problems,
    };
    let second = gllm.complete(&prompts::repair(&prompt, &reply, &problems.messages()))?;
    match program_from_reply(&second) {
        Ok(p) => Ok(stamp(p, doc)),
        Err(ProgramProblems::Parse(msg)) => Err(CompilerError::UnparseableProgram(msg)),
        Err(ProgramProblems::Lint(findings)) => Err(CompilerError::LintErrors(findings)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    pub framework: CotFramework,
    pub program: RuleProgram,
}

/// Both stages in sequence.
pub fn compile(doc: &KnowledgeDoc, task: &str, gllm: &mut dyn Gllm) -> Result<Compiled, CompilerError> {
    let framework = decompose_task(doc, task, gllm)?;
    let program = generate_rule_program(doc, task, &framework, gllm)?;
    Ok(Compiled { framework, program })
}

fn stamp(mut program: RuleProgram, doc: &KnowledgeDoc) -> RuleProgram {
    if !doc.provenance.is_empty() {
        program.set_meta("source", &doc.provenance);
    }
    program.set_meta("compiled_by", COMPILED_BY);
    program
}

pub(crate) enum ProgramProblems {
    Parse(String),
    Lint(Vec<Finding>),
}

impl ProgramProblems {
    pub(crate) fn messages(&self) -> Vec<String> {
        match self {
            ProgramProblems::Parse(m) => vec![m.clone()],
            ProgramProblems::Lint(f) => f.iter().map(|f| f.to_string()).collect(),
        }
    }
}

/// Parses the program out of a reply and keeps it only if it is lint-clean.
pub(crate) fn program_from_reply(reply: &str) -> Result<RuleProgram, ProgramProblems> {
    let source = extract_program_text(reply);
    let program = parse_program(source).map_err(|e| ProgramProblems::Parse(e.to_string()))?;
    let errors: Vec<Finding> = lint_program(&program)
        .into_iter()
        .filter(Finding::is_error)
        .collect();
    if errors.is_empty() {
        Ok(program)
    } else {
        Err(ProgramProblems::Lint(errors))
    }
}

/// Body of the first ```scidc-ir fence, else of the first fence, else the
/// whole reply.
pub fn extract_program_text(reply: &str) -> &str {
    let fenced = |tag: &str| -> Option<&str> {
        let open = reply.find(tag)?;
        let body_start = open + reply[open..].find('\n')? + 1;
        let close = reply[body_start..].find("```")?;
        Some(&reply[body_start..body_start + close])
    };
    fenced("```scidc-ir")
        .or_else(|| fenced("```"))
        .unwrap_or(reply)
        .trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fence_extraction() {
        assert_eq!(extract_program_text("x\n```scidc-ir\nA\n```\ny"), "A");
        assert_eq!(extract_program_text("```\nB\n```"), "B");
        assert_eq!(extract_program_text("  C \n"), "C");
    }

    #[test]
    fn empty_doc_rejected() {
        assert_eq!(KnowledgeDoc::new("  \n", "x"), Err(CompilerError::EmptyDocument));
        assert_eq!(KnowledgeDoc::new("abcde", "x").unwrap().token_estimate(), 2);
    }
}
