//! Declarative rule programs: step scaffolding, validate/backtrack loops and
//! token-level constraints in one text format (`scidc-ir v1`).

pub mod lexer;
pub mod lint;
pub mod parser;
pub mod predicate;
pub mod serialize;

use thiserror::Error;

pub use lint::{lint_program, lint_with_vocab, Finding, Severity};
pub use parser::parse_program;
pub use predicate::{numeric_view, BinOp, Env, EvalError, Expr, Value};
pub use serialize::serialize_program;

pub const HEADER: &str = "scidc-ir v1";

/// Maximum nesting depth of branch blocks accepted without a lint error.
pub const MAX_BRANCH_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("duplicate step name `{name}` at line {line}")]
    DuplicateStepName { name: String, line: usize },
    #[error("unknown step kind `{kind}` at {line}:{col}")]
    UnknownStepKind {
        kind: String,
        line: usize,
        col: usize,
    },
}

pub type Predicate = Expr;

#[derive(Debug, Clone, PartialEq)]
pub struct RuleProgram {
    pub name: String,
    pub metadata: Vec<(String, String)>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub name: String,
    pub kind: StepKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    Emit(String),
    Gen(GenStep),
    Select(Options),
    Branch(BranchStep),
    Validate(ValidateLoop),
}

impl StepKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            StepKind::Emit(_) => "emit",
            StepKind::Gen(_) => "gen",
            StepKind::Select(_) => "select",
            StepKind::Branch(_) => "branch",
            StepKind::Validate(_) => "validate",
        }
    }

    /// Gen and Select bind their output to the step name.
    pub fn binds(&self) -> bool {
        matches!(self, StepKind::Gen(_) | StepKind::Select(_))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenStep {
    pub regex: Option<String>,
    pub stop: Option<String>,
    /// Required; kept optional so a missing budget is a lint finding rather
    /// than a parse failure.
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Options {
    Static(Vec<String>),
    Dynamic(DynamicOptions),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicOptions {
    pub guards: Vec<(Predicate, Vec<String>)>,
    pub default: Vec<String>,
}

impl DynamicOptions {
    /// First matching guard wins; the default applies otherwise.
    pub fn resolve(&self, env: &(impl Env + ?Sized)) -> Result<&[String], EvalError> {
        for (pred, options) in &self.guards {
            if pred.eval_bool(env)? {
                return Ok(options);
            }
        }
        Ok(&self.default)
    }

    pub fn all_lists(&self) -> impl Iterator<Item = &Vec<String>> {
        self.guards
            .iter()
            .map(|(_, o)| o)
            .chain(std::iter::once(&self.default))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchStep {
    pub arms: Vec<(Predicate, Vec<Step>)>,
    pub otherwise: Option<Vec<Step>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateLoop {
    pub pred: Predicate,
    /// Total attempts allowed, including the first.
    pub max_retries: Option<u32>,
    /// Preceding sibling step where regeneration restarts (inclusive).
    pub anchor: String,
    /// Message injected into context before regenerating; `{var}` is
    /// replaced with the failing binding.
    pub retry: Option<String>,
    pub fallback: Vec<(String, Literal)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Num(f64),
}

impl Literal {
    /// Text bound to a variable when the fallback fires.
    pub fn text(&self) -> String {
        match self {
            Literal::Str(s) => s.clone(),
            Literal::Num(n) => format!("{n}"),
        }
    }
}

impl RuleProgram {
    /// All steps in document order, nested ones included, with their depth.
    pub fn walk(&self) -> Vec<(&Step, usize)> {
        fn go<'a>(steps: &'a [Step], depth: usize, out: &mut Vec<(&'a Step, usize)>) {
            for s in steps {
                out.push((s, depth));
                if let StepKind::Branch(b) = &s.kind {
                    for (_, body) in &b.arms {
                        go(body, depth + 1, out);
                    }
                    if let Some(body) = &b.otherwise {
                        go(body, depth + 1, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(&self.steps, 0, &mut out);
        out
    }

    pub fn find(&self, name: &str) -> Option<&Step> {
        self.walk().into_iter().map(|(s, _)| s).find(|s| s.name == name)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: &str) {
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.metadata.push((key.to_string(), value.to_string())),
        }
    }
}
