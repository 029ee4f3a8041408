//! Executes rule programs against a decoder backend.

pub mod bindings;
pub mod checker;
mod exec;
pub mod policy;
pub mod trace;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, DecoderBackend};
use crate::ir::RuleProgram;
use crate::token::{regex_dfa, ByteDfa, TokenAutomaton, TokenError};

pub use bindings::Bindings;
pub use checker::{check_run, Violation};
pub use policy::{decode_policy, DecodePolicy};
pub use trace::{Counters, DecodeTrace, Event};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("step `{step}`: no token satisfies the constraint")]
    UnsatisfiableConstraint { step: String },
    #[error("step `{step}`: max_tokens {max_tokens} reached before the constraint accepted")]
    MaxTokensInNonAcceptingState { step: String, max_tokens: u32 },
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("loop `{loop_name}`: anchor `{anchor}` is not an earlier sibling step")]
    AnchorOrder { loop_name: String, anchor: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("step `{step}`: {source}")]
    Token {
        step: String,
        #[source]
        source: TokenError,
    },
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("backend vocabulary has {backend} entries but the run expects {expected}")]
    VocabularyMismatch { backend: usize, expected: usize },
    #[error("step `{step}`: backend lacks capability: {what}")]
    Capability { step: String, what: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    FallbackCompleted,
    /// A predicate could not be evaluated on the bound values.
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub output: String,
    pub bindings: Bindings,
    pub trace: DecodeTrace,
    pub termination: Termination,
}

impl RunResult {
    /// Canonical serialization; byte-identical for identical runs.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run result serializes")
    }
}

/// Compiled automata keyed by constraint, shareable across runs that use the
/// same vocabulary.
#[derive(Debug, Default)]
pub struct AutomatonCache {
    map: Mutex<HashMap<String, Arc<TokenAutomaton>>>,
    dfas: Mutex<HashMap<String, Arc<ByteDfa>>>,
}

fn cached<T>(
    map: &Mutex<HashMap<String, Arc<T>>>,
    key: &str,
    build: impl FnOnce() -> Result<T, TokenError>,
) -> Result<Arc<T>, TokenError> {
    if let Some(a) = map.lock().expect("cache lock").get(key) {
        return Ok(a.clone());
    }
    // Built outside the lock; a concurrent duplicate build is harmless.
    let built = Arc::new(build()?);
    Ok(map
        .lock()
        .expect("cache lock")
        .entry(key.to_string())
        .or_insert(built)
        .clone())
}

impl AutomatonCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn automaton(
        &self,
        key: &str,
        build: impl FnOnce() -> Result<TokenAutomaton, TokenError>,
    ) -> Result<Arc<TokenAutomaton>, TokenError> {
        cached(&self.map, key, build)
    }

    pub(crate) fn dfa(&self, pattern: &str) -> Result<Arc<ByteDfa>, TokenError> {
        cached(&self.dfas, pattern, || regex_dfa(pattern))
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Temperature for steps that do not set one; 0 is greedy.
    pub default_temperature: f64,
    pub cache: Option<Arc<AutomatonCache>>,
}

/// Runs `program` greedily unless a step sets a temperature.
pub fn run(
    program: &RuleProgram,
    backend: &mut dyn DecoderBackend,
    prompt: &str,
    seed: u64,
) -> Result<RunResult, EngineError> {
    run_with(program, backend, prompt, seed, &RunOptions::default())
}

pub fn run_with(
    program: &RuleProgram,
    backend: &mut dyn DecoderBackend,
    prompt: &str,
    seed: u64,
    options: &RunOptions,
) -> Result<RunResult, EngineError> {
    let cache = options.cache.clone().unwrap_or_default();
    exec::Executor::new(backend, &cache, seed, options.default_temperature)?.run(program, prompt)
}
