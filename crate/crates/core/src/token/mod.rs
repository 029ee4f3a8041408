//! Tokenizer vocabulary and compilation of token-level constraints (regex
//! patterns and option sets) into token automata and logit masks.

pub mod automaton;
pub mod dfa;
pub mod mask;
pub mod regex;
pub mod vocab;

use thiserror::Error;

pub use automaton::{StateId, TokenAutomaton};
pub use dfa::ByteDfa;
pub use mask::{apply_mask, MaskedLogits, TokenSet, FORBIDDEN};
pub use regex::{parse_regex, RegexAst, RegexError};
pub use vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenError {
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("text not spellable at byte offset {offset}")]
    UnspellableText { offset: usize },
    #[error("unsupported regex feature: {0}")]
    UnsupportedRegexFeature(String),
    #[error("regex syntax error at offset {offset}: {message}")]
    RegexSyntax { offset: usize, message: String },
    #[error("{0}")]
    PatternTooLarge(String),
    #[error("constraint matches nothing representable in the vocabulary")]
    EmptyLanguage,
    #[error("option {0:?} cannot be spelled with the vocabulary")]
    UntokenizableOption(String),
    #[error("option list is empty")]
    EmptyOptions,
    #[error("unknown automaton state {0}")]
    UnknownState(StateId),
    #[error("token {token} is not allowed in state {state}")]
    InvalidTransition { state: StateId, token: TokenId },
    #[error("valid-token set is empty")]
    EmptyValidSet,
    #[error("logits length {actual} does not match vocabulary size {expected}")]
    LengthMismatch { expected: usize, actual: usize },
}

impl From<RegexError> for TokenError {
    fn from(e: RegexError) -> Self {
        match e {
            RegexError::Syntax { offset, message } => TokenError::RegexSyntax { offset, message },
            RegexError::Unsupported { feature } => TokenError::UnsupportedRegexFeature(feature),
        }
    }
}

/// Byte DFA for a pattern, anchored at both ends.
pub fn regex_dfa(pattern: &str) -> Result<ByteDfa, TokenError> {
    let ast = parse_regex(pattern)?;
    ast_dfa(&ast)
}

pub fn ast_dfa(ast: &RegexAst) -> Result<ByteDfa, TokenError> {
    ByteDfa::from_ast(ast).map_err(|e| TokenError::PatternTooLarge(e.to_string()))
}

/// Token automaton accepting exactly the token paths whose concatenated
/// bytes fully match `pattern`. Every path is allowed, not only the
/// tokenizer's canonical one.
pub fn compile_regex(pattern: &str, vocab: &Vocabulary) -> Result<TokenAutomaton, TokenError> {
    TokenAutomaton::from_dfa(&regex_dfa(pattern)?, vocab)
}

pub fn compile_ast(ast: &RegexAst, vocab: &Vocabulary) -> Result<TokenAutomaton, TokenError> {
    TokenAutomaton::from_dfa(&ast_dfa(ast)?, vocab)
}

/// Token automaton accepting exactly the token paths spelling one option.
pub fn compile_select<S: AsRef<str>>(
    options: &[S],
    vocab: &Vocabulary,
) -> Result<TokenAutomaton, TokenError> {
    if options.is_empty() {
        return Err(TokenError::EmptyOptions);
    }
    for opt in options {
        if !vocab.is_spellable(opt.as_ref().as_bytes()) {
            return Err(TokenError::UntokenizableOption(opt.as_ref().to_string()));
        }
    }
    let bytes: Vec<&[u8]> = options.iter().map(|o| o.as_ref().as_bytes()).collect();
    TokenAutomaton::from_dfa(&ByteDfa::from_literals(&bytes), vocab)
}

pub fn allowed_tokens(
    automaton: &TokenAutomaton,
    state: StateId,
) -> Result<&TokenSet, TokenError> {
    automaton.allowed_tokens(state)
}

pub fn advance(
    automaton: &TokenAutomaton,
    state: StateId,
    token: TokenId,
) -> Result<StateId, TokenError> {
    automaton.advance(state, token)
}
