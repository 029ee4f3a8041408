//! Scripted mock backend.
//!
//! A script is a list of directives consumed one per constrained span. Within
//! a span the mock prefers the longest token continuing the directive text,
//! then the end token once the text is complete. Preferred tokens score +10,
//! everything else -10.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, Capabilities, DecoderBackend, GenParams};
use crate::token::{TokenId, Vocabulary};

pub const PREFERRED: f32 = 10.0;
pub const FLOOR: f32 = -10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    PreferText(String),
    PreferToken(TokenId),
    /// Uniform scores in [-10, 10), a pure function of (seed, context).
    /// Never consumed: it covers every remaining span.
    UniformNoise(u64),
    /// Sugar for `times` spans preferring `failing`, then one preferring
    /// `passing`.
    FailValidationTimes {
        times: u32,
        failing: String,
        passing: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockScript {
    pub directives: Vec<Directive>,
}

impl MockScript {
    pub fn new(directives: Vec<Directive>) -> Self {
        Self { directives }
    }

    pub fn texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| Directive::PreferText(t.into())).collect())
    }

    pub fn noise(seed: u64) -> Self {
        Self::new(vec![Directive::UniformNoise(seed)])
    }

    /// Directives with the sugar expanded.
    pub fn expanded(&self) -> Vec<Directive> {
        let mut out = Vec::new();
        for d in &self.directives {
            match d {
                Directive::FailValidationTimes {
                    times,
                    failing,
                    passing,
                } => {
                    for _ in 0..*times {
                        out.push(Directive::PreferText(failing.clone()));
                    }
                    out.push(Directive::PreferText(passing.clone()));
                }
                other => out.push(other.clone()),
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    vocab: Arc<Vocabulary>,
    directives: Vec<Directive>,
    cursor: usize,
    /// Context length at the first call of the current span.
    span_start: Option<usize>,
    max_context: usize,
    logits_enabled: bool,
}

impl MockBackend {
    pub fn new(vocab: Arc<Vocabulary>, script: &MockScript) -> Self {
        Self {
            vocab,
            directives: script.expanded(),
            cursor: 0,
            span_start: None,
            max_context: 1 << 20,
            logits_enabled: true,
        }
    }

    pub fn with_max_context(mut self, max: usize) -> Self {
        self.max_context = max;
        self
    }

    /// Mock of a server exposing only the choice endpoint.
    pub fn without_logits(mut self) -> Self {
        self.logits_enabled = false;
        self
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    fn current(&self) -> Option<&Directive> {
        self.directives.get(self.cursor)
    }

    fn end_token(&self) -> Option<TokenId> {
        self.vocab.eos()
    }

    /// Longest ordinary token that is a prefix of `rest`.
    fn longest_prefix(&self, rest: &[u8]) -> Option<TokenId> {
        let mut best: Option<(usize, TokenId)> = None;
        for id in 0..self.vocab.size() as TokenId {
            if self.vocab.is_special(id) {
                continue;
            }
            let b = self.vocab.bytes(id).unwrap_or_default();
            if !b.is_empty() && rest.starts_with(b) && best.is_none_or(|(l, _)| b.len() > l) {
                best = Some((b.len(), id));
            }
        }
        best.map(|(_, id)| id)
    }

    fn preferred(&self, produced: &[u8]) -> Option<TokenId> {
        match self.current() {
            None => self.end_token(),
            Some(Directive::PreferText(text)) => {
                let text = text.as_bytes();
                match text.strip_prefix(produced) {
                    Some([]) | None => self.end_token(),
                    Some(rest) => self.longest_prefix(rest).or_else(|| self.end_token()),
                }
            }
            Some(Directive::PreferToken(id)) => {
                if produced.is_empty() {
                    Some(*id)
                } else {
                    self.end_token()
                }
            }
            Some(Directive::UniformNoise(_)) | Some(Directive::FailValidationTimes { .. }) => None,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Uniform scores in [-10, 10) determined by (seed, context).
pub fn noise_logits(seed: u64, context: &[TokenId], size: usize) -> Vec<f32> {
    let mut h = splitmix(seed);
    for &t in context {
        h = splitmix(h ^ t as u64);
    }
    h = splitmix(h ^ context.len() as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    (0..size).map(|_| rng.gen_range(FLOOR..PREFERRED)).collect()
}

impl DecoderBackend for MockBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            vocab_id: "mock".into(),
            vocab_size: self.vocab.size(),
            max_context: self.max_context,
            supports_logits: self.logits_enabled,
        }
    }

    fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn begin_span(&mut self) {
        if self.span_start.take().is_some()
            && !matches!(self.current(), Some(Directive::UniformNoise(_)) | None)
        {
            self.cursor += 1;
        }
    }

    fn next_logits(&mut self, context: &[TokenId]) -> Result<Vec<f32>, BackendError> {
        if !self.logits_enabled {
            return Err(BackendError::Unsupported("logit requests".into()));
        }
        if context.len() > self.max_context {
            return Err(BackendError::ContextOverflow {
                len: context.len(),
                max: self.max_context,
            });
        }
        let size = self.vocab.size();
        if let Some(&Directive::UniformNoise(seed)) = self.current() {
            self.span_start.get_or_insert(context.len());
            return Ok(noise_logits(seed, context, size));
        }
        let start = *self.span_start.get_or_insert(context.len());
        let produced = self.vocab.detokenize_bytes(&context[start.min(context.len())..]);
        let mut scores = vec![FLOOR; size];
        if let Some(id) = self.preferred(&produced) {
            if let Some(s) = scores.get_mut(id as usize) {
                *s = PREFERRED;
            }
        }
        Ok(scores)
    }

    fn generate_unconstrained(&mut self, _prompt: &str, params: &GenParams) -> Result<String, BackendError> {
        let text = match self.current() {
            Some(Directive::PreferText(t)) => t.clone(),
            Some(Directive::PreferToken(id)) => self.vocab.detokenize(&[*id]),
            _ => String::new(),
        };
        if !matches!(self.current(), Some(Directive::UniformNoise(_)) | None) {
            self.cursor += 1;
        }
        let text = match &params.stop {
            Some(stop) if !stop.is_empty() => match text.find(stop.as_str()) {
                Some(i) => text[..i].to_string(),
                None => text,
            },
            _ => text,
        };
        Ok(text)
    }

    fn choose(&mut self, _context: &[TokenId], options: &[String]) -> Result<usize, BackendError> {
        let pick = match self.current() {
            Some(Directive::PreferText(t)) => options.iter().position(|o| o == t).unwrap_or(0),
            _ => 0,
        };
        if !matches!(self.current(), Some(Directive::UniformNoise(_)) | None) {
            self.cursor += 1;
        }
        Ok(pick)
    }
}
