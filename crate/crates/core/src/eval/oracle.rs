//! A mock model that follows the instance record: at the start of each span
//! it looks for a cue at the end of the context and spells the matching
//! field. With a seeded chance it hedges, appending " or <alternative>".
//! Under a mask the hedge is cut short, since once the answer is complete the
//! end token scores above every other token the mask allows. In free
//! generation the hedge shows in the output.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::pack::{Instance, OracleSpec};
use crate::backend::{BackendError, Capabilities, DecoderBackend, GenParams};
use crate::token::{TokenId, Vocabulary};

const PREFERRED: f32 = 10.0;
const END_WHEN_DONE: f32 = 0.0;
const FLOOR: f32 = -10.0;

#[derive(Debug, Clone)]
pub struct OracleBackend {
    vocab: Arc<Vocabulary>,
    spec: OracleSpec,
    fields: BTreeMap<String, String>,
    salt: u64,
    spans: u64,
    pending: bool,
    span: Option<Span>,
}

#[derive(Debug, Clone)]
struct Span {
    start: usize,
    target: Vec<u8>,
    answer_len: usize,
}

impl OracleBackend {
    pub fn new(vocab: Arc<Vocabulary>, spec: &OracleSpec, instance: &Instance, seed: u64) -> Self {
        let digest = Sha256::digest(instance.id.as_bytes());
        let salt = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) ^ seed;
        Self {
            vocab,
            spec: spec.clone(),
            fields: instance.fields.clone(),
            salt,
            spans: 0,
            pending: true,
            span: None,
        }
    }

    /// Answer for a span opened after `context`, hedge included.
    fn target_for(&mut self, context: &str) -> (String, usize) {
        let cue = self.spec.cues.iter().find(|c| context.ends_with(&c.text));
        let (field, alternatives) = match cue {
            Some(c) => (c.field.as_str(), c.alternatives.as_slice()),
            None => (self.spec.answer_field.as_str(), self.spec.answer_alternatives.as_slice()),
        };
        let answer = self.fields.get(field).cloned().unwrap_or_default();
        let mut rng = ChaCha8Rng::seed_from_u64(self.salt.wrapping_add(self.spans.wrapping_mul(0x9E37_79B9)));
        self.spans += 1;
        let len = answer.len();
        let others: Vec<&String> = alternatives.iter().filter(|a| **a != answer).collect();
        if !others.is_empty() && rng.gen_bool(self.spec.hedge_rate.clamp(0.0, 1.0)) {
            let alt = others.choose(&mut rng).expect("nonempty");
            return (format!("{answer} or {alt}"), len);
        }
        (answer, len)
    }

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
}

impl DecoderBackend for OracleBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            vocab_id: "oracle".into(),
            vocab_size: self.vocab.size(),
            max_context: 1 << 20,
            supports_logits: true,
        }
    }

    fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn begin_span(&mut self) {
        self.pending = true;
    }

    fn next_logits(&mut self, context: &[TokenId]) -> Result<Vec<f32>, BackendError> {
        let stale = self.span.as_ref().is_none_or(|s| s.start > context.len());
        if self.pending || stale {
            let text = self.vocab.detokenize(context);
            let (target, answer_len) = self.target_for(&text);
            self.span = Some(Span {
                start: context.len(),
                target: target.into_bytes(),
                answer_len,
            });
            self.pending = false;
        }
        let span = self.span.as_ref().expect("span set");
        let produced = self.vocab.detokenize_bytes(&context[span.start..]);
        let eos = self.vocab.eos();
        let mut logits = vec![FLOOR; self.vocab.size()];
        let preferred = match span.target.strip_prefix(produced.as_slice()) {
            Some([]) => eos,
            Some(rest) => self.longest_prefix(rest).or(eos),
            None => None,
        };
        if let Some(e) = eos {
            if produced.len() >= span.answer_len {
                logits[e as usize] = END_WHEN_DONE;
            }
        }
        if let Some(p) = preferred {
            logits[p as usize] = PREFERRED;
        }
        Ok(logits)
    }

    fn generate_unconstrained(&mut self, prompt: &str, _params: &GenParams) -> Result<String, BackendError> {
        Ok(self.target_for(prompt).0)
    }
}
