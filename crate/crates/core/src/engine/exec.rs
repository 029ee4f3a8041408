//! The decoding loop: step order, per-token masks, validate/backtrack.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::{decode_policy, DecodePolicy};
use super::trace::{DecodeTrace, Event};
use super::{AutomatonCache, Bindings, EngineError, RunResult, Termination};
use crate::backend::{check_logits, BackendError, DecoderBackend, GenParams};
use crate::ir::lint::placeholders;
use crate::ir::{BranchStep, EvalError, GenStep, Options, RuleProgram, Step, StepKind, ValidateLoop};
use crate::token::{
    apply_mask, compile_ast, compile_select, parse_regex, RegexAst, TokenAutomaton, TokenError, TokenId,
    TokenSet, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PieceKind {
    Output,
    /// Retry preamble: in context, never in the output.
    Injected,
}

#[derive(Debug, Clone)]
struct Piece {
    kind: PieceKind,
    tokens: Vec<TokenId>,
    text: String,
}

#[derive(Debug, Clone, Copy)]
struct Snapshot {
    pieces: usize,
    ctx: usize,
    bindings: usize,
    fallbacks: usize,
}

enum Flow {
    Continue,
    Abort(String),
}

pub(crate) struct Executor<'a> {
    backend: &'a mut dyn DecoderBackend,
    vocab: Arc<Vocabulary>,
    cache: &'a AutomatonCache,
    seed: u64,
    rng: ChaCha8Rng,
    default_temperature: f64,
    degraded: bool,
    ctx: Vec<TokenId>,
    pieces: Vec<Piece>,
    bindings: Bindings,
    trace: DecodeTrace,
    /// Fallback assignments that survive in the current pass.
    fallbacks: usize,
}

fn token_err(step: &Step) -> impl Fn(TokenError) -> EngineError + '_ {
    move |source| EngineError::Token {
        step: step.name.clone(),
        source,
    }
}

impl<'a> Executor<'a> {
    pub(crate) fn new(
        backend: &'a mut dyn DecoderBackend,
        cache: &'a AutomatonCache,
        seed: u64,
        default_temperature: f64,
    ) -> Result<Self, EngineError> {
        let caps = backend.capabilities();
        let vocab = backend.vocab().clone();
        if caps.vocab_size != vocab.size() {
            return Err(EngineError::VocabularyMismatch {
                backend: caps.vocab_size,
                expected: vocab.size(),
            });
        }
        Ok(Self {
            backend,
            vocab,
            cache,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            default_temperature,
            degraded: !caps.supports_logits,
            ctx: Vec::new(),
            pieces: Vec::new(),
            bindings: Bindings::new(),
            trace: DecodeTrace::default(),
            fallbacks: 0,
        })
    }

    pub(crate) fn run(mut self, program: &RuleProgram, prompt: &str) -> Result<RunResult, EngineError> {
        self.ctx = self.vocab.tokenize(prompt).map_err(|source| EngineError::Token {
            step: "<prompt>".into(),
            source,
        })?;
        let flow = self.exec_block(&program.steps)?;
        let mut output = String::new();
        let mut output_tokens = 0u64;
        for p in self.pieces.iter().filter(|p| p.kind == PieceKind::Output) {
            output.push_str(&p.text);
            output_tokens += p.tokens.len() as u64;
        }
        self.trace.counters.output_tokens = output_tokens;
        let termination = match flow {
            Flow::Abort(reason) => Termination::Aborted(reason),
            Flow::Continue if self.fallbacks > 0 => Termination::FallbackCompleted,
            Flow::Continue => Termination::Completed,
        };
        Ok(RunResult {
            output,
            bindings: self.bindings,
            trace: self.trace,
            termination,
        })
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            pieces: self.pieces.len(),
            ctx: self.ctx.len(),
            bindings: self.bindings.len(),
            fallbacks: self.fallbacks,
        }
    }

    /// Erases everything after `snap`; returns the output tokens erased.
    fn restore(&mut self, snap: Snapshot) -> usize {
        let erased: usize = self.pieces[snap.pieces..]
            .iter()
            .filter(|p| p.kind == PieceKind::Output)
            .map(|p| p.tokens.len())
            .sum();
        self.pieces.truncate(snap.pieces);
        self.ctx.truncate(snap.ctx);
        self.bindings.truncate(snap.bindings);
        self.fallbacks = snap.fallbacks;
        self.trace.counters.tokens_discarded += erased as u64;
        erased
    }

    fn push_output(&mut self, step: &Step, tokens: Vec<TokenId>, text: String) {
        self.trace.push(Event::TokensEmitted {
            step: step.name.clone(),
            tokens: tokens.clone(),
            text: text.clone(),
        });
        self.pieces.push(Piece {
            kind: PieceKind::Output,
            tokens,
            text,
        });
    }

    fn exec_block(&mut self, steps: &[Step]) -> Result<Flow, EngineError> {
        let mut snaps: Vec<Option<Snapshot>> = vec![None; steps.len()];
        let mut failures: Vec<u32> = vec![0; steps.len()];
        let mut i = 0;
        // After a backtrack the anchor's snapshot predates the retry
        // preamble and must be kept so preambles never accumulate.
        let mut resumed = false;
        while i < steps.len() {
            let step = &steps[i];
            if !resumed {
                snaps[i] = Some(self.snapshot());
            }
            resumed = false;
            self.trace.push(Event::StepStarted {
                step: step.name.clone(),
            });
            let flow = match &step.kind {
                StepKind::Emit(text) => self.exec_emit(step, text)?,
                StepKind::Gen(g) => self.exec_gen(step, g)?,
                StepKind::Select(o) => self.exec_select(step, o)?,
                StepKind::Branch(b) => self.exec_branch(b)?,
                StepKind::Validate(v) => {
                    let anchor = steps[..i]
                        .iter()
                        .position(|s| s.name == v.anchor)
                        .ok_or_else(|| EngineError::AnchorOrder {
                            loop_name: step.name.clone(),
                            anchor: v.anchor.clone(),
                        })?;
                    if matches!(steps[anchor].kind, StepKind::Validate(_)) {
                        return Err(EngineError::AnchorOrder {
                            loop_name: step.name.clone(),
                            anchor: v.anchor.clone(),
                        });
                    }
                    match self.check_loop(step, v, &mut failures[i])? {
                        LoopOutcome::Passed => Flow::Continue,
                        LoopOutcome::Abort(reason) => Flow::Abort(reason),
                        LoopOutcome::Retry(message) => {
                            let snap = snaps[anchor].expect("anchor executed before loop");
                            let erased = self.restore(snap);
                            self.trace.push(Event::BacktrackPerformed {
                                anchor: v.anchor.clone(),
                                erased,
                            });
                            self.trace.counters.regenerations += 1;
                            for f in &mut failures[anchor..i] {
                                *f = 0;
                            }
                            if let Some(m) = message {
                                self.inject(step, &m)?;
                            }
                            self.rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(failures[i] as u64));
                            i = anchor;
                            resumed = true;
                            continue;
                        }
                    }
                }
            };
            if let Flow::Abort(reason) = flow {
                return Ok(Flow::Abort(reason));
            }
            self.trace.push(Event::StepCompleted {
                step: step.name.clone(),
            });
            i += 1;
        }
        Ok(Flow::Continue)
    }

    fn check_loop(&mut self, step: &Step, v: &ValidateLoop, failures: &mut u32) -> Result<LoopOutcome, EngineError> {
        let max = v
            .max_retries
            .filter(|&m| m > 0)
            .ok_or_else(|| EngineError::InvalidProgram(format!("validate `{}` has no retry bound", step.name)))?;
        match v.pred.eval_bool(&self.bindings) {
            Ok(true) => return Ok(LoopOutcome::Passed),
            Ok(false) => {}
            Err(EvalError::UnboundVariable(n)) => return Err(EngineError::UnboundVariable(n)),
            Err(EvalError::TypeError(m)) => return Ok(LoopOutcome::Abort(m)),
        }
        *failures += 1;
        self.trace.push(Event::ValidationFailed {
            loop_name: step.name.clone(),
            iteration: *failures,
            predicate: v.pred.to_string(),
        });
        if *failures < max {
            return Ok(LoopOutcome::Retry(v.retry.as_deref().map(|r| self.interpolate(r))));
        }
        for (var, lit) in &v.fallback {
            let value = lit.text();
            self.bindings.bind(var.clone(), value.clone());
            self.trace.push(Event::FallbackApplied {
                variable: var.clone(),
                value,
            });
        }
        self.fallbacks += 1;
        Ok(LoopOutcome::Passed)
    }

    fn interpolate(&self, text: &str) -> String {
        let mut out = text.to_string();
        for name in placeholders(text) {
            if let Some(value) = self.bindings.get(&name) {
                out = out.replace(&format!("{{{name}}}"), value);
            }
        }
        out
    }

    fn inject(&mut self, step: &Step, message: &str) -> Result<(), EngineError> {
        let tokens = self.vocab.tokenize(message).map_err(token_err(step))?;
        let n = tokens.len() as u64;
        self.trace.counters.tokens_emitted += n;
        self.trace.counters.tokens_discarded += n;
        self.ctx.extend_from_slice(&tokens);
        self.pieces.push(Piece {
            kind: PieceKind::Injected,
            tokens,
            text: message.to_string(),
        });
        Ok(())
    }

    fn exec_emit(&mut self, step: &Step, text: &str) -> Result<Flow, EngineError> {
        let tokens = self.vocab.tokenize(text).map_err(token_err(step))?;
        self.trace.counters.tokens_emitted += tokens.len() as u64;
        self.ctx.extend_from_slice(&tokens);
        self.push_output(step, tokens, text.to_string());
        Ok(Flow::Continue)
    }

    fn exec_branch<'s>(&mut self, b: &'s BranchStep) -> Result<Flow, EngineError> {
        let mut body: Option<&'s [Step]> = b.otherwise.as_deref();
        for (pred, arm) in &b.arms {
            match pred.eval_bool(&self.bindings) {
                Ok(true) => {
                    body = Some(arm);
                    break;
                }
                Ok(false) => {}
                Err(EvalError::UnboundVariable(n)) => return Err(EngineError::UnboundVariable(n)),
                Err(EvalError::TypeError(m)) => return Ok(Flow::Abort(m)),
            }
        }
        match body {
            Some(steps) => self.exec_block(steps),
            None => Ok(Flow::Continue),
        }
    }

    /// One backend call, masked and decoded.
    fn pick(&mut self, step: &Step, valid: &TokenSet, temperature: f64) -> Result<TokenId, EngineError> {
        let logits = self.backend.next_logits(&self.ctx)?;
        self.trace.counters.backend_calls += 1;
        check_logits(&logits, self.vocab.size())?;
        let masked = apply_mask(&logits, valid).map_err(token_err(step))?;
        self.trace.push(Event::MaskApplied {
            step: step.name.clone(),
            valid: valid.count(),
        });
        decode_policy(&masked, DecodePolicy::from_temperature(temperature), &mut self.rng).map_err(token_err(step))
    }

    fn append_token(&mut self, tok: TokenId, tokens: &mut Vec<TokenId>) {
        tokens.push(tok);
        self.ctx.push(tok);
        self.trace.counters.tokens_emitted += 1;
    }

    fn exec_gen(&mut self, step: &Step, g: &GenStep) -> Result<Flow, EngineError> {
        let max = g
            .max_tokens
            .filter(|&m| m > 0)
            .ok_or_else(|| EngineError::InvalidProgram(format!("gen `{}` has no token budget", step.name)))?;
        let temperature = g.temperature.unwrap_or(self.default_temperature);
        let stop = g.stop.as_deref().filter(|s| !s.is_empty());
        if self.degraded {
            return self.gen_degraded(step, g, max, temperature, stop);
        }
        let start = self.ctx.len();
        let tokens = match (&g.regex, stop) {
            (Some(pattern), _) => self.gen_regex(step, pattern, stop, max, temperature)?,
            (None, Some(stop)) => self.gen_until(step, stop, max, temperature)?,
            (None, None) => {
                return Err(EngineError::InvalidProgram(format!(
                    "gen `{}` has neither regex nor stop",
                    step.name
                )))
            }
        };
        debug_assert_eq!(self.ctx.len(), start);
        let text = self.vocab.detokenize(&tokens);
        let (tokens, text) = match (&g.regex, stop) {
            (Some(pattern), Some(stop)) => {
                let body_len = text.len().saturating_sub(stop.len());
                let dfa = self.cache.dfa(pattern).map_err(token_err(step))?;
                if text.ends_with(stop) && dfa.matches(&text.as_bytes()[..body_len]) {
                    self.truncate_span(tokens, &text, body_len)
                } else {
                    (tokens, text)
                }
            }
            (None, Some(stop)) => match text.find(stop) {
                Some(at) => self.truncate_span(tokens, &text, at),
                None => (tokens, text),
            },
            _ => (tokens, text),
        };
        self.ctx.extend_from_slice(&tokens);
        self.bindings.bind(step.name.clone(), text.clone());
        self.push_output(step, tokens, text);
        Ok(Flow::Continue)
    }

    /// Cuts a span's text to `keep` bytes. Whole tokens before the cut are
    /// kept; the partial remainder is re-tokenized. The context keeps the
    /// straddling token when the remainder cannot be spelled on its own.
    fn truncate_span(&mut self, tokens: Vec<TokenId>, text: &str, keep: usize) -> (Vec<TokenId>, String) {
        let mut acc = 0;
        let mut whole = 0;
        for &t in &tokens {
            let len = self.vocab.bytes(t).map_or(0, <[u8]>::len);
            if acc + len > keep {
                break;
            }
            acc += len;
            whole += 1;
        }
        let mut kept = tokens[..whole].to_vec();
        let partial = &text.as_bytes()[acc..keep];
        if !partial.is_empty() {
            match self.vocab.tokenize_ordinary(partial) {
                Ok(t) => kept.extend(t),
                Err(_) => kept.push(tokens[whole]),
            }
        }
        let removed = (tokens.len() - whole) as u64;
        let added = (kept.len() - whole) as u64;
        self.trace.counters.tokens_discarded += removed;
        self.trace.counters.tokens_emitted += added;
        let kept_text = String::from_utf8_lossy(&text.as_bytes()[..keep]).into_owned();
        (kept, kept_text)
    }

    /// Regex mode: the automaton accepts the pattern optionally followed
    /// by the stop string. Returns the span tokens with the context
    /// restored to its pre-span length.
    fn gen_regex(
        &mut self,
        step: &Step,
        pattern: &str,
        stop: Option<&str>,
        max: u32,
        temperature: f64,
    ) -> Result<Vec<TokenId>, EngineError> {
        let vocab = self.vocab.clone();
        let key = format!("gen\u{0}{pattern}\u{0}{}", stop.unwrap_or(""));
        let auto = self
            .cache
            .automaton(&key, || {
                let body = parse_regex(pattern)?;
                let ast = match stop {
                    Some(s) => RegexAst::Concat(vec![body, RegexAst::Alt(vec![RegexAst::literal(s), RegexAst::Empty])]),
                    None => body,
                };
                compile_ast(&ast, &vocab)
            })
            .map_err(token_err(step))?;
        self.backend.begin_span();
        let eos = vocab.eos();
        let start = self.ctx.len();
        let mut tokens = Vec::new();
        let mut state = auto.start();
        let te = token_err(step);
        loop {
            let accepting = auto.is_accepting(state).map_err(&te)?;
            if auto.is_terminal(state).map_err(&te)? {
                break;
            }
            let remaining = max - tokens.len() as u32;
            let mut valid = auto.allowed_within(state, remaining).map_err(&te)?;
            if valid.is_empty() {
                if accepting {
                    break;
                }
                if remaining == 0 {
                    self.ctx.truncate(start);
                    return Err(EngineError::MaxTokensInNonAcceptingState {
                        step: step.name.clone(),
                        max_tokens: max,
                    });
                }
                // The budget cannot reach acceptance; keep going so the
                // budget error surfaces at the limit.
                valid = auto.allowed_tokens(state).map_err(&te)?.clone();
                if valid.is_empty() {
                    self.ctx.truncate(start);
                    return Err(EngineError::UnsatisfiableConstraint {
                        step: step.name.clone(),
                    });
                }
            }
            if accepting {
                if let Some(e) = eos {
                    valid.insert(e);
                }
            }
            let tok = self.pick(step, &valid, temperature)?;
            if accepting && Some(tok) == eos {
                break;
            }
            state = auto.advance(state, tok).map_err(&te)?;
            self.append_token(tok, &mut tokens);
        }
        self.ctx.truncate(start);
        Ok(tokens)
    }

    /// Stop-string mode: any ordinary token until the stop string appears,
    /// the end token is chosen, or the budget runs out.
    fn gen_until(&mut self, step: &Step, stop: &str, max: u32, temperature: f64) -> Result<Vec<TokenId>, EngineError> {
        let vocab = self.vocab.clone();
        let mut valid = TokenSet::new(vocab.size());
        for id in 0..vocab.size() as TokenId {
            if !vocab.is_special(id) {
                valid.insert(id);
            }
        }
        let eos = vocab.eos();
        if let Some(e) = eos {
            valid.insert(e);
        }
        self.backend.begin_span();
        let start = self.ctx.len();
        let mut tokens = Vec::new();
        let mut bytes: Vec<u8> = Vec::new();
        let stop = stop.as_bytes();
        while (tokens.len() as u32) < max {
            let tok = self.pick(step, &valid, temperature)?;
            if Some(tok) == eos {
                break;
            }
            self.append_token(tok, &mut tokens);
            bytes.extend_from_slice(vocab.bytes(tok).unwrap_or_default());
            let from = bytes.len().saturating_sub(stop.len() + vocab.bytes(tok).map_or(0, <[u8]>::len));
            if bytes[from..].windows(stop.len()).any(|w| w == stop) {
                break;
            }
        }
        self.ctx.truncate(start);
        Ok(tokens)
    }

    fn gen_degraded(
        &mut self,
        step: &Step,
        g: &GenStep,
        max: u32,
        temperature: f64,
        stop: Option<&str>,
    ) -> Result<Flow, EngineError> {
        if g.regex.is_some() {
            return Err(EngineError::Capability {
                step: step.name.clone(),
                what: "regex generation needs logit requests".into(),
            });
        }
        let prompt = self.vocab.detokenize(&self.ctx);
        let params = GenParams {
            max_tokens: max,
            temperature,
            stop: stop.map(str::to_string),
        };
        let mut text = self.backend.generate_unconstrained(&prompt, &params)?;
        self.trace.counters.backend_calls += 1;
        if let Some(at) = stop.and_then(|s| text.find(s)) {
            text.truncate(at);
        }
        let tokens = self.vocab.tokenize_ordinary(text.as_bytes()).map_err(token_err(step))?;
        self.trace.counters.tokens_emitted += tokens.len() as u64;
        self.ctx.extend_from_slice(&tokens);
        self.bindings.bind(step.name.clone(), text.clone());
        self.push_output(step, tokens, text);
        Ok(Flow::Continue)
    }

    fn select_automaton(&self, step: &Step, options: &[String]) -> Result<Arc<TokenAutomaton>, EngineError> {
        let key = format!("select\u{0}{}", options.join("\u{0}"));
        let vocab = self.vocab.clone();
        self.cache
            .automaton(&key, || compile_select(options, &vocab))
            .map_err(token_err(step))
    }

    fn exec_select(&mut self, step: &Step, o: &Options) -> Result<Flow, EngineError> {
        let mut options: Vec<String> = match o {
            Options::Static(v) => v.clone(),
            Options::Dynamic(d) => match d.resolve(&self.bindings) {
                Ok(v) => v.to_vec(),
                Err(EvalError::UnboundVariable(n)) => return Err(EngineError::UnboundVariable(n)),
                Err(EvalError::TypeError(m)) => return Ok(Flow::Abort(m)),
            },
        };
        options.dedup();
        if options.is_empty() {
            return Err(token_err(step)(TokenError::EmptyOptions));
        }
        let tokens = if self.degraded && options.len() > 1 {
            self.backend.begin_span();
            let idx = self.backend.choose(&self.ctx, &options)?;
            self.trace.counters.backend_calls += 1;
            let chosen = options.get(idx).cloned().ok_or_else(|| {
                BackendError::Transport(format!("choice index {idx} out of range for {} options", options.len()))
            })?;
            let auto = self.select_automaton(step, std::slice::from_ref(&chosen))?;
            shortest_accepting_path(&auto)
        } else {
            let auto = self.select_automaton(step, &options)?;
            if options.len() == 1 {
                shortest_accepting_path(&auto)
            } else {
                self.decode_select(step, &auto)?
            }
        };
        self.trace.counters.tokens_emitted += tokens.len() as u64;
        self.ctx.extend_from_slice(&tokens);
        let text = self.vocab.detokenize(&tokens);
        self.bindings.bind(step.name.clone(), text.clone());
        self.push_output(step, tokens, text);
        Ok(Flow::Continue)
    }

    fn decode_select(&mut self, step: &Step, auto: &TokenAutomaton) -> Result<Vec<TokenId>, EngineError> {
        let te = token_err(step);
        let temperature = self.default_temperature;
        let eos = self.vocab.eos();
        self.backend.begin_span();
        let start = self.ctx.len();
        let mut tokens = Vec::new();
        let mut state = auto.start();
        loop {
            let accepting = auto.is_accepting(state).map_err(&te)?;
            if auto.is_terminal(state).map_err(&te)? {
                break;
            }
            let mut valid = auto.allowed_tokens(state).map_err(&te)?.clone();
            if accepting {
                if let Some(e) = eos {
                    valid.insert(e);
                }
            }
            if valid.is_empty() {
                self.ctx.truncate(start);
                return Err(EngineError::UnsatisfiableConstraint {
                    step: step.name.clone(),
                });
            }
            let tok = self.pick(step, &valid, temperature)?;
            if accepting && Some(tok) == eos {
                break;
            }
            state = auto.advance(state, tok).map_err(&te)?;
            tokens.push(tok);
            self.ctx.push(tok);
        }
        self.ctx.truncate(start);
        Ok(tokens)
    }
}

enum LoopOutcome {
    Passed,
    Abort(String),
    /// Regenerate from the anchor, with an optional preamble.
    Retry(Option<String>),
}

/// Fewest-token accepted path; transitions are visited in id order so ties
/// go to lower token ids.
fn shortest_accepting_path(auto: &TokenAutomaton) -> Vec<TokenId> {
    let n = auto.num_states();
    let mut parent: Vec<Option<(u32, TokenId)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([auto.start()]);
    seen[auto.start() as usize] = true;
    while let Some(s) = queue.pop_front() {
        if auto.is_accepting(s).unwrap_or(false) {
            let mut path = Vec::new();
            let mut cur = s;
            while let Some((prev, tok)) = parent[cur as usize] {
                path.push(tok);
                cur = prev;
            }
            path.reverse();
            return path;
        }
        for &(tok, t) in auto.transitions(s).unwrap_or(&[]) {
            if !seen[t as usize] {
                seen[t as usize] = true;
                parent[t as usize] = Some((s, tok));
                queue.push_back(t);
            }
        }
    }
    Vec::new()
}
