//! Token-level automata: the product of a byte DFA with the vocabulary trie.

use std::collections::{HashMap, VecDeque};

use super::dfa::{ByteDfa, DEAD};
use super::mask::TokenSet;
use super::vocab::{TokenId, Vocabulary};
use super::TokenError;

pub type StateId = u32;

const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct State {
    /// Sorted by token id.
    trans: Vec<(TokenId, StateId)>,
    allowed: TokenSet,
    accepting: bool,
    /// Fewest tokens needed to reach an accepting state.
    dist: u32,
}

/// Deterministic automaton over token ids. State 0 is the start state and
/// every state can reach an accepting state.
#[derive(Debug, Clone)]
pub struct TokenAutomaton {
    states: Vec<State>,
    vocab_size: usize,
}

impl TokenAutomaton {
    /// Builds the product automaton. Special tokens never appear on edges.
    pub fn from_dfa(dfa: &ByteDfa, vocab: &Vocabulary) -> Result<Self, TokenError> {
        if dfa.is_empty_language() {
            return Err(TokenError::EmptyLanguage);
        }
        let trie = vocab.trie();
        let mut index: HashMap<u32, u32> = HashMap::new();
        let mut dfa_states = vec![dfa.start()];
        index.insert(dfa.start(), 0);
        let mut raw: Vec<Vec<(TokenId, u32)>> = Vec::new();
        let mut i = 0;
        while i < dfa_states.len() {
            let d = dfa_states[i];
            i += 1;
            let mut edges = Vec::new();
            // DFS over the trie in lockstep with the DFA.
            let mut stack = vec![(0u32, d)];
            while let Some((node, ds)) = stack.pop() {
                let n = &trie[node as usize];
                if node != 0 {
                    for &tok in &n.tokens {
                        if !vocab.is_special(tok) {
                            edges.push((tok, ds));
                        }
                    }
                }
                for &(b, child) in &n.children {
                    let next = dfa.step(ds, b);
                    if next != DEAD {
                        stack.push((child, next));
                    }
                }
            }
            let mut out = Vec::with_capacity(edges.len());
            for (tok, ds) in edges {
                let id = *index.entry(ds).or_insert_with(|| {
                    dfa_states.push(ds);
                    (dfa_states.len() - 1) as u32
                });
                out.push((tok, id));
            }
            raw.push(out);
        }
        let accepting: Vec<bool> = dfa_states.iter().map(|&d| dfa.is_accepting(d)).collect();
        Self::finish(raw, accepting, vocab.size())
    }

    /// Liveness pruning, distance computation, and renumbering from start.
    fn finish(
        raw: Vec<Vec<(TokenId, u32)>>,
        accepting: Vec<bool>,
        vocab_size: usize,
    ) -> Result<Self, TokenError> {
        let n = raw.len();
        let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (s, edges) in raw.iter().enumerate() {
            for &(_, t) in edges {
                rev[t as usize].push(s as u32);
            }
        }
        let mut dist = vec![UNREACHABLE; n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            if accepting[s] {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for &p in &rev[s] {
                if dist[p as usize] == UNREACHABLE {
                    dist[p as usize] = dist[s] + 1;
                    queue.push_back(p as usize);
                }
            }
        }
        if dist[0] == UNREACHABLE {
            return Err(TokenError::EmptyLanguage);
        }
        let mut remap = vec![UNREACHABLE; n];
        remap[0] = 0;
        let mut order = vec![0usize];
        let mut i = 0;
        while i < order.len() {
            let s = order[i];
            i += 1;
            for &(_, t) in &raw[s] {
                if dist[t as usize] != UNREACHABLE && remap[t as usize] == UNREACHABLE {
                    remap[t as usize] = order.len() as u32;
                    order.push(t as usize);
                }
            }
        }
        let states = order
            .iter()
            .map(|&s| {
                let mut trans: Vec<(TokenId, StateId)> = raw[s]
                    .iter()
                    .filter(|&&(_, t)| dist[t as usize] != UNREACHABLE)
                    .map(|&(tok, t)| (tok, remap[t as usize]))
                    .collect();
                trans.sort_unstable();
                let mut allowed = TokenSet::new(vocab_size);
                for &(tok, _) in &trans {
                    allowed.insert(tok);
                }
                State {
                    trans,
                    allowed,
                    accepting: accepting[s],
                    dist: dist[s],
                }
            })
            .collect();
        Ok(Self { states, vocab_size })
    }

    pub fn start(&self) -> StateId {
        0
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn state(&self, state: StateId) -> Result<&State, TokenError> {
        self.states
            .get(state as usize)
            .ok_or(TokenError::UnknownState(state))
    }

    /// Tokens with a transition out of `state`. Every target can still reach
    /// acceptance, so the set is empty only for accepting dead ends.
    pub fn allowed_tokens(&self, state: StateId) -> Result<&TokenSet, TokenError> {
        Ok(&self.state(state)?.allowed)
    }

    /// Allowed tokens whose target can still reach acceptance within the
    /// `remaining - 1` tokens left after taking them. May be empty.
    pub fn allowed_within(&self, state: StateId, remaining: u32) -> Result<TokenSet, TokenError> {
        let st = self.state(state)?;
        let mut set = TokenSet::new(self.vocab_size);
        if remaining == 0 {
            return Ok(set);
        }
        for &(tok, t) in &st.trans {
            if self.states[t as usize].dist < remaining {
                set.insert(tok);
            }
        }
        Ok(set)
    }

    pub fn transitions(&self, state: StateId) -> Result<&[(TokenId, StateId)], TokenError> {
        Ok(&self.state(state)?.trans)
    }

    pub fn advance(&self, state: StateId, token: TokenId) -> Result<StateId, TokenError> {
        let st = self.state(state)?;
        st.trans
            .binary_search_by_key(&token, |&(t, _)| t)
            .map(|i| st.trans[i].1)
            .map_err(|_| TokenError::InvalidTransition { state, token })
    }

    pub fn is_accepting(&self, state: StateId) -> Result<bool, TokenError> {
        Ok(self.state(state)?.accepting)
    }

    /// Accepting with no way to continue.
    pub fn is_terminal(&self, state: StateId) -> Result<bool, TokenError> {
        let st = self.state(state)?;
        Ok(st.accepting && st.trans.is_empty())
    }

    /// Fewest tokens needed to reach acceptance from `state`.
    pub fn min_tokens_to_accept(&self, state: StateId) -> Result<u32, TokenError> {
        Ok(self.state(state)?.dist)
    }

    /// Walks a whole token sequence from the start state.
    pub fn walk(&self, tokens: &[TokenId]) -> Result<StateId, TokenError> {
        tokens
            .iter()
            .try_fold(self.start(), |s, &t| self.advance(s, t))
    }

    pub fn accepts(&self, tokens: &[TokenId]) -> bool {
        matches!(self.walk(tokens).and_then(|s| self.is_accepting(s)), Ok(true))
    }
}
