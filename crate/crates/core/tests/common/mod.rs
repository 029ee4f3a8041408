#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use regex_automata::dfa::{dense, Automaton, StartKind};
use regex_automata::util::primitives::StateID;
use regex_automata::util::start;
use regex_automata::Anchored;
use scidc_core::ir::{Expr, Literal, Options, RuleProgram, Step, StepKind};
use scidc_core::token::{TokenAutomaton, Vocabulary};

/// Printable ASCII plus newline as single-byte tokens, then `words`, then
/// an end token.
pub fn ascii_vocab(words: &[&str]) -> Arc<Vocabulary> {
    let mut entries: Vec<String> = (0x20u8..0x7f).map(|b| (b as char).to_string()).collect();
    entries.push("\n".into());
    entries.extend(words.iter().map(|w| w.to_string()));
    Arc::new(Vocabulary::from_strs_with_eos(&entries, "<eos>").unwrap())
}

pub fn formulation_source() -> &'static str {
    include_str!("../../data/formulation.ir")
}

pub fn tnm_source() -> &'static str {
    include_str!("../../data/tnm.ir")
}

pub fn formulation_vocab() -> Arc<Vocabulary> {
    ascii_vocab(&["Step ", "ratio", "the ", "limit", "amine", "reach", "upper", "close", "not yet"])
}

/// Characters used by random vocabularies and patterns.
pub const ALPHABET: &[char] = &['a', 'b', 'c', 'x', 'y', '0', '1', '2', '.', '-'];

/// Every alphabet character as a token, plus random 2-3 character tokens,
/// `size` entries in total (at least the alphabet).
pub fn random_vocab(rng: &mut impl Rng, size: usize) -> Vocabulary {
    let mut entries: Vec<String> = ALPHABET.iter().map(|c| c.to_string()).collect();
    while entries.len() < size {
        let len = rng.gen_range(2..=3);
        let t: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
        if !entries.contains(&t) {
            entries.push(t);
        }
    }
    entries.shuffle(rng);
    Vocabulary::from_strs(&entries).unwrap()
}

fn literal(c: char) -> String {
    match c {
        '.' => "\\.".into(),
        '-' => "-".into(),
        c => c.to_string(),
    }
}

fn class(rng: &mut impl Rng) -> String {
    let negated = rng.gen_bool(0.2);
    let mut body = String::new();
    if rng.gen_bool(0.3) {
        body.push_str(["a-c", "0-2", "x-y"].choose(rng).unwrap());
    }
    for _ in 0..rng.gen_range(1..=2) {
        match *ALPHABET.choose(rng).unwrap() {
            '-' => body.push_str("\\-"),
            c => body.push(c),
        }
    }
    format!("[{}{body}]", if negated { "^" } else { "" })
}

fn atom(rng: &mut impl Rng, depth: u32) -> String {
    match rng.gen_range(0..10) {
        0..=3 => literal(*ALPHABET.choose(rng).unwrap()),
        4 | 5 => class(rng),
        6 => "\\d".into(),
        7 => ".".into(),
        _ if depth < 2 => format!("({})", alternation(rng, depth + 1)),
        _ => literal(*ALPHABET.choose(rng).unwrap()),
    }
}

fn quantifier(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..10) {
        0..=4 => String::new(),
        5 => "?".into(),
        6 => "*".into(),
        7 => "+".into(),
        8 => format!("{{{}}}", rng.gen_range(0..=3)),
        _ => {
            let m = rng.gen_range(0..=2);
            format!("{{{m},{}}}", m + rng.gen_range(0..=2))
        }
    }
}

fn alternation(rng: &mut impl Rng, depth: u32) -> String {
    let branches = rng.gen_range(1..=if depth == 0 { 3 } else { 2 });
    (0..branches)
        .map(|_| {
            (0..rng.gen_range(1..=3))
                .map(|_| format!("{}{}", atom(rng, depth), quantifier(rng)))
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// A random pattern in the subset both our parser and the reference engines
/// accept.
pub fn random_pattern(rng: &mut impl Rng) -> String {
    alternation(rng, 0)
}

/// Reference matchers for one pattern: a full-match `regex::Regex` and an
/// anchored DFA from `regex-automata`, used only to prune dead prefixes.
pub struct Oracle {
    full: regex::Regex,
    dfa: dense::DFA<Vec<u32>>,
    start: StateID,
}

impl Oracle {
    pub fn new(pattern: &str) -> Self {
        let full = regex::Regex::new(&format!("^(?:{pattern})$")).unwrap();
        let dfa = dense::Builder::new()
            .configure(dense::Config::new().start_kind(StartKind::Anchored))
            .build(&format!("(?:{pattern})$"))
            .unwrap();
        let start = dfa.start_state(&start::Config::new().anchored(Anchored::Yes)).unwrap();
        Self { full, dfa, start }
    }

    pub fn is_full_match(&self, bytes: &[u8]) -> bool {
        std::str::from_utf8(bytes).is_ok_and(|s| self.full.is_match(s))
    }

    /// Strings spelled by token sequences of at most `max_tokens` that fully
    /// match, by enumerating token sequences. `None` when more than `budget`
    /// prefixes would have to be visited.
    pub fn enumerate(&self, vocab: &Vocabulary, max_tokens: usize, budget: usize) -> Option<BTreeSet<Vec<u8>>> {
        let mut out = BTreeSet::new();
        let mut visited = 0usize;
        let mut prefix = Vec::new();
        self.dfs(vocab, self.start, max_tokens, budget, &mut visited, &mut prefix, &mut out)
            .then_some(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        vocab: &Vocabulary,
        state: StateID,
        left: usize,
        budget: usize,
        visited: &mut usize,
        prefix: &mut Vec<u8>,
        out: &mut BTreeSet<Vec<u8>>,
    ) -> bool {
        if self.is_full_match(prefix) {
            out.insert(prefix.clone());
        }
        if left == 0 {
            return true;
        }
        for id in 0..vocab.size() as u32 {
            if vocab.is_special(id) {
                continue;
            }
            let bytes = vocab.bytes(id).unwrap();
            let mut s = state;
            for &b in bytes {
                s = self.dfa.next_state(s, b);
                if self.dfa.is_dead_state(s) {
                    break;
                }
            }
            if self.dfa.is_dead_state(s) {
                continue;
            }
            *visited += 1;
            if *visited > budget {
                return false;
            }
            let len = prefix.len();
            prefix.extend_from_slice(bytes);
            let ok = self.dfs(vocab, s, left - 1, budget, visited, prefix, out);
            prefix.truncate(len);
            if !ok {
                return false;
            }
        }
        true
    }
}

/// Strings reachable by walks of at most `max_tokens` that only take tokens
/// the automaton's masks allow and end in an accepting state.
pub fn mask_walk_strings(a: &TokenAutomaton, vocab: &Vocabulary, max_tokens: usize) -> BTreeSet<Vec<u8>> {
    fn go(
        a: &TokenAutomaton,
        vocab: &Vocabulary,
        state: u32,
        left: usize,
        prefix: &mut Vec<u8>,
        out: &mut BTreeSet<Vec<u8>>,
    ) {
        if a.is_accepting(state).unwrap() {
            out.insert(prefix.clone());
        }
        if left == 0 {
            return;
        }
        let allowed: Vec<u32> = a.allowed_tokens(state).unwrap().iter().collect();
        for t in allowed {
            let next = a.advance(state, t).unwrap();
            let len = prefix.len();
            prefix.extend_from_slice(vocab.bytes(t).unwrap());
            go(a, vocab, next, left - 1, prefix, out);
            prefix.truncate(len);
        }
    }
    let mut out = BTreeSet::new();
    go(a, vocab, a.start(), max_tokens, &mut Vec::new(), &mut out);
    out
}

const REGEX_POOL: &[&str] = &[
    r"\d+",
    r"\d{2,3}",
    r"(?=a)b",
    r"(a)\1",
    "é+",
    "[",
    "[a-c]+x?",
    r"\d+\.?\d*",
    "T[12][ab]?",
    "",
];

const OPTION_POOL: &[&[&str]] = &[&[], &["é"], &["x", "x"], &["a"], &["12", "1"], &["M0", "M1"], &[""]];

const PREDICATE_POOL: &[&str] = &[
    "nope > 1",
    "adjusted_ratio >= 2.5",
    "binder + 1",
    "curing_agent > 3",
    "size <= 1",
    "extension == \"none\"",
    "\"a\" == 1",
    "true",
    "1 > 2",
    "t_stage in [\"T1a\", \"T1b\"]",
    "current_ratio * 2 < binder",
];

fn names(steps: &[Step], out: &mut Vec<String>) {
    for s in steps {
        out.push(s.name.clone());
        if let StepKind::Branch(b) = &s.kind {
            for (_, body) in &b.arms {
                names(body, out);
            }
            if let Some(body) = &b.otherwise {
                names(body, out);
            }
        }
    }
}

/// Applies 1 to 3 random structural edits. Results may or may not be valid
/// programs; callers lint and run them.
pub fn mutate(program: &RuleProgram, rng: &mut impl Rng) -> RuleProgram {
    let mut p = program.clone();
    for _ in 0..rng.gen_range(1..=3) {
        let mut all = Vec::new();
        names(&p.steps, &mut all);
        let n = p.steps.len();
        if n == 0 {
            break;
        }
        let i = rng.gen_range(0..n);
        match rng.gen_range(0..12) {
            0 => {
                p.steps.remove(i);
            }
            1 => {
                let j = rng.gen_range(0..n);
                p.steps.swap(i, j);
            }
            2 => {
                if let StepKind::Gen(g) = &mut p.steps[i].kind {
                    g.regex = Some(REGEX_POOL.choose(rng).unwrap().to_string());
                }
            }
            3 => {
                if let StepKind::Gen(g) = &mut p.steps[i].kind {
                    g.max_tokens = [None, Some(0), Some(1), Some(2)].choose(rng).copied().unwrap();
                }
            }
            4 => {
                if let StepKind::Select(o) = &mut p.steps[i].kind {
                    let opts: Vec<String> = OPTION_POOL.choose(rng).unwrap().iter().map(|s| s.to_string()).collect();
                    match o {
                        Options::Static(v) => *v = opts,
                        Options::Dynamic(d) => {
                            if rng.gen_bool(0.5) || d.guards.is_empty() {
                                d.default = opts;
                            } else {
                                let k = rng.gen_range(0..d.guards.len());
                                d.guards[k].1 = opts;
                            }
                        }
                    }
                }
            }
            5 => {
                if let StepKind::Validate(v) = &mut p.steps[i].kind {
                    if rng.gen_bool(0.5) {
                        v.anchor = all.choose(rng).cloned().unwrap_or_else(|| "nope".into());
                    } else {
                        v.max_retries = [None, Some(0), Some(1)].choose(rng).copied().unwrap();
                    }
                }
            }
            6 => {
                p.steps[i].name = all.choose(rng).cloned().unwrap();
            }
            7 => {
                let pred = Expr::parse(PREDICATE_POOL.choose(rng).unwrap()).unwrap();
                match &mut p.steps[i].kind {
                    StepKind::Validate(v) => v.pred = pred,
                    StepKind::Select(Options::Dynamic(d)) if !d.guards.is_empty() => {
                        let k = rng.gen_range(0..d.guards.len());
                        d.guards[k].0 = pred;
                    }
                    StepKind::Branch(b) if !b.arms.is_empty() => b.arms[0].0 = pred,
                    _ => {}
                }
            }
            8 => {
                if let StepKind::Validate(v) = &mut p.steps[i].kind {
                    let var = all.choose(rng).cloned().unwrap_or_else(|| "nope".into());
                    let lit = if rng.gen_bool(0.5) { Literal::Num(1.0) } else { Literal::Str("é".into()) };
                    v.fallback = if rng.gen_bool(0.3) { Vec::new() } else { vec![(var, lit)] };
                }
            }
            9 => {
                // Wrap a step in a branch guarded by a random predicate.
                let pred = Expr::parse(PREDICATE_POOL.choose(rng).unwrap()).unwrap();
                let inner = p.steps.remove(i);
                let name = format!("wrap{i}");
                p.steps.insert(
                    i,
                    Step {
                        name,
                        kind: StepKind::Branch(scidc_core::ir::BranchStep {
                            arms: vec![(pred, vec![inner])],
                            otherwise: None,
                        }),
                    },
                );
            }
            10 => {
                if let StepKind::Gen(g) = &mut p.steps[i].kind {
                    g.stop = [None, Some(String::new()), Some("\n".into()), Some("é".into())]
                        .choose(rng)
                        .cloned()
                        .unwrap();
                }
            }
            _ => {
                if let StepKind::Emit(text) = &mut p.steps[i].kind {
                    *text = ["", "é", "{nope}", "x"].choose(rng).unwrap().to_string();
                }
            }
        }
    }
    p
}
