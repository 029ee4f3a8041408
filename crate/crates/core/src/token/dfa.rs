//! Byte-level DFA: Thompson NFA over byte ranges, subset construction, and
//! dead-state pruning. Also builds trie DFAs directly from literal sets.

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::regex::{CharClass, RegexAst};

pub const DEAD: u32 = u32::MAX;

/// Hard cap on DFA size; patterns exceeding it are rejected.
pub const MAX_DFA_STATES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteDfa {
    trans: Vec<[u32; 256]>,
    accepting: Vec<bool>,
    start: u32,
}

impl ByteDfa {
    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.trans.len()
    }

    #[inline]
    pub fn step(&self, state: u32, byte: u8) -> u32 {
        if state == DEAD {
            DEAD
        } else {
            self.trans[state as usize][byte as usize]
        }
    }

    pub fn is_accepting(&self, state: u32) -> bool {
        state != DEAD && self.accepting[state as usize]
    }

    /// Runs the whole input from `state`.
    pub fn walk(&self, mut state: u32, bytes: &[u8]) -> u32 {
        for &b in bytes {
            state = self.step(state, b);
            if state == DEAD {
                break;
            }
        }
        state
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        self.is_accepting(self.walk(self.start, bytes))
    }

    /// True when the language is empty (the start state was pruned).
    pub fn is_empty_language(&self) -> bool {
        self.start == DEAD
    }

    pub fn from_ast(ast: &RegexAst) -> Result<Self, DfaTooLarge> {
        let mut nfa = Nfa::default();
        let frag = nfa.compile(ast);
        let accept = nfa.push(NState::Match);
        nfa.patch(&frag.holes, accept);
        let dfa = nfa.determinize(frag.start)?;
        Ok(dfa.pruned())
    }

    /// A trie over the given strings, accepting exactly them.
    pub fn from_literals<S: AsRef<[u8]>>(items: &[S]) -> Self {
        let mut trans = vec![[DEAD; 256]];
        let mut accepting = vec![false];
        for item in items {
            let mut s = 0usize;
            for &b in item.as_ref() {
                let next = trans[s][b as usize];
                s = if next == DEAD {
                    trans.push([DEAD; 256]);
                    accepting.push(false);
                    let id = trans.len() - 1;
                    trans[s][b as usize] = id as u32;
                    id
                } else {
                    next as usize
                };
            }
            accepting[s] = true;
        }
        Self {
            trans,
            accepting,
            start: 0,
        }
        .pruned()
    }

    /// Removes states that cannot reach an accepting state and renumbers the
    /// rest in BFS order from the start.
    fn pruned(self) -> Self {
        let n = self.trans.len();
        let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (s, row) in self.trans.iter().enumerate() {
            for &t in row.iter() {
                if t != DEAD {
                    rev[t as usize].push(s as u32);
                }
            }
        }
        let mut live = self.accepting.clone();
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| live[s]).collect();
        while let Some(s) = queue.pop_front() {
            for &p in &rev[s] {
                if !live[p as usize] {
                    live[p as usize] = true;
                    queue.push_back(p as usize);
                }
            }
        }
        if self.start == DEAD || !live[self.start as usize] {
            return Self {
                trans: Vec::new(),
                accepting: Vec::new(),
                start: DEAD,
            };
        }
        let mut remap = vec![DEAD; n];
        let mut order = vec![self.start as usize];
        remap[self.start as usize] = 0;
        let mut i = 0;
        while i < order.len() {
            let s = order[i];
            i += 1;
            for &t in self.trans[s].iter() {
                if t != DEAD && live[t as usize] && remap[t as usize] == DEAD {
                    remap[t as usize] = order.len() as u32;
                    order.push(t as usize);
                }
            }
        }
        let trans = order
            .iter()
            .map(|&s| {
                let mut row = [DEAD; 256];
                for (b, &t) in self.trans[s].iter().enumerate() {
                    if t != DEAD {
                        row[b] = remap[t as usize];
                    }
                }
                row
            })
            .collect();
        let accepting = order.iter().map(|&s| self.accepting[s]).collect();
        Self {
            trans,
            accepting,
            start: 0,
        }
    }

    /// L(self) is a subset of L(other).
    pub fn is_subset_of(&self, other: &ByteDfa) -> bool {
        !self.product_reaches(other, |a, b| a && !b)
    }

    /// L(self) and L(other) share no string.
    pub fn is_disjoint_from(&self, other: &ByteDfa) -> bool {
        !self.product_reaches(other, |a, b| a && b)
    }

    fn product_reaches(&self, other: &ByteDfa, target: impl Fn(bool, bool) -> bool) -> bool {
        if self.is_empty_language() {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        queue.push_back((self.start, other.start));
        seen.insert((self.start, other.start));
        while let Some((a, b)) = queue.pop_front() {
            if target(self.is_accepting(a), other.is_accepting(b)) {
                return true;
            }
            for byte in 0..=255u8 {
                let na = self.step(a, byte);
                if na == DEAD {
                    continue;
                }
                let nb = other.step(b, byte);
                if seen.insert((na, nb)) {
                    queue.push_back((na, nb));
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DfaTooLarge;

impl std::fmt::Display for DfaTooLarge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pattern expands to more than {MAX_DFA_STATES} DFA states")
    }
}

// ---------------------------------------------------------------------------
// Thompson NFA

#[derive(Debug, Clone)]
enum NState {
    Range { lo: u8, hi: u8, next: usize },
    Split(Vec<usize>),
    Match,
}

const HOLE: usize = usize::MAX;

struct Frag {
    start: usize,
    /// (state, slot) pairs whose target is not yet known.
    holes: Vec<(usize, usize)>,
}

#[derive(Default)]
struct Nfa {
    states: Vec<NState>,
}

impl Nfa {
    fn push(&mut self, s: NState) -> usize {
        self.states.push(s);
        self.states.len() - 1
    }

    fn patch(&mut self, holes: &[(usize, usize)], target: usize) {
        for &(s, slot) in holes {
            match &mut self.states[s] {
                NState::Range { next, .. } => *next = target,
                NState::Split(targets) => targets[slot] = target,
                NState::Match => {}
            }
        }
    }

    fn empty(&mut self) -> Frag {
        let s = self.push(NState::Split(vec![HOLE]));
        Frag {
            start: s,
            holes: vec![(s, 0)],
        }
    }

    fn compile(&mut self, ast: &RegexAst) -> Frag {
        match ast {
            RegexAst::Empty => self.empty(),
            RegexAst::Class(class) => self.class(class),
            RegexAst::Concat(items) => {
                let mut iter = items.iter();
                let Some(first) = iter.next() else {
                    return self.empty();
                };
                let mut acc = self.compile(first);
                for item in iter {
                    let next = self.compile(item);
                    self.patch(&acc.holes, next.start);
                    acc.holes = next.holes;
                }
                acc
            }
            RegexAst::Alt(branches) => {
                let frags: Vec<Frag> = branches.iter().map(|b| self.compile(b)).collect();
                let split = self.push(NState::Split(frags.iter().map(|f| f.start).collect()));
                Frag {
                    start: split,
                    holes: frags.into_iter().flat_map(|f| f.holes).collect(),
                }
            }
            RegexAst::Repeat { node, min, max } => {
                let mut acc = self.empty();
                for _ in 0..*min {
                    let f = self.compile(node);
                    self.patch(&acc.holes, f.start);
                    acc.holes = f.holes;
                }
                match max {
                    None => {
                        let f = self.compile(node);
                        let split = self.push(NState::Split(vec![f.start, HOLE]));
                        self.patch(&f.holes, split);
                        self.patch(&acc.holes, split);
                        acc.holes = vec![(split, 1)];
                    }
                    Some(max) => {
                        let mut exits = Vec::new();
                        for _ in *min..*max {
                            let f = self.compile(node);
                            let split = self.push(NState::Split(vec![f.start, HOLE]));
                            self.patch(&acc.holes, split);
                            exits.push((split, 1));
                            acc.holes = f.holes;
                        }
                        acc.holes.extend(exits);
                    }
                }
                acc
            }
        }
    }

    fn class(&mut self, class: &CharClass) -> Frag {
        let mut starts = Vec::new();
        let mut holes = Vec::new();
        for &(lo, hi) in class.ranges() {
            for seq in utf8_sequences(lo, hi) {
                let mut first = None;
                let mut prev: Option<usize> = None;
                for &(blo, bhi) in &seq {
                    let s = self.push(NState::Range {
                        lo: blo,
                        hi: bhi,
                        next: HOLE,
                    });
                    if let Some(p) = prev {
                        self.patch(&[(p, 0)], s);
                    } else {
                        first = Some(s);
                    }
                    prev = Some(s);
                }
                starts.push(first.expect("nonempty sequence"));
                holes.push((prev.expect("nonempty sequence"), 0));
            }
        }
        let split = self.push(NState::Split(starts));
        Frag { start: split, holes }
    }

    fn closure(&self, seeds: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = seeds.into_iter().collect();
        while let Some(s) = stack.pop() {
            if s == HOLE || !seen.insert(s) {
                continue;
            }
            if let NState::Split(targets) = &self.states[s] {
                stack.extend(targets.iter().copied());
            }
        }
        seen.into_iter()
            .filter(|&s| !matches!(self.states[s], NState::Split(_)))
            .collect()
    }

    fn determinize(&self, start: usize) -> Result<ByteDfa, DfaTooLarge> {
        // Byte equivalence classes from all range boundaries.
        let mut bounds = BTreeSet::new();
        bounds.insert(0u16);
        bounds.insert(256u16);
        for s in &self.states {
            if let NState::Range { lo, hi, .. } = s {
                bounds.insert(*lo as u16);
                bounds.insert(*hi as u16 + 1);
            }
        }
        let bounds: Vec<u16> = bounds.into_iter().collect();

        let start_set = self.closure([start]);
        let mut ids: HashMap<Vec<usize>, u32> = HashMap::new();
        let mut sets = vec![start_set.clone()];
        ids.insert(start_set, 0);
        let mut trans: Vec<[u32; 256]> = Vec::new();
        let mut accepting = Vec::new();
        let mut i = 0;
        while i < sets.len() {
            let set = sets[i].clone();
            i += 1;
            accepting.push(set.iter().any(|&s| matches!(self.states[s], NState::Match)));
            let mut row = [DEAD; 256];
            for w in bounds.windows(2) {
                let byte = w[0] as u8;
                let targets: Vec<usize> = set
                    .iter()
                    .filter_map(|&s| match self.states[s] {
                        NState::Range { lo, hi, next } if lo <= byte && byte <= hi => Some(next),
                        _ => None,
                    })
                    .collect();
                if targets.is_empty() {
                    continue;
                }
                let next_set = self.closure(targets);
                let id = match ids.get(&next_set) {
                    Some(&id) => id,
                    None => {
                        if sets.len() >= MAX_DFA_STATES {
                            return Err(DfaTooLarge);
                        }
                        let id = sets.len() as u32;
                        ids.insert(next_set.clone(), id);
                        sets.push(next_set);
                        id
                    }
                };
                for b in w[0]..w[1] {
                    row[b as usize] = id;
                }
            }
            trans.push(row);
        }
        Ok(ByteDfa {
            trans,
            accepting,
            start: 0,
        })
    }
}

// ---------------------------------------------------------------------------
// UTF-8 range splitting

/// Splits a scalar range into byte-range sequences whose concatenations are
/// exactly the UTF-8 encodings of the scalars in the range. Surrogates are
/// skipped.
pub fn utf8_sequences(lo: u32, hi: u32) -> Vec<Vec<(u8, u8)>> {
    let mut out = Vec::new();
    let mut stack = Vec::new();
    if lo <= hi {
        if lo < 0xD800 && hi > 0xDFFF {
            stack.push((0xE000, hi));
            stack.push((lo, 0xD7FF));
        } else if (0xD800..=0xDFFF).contains(&lo) && hi > 0xDFFF {
            stack.push((0xE000, hi));
        } else if lo < 0xD800 && (0xD800..=0xDFFF).contains(&hi) {
            stack.push((lo, 0xD7FF));
        } else if !(0xD800..=0xDFFF).contains(&lo) {
            stack.push((lo, hi));
        }
    }
    'outer: while let Some((lo, hi)) = stack.pop() {
        // Split on encoded-length boundaries.
        for &boundary in &[0x7F, 0x7FF, 0xFFFF] {
            if lo <= boundary && hi > boundary {
                stack.push((boundary + 1, hi));
                stack.push((lo, boundary));
                continue 'outer;
            }
        }
        if hi <= 0x7F {
            out.push(vec![(lo as u8, hi as u8)]);
            continue;
        }
        let len = encoded_len(lo);
        for i in 1..len {
            let m: u32 = (1 << (6 * i)) - 1;
            if lo & !m != hi & !m {
                if lo & m != 0 {
                    stack.push(((lo | m) + 1, hi));
                    stack.push((lo, lo | m));
                    continue 'outer;
                }
                if hi & m != m {
                    stack.push((hi & !m, hi));
                    stack.push((lo, (hi & !m) - 1));
                    continue 'outer;
                }
            }
        }
        let a = encode(lo);
        let b = encode(hi);
        out.push(a.iter().zip(b.iter()).map(|(&x, &y)| (x, y)).collect());
    }
    out
}

fn encoded_len(c: u32) -> usize {
    match c {
        0..=0x7F => 1,
        0x80..=0x7FF => 2,
        0x800..=0xFFFF => 3,
        _ => 4,
    }
}

fn encode(c: u32) -> Vec<u8> {
    let ch = char::from_u32(c).expect("non-surrogate scalar");
    let mut buf = [0u8; 4];
    ch.encode_utf8(&mut buf).as_bytes().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::regex::parse_regex;
    use proptest::prelude::*;

    fn dfa(p: &str) -> ByteDfa {
        ByteDfa::from_ast(&parse_regex(p).unwrap()).unwrap()
    }

    #[test]
    fn numeric_pattern_matches() {
        let d = dfa(r"\d+\.?\d*");
        for ok in ["1", "12", "12.", "1.2", "0.75"] {
            assert!(d.matches(ok.as_bytes()), "{ok}");
        }
        for bad in ["", ".5", "1..2", "a", "1.2.3"] {
            assert!(!d.matches(bad.as_bytes()), "{bad}");
        }
    }

    #[test]
    fn bounded_repetition() {
        let d = dfa("a{2,3}");
        assert!(!d.matches(b"a"));
        assert!(d.matches(b"aa"));
        assert!(d.matches(b"aaa"));
        assert!(!d.matches(b"aaaa"));
    }

    #[test]
    fn dot_matches_multibyte_chars() {
        let d = dfa("a.b");
        assert!(d.matches("a≥b".as_bytes()));
        assert!(!d.matches(b"a\nb"));
        assert!(!d.matches(&[b'a', 0xE2, b'b']));
    }

    #[test]
    fn literal_trie() {
        let d = ByteDfa::from_literals(&["M0", "M1", "M"]);
        assert!(d.matches(b"M"));
        assert!(d.matches(b"M1"));
        assert!(!d.matches(b"M2"));
    }

    #[test]
    fn empty_class_gives_empty_language() {
        let d = dfa("[^\\x00-\\x{10FFFF}]");
        assert!(d.is_empty_language());
    }

    #[test]
    fn subset_and_disjoint() {
        let num = dfa(r"\d+\.?\d*");
        assert!(dfa("[0-9]{1,3}").is_subset_of(&num));
        assert!(!dfa("[0-9a]").is_subset_of(&num));
        assert!(dfa("[a-z]+").is_disjoint_from(&num));
        assert!(!dfa("[0-9a]").is_disjoint_from(&num));
    }

    proptest! {
        #[test]
        fn utf8_sequences_cover_exactly(lo in 0u32..0x11000, span in 0u32..0x3000, probe in 0u32..0x11000) {
            let hi = (lo + span).min(0x10FFFF);
            let seqs = utf8_sequences(lo, hi);
            if let Some(c) = char::from_u32(probe) {
                let mut buf = [0u8; 4];
                let enc = c.encode_utf8(&mut buf).as_bytes();
                let hits = seqs.iter().filter(|seq| seq.len() == enc.len()
                    && seq.iter().zip(enc).all(|(&(a, b), &x)| a <= x && x <= b)).count();
                let inside = lo <= probe && probe <= hi;
                prop_assert_eq!(hits, usize::from(inside));
            }
        }
    }
}
