mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scidc_core::engine::{decode_policy, DecodePolicy};
use scidc_core::token::{
    advance, allowed_tokens, apply_mask, compile_regex, compile_select, TokenError, TokenSet, Vocabulary, FORBIDDEN,
};

use common::{mask_walk_strings, random_pattern, random_vocab, Oracle};

fn vocab(tokens: &[&str]) -> Vocabulary {
    Vocabulary::from_strs(tokens).unwrap()
}

/// Token-id paths of length 1..=max whose bytes fully match under `accept`.
fn brute_paths(v: &Vocabulary, max: usize, accept: impl Fn(&str) -> bool) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    let mut frontier: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for path in &frontier {
            for id in 0..v.size() as u32 {
                let mut p = path.clone();
                p.push(id);
                let text = v.detokenize(&p);
                if accept(&text) {
                    out.insert(p.iter().map(|&t| v.detokenize(&[t])).collect());
                }
                next.push(p);
            }
        }
        frontier = next;
    }
    out
}

fn automaton_paths(a: &scidc_core::token::TokenAutomaton, v: &Vocabulary, max: usize) -> BTreeSet<Vec<String>> {
    brute_paths(v, max, |_| true)
        .into_iter()
        .filter(|p| {
            let ids: Vec<u32> = p.iter().map(|t| v.tokenize(t).unwrap()[0]).collect();
            a.accepts(&ids)
        })
        .collect()
}

fn paths(items: &[&[&str]]) -> BTreeSet<Vec<String>> {
    items.iter().map(|p| p.iter().map(|s| s.to_string()).collect()).collect()
}

#[test]
fn numeric_pattern_accepts_exactly_the_brute_force_paths() {
    let v = vocab(&["1", "2", ".", "12", "a"]);
    let a = compile_regex(r"\d+\.?\d*", &v).unwrap();
    let re = regex::Regex::new(r"^[0-9]+\.?[0-9]*$").unwrap();
    let expected = brute_paths(&v, 4, |s| re.is_match(s));
    assert_eq!(automaton_paths(&a, &v, 4), expected);
    for p in [&["1"][..], &["12"], &["1", "2"], &["1", ".", "2"], &["12", "."]] {
        assert!(expected.contains(&paths(&[p]).into_iter().next().unwrap()), "{p:?}");
    }
    assert!(expected.iter().all(|p| !p.iter().any(|t| t == "a")));
}

#[test]
fn alternation_over_split_tokens() {
    let v = vocab(&["M", "0", "1", "M0"]);
    let a = compile_regex("(M0|M1)", &v).unwrap();
    let re = regex::Regex::new("^(M0|M1)$").unwrap();
    let got = automaton_paths(&a, &v, 2);
    assert_eq!(got, brute_paths(&v, 2, |s| re.is_match(s)));
    assert_eq!(got, paths(&[&["M0"], &["M", "0"], &["M", "1"]]));
}

#[test]
fn unspellable_pattern_is_empty_language() {
    let v = vocab(&["b", "c"]);
    assert_eq!(compile_regex("a", &v).unwrap_err(), TokenError::EmptyLanguage);
}

#[test]
fn select_examples() {
    let v = vocab(&["M", "0", "1"]);
    let a = compile_select(&["M0", "M1"], &v).unwrap();
    assert_eq!(automaton_paths(&a, &v, 3), paths(&[&["M", "0"], &["M", "1"]]));
    let m = v.tokenize("M").unwrap()[0];
    let start = allowed_tokens(&a, a.start()).unwrap();
    assert_eq!(start.iter().collect::<Vec<_>>(), vec![m]);
    let after = advance(&a, a.start(), m).unwrap();
    let next: BTreeSet<String> = allowed_tokens(&a, after).unwrap().iter().map(|t| v.detokenize(&[t])).collect();
    assert_eq!(next, BTreeSet::from(["0".to_string(), "1".to_string()]));
    let done = advance(&a, after, v.tokenize("0").unwrap()[0]).unwrap();
    assert!(a.is_accepting(done).unwrap());
    assert!(matches!(advance(&a, a.start(), v.tokenize("0").unwrap()[0]), Err(TokenError::InvalidTransition { .. })));

    let words = common::ascii_vocab(&["the ", "limit"]);
    let single = compile_select(&["reach the upper limit"], &words).unwrap();
    assert_eq!(mask_walk_strings(&single, &words, 24), BTreeSet::from([b"reach the upper limit".to_vec()]));

    let two = compile_select(&["not yet", "close to the limit"], &words).unwrap();
    let got = mask_walk_strings(&two, &words, 24);
    assert_eq!(got, BTreeSet::from([b"not yet".to_vec(), b"close to the limit".to_vec()]));

    assert_eq!(
        compile_select(&["é"], &v).unwrap_err(),
        TokenError::UntokenizableOption("é".into())
    );
}

#[test]
fn walking_12_dot_reaches_acceptance() {
    let v = vocab(&["1", "2", ".", "12", "a"]);
    let a = compile_regex(r"\d+\.?\d*", &v).unwrap();
    let ids = v.tokenize("12.").unwrap();
    assert!(a.accepts(&ids));
    assert!(regex::Regex::new(r"^\d+\.?\d*$").unwrap().is_match("12."));
}

#[test]
fn mask_examples() {
    let m = apply_mask(&[1.2, -0.5, 3.0], &TokenSet::from_ids(3, [0, 2])).unwrap();
    assert_eq!(m.values(), &[1.2, FORBIDDEN, 3.0]);
    let logits = [0.3f32, -1.0, 7.5, 2.0];
    let all = apply_mask(&logits, &TokenSet::full(4)).unwrap();
    assert_eq!(all.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), logits.map(f32::to_bits));
    let eight: Vec<f32> = (0..8).map(|i| 100.0 - i as f32).collect();
    let forced = apply_mask(&eight, &TokenSet::from_ids(8, [3])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(decode_policy(&forced, DecodePolicy::Greedy, &mut rng).unwrap(), 3);
    assert_eq!(apply_mask(&[1.0], &TokenSet::new(1)).unwrap_err(), TokenError::EmptyValidSet);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn language_equivalence_on_small_vocabularies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = rng.gen_range(10..=24);
        let v = random_vocab(&mut rng, size);
        let pattern = random_pattern(&mut rng);
        let compiled = compile_regex(&pattern, &v);
        // Oversized DFAs are a documented resource error, not a language claim.
        if matches!(compiled, Err(TokenError::PatternTooLarge(_))) {
            return Ok(());
        }
        let oracle = Oracle::new(&pattern);
        let Some(expected) = oracle.enumerate(&v, 4, 200_000) else { return Ok(()) };
        let got = match compiled {
            Ok(a) => mask_walk_strings(&a, &v, 4),
            Err(TokenError::EmptyLanguage) => BTreeSet::new(),
            Err(e) => return Err(TestCaseError::fail(format!("{pattern}: {e}"))),
        };
        prop_assert_eq!(got, expected, "pattern {}", pattern);
    }

    #[test]
    fn every_live_state_allows_a_token_unless_terminal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vocab(&mut rng, 20);
        let pattern = random_pattern(&mut rng);
        let Ok(a) = compile_regex(&pattern, &v) else { return Ok(()) };
        for s in 0..a.num_states() as u32 {
            let allowed = a.allowed_tokens(s).unwrap();
            prop_assert!(!allowed.is_empty() || a.is_terminal(s).unwrap());
            prop_assert_eq!(allowed, a.allowed_tokens(s).unwrap());
            for t in allowed.iter() {
                let next = a.advance(s, t).unwrap();
                prop_assert_eq!(next, a.advance(s, t).unwrap());
                // Every target can still reach acceptance.
                prop_assert!(a.min_tokens_to_accept(next).unwrap() < u32::MAX);
            }
        }
    }

    #[test]
    fn mask_keeps_valid_entries_bitwise(logits in prop::collection::vec(-1e6f32..1e6, 1..200), pick in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(pick);
        let ids: Vec<u32> = (0..logits.len() as u32).filter(|_| rng.gen_bool(0.5)).collect();
        prop_assume!(!ids.is_empty());
        let set = TokenSet::from_ids(logits.len(), ids.iter().copied());
        let m = apply_mask(&logits, &set).unwrap();
        for (j, x) in logits.iter().enumerate() {
            if set.contains(j as u32) {
                prop_assert_eq!(m.values()[j].to_bits(), x.to_bits());
            } else {
                prop_assert_eq!(m.values()[j], FORBIDDEN);
            }
        }
    }

    #[test]
    fn tokenize_round_trips(text in "[a-c0-2.\\-]{0,24}") {
        let mut rng = ChaCha8Rng::seed_from_u64(text.len() as u64);
        let v = random_vocab(&mut rng, 30);
        let ids = v.tokenize(&text).unwrap();
        prop_assert_eq!(v.detokenize(&ids), text);
    }
}
