mod common;

use std::sync::Arc;

use proptest::prelude::*;
use scidc_core::backend::{Directive, MockBackend, MockScript};
use scidc_core::engine::{check_run, run, run_with, EngineError, Event, RunOptions, Termination};
use scidc_core::ir::{lint_with_vocab, parse_program, RuleProgram};
use scidc_core::token::Vocabulary;

use common::{ascii_vocab, formulation_source};

fn program(src: &str) -> RuleProgram {
    parse_program(src).unwrap()
}

fn stage_vocab() -> Arc<Vocabulary> {
    Arc::new(Vocabulary::from_strs_with_eos(&["Stage: ", "M", "0", "1"], "<eos>").unwrap())
}

const STAGE: &str = "scidc-ir v1\nprogram stage\nstep intro: emit \"Stage: \"\nstep m: select options=[\"M0\", \"M1\"]\n";

#[test]
fn single_constrained_choice() {
    let p = program(STAGE);
    let mut b = MockBackend::new(stage_vocab(), &MockScript::texts(["M1"]));
    let r = run(&p, &mut b, "", 0).unwrap();
    assert_eq!(r.output, "Stage: M1");
    assert_eq!(r.bindings.get("m"), Some("M1"));
    assert_eq!(r.trace.counters.regenerations, 0);
    assert_eq!(r.termination, Termination::Completed);
    assert!(check_run(&p, &r).is_empty());
}

fn formulation() -> RuleProgram {
    program(formulation_source())
}

fn formulation_vocab() -> Arc<Vocabulary> {
    ascii_vocab(&["Step ", "ratio", "the ", "limit", "amine", "reach", "upper", "close", "not yet"])
}

#[test]
fn formulation_program_is_lint_clean() {
    let p = formulation();
    let v = formulation_vocab();
    let errors: Vec<_> = lint_with_vocab(&p, Some(&v)).into_iter().filter(|f| f.is_error()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert!(p.walk().len() >= 10);
}

fn attempt(adjusted: &str) -> Vec<Directive> {
    ["".to_string(), "60".into(), "amine".into(), "20".into()]
        .into_iter()
        .enumerate()
        .map(|(i, t)| Directive::PreferText(if i == 0 { adjusted.to_string() } else { t }))
        .collect()
}

#[test]
fn formulation_regenerates_out_of_range_ratio() {
    let p = formulation();
    // The forced single-option select makes no backend call and so takes
    // no directive.
    let mut directives = vec![Directive::PreferText("3.1".into())];
    directives.extend(attempt("4.76"));
    directives.extend(attempt("4.76"));
    directives.extend(attempt("2.4"));
    let mut b = MockBackend::new(formulation_vocab(), &MockScript::new(directives));
    let r = run(&p, &mut b, "", 1).unwrap();
    assert_eq!(r.trace.counters.regenerations, 2);
    assert_eq!(r.trace.backtracks(), 2);
    assert_eq!(r.termination, Termination::Completed);
    assert_eq!(r.bindings.get("adjusted_ratio"), Some("2.4"));
    assert_eq!(r.bindings.get("ratio_status"), Some("reach the upper limit"));
    assert!(r.output.contains("adjusted_ratio = 2.4%"));
    assert!(!r.output.contains("4.76"));
    assert!(!r.output.contains("[Retry]"));
    assert!(check_run(&p, &r).is_empty(), "{:?}", check_run(&p, &r));
}

#[test]
fn formulation_falls_back_when_retries_run_out() {
    let p = formulation();
    let mut directives = vec![Directive::PreferText("1.0".into()), Directive::PreferText("not yet".into())];
    for _ in 0..5 {
        directives.extend(attempt("9.5"));
    }
    let mut b = MockBackend::new(formulation_vocab(), &MockScript::new(directives));
    let r = run(&p, &mut b, "", 0).unwrap();
    assert_eq!(r.termination, Termination::FallbackCompleted);
    assert_eq!(r.trace.backtracks(), 4);
    assert_eq!(r.trace.validation_failures(), 5);
    assert_eq!(r.bindings.get("adjusted_ratio"), Some("2.5"));
    assert_eq!(r.bindings.get("binder"), Some("60"));
    let applied: Vec<_> = r.trace.fallbacks().collect();
    assert_eq!(applied, vec![("adjusted_ratio", "2.5"), ("binder", "60"), ("curing_fraction", "20")]);
    assert!(check_run(&p, &r).is_empty(), "{:?}", check_run(&p, &r));
}

#[test]
fn dynamic_options_follow_first_matching_guard() {
    let p = formulation();
    let v = formulation_vocab();
    for (ratio, expected) in [("2.7", vec!["reach the upper limit"]), ("1.0", vec!["not yet", "close to the limit"])] {
        let script = MockScript::new(vec![Directive::PreferText(ratio.into()), Directive::UniformNoise(3)]);
        let mut b = MockBackend::new(v.clone(), &script);
        let r = run(&p, &mut b, "", 0).unwrap();
        let status = r.bindings.get("ratio_status").unwrap();
        assert!(expected.contains(&status), "{ratio}: {status}");
    }
}

#[test]
fn single_option_select_needs_no_backend_call() {
    let p = program("scidc-ir v1\nprogram p\nstep a: select options=[\"reach the upper limit\"]\n");
    let mut b = MockBackend::new(formulation_vocab(), &MockScript::noise(1));
    let r = run(&p, &mut b, "", 0).unwrap();
    assert_eq!(r.output, "reach the upper limit");
    assert_eq!(r.trace.counters.backend_calls, 0);
}

#[test]
fn regex_gen_under_noise_full_matches() {
    let p = program("scidc-ir v1\nprogram p\nstep x: gen regex=r\"\\d+\\.?\\d*\" max_tokens=10\n");
    let re = regex::Regex::new(r"^[0-9]+\.?[0-9]*$").unwrap();
    for seed in 0..50 {
        let mut b = MockBackend::new(formulation_vocab(), &MockScript::noise(seed));
        let r = run(&p, &mut b, "ratio: ", seed).unwrap();
        assert!(re.is_match(&r.output), "{:?}", r.output);
        assert!(r.trace.counters.output_tokens <= 10);
    }
}

#[test]
fn stop_string_terminates_span() {
    let p = program("scidc-ir v1\nprogram p\nstep t: gen stop=\"</think>\" max_tokens=40\nstep e: emit \"!\"\n");
    let v = ascii_vocab(&["</think>", "</th", "ink>"]);
    let mut b = MockBackend::new(v.clone(), &MockScript::texts(["reasoning here</think> trailing"]));
    let r = run(&p, &mut b, "", 0).unwrap();
    assert_eq!(r.output, "reasoning here!");
    // Straddling stop strings are cut too.
    let mut b = MockBackend::new(v, &MockScript::texts(["ab</th", "ink>"]));
    let p2 = program("scidc-ir v1\nprogram p\nstep t: gen stop=\"</think>\" max_tokens=40\n");
    let r = run(&p2, &mut b, "", 0).unwrap();
    assert!(!r.output.contains("</think>"));
    let c = r.trace.counters;
    assert_eq!(c.output_tokens + c.tokens_discarded, c.tokens_emitted);
    for seed in 0..30 {
        let mut b = MockBackend::new(ascii_vocab(&["</think>"]), &MockScript::noise(seed));
        let r = run(&p2, &mut b, "", seed).unwrap();
        assert!(!r.output.contains("</think>"));
    }
}

#[test]
fn budget_contradiction_is_reported() {
    let v = Arc::new(Vocabulary::from_strs(&["1", "2", ".", "12", "a"]).unwrap());
    let p = program("scidc-ir v1\nprogram p\nstep x: gen regex=r\"\\d\\.\\d\" max_tokens=1\n");
    let mut b = MockBackend::new(v, &MockScript::noise(0));
    assert!(matches!(
        run(&p, &mut b, "", 0),
        Err(EngineError::MaxTokensInNonAcceptingState { max_tokens: 1, .. })
    ));
}

#[test]
fn unbound_guard_is_an_error() {
    let p = program(
        "scidc-ir v1\nprogram p\nstep s: select dynamic {\n  when ghost > 1 -> [\"a\"];\n  else -> [\"b\", \"c\"];\n}\n",
    );
    let mut b = MockBackend::new(ascii_vocab(&[]), &MockScript::noise(0));
    assert_eq!(run(&p, &mut b, "", 0).unwrap_err(), EngineError::UnboundVariable("ghost".into()));
}

#[test]
fn non_numeric_use_aborts() {
    let p = program(
        "scidc-ir v1\nprogram p\nstep w: select options=[\"high\", \"low\"]\nstep s: select dynamic {\n  when w > 1 -> [\"a\"];\n  else -> [\"b\", \"c\"];\n}\n",
    );
    let mut b = MockBackend::new(ascii_vocab(&[]), &MockScript::texts(["high"]));
    let r = run(&p, &mut b, "", 0).unwrap();
    assert!(matches!(r.termination, Termination::Aborted(_)));
    assert_eq!(r.output, "high");
}

#[test]
fn retry_preamble_is_counted_but_not_output() {
    let src = "scidc-ir v1\nprogram p\nstep r: gen regex=r\"\\d\" max_tokens=1\nstep v: validate pred=r <= 4 max_retries=3 anchor=r retry=\"[Retry] r={r} too big. \" fallback {\n  r = 4;\n}\n";
    let p = program(src);
    let script = MockScript::new(vec![Directive::FailValidationTimes {
        times: 2,
        failing: "9".into(),
        passing: "3".into(),
    }]);
    let mut b = MockBackend::new(ascii_vocab(&[]), &script);
    let r = run(&p, &mut b, "", 0).unwrap();
    assert_eq!(r.output, "3");
    let c = r.trace.counters;
    let preamble = "[Retry] r=9 too big. ".len() as u64;
    assert_eq!(c.tokens_emitted, 3 + 2 * preamble);
    assert_eq!(c.output_tokens, 1);
    assert_eq!(c.output_tokens + c.tokens_discarded, c.tokens_emitted);
}

#[test]
fn nested_loop_history_is_erased_by_outer_backtrack() {
    let src = "scidc-ir v1
program nested
step a: gen regex=r\"\\d\" max_tokens=1
step b: gen regex=r\"\\d\" max_tokens=1
step inner: validate pred=b >= 5 max_retries=2 anchor=b fallback {
  b = 5;
}
step outer: validate pred=a + b >= 12 max_retries=2 anchor=a fallback {
  a = 9;
  b = 9;
}
";
    let p = program(src);
    let v = ascii_vocab(&[]);
    for seed in 0..40 {
        let mut b = MockBackend::new(v.clone(), &MockScript::noise(seed));
        let r = run_with(&p, &mut b, "", seed, &RunOptions { default_temperature: 1.0, cache: None }).unwrap();
        assert!(check_run(&p, &r).is_empty(), "{:?}", check_run(&p, &r));
        // Bounded work: tokens <= 2 gens x 2 outer attempts x (1 + 2 inner attempts).
        assert!(r.trace.counters.tokens_emitted <= 2 * 3 * 2);
    }
}

#[test]
fn checker_flags_tampered_output() {
    let p = formulation();
    let script = MockScript::new(vec![Directive::PreferText("1.0".into()), Directive::PreferText("not yet".into())]);
    let mut b = MockBackend::new(formulation_vocab(), &script);
    let mut r = run(&p, &mut b, "", 0).unwrap();
    assert!(check_run(&p, &r).is_empty());
    r.output = r.output.replacen("not yet", "reach the upper limit", 1);
    assert!(!check_run(&p, &r).is_empty());
}

#[test]
fn degraded_backend_selects_but_refuses_regex() {
    let v = stage_vocab();
    let p = program(STAGE);
    let mut b = MockBackend::new(v.clone(), &MockScript::texts(["M1"])).without_logits();
    let r = run(&p, &mut b, "", 0).unwrap();
    assert_eq!(r.output, "Stage: M1");
    let p2 = program("scidc-ir v1\nprogram p\nstep x: gen regex=r\"1\" max_tokens=2\n");
    let mut b = MockBackend::new(v, &MockScript::default()).without_logits();
    assert!(matches!(run(&p2, &mut b, "", 0), Err(EngineError::Capability { .. })));
}

#[test]
fn trace_jsonl_has_summary_record() {
    let p = program(STAGE);
    let mut b = MockBackend::new(stage_vocab(), &MockScript::texts(["M0"]));
    let r = run(&p, &mut b, "", 0).unwrap();
    let jsonl = r.trace.to_jsonl();
    assert!(jsonl.lines().any(|l| l.contains(r#""event":"mask_applied""#)));
    let last: serde_json::Value = serde_json::from_str(jsonl.lines().last().unwrap()).unwrap();
    assert_eq!(last["summary"]["output_tokens"], 3);
    assert!(matches!(r.trace.events.first(), Some(Event::StepStarted { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accounting_and_determinism(noise in 0u64..1_000, seed in 0u64..1_000, t in 0.0f64..1.5) {
        let p = formulation();
        let v = formulation_vocab();
        let opts = RunOptions { default_temperature: t, cache: None };
        let mut b1 = MockBackend::new(v.clone(), &MockScript::noise(noise));
        let r1 = run_with(&p, &mut b1, "Design a formulation.\n", seed, &opts).unwrap();
        let mut b2 = MockBackend::new(v, &MockScript::noise(noise));
        let r2 = run_with(&p, &mut b2, "Design a formulation.\n", seed, &opts).unwrap();
        prop_assert_eq!(r1.to_json(), r2.to_json());
        let c = r1.trace.counters;
        prop_assert_eq!(c.output_tokens + c.tokens_discarded, c.tokens_emitted);
        prop_assert_eq!(c.regenerations as usize, r1.trace.backtracks());
        prop_assert!(check_run(&p, &r1).is_empty());
        // Scaffolding appears once each, in program order.
        let mut at = 0;
        for n in 1..=8 {
            let marker = format!("Step {n}:");
            let found = r1.output[at..].find(&marker);
            prop_assert!(found.is_some(), "missing {}", marker);
            at += found.unwrap() + marker.len();
            prop_assert_eq!(r1.output.matches(&marker).count(), 1);
        }
    }
}
