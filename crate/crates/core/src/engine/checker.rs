//! Post-hoc checker: re-parses a run's output against its program without
//! using the engine's automata. Gen spans are matched with the `regex` crate
//! and every admissible segmentation is explored.

use std::collections::HashMap;
use std::fmt;

use regex::Regex;

use super::{Event, RunResult, Termination};
use crate::ir::{EvalError, Options, RuleProgram, Step, StepKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub step: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.step {
            Some(s) => write!(f, "{s}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Rewrites a pattern in the supported subset into `regex` crate syntax
/// with explicit ASCII shorthand classes, anchored at both ends.
pub fn to_regex_crate_syntax(pattern: &str) -> String {
    let chars: Vec<char> = pattern.chars().collect();
    let mut i = 0;
    let mut end = chars.len();
    if chars.first() == Some(&'^') {
        i = 1;
    }
    if end > i && chars[end - 1] == '$' {
        let backslashes = chars[..end - 1].iter().rev().take_while(|&&c| c == '\\').count();
        if backslashes % 2 == 0 {
            end -= 1;
        }
    }
    let chars = &chars[..end];
    let mut out = String::from("^(?:");
    while i < chars.len() {
        let c = chars[i];
        i += 1;
        match c {
            '\\' if i < chars.len() => {
                let e = chars[i];
                i += 1;
                match shorthand(e) {
                    Some((negated, set)) => {
                        out.push_str(if negated { "[^" } else { "[" });
                        out.push_str(set);
                        out.push(']');
                    }
                    None => out.push_str(&escaped(e)),
                }
            }
            '[' => i = translate_class(chars, i, &mut out),
            '{' => {
                // Counted repetition: copied through verbatim.
                out.push('{');
                while i < chars.len() {
                    out.push(chars[i]);
                    i += 1;
                    if chars[i - 1] == '}' {
                        break;
                    }
                }
            }
            '(' | ')' | '.' | '|' | '*' | '+' | '?' => out.push(c),
            c if c.is_alphanumeric() => out.push(c),
            c => out.push_str(&hex(c)),
        }
    }
    out.push_str(")$");
    out
}

const DIGIT: &str = "0-9";
const WORD: &str = "0-9A-Za-z_";
const SPACE: &str = "\\t\\n\\x0B\\x0C\\r ";

fn shorthand(c: char) -> Option<(bool, &'static str)> {
    match c {
        'd' => Some((false, DIGIT)),
        'D' => Some((true, DIGIT)),
        'w' => Some((false, WORD)),
        'W' => Some((true, WORD)),
        's' => Some((false, SPACE)),
        'S' => Some((true, SPACE)),
        _ => None,
    }
}

fn hex(c: char) -> String {
    format!("\\x{{{:X}}}", c as u32)
}

/// An escape other than a shorthand class: letter escapes (`\n`, `\x41`)
/// mean the same in both syntaxes; punctuation becomes a hex literal.
fn escaped(e: char) -> String {
    if e.is_ascii_alphanumeric() {
        format!("\\{e}")
    } else {
        hex(e)
    }
}

/// Translates a class body starting after `[`; returns the index after the
/// closing `]`. A `-` forms a range only right after a single character.
fn translate_class(chars: &[char], mut i: usize, out: &mut String) -> usize {
    out.push('[');
    if chars.get(i) == Some(&'^') {
        out.push('^');
        i += 1;
    }
    let mut first = true;
    // Reads one item; `None` for a shorthand set (already written).
    let item = |i: &mut usize, out: &mut String| -> Option<String> {
        let c = chars[*i];
        *i += 1;
        if c == '\\' && *i < chars.len() {
            let e = chars[*i];
            *i += 1;
            if let Some((negated, set)) = shorthand(e) {
                if negated {
                    out.push_str("[^");
                    out.push_str(set);
                    out.push(']');
                } else {
                    out.push_str(set);
                }
                return None;
            }
            // `\x..` escapes keep their letters; read them through.
            if e == 'x' {
                let mut s = String::from("\\x");
                if chars.get(*i) == Some(&'{') {
                    while *i < chars.len() {
                        s.push(chars[*i]);
                        *i += 1;
                        if chars[*i - 1] == '}' {
                            break;
                        }
                    }
                } else {
                    for _ in 0..2 {
                        if let Some(&h) = chars.get(*i) {
                            s.push(h);
                            *i += 1;
                        }
                    }
                }
                return Some(s);
            }
            return Some(escaped(e));
        }
        Some(if c.is_alphanumeric() { c.to_string() } else { hex(c) })
    };
    while i < chars.len() {
        if chars[i] == ']' && !first {
            out.push(']');
            return i + 1;
        }
        first = false;
        let Some(lo) = item(&mut i, out) else { continue };
        out.push_str(&lo);
        if chars.get(i) == Some(&'-') && chars.get(i + 1).is_some_and(|&n| n != ']') {
            i += 1;
            out.push('-');
            if let Some(hi) = item(&mut i, out) {
                out.push_str(&hi);
            }
        }
    }
    out.push(']');
    i
}

struct Ctx<'a> {
    regexes: HashMap<&'a str, Regex>,
    fallbacks: Vec<(String, String)>,
    fallback_completed: bool,
    deepest: (usize, String, Option<String>),
}

impl<'a> Ctx<'a> {
    fn fail(&mut self, pos: usize, step: &Step, message: String) {
        if pos >= self.deepest.0 {
            self.deepest = (pos, message, Some(step.name.clone()));
        }
    }
}

type Env = Vec<(String, String)>;

/// Checks a finished run. Returns no violations when the output parses as
/// one pass through the program, every predicate holds on the re-parsed
/// values (or a recorded fallback covers it) and the bindings agree.
pub fn check_run(program: &RuleProgram, result: &RunResult) -> Vec<Violation> {
    if matches!(result.termination, Termination::Aborted(_)) {
        return Vec::new();
    }
    let mut regexes = HashMap::new();
    let mut violations = Vec::new();
    for (step, _) in program.walk() {
        if let StepKind::Gen(g) = &step.kind {
            if let Some(p) = &g.regex {
                match regex::RegexBuilder::new(&to_regex_crate_syntax(p))
                    .size_limit(1 << 26)
                    .build()
                {
                    Ok(r) => {
                        regexes.insert(p.as_str(), r);
                    }
                    Err(e) => violations.push(Violation {
                        step: Some(step.name.clone()),
                        message: format!("pattern rejected by reference engine: {e}"),
                    }),
                }
            }
        }
    }
    if !violations.is_empty() {
        return violations;
    }
    let fallbacks = result
        .trace
        .events
        .iter()
        .filter_map(|e| match e {
            Event::FallbackApplied { variable, value } => Some((variable.clone(), value.clone())),
            _ => None,
        })
        .collect();
    let mut ctx = Ctx {
        regexes,
        fallbacks,
        fallback_completed: result.termination == Termination::FallbackCompleted,
        deepest: (0, "output does not parse against the program".into(), None),
    };
    let frames = vec![(program.steps.as_slice(), 0usize)];
    match parse(&mut ctx, &result.output, frames, 0, Vec::new(), false) {
        Some((env, used_fallback)) => {
            let mut resolved: Vec<(String, String)> = Vec::new();
            for (k, v) in env {
                match resolved.iter_mut().find(|(n, _)| *n == k) {
                    Some(slot) => slot.1 = v,
                    None => resolved.push((k, v)),
                }
            }
            if resolved != result.bindings.resolved() {
                violations.push(Violation {
                    step: None,
                    message: format!(
                        "bindings differ from re-parse: engine {:?}, checker {:?}",
                        result.bindings.resolved(),
                        resolved
                    ),
                });
            }
            if used_fallback != (result.termination == Termination::FallbackCompleted) {
                violations.push(Violation {
                    step: None,
                    message: format!("termination {:?} inconsistent with re-parse", result.termination),
                });
            }
        }
        None => {
            let (pos, message, step) = ctx.deepest;
            violations.push(Violation {
                step,
                message: format!("{message} (at byte {pos})"),
            });
        }
    }
    violations
}

/// Depth-first parse over the remaining steps. `frames` is the stack of
/// (block, next index) pairs, innermost last.
fn parse<'a>(
    ctx: &mut Ctx<'a>,
    out: &str,
    mut frames: Vec<(&'a [Step], usize)>,
    pos: usize,
    mut env: Env,
    used_fallback: bool,
) -> Option<(Env, bool)> {
    let step = loop {
        let (block, idx) = frames.last_mut()?;
        if *idx < block.len() {
            let s = &block[*idx];
            *idx += 1;
            break s;
        }
        frames.pop();
        if frames.is_empty() {
            return if pos == out.len() {
                Some((env, used_fallback))
            } else {
                None
            };
        }
    };
    let rest = &out[pos..];
    match &step.kind {
        StepKind::Emit(text) => {
            if rest.starts_with(text.as_str()) {
                parse(ctx, out, frames, pos + text.len(), env, used_fallback)
            } else {
                ctx.fail(pos, step, format!("expected fixed text {text:?}"));
                None
            }
        }
        StepKind::Select(o) => {
            let options: Vec<String> = match o {
                Options::Static(v) => v.clone(),
                Options::Dynamic(d) => match d.resolve(&env) {
                    Ok(v) => v.to_vec(),
                    Err(e) => {
                        ctx.fail(pos, step, format!("dynamic options: {e}"));
                        return None;
                    }
                },
            };
            let mut matched = false;
            for opt in options.iter().filter(|o| rest.starts_with(o.as_str())) {
                matched = true;
                let mut env2 = env.clone();
                env2.push((step.name.clone(), opt.clone()));
                if let Some(r) = parse(ctx, out, frames.clone(), pos + opt.len(), env2, used_fallback) {
                    return Some(r);
                }
            }
            if !matched {
                ctx.fail(pos, step, format!("expected one of {options:?}"));
            }
            None
        }
        StepKind::Gen(g) => {
            let stop = g.stop.as_deref().filter(|s| !s.is_empty());
            // Candidate span ends, shortest first.
            let limit = match (&g.regex, stop) {
                (None, Some(s)) => rest.find(s).map_or(rest.len(), |at| at + s.len() - 1),
                _ => rest.len(),
            };
            let mut matched = false;
            for end in (0..=limit).filter(|&e| rest.is_char_boundary(e)) {
                let span = &rest[..end];
                let ok = match &g.regex {
                    Some(p) => ctx.regexes[p.as_str()].is_match(span),
                    None => stop.is_none_or(|s| !span.contains(s)),
                };
                if !ok {
                    continue;
                }
                matched = true;
                let mut env2 = env.clone();
                env2.push((step.name.clone(), span.to_string()));
                if let Some(r) = parse(ctx, out, frames.clone(), pos + end, env2, used_fallback) {
                    return Some(r);
                }
            }
            if !matched {
                ctx.fail(pos, step, "no prefix satisfies the generation constraint".into());
            }
            None
        }
        StepKind::Branch(b) => {
            let mut body = b.otherwise.as_deref();
            for (pred, arm) in &b.arms {
                match pred.eval_bool(&env) {
                    Ok(true) => {
                        body = Some(arm);
                        break;
                    }
                    Ok(false) => {}
                    Err(e) => {
                        ctx.fail(pos, step, format!("branch guard: {e}"));
                        return None;
                    }
                }
            }
            if let Some(steps) = body {
                frames.push((steps, 0));
            }
            parse(ctx, out, frames, pos, env, used_fallback)
        }
        StepKind::Validate(v) => match v.pred.eval_bool(&env) {
            Ok(true) => parse(ctx, out, frames, pos, env, used_fallback),
            Ok(false) => {
                // Exhausted retries: the declared fallbacks must have been
                // recorded, or the run flagged when there are none.
                let covered = if v.fallback.is_empty() {
                    ctx.fallback_completed
                } else {
                    v.fallback.iter().all(|(var, lit)| {
                        ctx.fallbacks.iter().any(|(n, val)| n == var && *val == lit.text())
                    })
                };
                if !covered {
                    ctx.fail(pos, step, format!("predicate `{}` is false without a recorded fallback", v.pred));
                    return None;
                }
                for (var, lit) in &v.fallback {
                    env.push((var.clone(), lit.text()));
                }
                parse(ctx, out, frames, pos, env, true)
            }
            Err(EvalError::UnboundVariable(n)) => {
                ctx.fail(pos, step, format!("predicate uses unbound `{n}`"));
                None
            }
            Err(e) => {
                ctx.fail(pos, step, format!("predicate: {e}"));
                None
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(pattern: &str, text: &str) -> bool {
        Regex::new(&to_regex_crate_syntax(pattern)).unwrap().is_match(text)
    }

    #[test]
    fn shorthand_translation() {
        assert_eq!(to_regex_crate_syntax(r"\d+\.?\d*"), r"^(?:[0-9]+\x{2E}?[0-9]*)$");
        assert!(full(r"\d+\.?\d*", "12."));
        assert!(!full(r"\d+", "١٢"));
        assert!(full(r"[\w-]+", "a-b_9"));
        assert!(full(r"[a-c\d]", "7"));
        assert!(!full(r"[^\d]", "7"));
        assert!(full(r"[^\D]", "7"));
        assert!(full(r"[[]x]", "[x]"));
        assert!(full(r"^a|b$", "b"));
        assert!(full(r"a\$", "a$"));
        assert!(full(r"[&&~]", "&"));
    }
}
