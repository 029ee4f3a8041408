//! Plain-language rendering of rule programs for expert review.

use crate::ir::{BinOp, Expr, Options, RuleProgram, Step, StepKind};

/// One sentence per step, nested steps included, in document order.
pub fn explain_program(program: &RuleProgram) -> String {
    let mut out = Vec::new();
    explain_steps(&program.steps, &mut out);
    out.join("\n")
}

fn explain_steps(steps: &[Step], out: &mut Vec<String>) {
    for step in steps {
        out.push(explain_step(step));
        if let StepKind::Branch(b) = &step.kind {
            for (_, body) in &b.arms {
                explain_steps(body, out);
            }
            if let Some(body) = &b.otherwise {
                explain_steps(body, out);
            }
        }
    }
}

fn explain_step(step: &Step) -> String {
    let name = &step.name;
    match &step.kind {
        StepKind::Emit(text) => format!("The program then writes the fixed text {}.", show(text)),
        StepKind::Gen(g) => {
            let what = match (&g.regex, &g.stop) {
                (Some(r), Some(s)) => format!("text matching the pattern {r} (ending early at {})", show(s)),
                (Some(r), None) => format!("text matching the pattern {r}"),
                (None, Some(s)) => format!("free text up to {}", show(s)),
                (None, None) => "free text".to_string(),
            };
            let budget = g
                .max_tokens
                .map(|n| format!(" within {n} tokens"))
                .unwrap_or_default();
            format!("Step `{name}` generates {what}{budget} and records it as {name}.")
        }
        StepKind::Select(Options::Static(opts)) => {
            format!("Step `{name}` chooses {} and records it as {name}.", one_of(opts))
        }
        StepKind::Select(Options::Dynamic(d)) => {
            let mut rules: Vec<String> = d
                .guards
                .iter()
                .map(|(p, opts)| format!("when {} → {}", words(p), list(opts)))
                .collect();
            rules.push(format!("otherwise → {}", list(&d.default)));
            format!(
                "Step `{name}` chooses its value from options that depend on earlier answers: {}.",
                rules.join("; ")
            )
        }
        StepKind::Branch(b) => {
            let mut arms: Vec<String> = b
                .arms
                .iter()
                .map(|(p, body)| format!("when {} it runs {}", words(p), names(body)))
                .collect();
            if let Some(body) = &b.otherwise {
                arms.push(format!("otherwise it runs {}", names(body)));
            }
            format!("Step `{name}` branches: {}.", arms.join("; "))
        }
        StepKind::Validate(v) => {
            let attempts = v
                .max_retries
                .map(|n| format!(" with at most {n} attempts in total"))
                .unwrap_or_default();
            let fallback = if v.fallback.is_empty() {
                "keeps the last attempt".to_string()
            } else {
                let assigns: Vec<String> = v
                    .fallback
                    .iter()
                    .map(|(var, lit)| format!("{var} = {}", show(&lit.text())))
                    .collect();
                format!("falls back to {}", assigns.join(", "))
            };
            format!(
                "Step `{name}` checks that {}; if not, it regenerates from step `{}`{attempts}, and when attempts run out it {fallback}.",
                words(&v.pred),
                v.anchor
            )
        }
    }
}

fn show(text: &str) -> String {
    format!("{text:?}")
}

fn list(opts: &[String]) -> String {
    opts.iter().map(|o| show(o)).collect::<Vec<_>>().join(", ")
}

fn one_of(opts: &[String]) -> String {
    match opts {
        [] => "nothing".into(),
        [only] => show(only),
        [init @ .., last] => format!("one of {} or {}", list(init), show(last)),
    }
}

fn names(steps: &[Step]) -> String {
    if steps.is_empty() {
        return "nothing".into();
    }
    steps
        .iter()
        .map(|s| format!("`{}`", s.name))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Predicate rendered in words, e.g. `size <= 1` as "size is at most 1".
pub fn words(e: &Expr) -> String {
    match e {
        Expr::Num(n) => format!("{n}"),
        Expr::Str(s) => show(s),
        Expr::Bool(b) => b.to_string(),
        Expr::Var(v) => v.clone(),
        Expr::Not(inner) => format!("it is not the case that {}", words(inner)),
        Expr::Neg(inner) => format!("minus {}", words(inner)),
        Expr::In { expr, list, negated } => {
            let items: Vec<String> = list.iter().map(words).collect();
            let verb = if *negated { "is none of" } else { "is one of" };
            format!("{} {verb} {}", words(expr), items.join(", "))
        }
        Expr::Binary(op, a, b) => {
            let phrase = match op {
                BinOp::Or => "or",
                BinOp::And => "and",
                BinOp::Eq => "is",
                BinOp::Ne => "is not",
                BinOp::Lt => "is less than",
                BinOp::Le => "is at most",
                BinOp::Gt => "is greater than",
                BinOp::Ge => "is at least",
                BinOp::Add => "plus",
                BinOp::Sub => "minus",
                BinOp::Mul => "times",
                BinOp::Div => "divided by",
            };
            format!("{} {phrase} {}", words(a), words(b))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    #[test]
    fn guard_sentence_names_threshold_and_options() {
        let p = parse_program(
            "scidc-ir v1\nprogram t\nstep size: gen regex=r\"\\d+\" max_tokens=3\n\
             step t: select dynamic { when size <= 1 -> [\"T1a\"]; else -> [\"T1b\"]; }\n",
        )
        .unwrap();
        let text = explain_program(&p);
        let line = text.lines().nth(1).unwrap();
        assert!(line.contains("size is at most 1 → \"T1a\""), "{line}");
        assert!(line.contains("\"T1b\""), "{line}");
    }
}
