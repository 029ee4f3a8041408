//! Canonical text rendering of rule programs.

use std::fmt::Write;

use super::lexer::{quote, quote_raw};
use super::{Literal, Options, RuleProgram, Step, StepKind, HEADER};

pub fn serialize_program(program: &RuleProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "program {}", program.name);
    for (k, v) in &program.metadata {
        let _ = writeln!(out, "meta {k} = {}", quote(v));
    }
    for step in &program.steps {
        write_step(&mut out, step, 0);
    }
    out
}

fn string_list(items: &[String]) -> String {
    let parts: Vec<String> = items.iter().map(|s| quote(s)).collect();
    format!("[{}]", parts.join(", "))
}

fn write_step(out: &mut String, step: &Step, depth: usize) {
    let pad = "  ".repeat(depth);
    let _ = write!(out, "{pad}step {}: {}", step.name, step.kind.keyword());
    match &step.kind {
        StepKind::Emit(text) => {
            let _ = writeln!(out, " {}", quote(text));
        }
        StepKind::Gen(g) => {
            if let Some(r) = &g.regex {
                let _ = write!(out, " regex={}", quote_raw(r));
            }
            if let Some(s) = &g.stop {
                let _ = write!(out, " stop={}", quote(s));
            }
            if let Some(n) = g.max_tokens {
                let _ = write!(out, " max_tokens={n}");
            }
            if let Some(t) = g.temperature {
                let _ = write!(out, " temperature={t}");
            }
            out.push('\n');
        }
        StepKind::Select(Options::Static(opts)) => {
            let _ = writeln!(out, " options={}", string_list(opts));
        }
        StepKind::Select(Options::Dynamic(d)) => {
            out.push_str(" dynamic {\n");
            for (pred, opts) in &d.guards {
                let _ = writeln!(out, "{pad}  when {pred} -> {};", string_list(opts));
            }
            let _ = writeln!(out, "{pad}  else -> {};", string_list(&d.default));
            let _ = writeln!(out, "{pad}}}");
        }
        StepKind::Branch(b) => {
            out.push_str(" {\n");
            for (pred, body) in &b.arms {
                let _ = writeln!(out, "{pad}  when {pred} {{");
                for s in body {
                    write_step(out, s, depth + 2);
                }
                let _ = writeln!(out, "{pad}  }}");
            }
            if let Some(body) = &b.otherwise {
                let _ = writeln!(out, "{pad}  else {{");
                for s in body {
                    write_step(out, s, depth + 2);
                }
                let _ = writeln!(out, "{pad}  }}");
            }
            let _ = writeln!(out, "{pad}}}");
        }
        StepKind::Validate(v) => {
            let _ = write!(out, " pred={}", v.pred);
            if let Some(n) = v.max_retries {
                let _ = write!(out, " max_retries={n}");
            }
            let _ = write!(out, " anchor={}", v.anchor);
            if let Some(r) = &v.retry {
                let _ = write!(out, " retry={}", quote(r));
            }
            if v.fallback.is_empty() {
                out.push('\n');
            } else {
                out.push_str(" fallback {\n");
                for (var, lit) in &v.fallback {
                    let value = match lit {
                        Literal::Str(s) => quote(s),
                        Literal::Num(n) => format!("{n}"),
                    };
                    let _ = writeln!(out, "{pad}  {var} = {value};");
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}
