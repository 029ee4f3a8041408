//! Structural validation of rule programs.
//!
//! ERROR findings cover everything the executor would reject; WARNINGs are
//! heuristics (redundant judgments, unreachable arms, constant predicates).

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::lexer::is_ident;
use super::predicate::numeric_view;
use super::{
    BinOp, Expr, GenStep, Literal, Options, RuleProgram, Step, StepKind, ValidateLoop,
    MAX_BRANCH_DEPTH,
};
use crate::token::{self, ByteDfa, TokenError, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub step: Option<String>,
    pub message: String,
}

impl Finding {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        };
        match &self.step {
            Some(s) => write!(f, "{sev} [{s}] {}", self.message),
            None => write!(f, "{sev} {}", self.message),
        }
    }
}

/// Lints without a vocabulary: spellability and token budgets go unchecked.
pub fn lint_program(program: &RuleProgram) -> Vec<Finding> {
    lint_with_vocab(program, None)
}

pub fn lint_with_vocab(program: &RuleProgram, vocab: Option<&Vocabulary>) -> Vec<Finding> {
    let mut cx = Linter::new(program, vocab);
    cx.run(program);
    cx.findings
}

const RESERVED: &[&str] = &["and", "or", "not", "in", "true", "false", "step", "else", "when"];

/// What is statically known about a variable's numeric view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Numeric {
    Yes,
    No,
    Maybe,
}

impl Numeric {
    fn join(self, other: Numeric) -> Numeric {
        if self == other {
            self
        } else {
            Numeric::Maybe
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Number,
    Text(Numeric),
    Bool,
}

struct Linter<'a> {
    vocab: Option<&'a Vocabulary>,
    findings: Vec<Finding>,
    kinds: HashMap<&'a str, &'a StepKind>,
    types: HashMap<&'a str, Numeric>,
    /// Byte DFAs of gen regexes that compiled, keyed by step name.
    dfas: HashMap<&'a str, ByteDfa>,
}

fn numeric_dfa() -> ByteDfa {
    token::regex_dfa(r"\d+\.?\d*").expect("numeric pattern compiles")
}

fn options_numeric<'b>(lists: impl Iterator<Item = &'b Vec<String>>) -> Numeric {
    let mut acc: Option<Numeric> = None;
    for opt in lists.flatten() {
        let n = if numeric_view(opt).is_some() {
            Numeric::Yes
        } else {
            Numeric::No
        };
        acc = Some(acc.map_or(n, |a| a.join(n)));
    }
    acc.unwrap_or(Numeric::Maybe)
}

impl<'a> Linter<'a> {
    fn new(program: &'a RuleProgram, vocab: Option<&'a Vocabulary>) -> Self {
        let mut cx = Linter {
            vocab,
            findings: Vec::new(),
            kinds: HashMap::new(),
            types: HashMap::new(),
            dfas: HashMap::new(),
        };
        let numeric = numeric_dfa();
        for (step, _) in program.walk() {
            if cx.kinds.insert(&step.name, &step.kind).is_some() {
                cx.error(&step.name, format!("duplicate step name `{}`", step.name));
            }
            match &step.kind {
                StepKind::Gen(GenStep {
                    regex: Some(pattern),
                    ..
                }) => {
                    let mut ty = Numeric::Maybe;
                    if let Ok(dfa) = token::regex_dfa(pattern) {
                        if !dfa.is_empty_language() {
                            if dfa.is_subset_of(&numeric) {
                                ty = Numeric::Yes;
                            } else if dfa.is_disjoint_from(&numeric) {
                                ty = Numeric::No;
                            }
                        }
                        cx.dfas.insert(&step.name, dfa);
                    }
                    cx.types.insert(&step.name, ty);
                }
                StepKind::Gen(_) => {
                    cx.types.insert(&step.name, Numeric::Maybe);
                }
                StepKind::Select(Options::Static(opts)) => {
                    cx.types
                        .insert(&step.name, options_numeric(std::iter::once(opts)));
                }
                StepKind::Select(Options::Dynamic(d)) => {
                    cx.types.insert(&step.name, options_numeric(d.all_lists()));
                }
                _ => {}
            }
        }
        cx
    }

    fn push(&mut self, severity: Severity, step: &str, message: String) {
        let f = Finding {
            severity,
            step: Some(step.to_string()),
            message,
        };
        if !self.findings.contains(&f) {
            self.findings.push(f);
        }
    }

    fn error(&mut self, step: &str, message: String) {
        self.push(Severity::Error, step, message);
    }

    fn warn(&mut self, step: &str, message: String) {
        self.push(Severity::Warning, step, message);
    }

    fn run(&mut self, program: &'a RuleProgram) {
        if !is_ident(&program.name) {
            self.findings.push(Finding {
                severity: Severity::Error,
                step: None,
                message: format!("invalid program name `{}`", program.name),
            });
        }
        if program.steps.is_empty() {
            self.findings.push(Finding {
                severity: Severity::Warning,
                step: None,
                message: "program has no steps".into(),
            });
        }
        let mut bound = BTreeSet::new();
        let mut maybe = BTreeSet::new();
        self.block(&program.steps, 0, &mut bound, &mut maybe);
    }

    fn block(
        &mut self,
        steps: &'a [Step],
        depth: usize,
        bound: &mut BTreeSet<&'a str>,
        maybe: &mut BTreeSet<&'a str>,
    ) {
        let mut spans: Vec<(usize, usize, &str)> = Vec::new();
        for (i, step) in steps.iter().enumerate() {
            let name = step.name.as_str();
            if !is_ident(name) || RESERVED.contains(&name) {
                self.error(name, format!("invalid step name `{name}`"));
            }
            match &step.kind {
                StepKind::Emit(text) => {
                    if text.is_empty() {
                        self.warn(name, "empty emit".into());
                    }
                    self.spellable(name, text, "emit text");
                }
                StepKind::Gen(g) => self.gen(name, g),
                StepKind::Select(opts) => self.select(name, opts, bound, maybe),
                StepKind::Branch(b) => {
                    if depth + 1 > MAX_BRANCH_DEPTH {
                        self.error(
                            name,
                            format!("branch nesting deeper than {MAX_BRANCH_DEPTH}"),
                        );
                    }
                    let mut always = false;
                    let mut seen: Vec<&Expr> = Vec::new();
                    let mut after_bound: Option<BTreeSet<&'a str>> = None;
                    let mut arms: Vec<&'a [Step]> = Vec::new();
                    for (pred, body) in &b.arms {
                        self.predicate(name, pred, bound, maybe);
                        let constant = constant_bool(pred);
                        if always || constant == Some(false) || seen.contains(&pred) {
                            self.warn(name, format!("unreachable branch arm `when {pred}`"));
                        }
                        if constant == Some(true) {
                            always = true;
                        }
                        seen.push(pred);
                        arms.push(body);
                    }
                    if let Some(body) = &b.otherwise {
                        if always {
                            self.warn(name, "unreachable else arm".into());
                        }
                        arms.push(body);
                    }
                    for body in arms {
                        let mut b2 = bound.clone();
                        let mut m2 = maybe.clone();
                        self.block(body, depth + 1, &mut b2, &mut m2);
                        maybe.extend(m2.iter().copied());
                        maybe.extend(b2.iter().copied());
                        after_bound = Some(match after_bound {
                            None => b2,
                            Some(prev) => prev.intersection(&b2).copied().collect(),
                        });
                    }
                    if b.otherwise.is_some() || always {
                        if let Some(ab) = after_bound {
                            bound.extend(ab);
                        }
                    }
                }
                StepKind::Validate(v) => {
                    if let Some(a) = self.validate(name, v, steps, i, bound, maybe) {
                        spans.push((a, i, name));
                    }
                }
            }
            if step.kind.binds() {
                bound.insert(name);
                maybe.insert(name);
            }
        }
        self.single_option_gen(steps);
        for (x, &(a1, l1, n1)) in spans.iter().enumerate() {
            for &(a2, l2, n2) in &spans[x + 1..] {
                if a1 < a2 && a2 < l1 && l1 < l2 {
                    self.error(
                        n2,
                        format!("validate span of `{n2}` crosses the span of `{n1}` without nesting"),
                    );
                }
            }
        }
    }

    fn spellable(&mut self, step: &str, text: &str, what: &str) {
        if let Some(v) = self.vocab {
            if let Err(TokenError::UnspellableText { offset }) = v.tokenize(text) {
                self.error(
                    step,
                    format!("{what} cannot be tokenized (byte offset {offset})"),
                );
            }
        }
    }

    fn gen(&mut self, name: &str, g: &GenStep) {
        if g.regex.is_none() && g.stop.is_none() {
            self.error(name, "gen requires regex or stop".into());
        }
        if g.stop.as_deref() == Some("") {
            self.error(name, "stop string is empty".into());
        }
        match g.max_tokens {
            None => self.error(name, "gen requires max_tokens".into()),
            Some(0) => self.error(name, "max_tokens must be greater than 0".into()),
            Some(_) => {}
        }
        if let Some(t) = g.temperature {
            if !(t.is_finite() && t >= 0.0) {
                self.error(name, format!("temperature {t} must be finite and >= 0"));
            }
        }
        let Some(pattern) = &g.regex else { return };
        let ast = match token::parse_regex(pattern) {
            Ok(ast) => ast,
            Err(e) => {
                let e = TokenError::from(e);
                self.error(name, e.to_string());
                return;
            }
        };
        let full = match &g.stop {
            Some(stop) if !stop.is_empty() => token::RegexAst::Concat(vec![
                ast.clone(),
                token::RegexAst::Repeat {
                    node: Box::new(token::RegexAst::literal(stop)),
                    min: 0,
                    max: Some(1),
                },
            ]),
            _ => ast.clone(),
        };
        match token::ast_dfa(&ast) {
            Err(e) => {
                self.error(name, e.to_string());
                return;
            }
            Ok(d) if d.is_empty_language() => {
                self.error(name, format!("regex `{pattern}` matches nothing"));
                return;
            }
            Ok(_) => {}
        }
        if let Some(v) = self.vocab {
            match token::compile_ast(&full, v) {
                Err(TokenError::EmptyLanguage) => self.error(
                    name,
                    format!("regex `{pattern}` matches nothing spellable in the vocabulary"),
                ),
                Err(e) => self.error(name, e.to_string()),
                Ok(a) => {
                    let need = a.min_tokens_to_accept(a.start()).unwrap_or(0);
                    if let Some(max) = g.max_tokens {
                        if max > 0 && need > max {
                            self.error(
                                name,
                                format!("regex needs at least {need} tokens but max_tokens is {max}"),
                            );
                        }
                    }
                }
            }
        }
    }

    fn option_list(&mut self, name: &str, opts: &[String]) {
        if opts.is_empty() {
            self.error(name, "select has an empty option list".into());
            return;
        }
        let mut seen = BTreeSet::new();
        for o in opts {
            if o.is_empty() {
                self.error(name, "empty option string".into());
            }
            if !seen.insert(o) {
                self.warn(name, format!("duplicate option {o:?}"));
            }
            if let Some(v) = self.vocab {
                if !v.is_spellable(o.as_bytes()) {
                    self.error(name, format!("option {o:?} cannot be tokenized"));
                }
            }
        }
        if self.vocab.is_some_and(|v| v.eos().is_none()) {
            for a in opts {
                for b in opts {
                    if a != b && !a.is_empty() && b.starts_with(a.as_str()) {
                        self.warn(
                            name,
                            format!("option {a:?} is a prefix of {b:?} and the vocabulary has no end token"),
                        );
                    }
                }
            }
        }
    }

    fn select(
        &mut self,
        name: &str,
        opts: &'a Options,
        bound: &BTreeSet<&'a str>,
        maybe: &BTreeSet<&'a str>,
    ) {
        match opts {
            Options::Static(list) => self.option_list(name, list),
            Options::Dynamic(d) => {
                let mut always = false;
                for (pred, list) in &d.guards {
                    self.predicate(name, pred, bound, maybe);
                    let constant = constant_bool(pred);
                    if always || constant == Some(false) {
                        self.warn(name, format!("unreachable guard `when {pred}`"));
                    }
                    if constant == Some(true) {
                        always = true;
                    }
                    self.option_list(name, list);
                }
                self.option_list(name, &d.default);
            }
        }
    }

    /// Checks a predicate's variables and types at a point where `bound`
    /// holds the definitely bound variables.
    fn predicate(
        &mut self,
        step: &str,
        pred: &Expr,
        bound: &BTreeSet<&'a str>,
        maybe: &BTreeSet<&'a str>,
    ) {
        let mut all_known = true;
        for var in pred.vars() {
            if bound.contains(var) {
                continue;
            }
            all_known = false;
            let msg = if maybe.contains(var) {
                format!("variable `{var}` may be unbound here")
            } else {
                match self.kinds.get(var) {
                    Some(k) if !k.binds() => {
                        format!("`{var}` is a {} step and binds no value", k.keyword())
                    }
                    Some(_) => format!("unbound variable `{var}`: it is bound only later"),
                    None => format!("unbound variable `{var}`"),
                }
            };
            self.error(step, msg);
        }
        if all_known {
            match self.type_of(step, pred) {
                Some(Ty::Bool) | None => {}
                Some(_) => self.error(step, format!("predicate `{pred}` is not a boolean")),
            }
        }
    }

    fn var_ty(&self, var: &str) -> Ty {
        Ty::Text(self.types.get(var).copied().unwrap_or(Numeric::Maybe))
    }

    /// Static type; None after reporting an error.
    fn type_of(&mut self, step: &str, e: &Expr) -> Option<Ty> {
        match e {
            Expr::Num(_) => Some(Ty::Number),
            Expr::Str(s) => Some(Ty::Text(if numeric_view(s).is_some() {
                Numeric::Yes
            } else {
                Numeric::No
            })),
            Expr::Bool(_) => Some(Ty::Bool),
            Expr::Var(v) => Some(self.var_ty(v)),
            Expr::Not(inner) => match self.type_of(step, inner)? {
                Ty::Bool => Some(Ty::Bool),
                _ => {
                    self.error(step, format!("`not` applied to non-boolean `{inner}`"));
                    None
                }
            },
            Expr::Neg(inner) => {
                let t = self.type_of(step, inner)?;
                self.numeric_operand(step, inner, t)?;
                Some(Ty::Number)
            }
            Expr::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
                let ta = self.type_of(step, a);
                let tb = self.type_of(step, b);
                for (t, x) in [(ta, a), (tb, b)] {
                    if matches!(t, Some(Ty::Number | Ty::Text(_))) {
                        self.error(step, format!("`{}` applied to non-boolean `{x}`", op.symbol()));
                        return None;
                    }
                }
                (ta.is_some() && tb.is_some()).then_some(Ty::Bool)
            }
            Expr::Binary(op @ (BinOp::Eq | BinOp::Ne), a, b) => {
                let ta = self.type_of(step, a)?;
                let tb = self.type_of(step, b)?;
                self.equality(step, op.symbol(), a, ta, b, tb)?;
                Some(Ty::Bool)
            }
            Expr::Binary(op, a, b) => {
                let ta = self.type_of(step, a)?;
                let tb = self.type_of(step, b)?;
                self.numeric_operand(step, a, ta)?;
                self.numeric_operand(step, b, tb)?;
                Some(if op.is_comparison() {
                    Ty::Bool
                } else {
                    Ty::Number
                })
            }
            Expr::In { expr, list, .. } => {
                let tx = self.type_of(step, expr)?;
                let mut ok = true;
                for item in list {
                    match self.type_of(step, item) {
                        Some(ti) => {
                            ok &= self.equality(step, "in", expr, tx, item, ti).is_some();
                        }
                        None => ok = false,
                    }
                }
                ok.then_some(Ty::Bool)
            }
        }
    }

    fn numeric_operand(&mut self, step: &str, e: &Expr, t: Ty) -> Option<()> {
        match t {
            Ty::Number | Ty::Text(Numeric::Yes) => Some(()),
            Ty::Text(Numeric::Maybe) => {
                self.warn(step, format!("`{e}` may not be numeric at run time"));
                Some(())
            }
            Ty::Text(Numeric::No) | Ty::Bool => {
                self.error(step, format!("`{e}` is used as a number but is never numeric"));
                None
            }
        }
    }

    fn equality(&mut self, step: &str, op: &str, a: &Expr, ta: Ty, b: &Expr, tb: Ty) -> Option<()> {
        match (ta, tb) {
            (Ty::Bool, Ty::Bool) | (Ty::Text(_), Ty::Text(_)) => Some(()),
            (Ty::Bool, _) | (_, Ty::Bool) => {
                self.error(step, format!("`{op}` compares a boolean with a non-boolean (`{a}`, `{b}`)"));
                None
            }
            (Ty::Number, t) => self.numeric_operand(step, b, t),
            (t, Ty::Number) => self.numeric_operand(step, a, t),
        }
    }

    fn validate(
        &mut self,
        name: &str,
        v: &'a ValidateLoop,
        siblings: &'a [Step],
        index: usize,
        bound: &BTreeSet<&'a str>,
        maybe: &BTreeSet<&'a str>,
    ) -> Option<usize> {
        match v.max_retries {
            None => self.error(name, "validate requires max_retries".into()),
            Some(0) => self.error(name, "max_retries must be at least 1".into()),
            Some(_) => {}
        }
        self.predicate(name, &v.pred, bound, maybe);
        match constant_bool(&v.pred) {
            Some(true) => self.warn(name, "validate predicate is always true".into()),
            Some(false) => self.warn(
                name,
                "validate predicate is always false; the fallback always applies".into(),
            ),
            None => {}
        }
        if let Some(retry) = &v.retry {
            for var in placeholders(retry) {
                if !bound.contains(var.as_str()) {
                    self.warn(
                        name,
                        format!("retry message placeholder `{{{var}}}` may not be bound"),
                    );
                }
            }
            self.spellable(name, retry, "retry message");
        }
        let anchor = siblings[..index].iter().position(|s| s.name == v.anchor);
        let Some(a) = anchor else {
            let msg = match self.kinds.get(v.anchor.as_str()) {
                None => format!("anchor `{}` does not name a step", v.anchor),
                Some(_) if siblings[index..].iter().any(|s| s.name == v.anchor) => {
                    format!("anchor must precede loop (`{}` comes later)", v.anchor)
                }
                Some(_) => format!(
                    "anchor must precede loop in the same block (`{}` is elsewhere)",
                    v.anchor
                ),
            };
            self.error(name, msg);
            return None;
        };
        if matches!(siblings[a].kind, StepKind::Validate(_)) {
            self.error(name, format!("anchor `{}` is a validate step", v.anchor));
        }
        // Variables re-bound by re-executing the span.
        let mut rebound: Vec<(&'a str, &'a StepKind)> = Vec::new();
        for step in &siblings[a..index] {
            collect_bindings(step, &mut rebound);
        }
        let mut seen = BTreeSet::new();
        for (var, lit) in &v.fallback {
            if !seen.insert(var.as_str()) {
                self.error(name, format!("fallback assigns `{var}` twice"));
            }
            match rebound.iter().find(|(n, _)| *n == var) {
                None => self.error(
                    name,
                    format!("fallback variable `{var}` is not bound between anchor and loop"),
                ),
                Some((_, kind)) => self.fallback_value(name, var, lit, kind),
            }
        }
        let pred_vars = v.pred.vars();
        for (var, _) in &rebound {
            if seen.contains(var) {
                continue;
            }
            if pred_vars.contains(var) {
                self.error(name, format!("missing fallback for `{var}`"));
            } else {
                self.warn(name, format!("no fallback given for re-bound `{var}`"));
            }
        }
        Some(a)
    }

    fn fallback_value(&mut self, name: &str, var: &str, lit: &Literal, kind: &StepKind) {
        let text = lit.text();
        match kind {
            StepKind::Select(Options::Static(opts)) => {
                if !opts.contains(&text) {
                    self.error(
                        name,
                        format!("fallback value {text:?} for `{var}` is not among its options"),
                    );
                }
            }
            StepKind::Select(Options::Dynamic(d)) => {
                if !d.all_lists().any(|l| l.contains(&text)) {
                    self.error(
                        name,
                        format!("fallback value {text:?} for `{var}` is not among its options"),
                    );
                }
            }
            StepKind::Gen(GenStep { regex: Some(_), .. }) => {
                if let Some(dfa) = self.dfas.get(var) {
                    if !dfa.matches(text.as_bytes()) {
                        self.error(
                            name,
                            format!("fallback value {text:?} for `{var}` does not match its regex"),
                        );
                    }
                }
            }
            _ => {}
        }
    }

    /// The redundant-judgment pattern: a forced choice followed by free text.
    fn single_option_gen(&mut self, steps: &[Step]) {
        for (i, step) in steps.iter().enumerate() {
            let StepKind::Select(Options::Static(opts)) = &step.kind else {
                continue;
            };
            if opts.len() != 1 {
                continue;
            }
            let next = steps[i + 1..]
                .iter()
                .find(|s| !matches!(s.kind, StepKind::Emit(_)));
            if let Some(Step {
                kind: StepKind::Gen(GenStep { regex: None, .. }),
                ..
            }) = next
            {
                self.warn(
                    &step.name,
                    "single-option select followed by free generation".into(),
                );
            }
        }
    }
}

fn collect_bindings<'a>(step: &'a Step, out: &mut Vec<(&'a str, &'a StepKind)>) {
    if step.kind.binds() {
        out.push((&step.name, &step.kind));
    }
    if let StepKind::Branch(b) = &step.kind {
        for (_, body) in &b.arms {
            for s in body {
                collect_bindings(s, out);
            }
        }
        if let Some(body) = &b.otherwise {
            for s in body {
                collect_bindings(s, out);
            }
        }
    }
}

/// Value of a variable-free boolean expression.
fn constant_bool(e: &Expr) -> Option<bool> {
    if !e.vars().is_empty() {
        return None;
    }
    let env: Vec<(String, String)> = Vec::new();
    e.eval_bool(&env).ok()
}

/// `{name}` placeholders in a retry message.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                if is_ident(name) {
                    out.push(name.to_string());
                }
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;

    fn lint(src: &str) -> Vec<Finding> {
        lint_program(&parse_program(&format!("scidc-ir v1\nprogram p\n{src}")).unwrap())
    }

    fn errors(src: &str) -> Vec<String> {
        lint(src)
            .into_iter()
            .filter(|f| f.is_error())
            .map(|f| f.message)
            .collect()
    }

    #[test]
    fn clean_program() {
        let f = lint(
            r#"step r: gen regex=r"\d+\.?\d*" max_tokens=8
step lvl: select dynamic {
  when r >= 2.5 -> ["reach the upper limit"];
  else -> ["not yet", "close to the limit"];
}
step chk: validate pred=r <= 4 max_retries=5 anchor=r fallback {
  r = "2.5";
  lvl = "not yet";
}"#,
        );
        assert!(f.is_empty(), "{f:?}");
    }

    #[test]
    fn anchor_later() {
        let e = errors(
            "step a: gen regex=r\"\\d\" max_tokens=1\nstep v: validate pred=a > 1 max_retries=2 anchor=b fallback { a = 1; }\nstep b: emit \"x\"",
        );
        assert!(e.iter().any(|m| m.starts_with("anchor must precede loop")), "{e:?}");
    }

    #[test]
    fn missing_retries_and_budget() {
        let e = errors("step a: gen regex=r\"\\d\"\nstep v: validate pred=a > 1 anchor=a fallback { a = 1; }");
        assert!(e.contains(&"validate requires max_retries".to_string()));
        assert!(e.contains(&"gen requires max_tokens".to_string()));
    }

    #[test]
    fn single_option_warning() {
        let f = lint("step m: select options=[\"M0\"]\nstep why: gen stop=\"\\n\" max_tokens=20");
        assert!(f.iter().any(|f| f.severity == Severity::Warning
            && f.message == "single-option select followed by free generation"));
    }

    #[test]
    fn unbound_and_maybe_unbound() {
        let e = errors(
            r#"step c: select options=["a", "b"]
step br: branch {
  when c = "a" {
    step x: gen regex=r"\d" max_tokens=1
  }
}
step use: select dynamic {
  when x > 1 -> ["p"];
  when y > 1 -> ["q"];
  else -> ["r"];
}"#,
        );
        assert!(e.iter().any(|m| m.contains("`x` may be unbound")), "{e:?}");
        assert!(e.iter().any(|m| m == "unbound variable `y`"), "{e:?}");
    }

    #[test]
    fn type_errors() {
        let e = errors(
            "step c: select options=[\"high\", \"low\"]\nstep d: select dynamic { when c > 1 -> [\"x\"]; else -> [\"y\"]; }",
        );
        assert!(e.iter().any(|m| m.contains("never numeric")), "{e:?}");
        let f = lint("step c: gen stop=\"\\n\" max_tokens=3\nstep d: select dynamic { when c > 1 -> [\"x\"]; else -> [\"y\"]; }");
        assert!(f.iter().all(|f| !f.is_error()));
        assert!(f.iter().any(|f| f.message.contains("may not be numeric")));
    }

    #[test]
    fn constant_predicates_and_unreachable() {
        let f = lint("step a: gen regex=r\"\\d\" max_tokens=1\nstep v: validate pred=1 < 2 max_retries=2 anchor=a fallback { a = 1; }\nstep b: branch { when true { step e: emit \"x\" } else { step g: emit \"y\" } }");
        assert!(f.iter().any(|f| f.message == "validate predicate is always true"));
        assert!(f.iter().any(|f| f.message == "unreachable else arm"));
    }

    #[test]
    fn fallback_checks() {
        let e = errors("step a: select options=[\"M0\", \"M1\"]\nstep v: validate pred=a = \"M0\" max_retries=2 anchor=a fallback { a = \"M2\"; }");
        assert!(e.iter().any(|m| m.contains("not among its options")), "{e:?}");
        let e = errors("step a: select options=[\"M0\", \"M1\"]\nstep v: validate pred=a = \"M0\" max_retries=2 anchor=a");
        assert!(e.contains(&"missing fallback for `a`".to_string()), "{e:?}");
    }

    #[test]
    fn vocabulary_checks() {
        let v = Vocabulary::from_strs(&["M", "0", "1"]).unwrap();
        let p = parse_program("scidc-ir v1\nprogram p\nstep a: select options=[\"M2\"]\nstep b: gen regex=r\"M0M0\" max_tokens=3").unwrap();
        let e: Vec<String> = lint_with_vocab(&p, Some(&v)).into_iter().filter(|f| f.is_error()).map(|f| f.message).collect();
        assert!(e.iter().any(|m| m.contains("cannot be tokenized")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("at least 4 tokens")), "{e:?}");
    }

    #[test]
    fn unsupported_regex() {
        let e = errors("step a: gen regex=r\"(?=x)x\" max_tokens=2");
        assert!(e.iter().any(|m| m.contains("unsupported regex feature")), "{e:?}");
    }

    #[test]
    fn placeholder_scan() {
        assert_eq!(placeholders("ratio {r} vs {limit} {not valid}"), vec!["r", "limit"]);
    }
}
