//! Parser for the `scidc-ir v1` text format.

use std::collections::HashMap;

use super::lexer::{lex, Spanned, Tok};
use super::predicate::ExprParser;
use super::{
    BranchStep, DynamicOptions, GenStep, IrError, Literal, Options, RuleProgram, Step, StepKind,
    ValidateLoop, HEADER,
};

pub fn parse_program(source: &str) -> Result<RuleProgram, IrError> {
    let body = strip_header(source)?;
    let toks = lex(&body)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        names: HashMap::new(),
    };
    p.program()
}

/// Checks the header line and blanks it so line numbers stay accurate.
fn strip_header(source: &str) -> Result<String, IrError> {
    let mut out = String::with_capacity(source.len());
    let mut seen = false;
    for (i, line) in source.split_inclusive('\n').enumerate() {
        let t = line.trim();
        if !seen && !t.is_empty() && !t.starts_with('#') {
            if t != HEADER {
                return Err(IrError::Syntax {
                    line: i + 1,
                    col: 1,
                    message: format!("expected header `{HEADER}`"),
                });
            }
            seen = true;
            if line.ends_with('\n') {
                out.push('\n');
            }
            continue;
        }
        out.push_str(line);
    }
    if !seen {
        return Err(IrError::Syntax {
            line: 1,
            col: 1,
            message: format!("missing header `{HEADER}`"),
        });
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    names: HashMap<String, usize>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos).or(self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn err(&self, message: impl Into<String>) -> IrError {
        let (line, col) = self.here();
        IrError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".to_string(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<(), IrError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {}, found {}", want.describe(), self.found())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), IrError> {
        if self.is_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{kw}`, found {}", self.found())))
        }
    }

    fn ident(&mut self) -> Result<String, IrError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected identifier, found {}", self.found()))),
        }
    }

    fn string(&mut self) -> Result<String, IrError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected string literal, found {}", self.found()))),
        }
    }

    fn number(&mut self) -> Result<String, IrError> {
        match self.peek() {
            Some(Tok::Num(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected number, found {}", self.found()))),
        }
    }

    fn program(&mut self) -> Result<RuleProgram, IrError> {
        self.expect_kw("program")?;
        let name = self.ident()?;
        let mut metadata = Vec::new();
        while self.is_kw("meta") {
            self.pos += 1;
            let key = self.ident()?;
            self.expect(Tok::Assign)?;
            let value = self.string()?;
            metadata.push((key, value));
        }
        let steps = self.steps()?;
        if self.pos < self.toks.len() {
            return Err(self.err(format!("expected `step`, found {}", self.found())));
        }
        Ok(RuleProgram {
            name,
            metadata,
            steps,
        })
    }

    fn steps(&mut self) -> Result<Vec<Step>, IrError> {
        let mut steps = Vec::new();
        while self.is_kw("step") {
            steps.push(self.step()?);
        }
        Ok(steps)
    }

    fn step(&mut self) -> Result<Step, IrError> {
        self.expect_kw("step")?;
        let (line, _) = self.here();
        let name = self.ident()?;
        if self.names.insert(name.clone(), line).is_some() {
            return Err(IrError::DuplicateStepName { name, line });
        }
        self.expect(Tok::Colon)?;
        let (kline, kcol) = self.here();
        let kind = self.ident()?;
        let kind = match kind.as_str() {
            "emit" => StepKind::Emit(self.string()?),
            "gen" => StepKind::Gen(self.gen()?),
            "select" => StepKind::Select(self.select()?),
            "branch" => StepKind::Branch(self.branch()?),
            "validate" => StepKind::Validate(self.validate()?),
            _ => {
                return Err(IrError::UnknownStepKind {
                    kind,
                    line: kline,
                    col: kcol,
                })
            }
        };
        Ok(Step { name, kind })
    }

    /// Next `name=` attribute, or None at a step boundary.
    fn attr(&mut self) -> Result<Option<String>, IrError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s != "step" => {
                let s = s.clone();
                self.pos += 1;
                Ok(Some(s))
            }
            _ => Ok(None),
        }
    }

    fn gen(&mut self) -> Result<GenStep, IrError> {
        let mut g = GenStep::default();
        while let Some(attr) = self.attr()? {
            self.expect(Tok::Assign)?;
            let dup = match attr.as_str() {
                "regex" => g.regex.replace(self.string()?).is_some(),
                "stop" => g.stop.replace(self.string()?).is_some(),
                "max_tokens" => {
                    let n = self.number()?;
                    let n = n
                        .parse::<u32>()
                        .map_err(|_| self.err(format!("max_tokens must be a whole number, got `{n}`")))?;
                    g.max_tokens.replace(n).is_some()
                }
                "temperature" => {
                    let n = self.number()?;
                    let t = n.parse::<f64>().map_err(|_| self.err("bad temperature"))?;
                    g.temperature.replace(t).is_some()
                }
                other => return Err(self.err(format!("unknown gen attribute `{other}`"))),
            };
            if dup {
                return Err(self.err(format!("attribute `{attr}` given twice")));
            }
        }
        Ok(g)
    }

    fn string_list(&mut self) -> Result<Vec<String>, IrError> {
        self.expect(Tok::LBracket)?;
        let mut out = Vec::new();
        while self.peek() != Some(&Tok::RBracket) {
            out.push(self.string()?);
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.expect(Tok::RBracket)?;
        Ok(out)
    }

    fn expr(&mut self) -> Result<super::Expr, IrError> {
        let mut p = ExprParser {
            toks: self.toks,
            pos: self.pos,
        };
        let e = p.expr()?;
        self.pos = p.pos;
        Ok(e)
    }

    fn select(&mut self) -> Result<Options, IrError> {
        if self.is_kw("options") {
            self.pos += 1;
            self.expect(Tok::Assign)?;
            return Ok(Options::Static(self.string_list()?));
        }
        if !self.is_kw("dynamic") {
            return Err(self.err(format!(
                "select needs `options=[...]` or `dynamic {{...}}`, found {}",
                self.found()
            )));
        }
        self.pos += 1;
        self.expect(Tok::LBrace)?;
        let mut guards = Vec::new();
        while self.is_kw("when") {
            self.pos += 1;
            let pred = self.expr()?;
            self.expect(Tok::Arrow)?;
            let list = self.string_list()?;
            self.expect(Tok::Semi)?;
            guards.push((pred, list));
        }
        self.expect_kw("else")?;
        self.expect(Tok::Arrow)?;
        let default = self.string_list()?;
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
        }
        self.expect(Tok::RBrace)?;
        Ok(Options::Dynamic(DynamicOptions { guards, default }))
    }

    fn block(&mut self) -> Result<Vec<Step>, IrError> {
        self.expect(Tok::LBrace)?;
        let steps = self.steps()?;
        self.expect(Tok::RBrace)?;
        Ok(steps)
    }

    fn branch(&mut self) -> Result<BranchStep, IrError> {
        self.expect(Tok::LBrace)?;
        let mut arms = Vec::new();
        while self.is_kw("when") {
            self.pos += 1;
            let pred = self.expr()?;
            let body = self.block()?;
            arms.push((pred, body));
        }
        if arms.is_empty() {
            return Err(self.err("branch needs at least one `when` arm"));
        }
        let otherwise = if self.is_kw("else") {
            self.pos += 1;
            Some(self.block()?)
        } else {
            None
        };
        self.expect(Tok::RBrace)?;
        Ok(BranchStep { arms, otherwise })
    }

    fn validate(&mut self) -> Result<ValidateLoop, IrError> {
        let start = self.here();
        let mut pred = None;
        let mut max_retries = None;
        let mut anchor = None;
        let mut retry = None;
        let mut fallback: Option<Vec<(String, Literal)>> = None;
        while let Some(attr) = self.attr()? {
            let dup = match attr.as_str() {
                "pred" => {
                    self.expect(Tok::Assign)?;
                    pred.replace(self.expr()?).is_some()
                }
                "max_retries" => {
                    self.expect(Tok::Assign)?;
                    let n = self.number()?;
                    let n = n
                        .parse::<u32>()
                        .map_err(|_| self.err(format!("max_retries must be a whole number, got `{n}`")))?;
                    max_retries.replace(n).is_some()
                }
                "anchor" => {
                    self.expect(Tok::Assign)?;
                    anchor.replace(self.ident()?).is_some()
                }
                "retry" => {
                    self.expect(Tok::Assign)?;
                    retry.replace(self.string()?).is_some()
                }
                "fallback" => {
                    self.expect(Tok::LBrace)?;
                    let mut items = Vec::new();
                    while self.peek() != Some(&Tok::RBrace) {
                        let var = self.ident()?;
                        self.expect(Tok::Assign)?;
                        let lit = match self.peek() {
                            Some(Tok::Num(_)) => {
                                let n = self.number()?;
                                Literal::Num(n.parse().map_err(|_| self.err("bad number"))?)
                            }
                            _ => Literal::Str(self.string()?),
                        };
                        self.expect(Tok::Semi)?;
                        items.push((var, lit));
                    }
                    self.expect(Tok::RBrace)?;
                    fallback.replace(items).is_some()
                }
                other => return Err(self.err(format!("unknown validate attribute `{other}`"))),
            };
            if dup {
                return Err(self.err(format!("attribute `{attr}` given twice")));
            }
        }
        let missing = |what: &str| IrError::Syntax {
            line: start.0,
            col: start.1,
            message: format!("validate requires {what}"),
        };
        Ok(ValidateLoop {
            pred: pred.ok_or_else(|| missing("pred"))?,
            max_retries,
            anchor: anchor.ok_or_else(|| missing("anchor"))?,
            retry,
            fallback: fallback.unwrap_or_default(),
        })
    }
}
