//! Parser for the supported regex subset.
//!
//! Supported: literals, escapes, classes (`[...]`, `[^...]`), `.`, `*`, `+`,
//! `?`, `{n}`, `{n,}`, `{n,m}`, alternation, capturing and `(?:...)` groups.
//! Matching is always full-string, so a leading `^` and trailing `$` are
//! accepted as no-ops. Shorthand classes (`\d`, `\w`, `\s`) are ASCII-only.
//! Backreferences, lookaround, inline flags, word boundaries and Unicode
//! property classes are rejected with [`RegexError::Unsupported`].

use std::fmt;

/// Upper bound on any explicit repetition count.
pub const MAX_REPEAT: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegexError {
    Syntax { offset: usize, message: String },
    Unsupported { feature: String },
}

impl fmt::Display for RegexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegexError::Syntax { offset, message } => {
                write!(f, "regex syntax error at offset {offset}: {message}")
            }
            RegexError::Unsupported { feature } => write!(f, "unsupported regex feature: {feature}"),
        }
    }
}

impl std::error::Error for RegexError {}

/// A set of Unicode scalar ranges, sorted and non-overlapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharClass {
    ranges: Vec<(u32, u32)>,
}

impl CharClass {
    pub fn new(mut ranges: Vec<(u32, u32)>) -> Self {
        ranges.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match merged.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Self { ranges: merged }
    }

    pub fn single(c: char) -> Self {
        Self::new(vec![(c as u32, c as u32)])
    }

    pub fn ranges(&self) -> &[(u32, u32)] {
        &self.ranges
    }

    pub fn negate(&self) -> Self {
        let mut out = Vec::new();
        let mut next = 0u32;
        for &(lo, hi) in &self.ranges {
            if lo > next {
                out.push((next, lo - 1));
            }
            next = hi + 1;
        }
        if next <= 0x10FFFF {
            out.push((next, 0x10FFFF));
        }
        Self::new(out)
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        let c = c as u32;
        self.ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi)
    }

    fn digit() -> Self {
        Self::new(vec![(b'0' as u32, b'9' as u32)])
    }

    fn word() -> Self {
        Self::new(vec![
            (b'0' as u32, b'9' as u32),
            (b'A' as u32, b'Z' as u32),
            (b'_' as u32, b'_' as u32),
            (b'a' as u32, b'z' as u32),
        ])
    }

    fn space() -> Self {
        Self::new(vec![(9, 13), (32, 32)])
    }

    fn any_but_newline() -> Self {
        Self::new(vec![(0, 9), (11, 0x10FFFF)])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegexAst {
    Empty,
    Class(CharClass),
    Concat(Vec<RegexAst>),
    Alt(Vec<RegexAst>),
    Repeat {
        node: Box<RegexAst>,
        min: u32,
        max: Option<u32>,
    },
}

impl RegexAst {
    pub fn literal(text: &str) -> Self {
        let parts: Vec<RegexAst> = text.chars().map(|c| RegexAst::Class(CharClass::single(c))).collect();
        match parts.len() {
            0 => RegexAst::Empty,
            1 => parts.into_iter().next().expect("one part"),
            _ => RegexAst::Concat(parts),
        }
    }
}

pub fn parse_regex(pattern: &str) -> Result<RegexAst, RegexError> {
    let chars: Vec<char> = pattern.chars().collect();
    let mut start = 0;
    let mut end = chars.len();
    if chars.first() == Some(&'^') {
        start = 1;
    }
    if end > start && chars[end - 1] == '$' && !(end >= 2 && is_escaped(&chars, end - 1)) {
        end -= 1;
    }
    let mut p = Parser {
        chars: &chars[..end],
        pos: start,
        depth: 0,
    };
    let ast = p.parse_alt()?;
    if p.pos < p.chars.len() {
        return Err(p.syntax("unmatched ')'"));
    }
    Ok(ast)
}

fn is_escaped(chars: &[char], idx: usize) -> bool {
    let mut n = 0;
    let mut i = idx;
    while i > 0 && chars[i - 1] == '\\' {
        n += 1;
        i -= 1;
    }
    n % 2 == 1
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn syntax(&self, message: &str) -> RegexError {
        RegexError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn unsupported(feature: &str) -> RegexError {
        RegexError::Unsupported {
            feature: feature.to_string(),
        }
    }

    fn parse_alt(&mut self) -> Result<RegexAst, RegexError> {
        let mut branches = vec![self.parse_concat()?];
        while self.peek() == Some('|') {
            self.pos += 1;
            branches.push(self.parse_concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().expect("one branch")
        } else {
            RegexAst::Alt(branches)
        })
    }

    fn parse_concat(&mut self) -> Result<RegexAst, RegexError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            items.push(self.parse_repeat()?);
        }
        Ok(match items.len() {
            0 => RegexAst::Empty,
            1 => items.pop().expect("one item"),
            _ => RegexAst::Concat(items),
        })
    }

    fn parse_repeat(&mut self) -> Result<RegexAst, RegexError> {
        let mut node = self.parse_atom()?;
        loop {
            let (min, max) = match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    (0, None)
                }
                Some('+') => {
                    self.pos += 1;
                    (1, None)
                }
                Some('?') => {
                    self.pos += 1;
                    (0, Some(1))
                }
                Some('{') => self.parse_counted()?,
                _ => break,
            };
            // Laziness does not change the language under full matching.
            if self.peek() == Some('?') {
                self.pos += 1;
            }
            if self.peek() == Some('+') {
                return Err(Self::unsupported("possessive quantifier"));
            }
            node = RegexAst::Repeat {
                node: Box::new(node),
                min,
                max,
            };
        }
        Ok(node)
    }

    fn parse_counted(&mut self) -> Result<(u32, Option<u32>), RegexError> {
        self.pos += 1; // '{'
        let min = self
            .parse_number()?
            .ok_or_else(|| self.syntax("expected repetition count"))?;
        let max = if self.peek() == Some(',') {
            self.pos += 1;
            self.parse_number()?
        } else {
            Some(min)
        };
        if self.bump() != Some('}') {
            return Err(self.syntax("unterminated repetition"));
        }
        if let Some(max) = max {
            if max < min {
                return Err(self.syntax("repetition max is below min"));
            }
        }
        if min > MAX_REPEAT || max.is_some_and(|m| m > MAX_REPEAT) {
            return Err(self.syntax("repetition count too large"));
        }
        Ok((min, max))
    }

    fn parse_number(&mut self) -> Result<Option<u32>, RegexError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Ok(None);
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse()
            .map(Some)
            .map_err(|_| self.syntax("repetition count too large"))
    }

    fn parse_atom(&mut self) -> Result<RegexAst, RegexError> {
        let c = self.bump().ok_or_else(|| self.syntax("unexpected end"))?;
        match c {
            '(' => {
                if self.peek() == Some('?') {
                    self.pos += 1;
                    match self.bump() {
                        Some(':') => {}
                        Some('=') | Some('!') => return Err(Self::unsupported("lookahead")),
                        Some('<') => {
                            return Err(match self.peek() {
                                Some('=') | Some('!') => Self::unsupported("lookbehind"),
                                _ => Self::unsupported("named group"),
                            })
                        }
                        Some('P') => return Err(Self::unsupported("named group")),
                        _ => return Err(Self::unsupported("inline flags")),
                    }
                }
                self.depth += 1;
                if self.depth > 64 {
                    return Err(self.syntax("groups nested too deeply"));
                }
                let inner = self.parse_alt()?;
                self.depth -= 1;
                if self.bump() != Some(')') {
                    return Err(self.syntax("unclosed group"));
                }
                Ok(inner)
            }
            '[' => self.parse_class().map(RegexAst::Class),
            '.' => Ok(RegexAst::Class(CharClass::any_but_newline())),
            '\\' => self.parse_escape(false).map(RegexAst::Class),
            '^' | '$' => Err(Self::unsupported("anchor inside pattern")),
            '*' | '+' | '?' | '{' => Err(RegexError::Syntax {
                offset: self.pos - 1,
                message: "repetition operator without operand".into(),
            }),
            other => Ok(RegexAst::Class(CharClass::single(other))),
        }
    }

    fn parse_escape(&mut self, in_class: bool) -> Result<CharClass, RegexError> {
        let c = self.bump().ok_or_else(|| self.syntax("dangling backslash"))?;
        let single = |ch: char| Ok(CharClass::single(ch));
        match c {
            'd' => Ok(CharClass::digit()),
            'D' => Ok(CharClass::digit().negate()),
            'w' => Ok(CharClass::word()),
            'W' => Ok(CharClass::word().negate()),
            's' => Ok(CharClass::space()),
            'S' => Ok(CharClass::space().negate()),
            'n' => single('\n'),
            't' => single('\t'),
            'r' => single('\r'),
            'f' => single('\u{0C}'),
            'v' => single('\u{0B}'),
            'x' => {
                let code = if self.peek() == Some('{') {
                    self.pos += 1;
                    let start = self.pos;
                    while self.peek().is_some_and(|c| c != '}') {
                        self.pos += 1;
                    }
                    let hex: String = self.chars[start..self.pos].iter().collect();
                    if self.bump() != Some('}') {
                        return Err(self.syntax("unterminated \\x{...}"));
                    }
                    hex
                } else {
                    let hex: String = self.chars.get(self.pos..self.pos + 2).unwrap_or(&[]).iter().collect();
                    self.pos += 2;
                    hex
                };
                let n = u32::from_str_radix(&code, 16).map_err(|_| self.syntax("bad hex escape"))?;
                let ch = char::from_u32(n).ok_or_else(|| self.syntax("escape is not a scalar value"))?;
                single(ch)
            }
            'b' | 'B' if !in_class => Err(Self::unsupported("word boundary")),
            'A' | 'z' | 'Z' => Err(Self::unsupported("anchor escape")),
            '1'..='9' => Err(Self::unsupported("backreference")),
            'p' | 'P' => Err(Self::unsupported("unicode property class")),
            'k' => Err(Self::unsupported("backreference")),
            c if c.is_ascii_alphanumeric() => Err(self.syntax(&format!("unknown escape \\{c}"))),
            c => single(c),
        }
    }

    fn parse_class(&mut self) -> Result<CharClass, RegexError> {
        let negated = if self.peek() == Some('^') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut ranges: Vec<(u32, u32)> = Vec::new();
        let mut first = true;
        loop {
            let c = self.bump().ok_or_else(|| self.syntax("unclosed character class"))?;
            if c == ']' && !first {
                break;
            }
            first = false;
            if c == '[' && self.peek() == Some(':') {
                return Err(Self::unsupported("POSIX character class"));
            }
            let lo = if c == '\\' {
                let cls = self.parse_escape(true)?;
                if cls.ranges().len() != 1 || cls.ranges()[0].0 != cls.ranges()[0].1 {
                    ranges.extend_from_slice(cls.ranges());
                    continue;
                }
                cls.ranges()[0].0
            } else {
                c as u32
            };
            if self.peek() == Some('-') && self.chars.get(self.pos + 1).is_some_and(|&n| n != ']') {
                self.pos += 1;
                let hc = self.bump().ok_or_else(|| self.syntax("unclosed character class"))?;
                let hi = if hc == '\\' {
                    let cls = self.parse_escape(true)?;
                    if cls.ranges().len() != 1 || cls.ranges()[0].0 != cls.ranges()[0].1 {
                        return Err(self.syntax("class shorthand cannot end a range"));
                    }
                    cls.ranges()[0].0
                } else {
                    hc as u32
                };
                if hi < lo {
                    return Err(self.syntax("character range is out of order"));
                }
                ranges.push((lo, hi));
            } else {
                ranges.push((lo, lo));
            }
        }
        let class = CharClass::new(ranges);
        Ok(if negated { class.negate() } else { class })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numeric_pattern() {
        let ast = parse_regex(r"\d+\.?\d*").unwrap();
        match ast {
            RegexAst::Concat(parts) => assert_eq!(parts.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lookahead_is_unsupported() {
        assert_eq!(
            parse_regex("a(?=b)"),
            Err(RegexError::Unsupported {
                feature: "lookahead".into()
            })
        );
    }

    #[test]
    fn backreference_is_unsupported() {
        assert!(matches!(parse_regex(r"(a)\1"), Err(RegexError::Unsupported { .. })));
    }

    #[test]
    fn anchors_at_ends_are_accepted() {
        assert_eq!(parse_regex("^ab$").unwrap(), parse_regex("ab").unwrap());
        assert!(matches!(parse_regex("a^b"), Err(RegexError::Unsupported { .. })));
    }

    #[test]
    fn escaped_dollar_is_literal() {
        assert_eq!(parse_regex(r"a\$").unwrap(), RegexAst::literal("a$"));
    }

    #[test]
    fn class_negation_and_ranges() {
        let RegexAst::Class(c) = parse_regex("[^a-c]").unwrap() else {
            panic!()
        };
        assert!(!c.contains('b'));
        assert!(c.contains('d'));
        assert!(c.contains('≥'));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_regex("(ab"), Err(RegexError::Syntax { .. })));
        assert!(matches!(parse_regex("ab)"), Err(RegexError::Syntax { .. })));
        assert!(matches!(parse_regex("*a"), Err(RegexError::Syntax { .. })));
        assert!(matches!(parse_regex("a{3,1}"), Err(RegexError::Syntax { .. })));
        assert!(matches!(parse_regex("[abc"), Err(RegexError::Syntax { .. })));
    }
}
