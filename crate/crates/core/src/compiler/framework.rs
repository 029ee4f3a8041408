//! Reasoning frameworks returned by the decomposition stage.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRole {
    Extract,
    Judge,
    Conclude,
}

impl StepRole {
    pub fn tag(self) -> &'static str {
        match self {
            StepRole::Extract => "Extract",
            StepRole::Judge => "Judge",
            StepRole::Conclude => "Conclude",
        }
    }

    /// Required variable prefix for the step's output.
    pub fn prefix(self) -> &'static str {
        match self {
            StepRole::Extract => "VAR_",
            StepRole::Judge => "MID_",
            StepRole::Conclude => "ANS_",
        }
    }

    fn label(self) -> &'static str {
        match self {
            StepRole::Extract => "Variable",
            StepRole::Judge => "Intermediate Conclusion",
            StepRole::Conclude => "Final Answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameworkStep {
    pub role: StepRole,
    pub variable: String,
    /// Descriptive fields in reply order, e.g. ("Meaning", "...").
    pub fields: Vec<(String, String)>,
    pub depends_on: Vec<String>,
}

impl FrameworkStep {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CotFramework {
    pub summary: String,
    pub steps: Vec<FrameworkStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameworkError {
    #[error("no `## Reasoning Framework` section")]
    MissingSection,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("framework has no steps")]
    NoSteps,
    #[error("step {step}: variable `{variable}` must start with {expected}")]
    BadPrefix {
        step: usize,
        variable: String,
        expected: &'static str,
    },
    #[error("step {step}: variable `{variable}` is defined twice")]
    DuplicateVariable { step: usize, variable: String },
    #[error("step {step}: dependency `{variable}` is not defined in a prior step")]
    DanglingDependency { step: usize, variable: String },
    #[error("step {step}: dependency `{variable}` must be a VAR_ or MID_ variable")]
    BadDependency { step: usize, variable: String },
    #[error("step {step}: {role} step lists no dependencies")]
    NoDependencies { step: usize, role: &'static str },
    #[error("framework has no Conclude step")]
    MissingConclude,
    #[error("framework has {0} Conclude steps; exactly one is allowed")]
    MultipleConclude(usize),
    #[error("the Conclude step must be the last step")]
    ConcludeNotLast,
}

const SUMMARY_HEADING: &str = "## Problem Class Understanding";
const FRAMEWORK_HEADING: &str = "## Reasoning Framework";

impl CotFramework {
    /// Parses the reply format requested by the decomposition prompt and
    /// checks the structural invariants. Text outside the two sections is
    /// ignored.
    pub fn parse(reply: &str) -> Result<Self, FrameworkError> {
        let fw = parse_sections(reply)?;
        let problems = fw.validate();
        match problems.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(fw),
        }
    }

    /// Parses without checking the structural invariants.
    pub fn parse_unchecked(reply: &str) -> Result<Self, FrameworkError> {
        parse_sections(reply)
    }

    /// Every structural problem, in step order.
    pub fn validate(&self) -> Vec<FrameworkError> {
        let mut out = Vec::new();
        if self.steps.is_empty() {
            out.push(FrameworkError::NoSteps);
            return out;
        }
        let mut defined: HashSet<&str> = HashSet::new();
        for (i, s) in self.steps.iter().enumerate() {
            let n = i + 1;
            if !s.variable.starts_with(s.role.prefix()) || s.variable.len() == s.role.prefix().len() {
                out.push(FrameworkError::BadPrefix {
                    step: n,
                    variable: s.variable.clone(),
                    expected: s.role.prefix(),
                });
            }
            if s.role != StepRole::Extract && s.depends_on.is_empty() {
                out.push(FrameworkError::NoDependencies {
                    step: n,
                    role: s.role.tag(),
                });
            }
            for d in &s.depends_on {
                if !(d.starts_with("VAR_") || d.starts_with("MID_")) {
                    out.push(FrameworkError::BadDependency {
                        step: n,
                        variable: d.clone(),
                    });
                } else if !defined.contains(d.as_str()) {
                    out.push(FrameworkError::DanglingDependency {
                        step: n,
                        variable: d.clone(),
                    });
                }
            }
            if !defined.insert(&s.variable) {
                out.push(FrameworkError::DuplicateVariable {
                    step: n,
                    variable: s.variable.clone(),
                });
            }
        }
        let concludes = self.steps.iter().filter(|s| s.role == StepRole::Conclude).count();
        match concludes {
            0 => out.push(FrameworkError::MissingConclude),
            1 => {
                if self.steps.last().map(|s| s.role) != Some(StepRole::Conclude) {
                    out.push(FrameworkError::ConcludeNotLast);
                }
            }
            n => out.push(FrameworkError::MultipleConclude(n)),
        }
        out
    }

    pub fn conclusion(&self) -> Option<&FrameworkStep> {
        self.steps.iter().find(|s| s.role == StepRole::Conclude)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.variable.as_str())
    }

    /// Canonical text in the reply format; `parse(render())` round-trips.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SUMMARY_HEADING}\n{}\n{FRAMEWORK_HEADING}", self.summary);
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "Step {}: [{}] {}: {}",
                i + 1,
                s.role.tag(),
                s.role.label(),
                s.variable
            );
            let mut deps_written = false;
            for (k, v) in &s.fields {
                // Dependencies sit where the template puts them: after the
                // inference or synthesis logic.
                let _ = writeln!(out, "{k}: {v}");
                if !deps_written && (k == "Inference Logic" || k == "Synthesis Logic") {
                    write_deps(&mut out, s);
                    deps_written = true;
                }
            }
            if !deps_written && !s.depends_on.is_empty() {
                write_deps(&mut out, s);
            }
        }
        out
    }
}

fn write_deps(out: &mut String, s: &FrameworkStep) {
    if !s.depends_on.is_empty() {
        let _ = writeln!(out, "Depends On: {}", s.depends_on.join(", "));
    }
}

fn parse_sections(reply: &str) -> Result<CotFramework, FrameworkError> {
    let lines: Vec<&str> = reply.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.trim() == FRAMEWORK_HEADING)
        .ok_or(FrameworkError::MissingSection)?;
    let summary = match lines.iter().position(|l| l.trim() == SUMMARY_HEADING) {
        Some(s) if s < start => lines[s + 1..start]
            .iter()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join(" "),
        _ => String::new(),
    };
    let mut steps: Vec<FrameworkStep> = Vec::new();
    for (idx, raw) in lines.iter().enumerate().skip(start + 1) {
        let line_no = idx + 1;
        let line = raw.trim().trim_start_matches(['-', '*']).trim();
        if line.is_empty() || line == "..." {
            continue;
        }
        if line.starts_with("## ") {
            break;
        }
        if let Some(step) = parse_step_header(line, line_no)? {
            steps.push(step);
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(FrameworkError::Syntax {
                line: line_no,
                message: format!("expected `Key: value`, got `{line}`"),
            });
        };
        let Some(step) = steps.last_mut() else {
            return Err(FrameworkError::Syntax {
                line: line_no,
                message: "field before the first step".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.eq_ignore_ascii_case("Depends On") {
            step.depends_on = value
                .split(',')
                .map(|d| d.trim().trim_matches(['<', '>']).to_string())
                .filter(|d| !d.is_empty() && d != "none" && d != "None")
                .collect();
        } else {
            step.fields.push((key.to_string(), value.to_string()));
        }
    }
    Ok(CotFramework { summary, steps })
}

/// `Step N: [Role] Label: VARIABLE`; Ok(None) if the line is not a header.
fn parse_step_header(line: &str, line_no: usize) -> Result<Option<FrameworkStep>, FrameworkError> {
    let Some(rest) = line.strip_prefix("Step ") else {
        return Ok(None);
    };
    let Some((num, rest)) = rest.split_once(':') else {
        return Ok(None);
    };
    if num.trim().parse::<usize>().is_err() {
        return Ok(None);
    }
    let syntax = |message: String| FrameworkError::Syntax { line: line_no, message };
    let rest = rest.trim();
    let (role, rest) = if let Some(r) = rest.strip_prefix("[Extract]") {
        (StepRole::Extract, r)
    } else if let Some(r) = rest.strip_prefix("[Judge]") {
        (StepRole::Judge, r)
    } else if let Some(r) = rest.strip_prefix("[Conclude]") {
        (StepRole::Conclude, r)
    } else {
        return Err(syntax(format!("unknown step type in `{line}`")));
    };
    let variable = match rest.split_once(':') {
        Some((_, v)) => v.trim(),
        None => rest.trim(),
    };
    let variable = variable.trim_matches(['<', '>']);
    if variable.is_empty() || !variable.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(syntax(format!("invalid variable name `{variable}`")));
    }
    Ok(Some(FrameworkStep {
        role,
        variable: variable.to_string(),
        fields: Vec::new(),
        depends_on: Vec::new(),
    }))
}
