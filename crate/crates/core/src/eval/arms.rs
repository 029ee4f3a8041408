//! Ablation arms: mechanical rewrites of a program that drop one rule layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::explain::words;
use crate::ir::{GenStep, Options, RuleProgram, Step, StepKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// One free completion of the prompt, no program.
    Vanilla,
    Full,
    /// Structure layer removed: one free generation with the step scaffolding
    /// given as plain prompt text.
    WoRt,
    /// Logic layer removed: validate loops dropped.
    WoRm,
    /// Token layer removed: regex and option constraints become free
    /// generation with the options listed in the text.
    WoRb,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::Vanilla, Arm::Full, Arm::WoRt, Arm::WoRm, Arm::WoRb];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Vanilla => "vanilla",
            Arm::Full => "full",
            Arm::WoRt => "wo_rt",
            Arm::WoRm => "wo_rm",
            Arm::WoRb => "wo_rb",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown arm `{s}` (expected one of vanilla, full, wo_rt, wo_rm, wo_rb)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArmStripError {
    #[error("program has no steps")]
    EmptyProgram,
    #[error("step `{0}` has an empty option list that cannot be listed in the prompt")]
    EmptyOptions(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmPlan {
    Engine {
        program: RuleProgram,
        /// Appended to the instance prompt.
        prompt_suffix: String,
    },
    Unconstrained {
        prompt_suffix: String,
        max_tokens: u32,
    },
}

/// Slack for free generations that replace a constrained step.
const FREE_SLACK: u32 = 8;

pub fn strip(program: &RuleProgram, arm: Arm) -> Result<ArmPlan, ArmStripError> {
    if program.steps.is_empty() {
        return Err(ArmStripError::EmptyProgram);
    }
    let engine = |program| ArmPlan::Engine {
        program,
        prompt_suffix: String::new(),
    };
    Ok(match arm {
        Arm::Full => engine(program.clone()),
        Arm::WoRm => {
            let mut p = program.clone();
            p.steps = drop_validates(&p.steps);
            engine(p)
        }
        Arm::WoRb => {
            let mut p = program.clone();
            let mut listings = String::new();
            p.steps = free_tokens(&p.steps, &mut listings)?;
            ArmPlan::Engine {
                program: p,
                prompt_suffix: listings,
            }
        }
        Arm::WoRt => {
            let scaffold = scaffold(program)?;
            let p = RuleProgram {
                name: program.name.clone(),
                metadata: program.metadata.clone(),
                steps: vec![Step {
                    name: "answer".into(),
                    kind: StepKind::Gen(GenStep {
                        regex: None,
                        stop: Some("\n\n".into()),
                        max_tokens: Some(answer_budget(program)),
                        temperature: None,
                    }),
                }],
            };
            ArmPlan::Engine {
                program: p,
                prompt_suffix: scaffold,
            }
        }
        Arm::Vanilla => ArmPlan::Unconstrained {
            prompt_suffix: "Answer: ".into(),
            max_tokens: answer_budget(program),
        },
    })
}

/// Token budget for a free answer covering every binding step.
pub fn answer_budget(program: &RuleProgram) -> u32 {
    let mut total = 16u32;
    for (s, _) in program.walk() {
        total += match &s.kind {
            StepKind::Gen(g) => g.max_tokens.unwrap_or(0),
            StepKind::Select(o) => longest(o) + 1,
            _ => 0,
        };
    }
    total
}

fn longest(o: &Options) -> u32 {
    let lists: Vec<&Vec<String>> = match o {
        Options::Static(v) => vec![v],
        Options::Dynamic(d) => d.all_lists().collect(),
    };
    lists.into_iter().flatten().map(|s| s.len() as u32).max().unwrap_or(0)
}

fn drop_validates(steps: &[Step]) -> Vec<Step> {
    steps
        .iter()
        .filter(|s| !matches!(s.kind, StepKind::Validate(_)))
        .map(|s| match &s.kind {
            StepKind::Branch(b) => {
                let mut b = b.clone();
                for (_, body) in &mut b.arms {
                    *body = drop_validates(body);
                }
                if let Some(body) = &mut b.otherwise {
                    *body = drop_validates(body);
                }
                Step {
                    name: s.name.clone(),
                    kind: StepKind::Branch(b),
                }
            }
            _ => s.clone(),
        })
        .collect()
}

fn option_listing(name: &str, o: &Options) -> Result<String, ArmStripError> {
    let empty = || ArmStripError::EmptyOptions(name.to_string());
    let join = |v: &[String]| -> Result<String, ArmStripError> {
        if v.is_empty() {
            Err(empty())
        } else {
            Ok(v.join(" | "))
        }
    };
    let body = match o {
        Options::Static(v) => join(v)?,
        Options::Dynamic(d) => {
            let mut parts = Vec::new();
            for (pred, opts) in &d.guards {
                parts.push(format!("{} if {}", join(opts)?, words(pred)));
            }
            parts.push(format!("{} otherwise", join(&d.default)?));
            parts.join("; ")
        }
    };
    Ok(format!("[{name} options: {body}]\n"))
}

/// Rewrites constrained steps as free generations; option lists are
/// collected into `listings` for the prompt rather than the output, so they
/// are not mistaken for answers.
fn free_tokens(steps: &[Step], listings: &mut String) -> Result<Vec<Step>, ArmStripError> {
    let mut out: Vec<Step> = Vec::with_capacity(steps.len());
    for s in steps {
        match &s.kind {
            StepKind::Gen(g) if g.regex.is_some() => out.push(Step {
                name: s.name.clone(),
                kind: StepKind::Gen(GenStep {
                    regex: None,
                    stop: Some(g.stop.clone().unwrap_or_else(|| "\n".into())),
                    max_tokens: g.max_tokens.map(|m| m + FREE_SLACK),
                    temperature: g.temperature,
                }),
            }),
            StepKind::Select(o) => {
                listings.push_str(&option_listing(&s.name, o)?);
                out.push(Step {
                    name: s.name.clone(),
                    kind: StepKind::Gen(GenStep {
                        regex: None,
                        stop: Some("\n".into()),
                        max_tokens: Some(longest(o) + FREE_SLACK),
                        temperature: None,
                    }),
                });
            }
            StepKind::Branch(b) => {
                let mut b = b.clone();
                for (_, body) in &mut b.arms {
                    *body = free_tokens(body, listings)?;
                }
                if let Some(body) = &mut b.otherwise {
                    *body = free_tokens(body, listings)?;
                }
                out.push(Step {
                    name: s.name.clone(),
                    kind: StepKind::Branch(b),
                });
            }
            _ => out.push(s.clone()),
        }
    }
    Ok(out)
}

/// The program's steps as plain instructions, ending with an answer cue.
fn scaffold(program: &RuleProgram) -> Result<String, ArmStripError> {
    let mut out = String::from("Work through these steps, then give the final answer.\n");
    for (s, depth) in program.walk() {
        let indent = "  ".repeat(depth);
        let line = match &s.kind {
            StepKind::Emit(text) => text.trim().to_string(),
            StepKind::Gen(g) => match &g.regex {
                Some(r) => format!("({} matches {r})", s.name),
                None => format!("({} is free text)", s.name),
            },
            StepKind::Select(o) => option_listing(&s.name, o)?.trim_end().to_string(),
            StepKind::Branch(b) => {
                let conds: Vec<String> = b.arms.iter().map(|(p, _)| words(p)).collect();
                format!("(depending on whether {})", conds.join(" or "))
            }
            StepKind::Validate(v) => format!("(check that {})", words(&v.pred)),
        };
        if !line.is_empty() {
            out.push_str(&indent);
            out.push_str(&line);
            out.push('\n');
        }
    }
    out.push_str("Final answer:\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{lint_program, parse_program};

    const SRC: &str = "scidc-ir v1\nprogram p\nstep a: emit \"Pick: \"\nstep b: select options=[\"x\", \"y\"]\n\
        step c: gen regex=r\"\\d\" max_tokens=2\nstep v: validate pred=c < 5 max_retries=2 anchor=c fallback { c = 1; }\n";

    #[test]
    fn wo_rb_frees_tokens_and_lists_options_in_prompt() {
        let p = parse_program(SRC).unwrap();
        let ArmPlan::Engine { program, prompt_suffix } = strip(&p, Arm::WoRb).unwrap() else {
            panic!()
        };
        assert_eq!(prompt_suffix, "[b options: x | y]\n");
        let names: Vec<&str> = program.steps.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c", "v"]);
        assert!(matches!(&program.steps[1].kind, StepKind::Gen(g) if g.regex.is_none()));
        assert!(matches!(&program.steps[2].kind, StepKind::Gen(g) if g.regex.is_none()));
        assert!(lint_program(&program).iter().all(|f| !f.is_error()));
    }

    #[test]
    fn wo_rm_drops_loops() {
        let p = parse_program(SRC).unwrap();
        let ArmPlan::Engine { program, .. } = strip(&p, Arm::WoRm).unwrap() else {
            panic!()
        };
        assert!(program.find("v").is_none());
        assert_eq!(program.steps.len(), 3);
    }

    #[test]
    fn empty_options_cannot_be_listed() {
        let mut p = parse_program(SRC).unwrap();
        p.steps[1].kind = StepKind::Select(Options::Static(vec![]));
        assert_eq!(strip(&p, Arm::WoRb), Err(ArmStripError::EmptyOptions("b".into())));
        p.steps.clear();
        assert_eq!(strip(&p, Arm::Full), Err(ArmStripError::EmptyProgram));
    }

    #[test]
    fn arm_names_round_trip() {
        for a in Arm::ALL {
            assert_eq!(a.name().parse::<Arm>().unwrap(), a);
        }
    }
}
