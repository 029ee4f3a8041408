//! Pure scorers: validity against machine-checkable rules, exact match and
//! hit@k.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::pack::Instance;
use super::retro;
use crate::ir::numeric_view;

pub const T_CATEGORIES: &[&str] = &["T1a", "T1b", "T2", "T3a", "T3b", "T4a", "T4b"];
pub const N_CATEGORIES: &[&str] = &["N0", "N1a", "N1b"];
pub const M_CATEGORIES: &[&str] = &["M0", "M1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValiditySpec {
    /// Exactly one legal category each for T, N and M.
    Staging,
    /// The last `name = value` of each fraction parses as a number, the
    /// fractions sum to at most `max_total`, and ratios stay within limits.
    Formulation {
        fractions: Vec<String>,
        ratio_limits: BTreeMap<String, f64>,
        max_total: f64,
    },
    /// Every `Proposal N: A + B` line rewrites to the product under a
    /// template. The product comes from the instance's `product` field.
    Retrosynthesis {
        #[serde(default)]
        product: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Accuracy {
    ExactMatch,
    HitAtK { k: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Validity {
    pub valid: bool,
    pub violations: Vec<String>,
}

impl ValiditySpec {
    /// Binds per-instance data (the retrosynthesis product).
    pub fn for_instance(&self, instance: &Instance) -> ValiditySpec {
        match self {
            ValiditySpec::Retrosynthesis { .. } => ValiditySpec::Retrosynthesis {
                product: instance.fields.get("product").cloned().unwrap_or_default(),
            },
            other => other.clone(),
        }
    }

    pub fn label_in_space(&self, label: &str) -> bool {
        match self {
            ValiditySpec::Staging => parse_triple(label).is_some(),
            ValiditySpec::Formulation { .. } => true,
            ValiditySpec::Retrosynthesis { product } => retro::rewrites_to(label, product),
        }
    }
}

fn category_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([TNM])(\d[a-z]?)\b").expect("valid regex"))
}

fn proposal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^Proposal \d+: *(.*?) *$").expect("valid regex"))
}

/// "T1aN0M0" into its three categories.
pub fn parse_triple(label: &str) -> Option<(String, String, String)> {
    let n = label.find('N')?;
    let m = label.find('M')?;
    let (t, n, m) = (&label[..n], &label[n..m], &label[m..]);
    (T_CATEGORIES.contains(&t) && N_CATEGORIES.contains(&n) && M_CATEGORIES.contains(&m))
        .then(|| (t.to_string(), n.to_string(), m.to_string()))
}

/// Categories mentioned in the output, grouped by axis, in order.
fn staging_mentions(output: &str) -> (BTreeMap<char, Vec<String>>, Vec<String>) {
    let mut legal: BTreeMap<char, Vec<String>> = BTreeMap::new();
    let mut illegal = Vec::new();
    for cap in category_re().captures_iter(output) {
        let whole = cap[0].to_string();
        let axis = cap[1].chars().next().expect("one char");
        let set = match axis {
            'T' => T_CATEGORIES,
            'N' => N_CATEGORIES,
            _ => M_CATEGORIES,
        };
        if set.contains(&whole.as_str()) {
            legal.entry(axis).or_default().push(whole);
        } else {
            illegal.push(whole);
        }
    }
    (legal, illegal)
}

/// Last `name = value` in the text, value without a trailing `%`.
fn last_assignment<'a>(output: &'a str, name: &str) -> Option<&'a str> {
    let needle = format!("{name} = ");
    let at = output.rfind(&needle)? + needle.len();
    let rest = &output[at..];
    let end = rest.find(|c: char| c.is_whitespace()).unwrap_or(rest.len());
    Some(rest[..end].trim_end_matches(['%', ',', ';']))
}

pub fn retro_proposals(output: &str) -> Vec<String> {
    proposal_re()
        .captures_iter(output)
        .map(|c| c[1].to_string())
        .collect()
}

pub fn score_validity(output: &str, spec: &ValiditySpec) -> Validity {
    let mut violations = Vec::new();
    match spec {
        ValiditySpec::Staging => {
            let (legal, illegal) = staging_mentions(output);
            for bad in illegal {
                violations.push(format!("illegal category `{bad}`"));
            }
            for axis in ['T', 'N', 'M'] {
                match legal.get(&axis).map_or(0, Vec::len) {
                    0 => violations.push(format!("no {axis} category")),
                    1 => {}
                    n => violations.push(format!(
                        "{n} {axis} categories ({})",
                        legal[&axis].join(", ")
                    )),
                }
            }
        }
        ValiditySpec::Formulation {
            fractions,
            ratio_limits,
            max_total,
        } => {
            let mut total = 0.0;
            let mut all_numeric = true;
            let mut names: Vec<&String> = fractions.iter().collect();
            names.extend(ratio_limits.keys().filter(|k| !fractions.contains(k)));
            let mut values = BTreeMap::new();
            for name in names {
                match last_assignment(output, name).and_then(numeric_view) {
                    Some(v) => {
                        values.insert(name.as_str(), v);
                    }
                    None => {
                        all_numeric = false;
                        violations.push(format!("`{name}` is not a number"));
                    }
                }
            }
            for name in fractions {
                total += values.get(name.as_str()).copied().unwrap_or(0.0);
            }
            if all_numeric && total > *max_total {
                violations.push(format!("mass fractions exceed {max_total} (total {total})"));
            }
            for (name, limit) in ratio_limits {
                if let Some(v) = values.get(name.as_str()) {
                    if v > limit {
                        violations.push(format!("`{name}` = {v} exceeds {limit}"));
                    }
                }
            }
        }
        ValiditySpec::Retrosynthesis { product } => {
            let proposals = retro_proposals(output);
            if proposals.is_empty() {
                violations.push("no proposal".into());
            }
            for p in proposals {
                if !retro::rewrites_to(&p, product) {
                    violations.push(format!("proposal `{p}` does not rewrite to `{product}`"));
                }
            }
        }
    }
    Validity {
        valid: violations.is_empty(),
        violations,
    }
}

/// Canonical label of an output, if it has one: the staging triple (only
/// when exactly one category per axis is present) or the first proposal.
pub fn canonical_label(output: &str, spec: &ValiditySpec) -> Option<String> {
    match spec {
        ValiditySpec::Staging => {
            let (legal, _) = staging_mentions(output);
            let one = |axis: char| match legal.get(&axis).map(Vec::as_slice) {
                Some([only]) => Some(only.clone()),
                _ => None,
            };
            Some(format!("{}{}{}", one('T')?, one('N')?, one('M')?))
        }
        ValiditySpec::Retrosynthesis { .. } => retro_proposals(output).into_iter().next(),
        ValiditySpec::Formulation { .. } => None,
    }
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

/// Percentage of predictions that are in their gold set.
pub fn score_exact(predictions: &[Option<String>], gold: &[Vec<String>]) -> f64 {
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_ref().is_some_and(|p| g.contains(p)))
        .count();
    percent(hits, gold.len())
}

/// Percentage of instances whose gold appears among the first `k` distinct
/// proposals.
pub fn score_hit_at_k(proposals: &[Vec<String>], gold: &[Vec<String>], k: usize) -> f64 {
    let hits = proposals
        .iter()
        .zip(gold)
        .filter(|(props, g)| {
            let mut distinct: Vec<&String> = Vec::new();
            for p in props.iter() {
                if !distinct.contains(&p) {
                    distinct.push(p);
                }
            }
            distinct.iter().take(k).any(|p| g.contains(p))
        })
        .count();
    percent(hits, gold.len())
}
