//! Toy retrosynthesis: products are fragment chains joined by bonds, and
//! each bond type has one string-rewrite template. Chemical plausibility is
//! out of scope.
//!
//! A molecule is `F (-L? -F)*` with fragments `F` and linkers `L`, written
//! with `-` separators, e.g. `Ph-COO-Me-Et`. The bond between two fragments
//! is the linker between them, or a direct biaryl bond when there is none.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pack::{Cue, Instance, OracleSpec, Scorer, TaskPack};
use super::score::{Accuracy, ValiditySpec};

pub const FRAGMENTS: &[&str] = &["Ph", "Me", "Et", "Bn", "Py", "Tol", "Nap", "Cy"];
pub const LINKERS: &[&str] = &["COO", "CONH", "O"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    /// Text between the two stems in the product.
    pub bond: &'static str,
    /// Appended to the left stem in the first reactant.
    pub left: &'static str,
    /// Prepended to the right stem in the second reactant.
    pub right: &'static str,
}

/// In priority order for choosing the designated disconnection.
pub const TEMPLATES: &[Template] = &[
    Template {
        name: "amide",
        bond: "-CONH-",
        left: "-COOH",
        right: "H2N-",
    },
    Template {
        name: "ester",
        bond: "-COO-",
        left: "-COOH",
        right: "HO-",
    },
    Template {
        name: "ether",
        bond: "-O-",
        left: "-OH",
        right: "Br-",
    },
    Template {
        name: "suzuki",
        bond: "-",
        left: "-Br",
        right: "(HO)2B-",
    },
];

/// True if `s` is a well-formed molecule of the grammar.
pub fn is_molecule(s: &str) -> bool {
    let parts: Vec<&str> = s.split('-').collect();
    let mut expect_fragment = true;
    let mut after_fragment = false;
    for p in &parts {
        if FRAGMENTS.contains(p) {
            expect_fragment = false;
            after_fragment = true;
        } else if LINKERS.contains(p) && after_fragment {
            expect_fragment = true;
            after_fragment = false;
        } else {
            return false;
        }
    }
    !expect_fragment
}

/// Does `proposal` ("A + B") yield `product` under some template?
pub fn rewrites_to(proposal: &str, product: &str) -> bool {
    let Some((a, b)) = proposal.split_once(" + ") else {
        return false;
    };
    TEMPLATES.iter().any(|t| {
        let (Some(l), Some(r)) = (a.strip_suffix(t.left), b.strip_prefix(t.right)) else {
            return false;
        };
        is_molecule(l) && is_molecule(r) && format!("{l}{}{r}", t.bond) == product
    })
}

/// One disconnection per bond, left to right, with its template.
pub fn disconnections(product: &str) -> Vec<(&'static Template, String)> {
    let parts: Vec<&str> = product.split('-').collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < parts.len() {
        // parts[i] is a fragment; the bond follows it.
        let (template, right_at) = if LINKERS.contains(&parts[i + 1]) {
            let bond = format!("-{}-", parts[i + 1]);
            let t = TEMPLATES.iter().find(|t| t.bond == bond).expect("linker has a template");
            (t, i + 2)
        } else {
            (&TEMPLATES[3], i + 1)
        };
        let left = parts[..=i].join("-");
        let right = parts[right_at..].join("-");
        out.push((template, format!("{left}{} + {}{right}", template.left, template.right)));
        i = right_at;
    }
    out
}

/// The highest-priority bond's disconnection; leftmost on ties.
pub fn designated(product: &str) -> Option<String> {
    let all = disconnections(product);
    TEMPLATES
        .iter()
        .find_map(|t| all.iter().find(|(u, _)| u.name == t.name))
        .map(|(_, p)| p.clone())
}

pub const PROGRAM: &str = r#"scidc-ir v1
program retro_toy
meta conclude = "p1"
step s1: emit "Disconnections of {{product}}\nProposal 1: "
step p1: select options=[{{candidates}}]
step s2: emit "\nProposal 2: "
step p2: select options=[{{candidates}}]
"#;

fn random_product(rng: &mut ChaCha8Rng) -> String {
    let mut s = FRAGMENTS.choose(rng).expect("nonempty").to_string();
    for _ in 0..2 {
        let bond = TEMPLATES.choose(rng).expect("nonempty").bond;
        s.push_str(bond);
        s.push_str(FRAGMENTS.choose(rng).expect("nonempty"));
    }
    s
}

/// `n` products with two bonds each; gold is the designated disconnection.
pub fn build_retro_pack(seed: u64, n: usize) -> TaskPack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(n);
    for i in 0..n {
        let product = random_product(&mut rng);
        let cands: Vec<String> = disconnections(&product).into_iter().map(|(_, p)| p).collect();
        let gold = designated(&product).expect("product has bonds");
        let other = cands.iter().find(|c| **c != gold).cloned().unwrap_or_else(|| gold.clone());
        // The mock model agrees with the designated answer most of the time.
        let first = if rng.gen_bool(0.8) { gold.clone() } else { other.clone() };
        let second = if first == gold { other } else { gold.clone() };
        let quoted: Vec<String> = cands.iter().map(|c| format!("{c:?}")).collect();
        let fields = [
            ("product", product.clone()),
            ("candidates", quoted.join(", ")),
            ("p1", first.clone()),
            ("p2", second.clone()),
            ("answer", format!("Proposal 1: {first}\nProposal 2: {second}")),
        ];
        instances.push(Instance {
            id: format!("retro-{i:03}"),
            input: format!("Product: {product}"),
            gold: vec![gold],
            fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }
    TaskPack {
        id: "retro_toy".into(),
        prompt: "Propose two single-step disconnections for the product.\n".into(),
        program: PROGRAM.into(),
        scorer: Scorer {
            validity: ValiditySpec::Retrosynthesis { product: String::new() },
            accuracy: Some(Accuracy::HitAtK { k: 1 }),
        },
        oracle: OracleSpec {
            cues: vec![
                Cue {
                    text: "Proposal 1: ".into(),
                    field: "p1".into(),
                    alternatives: Vec::new(),
                },
                Cue {
                    text: "Proposal 2: ".into(),
                    field: "p2".into(),
                    alternatives: Vec::new(),
                },
            ],
            answer_field: "answer".into(),
            hedge_rate: 0.0,
            answer_alternatives: Vec::new(),
        },
        instances,
    }
}
