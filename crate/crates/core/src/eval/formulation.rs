//! Toy formulation-design pack over the bundled formulation program. Scored
//! for validity only: the guideline limits are a plasticizer ratio of at
//! most 2.5 and component fractions summing to at most 100.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pack::{Cue, Instance, OracleSpec, Scorer, TaskPack};
use super::score::ValiditySpec;

pub const PROGRAM: &str = include_str!("../../data/formulation.ir");

fn tenths(x: u32) -> String {
    format!("{}.{}", x / 10, x % 10)
}

/// `n` requests, deterministic in `seed`. The mock's proposals break the
/// limits in about a third of the instances.
pub fn build_formulation_pack(seed: u64, n: usize) -> TaskPack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..n)
        .map(|i| {
            let current = rng.gen_range(15..=40u32);
            let adjusted = if rng.gen_bool(0.2) { current } else { current.min(25) };
            let binder = rng.gen_range(50..=80u32);
            let curing = rng.gen_range(10..=30u32);
            let agent = ["amine", "anhydride", "imidazole"][rng.gen_range(0..3)];
            let status = if current >= 25 { "reach the upper limit" } else { "not yet" };
            let fields = [
                ("current_ratio", tenths(current)),
                ("ratio_status", status.to_string()),
                ("adjusted_ratio", tenths(adjusted)),
                ("binder", binder.to_string()),
                ("curing_agent", agent.to_string()),
                ("curing_fraction", curing.to_string()),
                (
                    "adjusted_formula",
                    format!("epoxy binder {binder}%, {agent} {curing}%, plasticizer {}%", tenths(adjusted)),
                ),
                (
                    "answer",
                    format!(
                        "adjusted_ratio = {}% binder = {binder}% curing_fraction = {curing}%",
                        tenths(adjusted)
                    ),
                ),
            ];
            Instance {
                id: format!("form-{i:03}"),
                input: format!(
                    "Request {i}: epoxy adhesive, current plasticizer ratio {}%, target open time {} min.",
                    tenths(current),
                    rng.gen_range(5..60)
                ),
                gold: Vec::new(),
                fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            }
        })
        .collect();
    let cue = |text: &str, field: &str| Cue {
        text: text.into(),
        field: field.into(),
        alternatives: Vec::new(),
    };
    TaskPack {
        id: "formulation_toy".into(),
        prompt: "Adjust the adhesive formulation to the guideline.\n".into(),
        program: PROGRAM.into(),
        scorer: Scorer {
            validity: ValiditySpec::Formulation {
                fractions: vec!["adjusted_ratio".into(), "binder".into(), "curing_fraction".into()],
                ratio_limits: BTreeMap::from([("adjusted_ratio".into(), 2.5)]),
                max_total: 100.0,
            },
            accuracy: None,
        },
        oracle: OracleSpec {
            cues: vec![
                cue("current_ratio = ", "current_ratio"),
                cue("upper limit: ", "ratio_status"),
                cue("adjusted_ratio = ", "adjusted_ratio"),
                cue("binder = ", "binder"),
                cue("curing agent: ", "curing_agent"),
                cue("curing_fraction = ", "curing_fraction"),
                cue("optimized formula: ", "adjusted_formula"),
            ],
            answer_field: "answer".into(),
            hedge_rate: 0.0,
            answer_alternatives: Vec::new(),
        },
        instances,
    }
}
