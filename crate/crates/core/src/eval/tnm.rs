//! Synthetic thyroid staging records with gold labels from the bundled toy
//! rule set (`data/tnm_thyroid.md`).
//!
//! Record grammar:
//! `Record <id>: <age>-year-old <sex>. Ultrasound: solitary thyroid nodule,
//! largest diameter <size> cm. Local extension: <extension>. Involved nodal
//! zones: <zones>. Distant metastasis: <none found | present (<site>)>.`

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pack::{Cue, Instance, OracleSpec, Scorer, TaskPack};
use super::score::{Accuracy, ValiditySpec, M_CATEGORIES, N_CATEGORIES, T_CATEGORIES};

pub const PROGRAM: &str = include_str!("../../data/tnm.ir");
pub const RULES: &str = include_str!("../../data/tnm_thyroid.md");

pub const EXTENSIONS: &[&str] = &[
    "none",
    "strap muscles",
    "subcutaneous tissue",
    "larynx",
    "trachea",
    "esophagus",
    "recurrent laryngeal nerve",
    "prevertebral fascia",
    "carotid artery",
    "mediastinal vessels",
];

pub const ZONES: &[&str] = &["I", "II", "III", "IV", "V", "VI", "VII"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TnmRecord {
    pub age: u32,
    pub female: bool,
    /// Largest diameter in tenths of a centimetre.
    pub size_tenths: u32,
    pub extension: &'static str,
    pub zones: Vec<&'static str>,
    pub metastasis_site: Option<&'static str>,
}

impl TnmRecord {
    pub fn size_text(&self) -> String {
        format!("{}.{}", self.size_tenths / 10, self.size_tenths % 10)
    }

    pub fn nodal_summary(&self) -> &'static str {
        if self.zones.iter().any(|z| !matches!(*z, "VI" | "VII")) {
            "lateral"
        } else if self.zones.is_empty() {
            "none"
        } else {
            "central"
        }
    }

    pub fn render(&self, id: &str) -> String {
        let zones = if self.zones.is_empty() {
            "none".to_string()
        } else {
            self.zones.join(", ")
        };
        let metastasis = match self.metastasis_site {
            None => "none found".to_string(),
            Some(site) => format!("present ({site})"),
        };
        format!(
            "Record {id}: {}-year-old {}. Ultrasound: solitary thyroid nodule, largest diameter {} cm. \
             Local extension: {}. Involved nodal zones: {zones}. Distant metastasis: {metastasis}.",
            self.age,
            if self.female { "woman" } else { "man" },
            self.size_text(),
            self.extension,
        )
    }
}

/// Reference staging function for the bundled rules.
pub fn stage(r: &TnmRecord) -> (&'static str, &'static str, &'static str) {
    let t = match r.extension {
        "prevertebral fascia" | "carotid artery" | "mediastinal vessels" => "T4b",
        "subcutaneous tissue" | "larynx" | "trachea" | "esophagus" | "recurrent laryngeal nerve" => "T4a",
        "strap muscles" => "T3b",
        _ => match r.size_tenths {
            0..=10 => "T1a",
            11..=20 => "T1b",
            21..=40 => "T2",
            _ => "T3a",
        },
    };
    let lateral = r.zones.iter().any(|z| ["I", "II", "III", "IV", "V"].contains(z));
    let n = if lateral {
        "N1b"
    } else if r.zones.is_empty() {
        "N0"
    } else {
        "N1a"
    };
    let m = if r.metastasis_site.is_some() { "M1" } else { "M0" };
    (t, n, m)
}

fn random_record(rng: &mut ChaCha8Rng) -> TnmRecord {
    let extension = if rng.gen_bool(0.6) {
        "none"
    } else {
        EXTENSIONS[rng.gen_range(1..EXTENSIONS.len())]
    };
    let zones: Vec<&'static str> = match rng.gen_range(0..10) {
        0..=4 => Vec::new(),
        5..=7 => {
            let mut z = vec!["VI"];
            if rng.gen_bool(0.3) {
                z.push("VII");
            }
            z
        }
        _ => {
            let mut z: Vec<&'static str> = ZONES[..5].iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
            if z.is_empty() {
                z.push(ZONES[rng.gen_range(1..4)]);
            }
            if rng.gen_bool(0.5) {
                z.push("VI");
            }
            z
        }
    };
    TnmRecord {
        age: rng.gen_range(18..86),
        female: rng.gen_bool(0.7),
        size_tenths: rng.gen_range(2..=60),
        extension,
        zones,
        metastasis_site: rng
            .gen_bool(0.1)
            .then(|| *["lung", "bone", "liver"].choose(rng).expect("nonempty")),
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// `n` records (the default pack has 200), deterministic in `seed`.
pub fn build_tnm_pack(seed: u64, n: usize) -> TaskPack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..n)
        .map(|i| {
            let id = format!("tnm-{i:03}");
            let record = random_record(&mut rng);
            let (t, n, m) = stage(&record);
            let fields = [
                ("size", record.size_text()),
                ("extension", record.extension.to_string()),
                ("nodes", record.nodal_summary().to_string()),
                ("metastasis", if record.metastasis_site.is_some() { "present" } else { "absent" }.to_string()),
                ("t_stage", t.to_string()),
                ("n_stage", n.to_string()),
                ("m_stage", m.to_string()),
                ("answer", format!("{t} {n} {m}")),
            ];
            Instance {
                input: record.render(&id),
                id,
                gold: vec![format!("{t}{n}{m}")],
                fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            }
        })
        .collect();
    let cue = |text: &str, field: &str, alternatives: &[&str]| Cue {
        text: text.into(),
        field: field.into(),
        alternatives: strings(alternatives),
    };
    TaskPack {
        id: "tnm_thyroid".into(),
        prompt: "Stage the thyroid tumour described in the record.\n".into(),
        program: PROGRAM.into(),
        scorer: Scorer {
            validity: ValiditySpec::Staging,
            accuracy: Some(Accuracy::ExactMatch),
        },
        oracle: OracleSpec {
            cues: vec![
                cue("Tumour size (cm): ", "size", &[]),
                cue("Extension: ", "extension", EXTENSIONS),
                cue("Nodal zones: ", "nodes", &["none", "central", "lateral"]),
                cue("Distant metastasis: ", "metastasis", &["absent", "present"]),
                cue("T category: ", "t_stage", T_CATEGORIES),
                cue("N category: ", "n_stage", N_CATEGORIES),
                cue("M category: ", "m_stage", M_CATEGORIES),
            ],
            answer_field: "answer".into(),
            hedge_rate: 0.05,
            answer_alternatives: strings(&["T1a N0 M0", "T2 N1a M0", "T3a N1b M1"]),
        },
        instances,
    }
}
