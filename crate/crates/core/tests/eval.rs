use scidc_core::eval::retro::{self, FRAGMENTS, LINKERS};
use scidc_core::eval::tnm::{stage, TnmRecord};
use scidc_core::eval::{
    build_formulation_pack, build_retro_pack, build_tnm_pack, run_pack, run_pack_records, score_validity, Arm,
    EvalBackend, EvalOptions, TaskPack, ValiditySpec,
};

fn options(arms: &[Arm], seeds: &[u64], backend: EvalBackend) -> EvalOptions {
    EvalOptions {
        arms: arms.to_vec(),
        seeds: seeds.to_vec(),
        backend,
        ..EvalOptions::default()
    }
}

#[test]
fn small_tumour_record_stages_t1a() {
    let r = TnmRecord {
        age: 45,
        female: true,
        size_tenths: 8,
        extension: "none",
        zones: Vec::new(),
        metastasis_site: None,
    };
    assert_eq!(r.size_text(), "0.8");
    assert_eq!(stage(&r), ("T1a", "N0", "M0"));

    let mut pack = build_tnm_pack(0, 1);
    let inst = &mut pack.instances[0];
    inst.input = r.render("x");
    inst.gold = vec!["T1aN0M0".into()];
    for (k, v) in [("size", "0.8"), ("extension", "none"), ("nodes", "none"), ("metastasis", "absent")] {
        inst.fields.insert(k.into(), v.into());
    }
    for (k, v) in [("t_stage", "T1a"), ("n_stage", "N0"), ("m_stage", "M0")] {
        inst.fields.insert(k.into(), v.into());
    }
    pack.oracle.hedge_rate = 0.0;
    let (report, records) = run_pack_records(&pack, &options(&[Arm::Full], &[0], EvalBackend::Oracle)).unwrap();
    assert_eq!(records[0].label.as_deref(), Some("T1aN0M0"), "{}", records[0].answer);
    assert!(records[0].answer.contains("Tumour size (cm): 0.8"));
    assert_eq!(report.arms[0].accuracy, Some(100.0));
}

#[test]
fn tnm_runs_are_deterministic() {
    let pack = build_tnm_pack(3, 30);
    let opts = options(&Arm::ALL, &[0, 1], EvalBackend::Oracle);
    let a = run_pack_records(&pack, &opts).unwrap();
    let b = run_pack_records(&pack, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(build_tnm_pack(3, 30).to_json(), pack.to_json());
}

#[test]
fn tnm_full_arm_is_exact_and_wo_rb_hedges_leak() {
    let pack = build_tnm_pack(0, 200);
    let report = run_pack(&pack, &options(&[Arm::Full, Arm::WoRb], &[0, 1, 2], EvalBackend::Oracle)).unwrap();
    let full = report.arm(Arm::Full).unwrap();
    assert_eq!(full.accuracy, Some(100.0));
    assert_eq!(full.validity, 100.0);
    let wo_rb = report.arm(Arm::WoRb).unwrap();
    assert!(wo_rb.validity_per_seed.iter().any(|v| *v < 100.0), "{wo_rb:?}");
}

#[test]
fn full_arm_is_valid_under_noise() {
    let pack = build_tnm_pack(1, 40);
    let report = run_pack(&pack, &options(&[Arm::Full], &[0, 1, 2], EvalBackend::Noise)).unwrap();
    let full = &report.arms[0];
    assert_eq!(full.failed_runs, 0);
    assert_eq!(full.validity, 100.0);
}

/// All "A + B" pairs up to the product's length that rewrite to it, found by
/// enumerating reactant strings rather than by cutting the product.
fn brute_force_disconnections(product: &str) -> Vec<String> {
    let mut found = Vec::new();
    let parts: Vec<&str> = product.split('-').collect();
    let fragment_at = |i: usize| FRAGMENTS.contains(&parts[i]);
    for cut in 1..parts.len() {
        if !fragment_at(cut - 1) {
            continue;
        }
        let left = parts[..cut].join("-");
        for skip in [0usize, 1] {
            let r = cut + skip;
            if r >= parts.len() || (skip == 1 && !LINKERS.contains(&parts[cut])) {
                continue;
            }
            if !fragment_at(r) {
                continue;
            }
            let right = parts[r..].join("-");
            for (la, ra) in [("-COOH", "H2N-"), ("-COOH", "HO-"), ("-OH", "Br-"), ("-Br", "(HO)2B-")] {
                let candidate = format!("{left}{la} + {ra}{right}");
                let linker = match (la, ra) {
                    ("-COOH", "H2N-") => Some("CONH"),
                    ("-COOH", "HO-") => Some("COO"),
                    ("-OH", "Br-") => Some("O"),
                    _ => None,
                };
                let rebuilt = match linker {
                    Some(l) => format!("{left}-{l}-{right}"),
                    None => format!("{left}-{right}"),
                };
                if rebuilt == product && !found.contains(&candidate) {
                    found.push(candidate);
                }
            }
        }
    }
    found
}

fn priority(proposal: &str) -> usize {
    ["H2N-", "HO-", "Br-", "(HO)2B-"]
        .iter()
        .position(|p| proposal.split(" + ").nth(1).is_some_and(|b| b.starts_with(p)))
        .unwrap()
}

#[test]
fn retro_pack_hit_at_1_matches_brute_force_oracle() {
    let pack: TaskPack = build_retro_pack(0, 201);
    for inst in &pack.instances {
        let product = &inst.fields["product"];
        let mut brute = brute_force_disconnections(product);
        let mut mine: Vec<String> = retro::disconnections(product).into_iter().map(|(_, p)| p).collect();
        brute.sort();
        mine.sort();
        assert_eq!(brute, mine, "{product}");
        // Highest priority, leftmost on ties: the stable sort keeps order.
        let mut ordered: Vec<String> = retro::disconnections(product).into_iter().map(|(_, p)| p).collect();
        ordered.sort_by_key(|p| priority(p));
        assert_eq!(inst.gold, vec![ordered[0].clone()]);
    }
    let (report, records) = run_pack_records(&pack, &options(&[Arm::Full], &[0], EvalBackend::Oracle)).unwrap();
    let expected = 100.0
        * pack
            .instances
            .iter()
            .filter(|i| i.gold.contains(&i.fields["p1"]))
            .count() as f64
        / pack.instances.len() as f64;
    let full = &report.arms[0];
    assert_eq!(full.accuracy, Some(expected));
    assert_eq!(full.validity, 100.0);
    assert!(records.iter().all(|r| r.valid));
    assert!((70.0..=90.0).contains(&expected), "{expected}");
}

#[test]
fn formulation_over_limit_total_is_invalid() {
    let pack = build_formulation_pack(0, 1);
    let spec = pack.scorer.validity.clone();
    let v = score_validity("adjusted_ratio = 2.2% binder = 70% curing_fraction = 31%", &spec);
    assert_eq!(v.violations, ["mass fractions exceed 100 (total 103.2)"]);
    assert!(score_validity("adjusted_ratio = 2.5% binder = 70% curing_fraction = 20%", &spec).valid);
    let v = score_validity("adjusted_ratio = 2.6% binder = 70% curing_fraction = 20%", &spec);
    assert_eq!(v.violations, ["`adjusted_ratio` = 2.6 exceeds 2.5"]);
}

#[test]
fn formulation_full_arm_repairs_ratios_that_wo_rm_keeps() {
    let pack = build_formulation_pack(0, 50);
    let report = run_pack(&pack, &options(&[Arm::Full, Arm::WoRm], &[0], EvalBackend::Oracle)).unwrap();
    let full = report.arm(Arm::Full).unwrap();
    let wo_rm = report.arm(Arm::WoRm).unwrap();
    assert_eq!(full.failed_runs, 0);
    assert!(full.validity > wo_rm.validity, "{full:?} {wo_rm:?}");
}

#[test]
fn pack_json_round_trips() {
    let pack = build_tnm_pack(5, 3);
    let back = TaskPack::from_json(&pack.to_json()).unwrap();
    assert_eq!(back.to_json(), pack.to_json());
    assert!(matches!(back.scorer.validity, ValiditySpec::Staging));
    assert_eq!(back.instances.len(), 3);
}
