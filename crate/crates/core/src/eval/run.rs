//! Runs a pack over arms and seeds and aggregates the metrics.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arms::{strip, Arm, ArmPlan};
use super::oracle::OracleBackend;
use super::pack::{Instance, TaskPack};
use super::score::{
    canonical_label, retro_proposals, score_exact, score_hit_at_k, score_validity, Accuracy,
};
use super::EvalError;
use crate::backend::{DecoderBackend, GenParams, MockBackend, MockScript, RemoteBackend, RemoteConfig};
use crate::engine::{run_with, AutomatonCache, Event, RunOptions, RunResult, Termination};
use crate::token::Vocabulary;

pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalBackend {
    /// Mock that follows each instance's record (see `OracleBackend`).
    Oracle,
    /// Uniform random scores, seeded per instance and seed.
    Noise,
    Remote { config: RemoteConfig },
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub backend: EvalBackend,
    /// Overrides the pack vocabulary, e.g. to match a remote server.
    pub vocab: Option<Arc<Vocabulary>>,
    pub default_temperature: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            arms: Arm::ALL.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            backend: EvalBackend::Oracle,
            vocab: None,
            default_temperature: 0.0,
        }
    }
}

/// One (arm, seed, instance) run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub arm: Arm,
    pub seed: u64,
    pub instance: String,
    /// The scored text: output plus any fallback-assigned values.
    pub answer: String,
    pub valid: bool,
    pub violations: Vec<String>,
    pub label: Option<String>,
    pub proposals: Vec<String>,
    pub regenerations: u64,
    pub output_tokens: u64,
    pub discarded_tokens: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub arm: Arm,
    pub validity: f64,
    pub validity_per_seed: Vec<f64>,
    /// "exact_match" or "hit@k".
    pub accuracy_metric: Option<String>,
    pub accuracy: Option<f64>,
    pub accuracy_per_seed: Vec<f64>,
    /// Hit@1 alongside hit@k for k > 1.
    pub hit_at_1: Option<f64>,
    pub mean_regenerations: f64,
    pub mean_output_tokens: f64,
    pub mean_discarded_tokens: f64,
    /// Runs that ended in an error or abort.
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pack: String,
    pub instances: usize,
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn arm(&self, arm: Arm) -> Option<&ArmMetrics> {
        self.arms.iter().find(|m| m.arm == arm)
    }
}

/// Text scored for an engine run: the output, then `name = value` for each
/// variable a fallback assigned, since the bindings hold the final answer.
pub fn answer_text(result: &RunResult) -> String {
    let mut out = result.output.clone();
    if result.termination != Termination::FallbackCompleted {
        return out;
    }
    let mut seen: Vec<&str> = Vec::new();
    for e in &result.trace.events {
        if let Event::FallbackApplied { variable, .. } = e {
            if !seen.contains(&variable.as_str()) {
                seen.push(variable);
                if let Some(v) = result.bindings.get(variable) {
                    out.push_str(&format!("\n{variable} = {v}"));
                }
            }
        }
    }
    out
}

fn instance_seed(seed: u64, instance: &Instance) -> u64 {
    let digest = Sha256::digest(instance.id.as_bytes());
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn make_backend(
    kind: &EvalBackend,
    pack: &TaskPack,
    instance: &Instance,
    seed: u64,
    vocab: &Arc<Vocabulary>,
) -> Result<Box<dyn DecoderBackend>, EvalError> {
    Ok(match kind {
        EvalBackend::Oracle => Box::new(OracleBackend::new(vocab.clone(), &pack.oracle, instance, seed)),
        EvalBackend::Noise => Box::new(MockBackend::new(
            vocab.clone(),
            &MockScript::noise(instance_seed(seed, instance)),
        )),
        EvalBackend::Remote { config } => Box::new(RemoteBackend::new(config.clone(), vocab.clone())?),
    })
}

pub fn run_pack(pack: &TaskPack, options: &EvalOptions) -> Result<MetricsReport, EvalError> {
    run_pack_records(pack, options).map(|(report, _)| report)
}

/// Like [`run_pack`], also returning every run in (arm, seed, instance)
/// order.
pub fn run_pack_records(
    pack: &TaskPack,
    options: &EvalOptions,
) -> Result<(MetricsReport, Vec<RunRecord>), EvalError> {
    if pack.instances.is_empty() {
        return Err(EvalError::Pack("pack has no instances".into()));
    }
    if options.seeds.is_empty() || options.arms.is_empty() {
        return Err(EvalError::Pack("need at least one arm and one seed".into()));
    }
    let vocab = match &options.vocab {
        Some(v) => v.clone(),
        None => pack.vocabulary()?,
    };
    let programs = pack
        .instances
        .iter()
        .map(|i| pack.program_for(i))
        .collect::<Result<Vec<_>, _>>()?;
    // plans[arm][instance]
    let plans = options
        .arms
        .iter()
        .map(|&arm| programs.iter().map(|p| strip(p, arm)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;

    let cache = Arc::new(AutomatonCache::new());
    let run_options = RunOptions {
        default_temperature: options.default_temperature,
        cache: Some(cache),
    };
    let jobs: Vec<(usize, u64, usize)> = (0..options.arms.len())
        .flat_map(|a| {
            options
                .seeds
                .iter()
                .flat_map(move |&s| (0..pack.instances.len()).map(move |i| (a, s, i)))
        })
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(a, seed, i)| {
            let instance = &pack.instances[i];
            let mut backend = make_backend(&options.backend, pack, instance, seed, &vocab)?;
            Ok(run_one(
                pack,
                instance,
                options.arms[a],
                seed,
                &plans[a][i],
                backend.as_mut(),
                &run_options,
            ))
        })
        .collect::<Result<Vec<RunRecord>, EvalError>>()?;

    let arms = options
        .arms
        .iter()
        .map(|&arm| aggregate(pack, arm, &options.seeds, &records))
        .collect();
    let report = MetricsReport {
        pack: pack.id.clone(),
        instances: pack.instances.len(),
        seeds: options.seeds.clone(),
        arms,
    };
    Ok((report, records))
}

fn run_one(
    pack: &TaskPack,
    instance: &Instance,
    arm: Arm,
    seed: u64,
    plan: &ArmPlan,
    backend: &mut dyn DecoderBackend,
    options: &RunOptions,
) -> RunRecord {
    let base = pack.prompt_for(instance);
    let mut record = RunRecord {
        arm,
        seed,
        instance: instance.id.clone(),
        answer: String::new(),
        valid: false,
        violations: Vec::new(),
        label: None,
        proposals: Vec::new(),
        regenerations: 0,
        output_tokens: 0,
        discarded_tokens: 0,
        error: None,
    };
    match plan {
        ArmPlan::Engine { program, prompt_suffix } => {
            let prompt = format!("{base}{prompt_suffix}");
            match run_with(program, backend, &prompt, seed, options) {
                Ok(result) => {
                    record.answer = answer_text(&result);
                    let c = &result.trace.counters;
                    record.regenerations = c.regenerations;
                    record.output_tokens = c.output_tokens;
                    record.discarded_tokens = c.tokens_discarded;
                    if let Termination::Aborted(reason) = &result.termination {
                        record.error = Some(format!("aborted: {reason}"));
                    }
                }
                Err(e) => record.error = Some(e.to_string()),
            }
        }
        ArmPlan::Unconstrained {
            prompt_suffix,
            max_tokens,
        } => {
            let prompt = format!("{base}{prompt_suffix}");
            let params = GenParams {
                max_tokens: *max_tokens,
                temperature: options.default_temperature,
                stop: None,
            };
            match backend.generate_unconstrained(&prompt, &params) {
                Ok(text) => {
                    record.output_tokens = backend
                        .vocab()
                        .tokenize_ordinary(text.as_bytes())
                        .map_or(0, |t| t.len() as u64);
                    record.answer = text;
                }
                Err(e) => record.error = Some(e.to_string()),
            }
        }
    }
    let spec = pack.scorer.validity.for_instance(instance);
    let validity = score_validity(&record.answer, &spec);
    record.valid = validity.valid;
    record.violations = validity.violations;
    record.label = canonical_label(&record.answer, &spec);
    record.proposals = retro_proposals(&record.answer);
    record
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn aggregate(pack: &TaskPack, arm: Arm, seeds: &[u64], records: &[RunRecord]) -> ArmMetrics {
    let mine: Vec<&RunRecord> = records.iter().filter(|r| r.arm == arm).collect();
    let by_seed = |seed: u64| -> Vec<&RunRecord> { mine.iter().copied().filter(|r| r.seed == seed).collect() };
    let gold: Vec<Vec<String>> = pack.instances.iter().map(|i| i.gold.clone()).collect();

    let validity_per_seed: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            let rs = by_seed(s);
            100.0 * rs.iter().filter(|r| r.valid).count() as f64 / rs.len().max(1) as f64
        })
        .collect();
    let hit = |rs: &[&RunRecord], k: usize| {
        let props: Vec<Vec<String>> = rs.iter().map(|r| r.proposals.clone()).collect();
        score_hit_at_k(&props, &gold, k)
    };
    let (accuracy_metric, accuracy_per_seed, hit_at_1) = match pack.scorer.accuracy {
        None => (None, Vec::new(), None),
        Some(Accuracy::ExactMatch) => {
            let per: Vec<f64> = seeds
                .iter()
                .map(|&s| {
                    let labels: Vec<Option<String>> = by_seed(s).iter().map(|r| r.label.clone()).collect();
                    score_exact(&labels, &gold)
                })
                .collect();
            (Some("exact_match".to_string()), per, None)
        }
        Some(Accuracy::HitAtK { k }) => {
            let per: Vec<f64> = seeds.iter().map(|&s| hit(&by_seed(s), k)).collect();
            let h1 = mean(seeds.iter().map(|&s| hit(&by_seed(s), 1)));
            (Some(format!("hit@{k}")), per, Some(h1))
        }
    };
    ArmMetrics {
        arm,
        validity: mean(validity_per_seed.iter().copied()),
        validity_per_seed,
        accuracy: accuracy_metric.as_ref().map(|_| mean(accuracy_per_seed.iter().copied())),
        accuracy_metric,
        accuracy_per_seed,
        hit_at_1,
        mean_regenerations: mean(mine.iter().map(|r| r.regenerations as f64)),
        mean_output_tokens: mean(mine.iter().map(|r| r.output_tokens as f64)),
        mean_discarded_tokens: mean(mine.iter().map(|r| r.discarded_tokens as f64)),
        failed_runs: mine.iter().filter(|r| r.error.is_some()).count(),
    }
}
