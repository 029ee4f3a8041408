//! Desk-scale task packs, ablation arms and metrics.

pub mod arms;
pub mod formulation;
pub mod oracle;
pub mod pack;
pub mod retro;
pub mod run;
pub mod score;
pub mod tnm;

use thiserror::Error;

use crate::backend::BackendError;

pub use arms::{strip, Arm, ArmPlan, ArmStripError};
pub use formulation::build_formulation_pack;
pub use oracle::OracleBackend;
pub use pack::{default_vocabulary, Cue, Instance, OracleSpec, Scorer, TaskPack};
pub use retro::build_retro_pack;
pub use run::{answer_text, run_pack, run_pack_records, ArmMetrics, EvalBackend, EvalOptions, MetricsReport, RunRecord};
pub use score::{
    canonical_label, score_exact, score_hit_at_k, score_validity, Accuracy, Validity, ValiditySpec,
};
pub use tnm::build_tnm_pack;

/// Instances in the bundled packs.
pub const TNM_RECORDS: usize = 200;
pub const RETRO_PRODUCTS: usize = 201;
pub const FORMULATION_REQUESTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid pack: {0}")]
    Pack(String),
    #[error("unknown pack `{0}` (expected tnm, retro, formulation or a JSON file)")]
    UnknownPack(String),
    #[error(transparent)]
    Strip(#[from] ArmStripError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
}

/// A bundled pack by name, generated from `seed`.
pub fn builtin_pack(name: &str, seed: u64) -> Result<TaskPack, EvalError> {
    match name {
        "tnm" => Ok(build_tnm_pack(seed, TNM_RECORDS)),
        "retro" => Ok(build_retro_pack(seed, RETRO_PRODUCTS)),
        "formulation" => Ok(build_formulation_pack(seed, FORMULATION_REQUESTS)),
        other => Err(EvalError::UnknownPack(other.to_string())),
    }
}
