//! Scheduling policies and their shared interface.
//!
//! A policy inspects a snapshot of the ready queue (in arrival order) and
//! the cluster, and returns one decision. The engine applies it and asks
//! again until the policy holds or the queue empties. All policies are
//! stateless pure functions of (queue, cluster, now).

pub mod baseline;
pub mod hps;
pub mod pbs;
pub mod sbs;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::job::{Job, JobId};

pub use baseline::{select_static, StaticPolicyKind};
pub use hps::HpsParams;
pub use pbs::{PairGpuTimeMode, PbsParams};
pub use sbs::SbsParams;

/// A policy's answer to "what should run next".
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulingDecision {
    /// Start this job now.
    Select(JobId),
    /// Start all these jobs now, co-located on one node.
    SelectBatch(Vec<JobId>),
    /// Block dispatch until the next event.
    Hold,
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// `queue` is sorted by (arrival, id). Selected ids must come from it,
    /// and any selected job or batch must fit the cluster as primed by
    /// `ClusterState::can_fit` / single-node batch placement.
    fn select(&self, queue: &[&Job], cluster: &ClusterState, now_s: f64) -> SchedulingDecision;
}

/// CLI-facing scheduler names, in roster order (baselines, then dynamic).
pub const SCHEDULER_NAMES: [&str; 7] = [
    "fifo",
    "sjf",
    "shortest",
    "shortest-gpu",
    "hps",
    "pbs",
    "sbs",
];

/// Resolved parameters for every parameterized policy. Embedded verbatim in
/// reports so a run is reproducible from its output alone.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hps: HpsParams,
    pub pbs: PbsParams,
    pub sbs: SbsParams,
}

impl PolicyConfig {
    /// Applies one `section.key=value` override, e.g. `hps.aging_boost=3.0`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format!("expected a number for {key}, got {v:?}"))
        };
        let parse_u32 = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| format!("expected an integer for {key}, got {v:?}"))
        };
        let parse_bool = |v: &str| {
            v.parse::<bool>()
                .map_err(|_| format!("expected true/false for {key}, got {v:?}"))
        };
        match key {
            "hps.aging_threshold_s" => self.hps.aging_threshold_s = parse_f64(value)?,
            "hps.aging_boost" => self.hps.aging_boost = parse_f64(value)?,
            "hps.max_wait_s" => self.hps.max_wait_s = parse_f64(value)?,
            "hps.clamp_aging_to_one" => self.hps.clamp_aging_to_one = parse_bool(value)?,
            "pbs.tau" => self.pbs.tau = parse_f64(value)?,
            "pbs.gamma_gpus" => self.pbs.gamma_gpus = parse_u32(value)?,
            "pbs.medium_T_s" | "pbs.medium_t_s" => self.pbs.medium_t_s = parse_f64(value)?,
            "pbs.pair_delta" => self.pbs.pair_delta = parse_f64(value)?,
            "pbs.pairing_enabled" => self.pbs.pairing_enabled = parse_bool(value)?,
            "pbs.pair_gpu_time_mode" => {
                self.pbs.pair_gpu_time_mode = match value {
                    "sum" => PairGpuTimeMode::Sum,
                    "combined-max" => PairGpuTimeMode::CombinedMax,
                    other => {
                        return Err(format!(
                            "unknown pair_gpu_time_mode {other:?} (expected sum | combined-max)"
                        ))
                    }
                }
            }
            "pbs.candidate_cap" => self.pbs.candidate_cap = parse_u32(value)? as usize,
            "sbs.g_max" => self.sbs.g_max = parse_u32(value)?,
            "sbs.theta" => self.sbs.theta = parse_f64(value)?,
            "sbs.time_unit_s" => self.sbs.time_unit_s = parse_f64(value)?,
            "sbs.max_batch_size" => self.sbs.max_batch_size = parse_u32(value)? as usize,
            "sbs.candidate_cap" => self.sbs.candidate_cap = parse_u32(value)? as usize,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.hps.validate()?;
        self.pbs.validate()?;
        self.sbs.validate()?;
        Ok(())
    }
}

/// Builds a policy from its CLI name. The baseline names follow the common
/// cluster-scheduling vocabulary: `sjf` selects by fewest GPUs, `shortest`
/// by smallest remaining time, `shortest-gpu` by smallest GPU-time product.
pub fn build_policy(name: &str, cfg: &PolicyConfig) -> Result<Box<dyn Policy>, String> {
    cfg.validate()?;
    let policy: Box<dyn Policy> = match name {
        "fifo" => Box::new(baseline::StaticPolicy::new(StaticPolicyKind::Fifo)),
        "sjf" => Box::new(baseline::StaticPolicy::new(StaticPolicyKind::FewestGpu)),
        "shortest" => Box::new(baseline::StaticPolicy::new(
            StaticPolicyKind::ShortestRemaining,
        )),
        "shortest-gpu" => Box::new(baseline::StaticPolicy::new(
            StaticPolicyKind::GpuTimeProduct,
        )),
        "hps" => Box::new(hps::HpsPolicy::new(cfg.hps.clone())),
        "pbs" => Box::new(pbs::PbsPolicy::new(cfg.pbs.clone())),
        "sbs" => Box::new(sbs::SbsPolicy::new(cfg.sbs.clone())),
        other => {
            return Err(format!(
                "unknown scheduler {other:?}; valid names: {}",
                SCHEDULER_NAMES.join(", ")
            ))
        }
    };
    Ok(policy)
}

/// Tie-break helper: orders candidate jobs by (arrival, id).
pub(crate) fn arrival_order(job: &Job) -> (f64, JobId) {
    (job.arrival_s, job.id)
}
