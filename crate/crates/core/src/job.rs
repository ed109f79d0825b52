//! Job descriptions and lifecycle state.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a job within one workload. Ids are dense: `0..num_jobs`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct JobId(pub u32);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl JobId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobType {
    Inference,
    Training,
    Research,
}

/// Lifecycle of a job. Legal transitions are Queued -> Running -> Completed,
/// plus Queued/Running -> Failed when the simulation horizon cuts a run off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JobState {
    #[default]
    Queued,
    Running,
    Completed,
    Failed,
}

/// One unit of work. The first seven fields are the canonical workload-file
/// record (serialized in this order); the lifecycle fields exist only at
/// simulation time and never reach the workload format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    /// Seconds since the simulation epoch, >= 0.
    pub arrival_s: f64,
    #[serde(rename = "type")]
    pub job_type: JobType,
    pub num_gpu: u32,
    /// Execution time once started, > 0.
    pub duration_s: f64,
    /// Total work units the job performs over its lifetime.
    pub iterations: f64,
    /// Grouping label used by similarity-based batching.
    pub model_family: u32,
    #[serde(skip)]
    pub state: JobState,
    #[serde(skip)]
    pub start_s: Option<f64>,
    #[serde(skip)]
    pub end_s: Option<f64>,
}

impl Job {
    /// Time spent in the queue as of `now_s`. Only meaningful before start.
    pub fn wait_at(&self, now_s: f64) -> f64 {
        (now_s - self.arrival_s).max(0.0)
    }

    /// Remaining execution time. Jobs never run partially in this model, so
    /// a queued job's remaining time is its full duration.
    pub fn remaining_s(&self) -> f64 {
        self.duration_s
    }
}
