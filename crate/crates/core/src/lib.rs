//! Deterministic discrete-event simulation of a multi-tenant GPU cluster.
//!
//! The crate models an 8-node, 64-GPU cluster serving a mixed stream of
//! inference/training/research jobs, and evaluates seven scheduling policies
//! on identical workloads: four single-objective baselines (arrival order,
//! fewest GPUs, shortest remaining time, smallest GPU-time product) and three
//! multi-objective schedulers (hybrid priority with aging, predictive
//! backfill with pairing, similarity-gated smart batching).
//!
//! Everything is deterministic: workloads are generated from a seed, the
//! event queue has a total order, and a (workload, config) pair always
//! produces the same trace and metrics report.

pub mod cluster;
pub mod engine;
pub mod job;
pub mod metrics;
pub mod policies;
pub mod workload;

pub use cluster::{ClusterError, ClusterState, Node};
pub use engine::{run, EngineError, RunTrace, Sample, SimConfig, SimEvent};
pub use job::{Job, JobId, JobState, JobType};
pub use metrics::{compute_report, wait_variance, MetricsReport};
pub use policies::{
    build_policy, PairGpuTimeMode, PbsParams, Policy, PolicyConfig, SbsParams,
    SchedulingDecision, StaticPolicyKind, SCHEDULER_NAMES,
};
pub use policies::hps::HpsParams;
pub use workload::{
    generate, read_workload, validate_distribution, write_workload, DistributionReport,
    MarginalCheck, WorkloadError, WorkloadFile, WorkloadSpec,
};
