//! Single-objective baseline policies.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::job::Job;

use super::{arrival_order, Policy, SchedulingDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticPolicyKind {
    /// Strict arrival order. Holds whenever the head does not fit, so a
    /// large head blocks everything behind it.
    Fifo,
    /// Minimum GPU demand among fitting jobs.
    FewestGpu,
    /// Minimum remaining time among fitting jobs. Remaining time equals the
    /// full duration for queued jobs; nothing runs partially here.
    ShortestRemaining,
    /// Minimum num_gpu * duration among fitting jobs.
    GpuTimeProduct,
}

impl StaticPolicyKind {
    pub fn cli_name(self) -> &'static str {
        match self {
            StaticPolicyKind::Fifo => "fifo",
            StaticPolicyKind::FewestGpu => "sjf",
            StaticPolicyKind::ShortestRemaining => "shortest",
            StaticPolicyKind::GpuTimeProduct => "shortest-gpu",
        }
    }
}

/// Picks the minimum-key fitting job; ties go to earlier arrival, then id.
fn argmin_fitting<'a, K, F>(queue: &[&'a Job], cluster: &ClusterState, key: F) -> Option<&'a Job>
where
    K: PartialOrd,
    F: Fn(&Job) -> K,
{
    let mut best: Option<&Job> = None;
    for &job in queue {
        if !cluster.can_fit(job.num_gpu) {
            continue;
        }
        match best {
            None => best = Some(job),
            Some(b) => {
                let (kj, kb) = (key(job), key(b));
                if kj < kb || (kj == kb && arrival_order(job) < arrival_order(b)) {
                    best = Some(job);
                }
            }
        }
    }
    best
}

pub fn select_static(
    kind: StaticPolicyKind,
    queue: &[&Job],
    cluster: &ClusterState,
) -> SchedulingDecision {
    if queue.is_empty() {
        return SchedulingDecision::Hold;
    }
    let picked = match kind {
        StaticPolicyKind::Fifo => {
            let head = queue
                .iter()
                .min_by(|a, b| arrival_order(a).partial_cmp(&arrival_order(b)).unwrap())
                .copied()
                .unwrap();
            if cluster.can_fit(head.num_gpu) {
                Some(head)
            } else {
                None
            }
        }
        StaticPolicyKind::FewestGpu => argmin_fitting(queue, cluster, |j| j.num_gpu),
        StaticPolicyKind::ShortestRemaining => argmin_fitting(queue, cluster, |j| j.remaining_s()),
        StaticPolicyKind::GpuTimeProduct => {
            argmin_fitting(queue, cluster, |j| j.num_gpu as f64 * j.remaining_s())
        }
    };
    match picked {
        Some(job) => SchedulingDecision::Select(job.id),
        None => SchedulingDecision::Hold,
    }
}

pub struct StaticPolicy {
    kind: StaticPolicyKind,
}

impl StaticPolicy {
    pub fn new(kind: StaticPolicyKind) -> Self {
        Self { kind }
    }
}

impl Policy for StaticPolicy {
    fn name(&self) -> &str {
        self.kind.cli_name()
    }

    fn select(&self, queue: &[&Job], cluster: &ClusterState, _now_s: f64) -> SchedulingDecision {
        select_static(self.kind, queue, cluster)
    }
}
