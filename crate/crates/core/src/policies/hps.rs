//! Hybrid priority scheduling: multiplicative efficiency/aging/size scoring
//! with a reservation rule that keeps long-waiting large jobs from starving.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::job::Job;

use super::{arrival_order, Policy, SchedulingDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpsParams {
    /// Wait beyond which the aging term replaces the neutral 1.0.
    pub aging_threshold_s: f64,
    /// Upper bound on the aging multiplier.
    pub aging_boost: f64,
    /// Wait at which aging saturates; also the reservation trigger.
    pub max_wait_s: f64,
    /// The aging term as written dips below 1.0 for waits just past the
    /// threshold (boost * wait/max_wait < 1 until wait = max_wait/boost).
    /// Setting this floors the term at 1.0 instead.
    pub clamp_aging_to_one: bool,
}

impl Default for HpsParams {
    fn default() -> Self {
        Self {
            aging_threshold_s: 300.0,
            aging_boost: 2.0,
            max_wait_s: 1800.0,
            clamp_aging_to_one: false,
        }
    }
}

impl HpsParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.aging_threshold_s > 0.0 && self.aging_boost > 0.0 && self.max_wait_s > 0.0) {
            return Err("hps parameters must be strictly positive".to_string());
        }
        if self.aging_threshold_s >= self.max_wait_s {
            return Err("hps.aging_threshold_s must be < hps.max_wait_s".to_string());
        }
        Ok(())
    }
}

/// Smoothed inverse-time preference for short jobs: 1 / (1 + remaining/3600).
pub fn base_score(remaining_s: f64) -> f64 {
    assert!(remaining_s >= 0.0, "remaining time must be >= 0");
    1.0 / (1.0 + remaining_s / 3600.0)
}

/// Aging term: 1.0 up to the threshold, then boost * min(wait/max_wait, 1).
pub fn aging_score(wait_s: f64, p: &HpsParams) -> f64 {
    let raw = if wait_s > p.aging_threshold_s {
        p.aging_boost * (wait_s / p.max_wait_s).min(1.0)
    } else {
        1.0
    };
    if p.clamp_aging_to_one {
        raw.max(1.0)
    } else {
        raw
    }
}

/// Size penalty that discourages allocating large GPU blocks: 1/(1 + g/4).
pub fn gpu_penalty(num_gpu: u32) -> f64 {
    assert!(num_gpu >= 1);
    1.0 / (1.0 + num_gpu as f64 / 4.0)
}

pub fn hps_score(job: &Job, now_s: f64, p: &HpsParams) -> f64 {
    base_score(job.remaining_s()) * aging_score(job.wait_at(now_s), p) * gpu_penalty(job.num_gpu)
}

/// Scores every queued job and walks candidates best-first. A non-fitting
/// top candidate that has waited past `max_wait_s` reserves capacity: the
/// policy holds so nothing can overtake it, and the job dispatches the
/// first time it fits.
pub fn select_hps(
    queue: &[&Job],
    cluster: &ClusterState,
    now_s: f64,
    p: &HpsParams,
) -> SchedulingDecision {
    let mut ranked: Vec<(&Job, f64)> = queue.iter().map(|&j| (j, hps_score(j, now_s, p))).collect();
    ranked.sort_by(|(ja, sa), (jb, sb)| {
        sb.total_cmp(sa)
            .then_with(|| arrival_order(ja).partial_cmp(&arrival_order(jb)).unwrap())
    });
    for (job, _) in ranked {
        if cluster.can_fit(job.num_gpu) {
            return SchedulingDecision::Select(job.id);
        }
        if job.wait_at(now_s) >= p.max_wait_s {
            return SchedulingDecision::Hold;
        }
    }
    SchedulingDecision::Hold
}

pub struct HpsPolicy {
    params: HpsParams,
}

impl HpsPolicy {
    pub fn new(params: HpsParams) -> Self {
        Self { params }
    }
}

impl Policy for HpsPolicy {
    fn name(&self) -> &str {
        "hps"
    }

    fn select(&self, queue: &[&Job], cluster: &ClusterState, now_s: f64) -> SchedulingDecision {
        select_hps(queue, cluster, now_s, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::job::{JobId, JobState, JobType};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn job(id: u32, arrival_s: f64, num_gpu: u32, duration_s: f64) -> Job {
        Job {
            id: JobId(id),
            arrival_s,
            job_type: JobType::Training,
            num_gpu,
            duration_s,
            iterations: duration_s,
            model_family: 0,
            state: JobState::Queued,
            start_s: None,
            end_s: None,
        }
    }

    #[test]
    fn base_score_reference_points() {
        assert_abs_diff_eq!(base_score(0.0), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(base_score(3600.0), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(base_score(10800.0), 0.25, epsilon = 1e-9);
    }

    #[test]
    fn aging_score_reference_points() {
        let p = HpsParams::default();
        assert_abs_diff_eq!(aging_score(100.0, &p), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(aging_score(1800.0, &p), 2.0, epsilon = 1e-9);
        // As written, the term dips below 1.0 just past the threshold.
        assert_abs_diff_eq!(aging_score(600.0, &p), 2.0 / 3.0, epsilon = 1e-9);
        let clamped = HpsParams {
            clamp_aging_to_one: true,
            ..HpsParams::default()
        };
        assert_abs_diff_eq!(aging_score(600.0, &clamped), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(aging_score(1800.0, &clamped), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn gpu_penalty_reference_points() {
        assert_abs_diff_eq!(gpu_penalty(4), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(gpu_penalty(1), 0.8, epsilon = 1e-9);
        assert_abs_diff_eq!(gpu_penalty(16), 0.2, epsilon = 1e-9);
    }

    #[test]
    fn composite_score_reference_points() {
        let p = HpsParams::default();
        let j = job(0, 0.0, 4, 3600.0);
        assert_abs_diff_eq!(hps_score(&j, 0.0, &p), 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(hps_score(&j, 1800.0, &p), 0.5, epsilon = 1e-9);
        let tiny = job(1, 0.0, 1, 0.0);
        assert_abs_diff_eq!(hps_score(&tiny, 0.0, &p), 0.8, epsilon = 1e-9);
    }

    #[test]
    fn select_takes_global_argmax() {
        let p = HpsParams::default();
        let cluster = ClusterState::default();
        let a = job(0, 0.0, 4, 3600.0); // score 0.25 at wait 0
        let b = job(1, 0.0, 1, 900.0); // score 0.8 * 0.8 = 0.64
        let refs = vec![&a, &b];
        assert_eq!(
            select_hps(&refs, &cluster, 0.0, &p),
            SchedulingDecision::Select(JobId(1))
        );
    }

    #[test]
    fn starved_top_job_reserves_capacity() {
        let p = HpsParams::default();
        let mut cluster = ClusterState::default();
        for n in 0..6u32 {
            cluster.allocate(JobId(100 + n), 8).unwrap();
        }
        // 16 GPUs free, spread over two nodes. The 32-GPU job cannot fit.
        // The competing job is long and mid-sized so the aged big job stays
        // on top of the score ranking.
        let big = job(0, 0.0, 32, 600.0);
        let other = job(1, 1900.0, 8, 86000.0);
        let refs = vec![&big, &other];
        assert_eq!(
            select_hps(&refs, &cluster, 2000.0, &p),
            SchedulingDecision::Hold
        );
        // Below max_wait the policy skips to the next fitting candidate.
        assert_eq!(
            select_hps(&refs, &cluster, 1000.0, &p),
            SchedulingDecision::Select(JobId(1))
        );
    }

    #[test]
    fn skips_unfit_young_top_job() {
        let p = HpsParams::default();
        let mut cluster = ClusterState::default();
        for n in 0..7u32 {
            cluster.allocate(JobId(100 + n), 8).unwrap();
        }
        // 8 GPUs free on one node.
        let top = job(0, 0.0, 16, 300.0); // does not fit, wait 100 < max_wait
        let second = job(1, 0.0, 2, 3600.0);
        let refs = vec![&top, &second];
        assert_eq!(
            select_hps(&refs, &cluster, 100.0, &p),
            SchedulingDecision::Select(JobId(1))
        );
    }

    proptest! {
        #[test]
        fn prop_score_monotone_in_remaining_and_size(
            rem in 0.0f64..90000.0,
            extra in 1.0f64..5000.0,
            g in 1u32..32,
        ) {
            prop_assert!(base_score(rem + extra) < base_score(rem));
            prop_assert!(gpu_penalty(g + 1) < gpu_penalty(g));
        }

        /// Past max(threshold, max_wait/boost) the score never decreases with
        /// wait, and saturates at max_wait.
        #[test]
        fn prop_aging_monotone_past_dip(w1 in 900.0f64..5000.0, w2 in 900.0f64..5000.0) {
            let p = HpsParams::default();
            let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
            prop_assert!(aging_score(lo, &p) <= aging_score(hi, &p) + 1e-12);
            prop_assert_eq!(aging_score(p.max_wait_s + 1.0, &p), p.aging_boost);
            prop_assert_eq!(aging_score(p.max_wait_s * 3.0, &p), p.aging_boost);
        }

        /// The multiplicative score stays within (0, boost * 0.8].
        #[test]
        fn prop_score_bounded(
            rem in 0.0f64..90000.0,
            wait in 0.0f64..90000.0,
            g in 1u32..=32,
        ) {
            let p = HpsParams::default();
            let mut j = job(0, 0.0, g, rem);
            j.arrival_s = 0.0;
            let s = hps_score(&j, wait, &p);
            prop_assert!(s > 0.0);
            prop_assert!(s <= p.aging_boost * 0.8 + 1e-12);
        }
    }
}
