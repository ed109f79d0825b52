//! Smart batch scheduling: groups same-family jobs whose durations and GPU
//! demands are similar, scores batches by combined efficiency times
//! similarity, and dispatches the best batch to a single node. Falls back to
//! an efficiency-and-size single-job rule when no batch forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::job::Job;

use super::{arrival_order, Policy, SchedulingDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbsParams {
    /// GPU budget for one batch. Batches are co-located on a node, so this
    /// should not exceed the node capacity.
    pub g_max: u32,
    /// Minimum similarity a batch must reach to be considered.
    pub theta: f64,
    /// Durations are divided by this before the variance enters the
    /// similarity score. In raw seconds even small spreads would zero out
    /// every batch.
    pub time_unit_s: f64,
    pub max_batch_size: usize,
    /// Batch formation considers at most this many fitting jobs (shortest
    /// remaining first), mirroring the pairing cap.
    pub candidate_cap: usize,
}

impl Default for SbsParams {
    fn default() -> Self {
        Self {
            g_max: 8,
            theta: 0.5,
            time_unit_s: 3600.0,
            max_batch_size: 4,
            candidate_cap: 64,
        }
    }
}

impl SbsParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.g_max < 1 {
            return Err("sbs.g_max must be >= 1".to_string());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err("sbs.theta must lie in (0, 1]".to_string());
        }
        if !(self.time_unit_s > 0.0) {
            return Err("sbs.time_unit_s must be positive".to_string());
        }
        if self.max_batch_size < 2 {
            return Err("sbs.max_batch_size must be >= 2".to_string());
        }
        if self.candidate_cap < 2 {
            return Err("sbs.candidate_cap must be >= 2".to_string());
        }
        Ok(())
    }
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Similarity of a same-family batch: 1 / (1 + var(t) + var(g)), with
/// remaining times expressed in `time_unit_s` units.
pub fn similarity(batch: &[&Job], time_unit_s: f64) -> f64 {
    assert!(batch.len() >= 2, "similarity needs at least two jobs");
    let family = batch[0].model_family;
    assert!(
        batch.iter().all(|j| j.model_family == family),
        "similarity is defined within one model family"
    );
    let var_t = population_variance(batch.iter().map(|j| j.remaining_s() / time_unit_s));
    let var_g = population_variance(batch.iter().map(|j| j.num_gpu as f64));
    1.0 / (1.0 + var_t + var_g)
}

/// Combined efficiency: total work over the batch's GPU budget held for its
/// longest member. Remaining times in seconds.
pub fn batch_efficiency(batch: &[&Job]) -> f64 {
    assert!(!batch.is_empty());
    let work: f64 = batch.iter().map(|j| j.iterations).sum();
    let gpus: u32 = batch.iter().map(|j| j.num_gpu).sum();
    let t_max = batch
        .iter()
        .map(|j| j.remaining_s())
        .fold(f64::NEG_INFINITY, f64::max);
    work / (gpus as f64 * t_max)
}

pub fn batch_score(batch: &[&Job], time_unit_s: f64) -> f64 {
    batch_efficiency(batch) * similarity(batch, time_unit_s)
}

/// Enumerates candidate batches by seed-and-grow within each model family:
/// every fitting job seeds a batch in arrival order, and each growth step
/// adds the job that maximizes the tentative batch's similarity while the
/// GPU sum stays within `g_max`. Every intermediate size from 2 up to
/// `max_batch_size` is a candidate; batches below `theta` similarity or
/// without a single host node are dropped.
pub fn form_batches<'a>(
    queue: &[&'a Job],
    cluster: &ClusterState,
    p: &SbsParams,
) -> Vec<Vec<&'a Job>> {
    let mut pool: Vec<&Job> = queue
        .iter()
        .copied()
        .filter(|j| cluster.can_fit(j.num_gpu))
        .collect();
    if pool.len() > p.candidate_cap {
        pool.sort_by(|a, b| {
            a.remaining_s()
                .total_cmp(&b.remaining_s())
                .then_with(|| arrival_order(a).partial_cmp(&arrival_order(b)).unwrap())
        });
        pool.truncate(p.candidate_cap);
    }
    pool.sort_by(|a, b| arrival_order(a).partial_cmp(&arrival_order(b)).unwrap());

    let mut families: BTreeMap<u32, Vec<&Job>> = BTreeMap::new();
    for job in pool {
        families.entry(job.model_family).or_default().push(job);
    }

    let mut batches: Vec<Vec<&Job>> = Vec::new();
    let mut seen: Vec<Vec<u32>> = Vec::new();
    for members in families.values() {
        if members.len() < 2 {
            continue;
        }
        for (si, &seed) in members.iter().enumerate() {
            let mut batch = vec![seed];
            let mut gpus = seed.num_gpu;
            while batch.len() < p.max_batch_size {
                let mut grown: Option<(&Job, f64)> = None;
                for (mi, &cand) in members.iter().enumerate() {
                    if mi == si || batch.iter().any(|b| b.id == cand.id) {
                        continue;
                    }
                    if gpus + cand.num_gpu > p.g_max {
                        continue;
                    }
                    let mut tentative = batch.clone();
                    tentative.push(cand);
                    let sim = similarity(&tentative, p.time_unit_s);
                    let better = match grown {
                        None => true,
                        Some((g, s)) => {
                            sim > s
                                || (sim == s
                                    && arrival_order(cand)
                                        .partial_cmp(&arrival_order(g))
                                        .unwrap()
                                        .is_lt())
                        }
                    };
                    if better {
                        grown = Some((cand, sim));
                    }
                }
                let Some((added, _)) = grown else { break };
                batch.push(added);
                gpus += added.num_gpu;

                let mut key: Vec<u32> = batch.iter().map(|j| j.id.0).collect();
                key.sort_unstable();
                if !seen.contains(&key)
                    && similarity(&batch, p.time_unit_s) >= p.theta
                    && cluster.can_fit_single_node(gpus)
                    && gpus <= p.g_max
                {
                    seen.push(key);
                    batches.push(batch.clone());
                }
            }
        }
    }
    batches
}

/// Reduced single-job score for the fallback path: efficiency damped by the
/// same GPU-size penalty the hybrid scheduler uses.
fn fallback_score(job: &Job) -> f64 {
    (job.iterations / (job.num_gpu as f64 * job.duration_s)) / (1.0 + job.num_gpu as f64 / 4.0)
}

pub fn select_sbs(queue: &[&Job], cluster: &ClusterState, p: &SbsParams) -> SchedulingDecision {
    let batches = form_batches(queue, cluster, p);
    if !batches.is_empty() {
        // Argmax by score; ties prefer the larger batch (identical jobs give
        // every subset the same score, and dispatching more of them is the
        // point of batching), then the lexicographically smallest members.
        let mut best: Option<(&Vec<&Job>, f64, Vec<u32>)> = None;
        for b in &batches {
            let score = batch_score(b, p.time_unit_s);
            let mut key: Vec<u32> = b.iter().map(|j| j.id.0).collect();
            key.sort_unstable();
            let better = match &best {
                None => true,
                Some((_, s, k)) => {
                    score > *s
                        || (score == *s
                            && (key.len() > k.len() || (key.len() == k.len() && key < *k)))
                }
            };
            if better {
                best = Some((b, score, key));
            }
        }
        let (batch, _, _) = best.unwrap();
        let mut ids: Vec<_> = batch.iter().map(|j| (arrival_order(j), j.id)).collect();
        ids.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        return SchedulingDecision::SelectBatch(ids.into_iter().map(|(_, id)| id).collect());
    }

    let mut best: Option<(&Job, f64)> = None;
    for &job in queue {
        if !cluster.can_fit(job.num_gpu) {
            continue;
        }
        let score = fallback_score(job);
        let better = match best {
            None => true,
            Some((b, s)) => {
                score > s
                    || (score == s
                        && arrival_order(job).partial_cmp(&arrival_order(b)).unwrap().is_lt())
            }
        };
        if better {
            best = Some((job, score));
        }
    }
    match best {
        Some((job, _)) => SchedulingDecision::Select(job.id),
        None => SchedulingDecision::Hold,
    }
}

pub struct SbsPolicy {
    params: SbsParams,
}

impl SbsPolicy {
    pub fn new(params: SbsParams) -> Self {
        Self { params }
    }
}

impl Policy for SbsPolicy {
    fn name(&self) -> &str {
        "sbs"
    }

    fn select(&self, queue: &[&Job], cluster: &ClusterState, _now_s: f64) -> SchedulingDecision {
        select_sbs(queue, cluster, &self.params)
    }
}
