//! Cluster topology and gang allocation.
//!
//! GPUs are acquired and released atomically per job (gang semantics).
//! Placement follows best-fit bin packing: a job needing at most one node's
//! worth of GPUs must land on a single node (this is what makes node
//! fragmentation observable), while larger jobs span nodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::job::JobId;

pub const DEFAULT_NODES: u32 = 8;
pub const DEFAULT_GPUS_PER_NODE: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("job {job} requesting {requested} GPUs does not fit ({free_total} free in total)")]
    DoesNotFit {
        job: JobId,
        requested: u32,
        free_total: u32,
    },
    #[error("job {0} has no allocation")]
    UnknownJob(JobId),
    #[error("job {0} is already allocated")]
    AlreadyAllocated(JobId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: u32,
    pub capacity: u32,
    pub free_gpus: u32,
}

/// GPUs a job occupies, as (node_id, gpu_count) pairs.
pub type Allocation = Vec<(u32, u32)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    nodes: Vec<Node>,
    allocations: BTreeMap<JobId, Allocation>,
}

impl ClusterState {
    pub fn new(num_nodes: u32, gpus_per_node: u32) -> Self {
        assert!(num_nodes >= 1 && gpus_per_node >= 1);
        let nodes = (0..num_nodes)
            .map(|node_id| Node {
                node_id,
                capacity: gpus_per_node,
                free_gpus: gpus_per_node,
            })
            .collect();
        Self {
            nodes,
            allocations: BTreeMap::new(),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn gpus_per_node(&self) -> u32 {
        self.nodes[0].capacity
    }

    pub fn total_capacity(&self) -> u32 {
        self.nodes.iter().map(|n| n.capacity).sum()
    }

    pub fn free_total(&self) -> u32 {
        self.nodes.iter().map(|n| n.free_gpus).sum()
    }

    pub fn busy_gpus(&self) -> u32 {
        self.total_capacity() - self.free_total()
    }

    /// Free GPUs sitting on nodes that are partially occupied (neither fully
    /// free nor fully busy). These are the fragments that block single-node
    /// placements despite sufficient aggregate capacity.
    pub fn free_on_partial_nodes(&self) -> u32 {
        self.nodes
            .iter()
            .filter(|n| n.free_gpus > 0 && n.free_gpus < n.capacity)
            .map(|n| n.free_gpus)
            .sum()
    }

    pub fn allocation(&self, job: JobId) -> Option<&Allocation> {
        self.allocations.get(&job)
    }

    pub fn is_allocated(&self, job: JobId) -> bool {
        self.allocations.contains_key(&job)
    }

    pub fn running_jobs(&self) -> impl Iterator<Item = JobId> + '_ {
        self.allocations.keys().copied()
    }

    /// Placement feasibility. Jobs needing at most one node's capacity must
    /// fit on a single node; larger jobs may span nodes and only aggregate
    /// free capacity matters.
    pub fn can_fit(&self, num_gpu: u32) -> bool {
        assert!(num_gpu >= 1, "can_fit requires num_gpu >= 1");
        if num_gpu <= self.gpus_per_node() {
            self.nodes.iter().any(|n| n.free_gpus >= num_gpu)
        } else {
            self.free_total() >= num_gpu
        }
    }

    /// True iff one node can host `num_gpu` GPUs. Used for co-located batch
    /// dispatch, which never spans nodes.
    pub fn can_fit_single_node(&self, num_gpu: u32) -> bool {
        assert!(num_gpu >= 1);
        self.nodes.iter().any(|n| n.free_gpus >= num_gpu)
    }

    /// Acquire `num_gpu` GPUs for `job` atomically.
    ///
    /// Single-node jobs take the best-fit node: the smallest sufficient free
    /// count, ties broken by lowest node id. Spanning jobs consume nodes in
    /// descending free order (whole free nodes first, then the largest
    /// fragment for the remainder), which keeps the leftover free space as
    /// contiguous as possible.
    pub fn allocate(&mut self, job: JobId, num_gpu: u32) -> Result<(), ClusterError> {
        assert!(num_gpu >= 1, "allocate requires num_gpu >= 1");
        if self.allocations.contains_key(&job) {
            return Err(ClusterError::AlreadyAllocated(job));
        }
        if !self.can_fit(num_gpu) {
            return Err(ClusterError::DoesNotFit {
                job,
                requested: num_gpu,
                free_total: self.free_total(),
            });
        }
        let alloc = if num_gpu <= self.gpus_per_node() {
            let best = self
                .nodes
                .iter()
                .filter(|n| n.free_gpus >= num_gpu)
                .min_by_key(|n| (n.free_gpus, n.node_id))
                .expect("can_fit checked")
                .node_id;
            self.nodes[best as usize].free_gpus -= num_gpu;
            vec![(best, num_gpu)]
        } else {
            let mut order: Vec<u32> = self
                .nodes
                .iter()
                .filter(|n| n.free_gpus > 0)
                .map(|n| n.node_id)
                .collect();
            order.sort_by_key(|&id| {
                let n = &self.nodes[id as usize];
                (std::cmp::Reverse(n.free_gpus), n.node_id)
            });
            let mut need = num_gpu;
            let mut alloc = Vec::new();
            for id in order {
                if need == 0 {
                    break;
                }
                let take = self.nodes[id as usize].free_gpus.min(need);
                self.nodes[id as usize].free_gpus -= take;
                alloc.push((id, take));
                need -= take;
            }
            debug_assert_eq!(need, 0);
            alloc
        };
        self.allocations.insert(job, alloc);
        debug_assert!(self.check_invariants().is_ok());
        Ok(())
    }

    /// Acquire GPUs for several jobs at one instant on one shared node.
    /// Either every member is placed or the cluster is left untouched.
    pub fn allocate_batch(&mut self, members: &[(JobId, u32)]) -> Result<(), ClusterError> {
        assert!(!members.is_empty());
        let total: u32 = members.iter().map(|&(_, g)| g).sum();
        for &(job, _) in members {
            if self.allocations.contains_key(&job) {
                return Err(ClusterError::AlreadyAllocated(job));
            }
        }
        let best = self
            .nodes
            .iter()
            .filter(|n| n.free_gpus >= total)
            .min_by_key(|n| (n.free_gpus, n.node_id))
            .map(|n| n.node_id)
            .ok_or(ClusterError::DoesNotFit {
                job: members[0].0,
                requested: total,
                free_total: self.free_total(),
            })?;
        self.nodes[best as usize].free_gpus -= total;
        for &(job, g) in members {
            self.allocations.insert(job, vec![(best, g)]);
        }
        debug_assert!(self.check_invariants().is_ok());
        Ok(())
    }

    /// Return every GPU held by `job` in one step.
    pub fn release(&mut self, job: JobId) -> Result<(), ClusterError> {
        let alloc = self
            .allocations
            .remove(&job)
            .ok_or(ClusterError::UnknownJob(job))?;
        for (node_id, count) in alloc {
            let node = &mut self.nodes[node_id as usize];
            node.free_gpus += count;
            debug_assert!(node.free_gpus <= node.capacity);
        }
        debug_assert!(self.check_invariants().is_ok());
        Ok(())
    }

    /// Verifies conservation: per-node occupied GPUs equal the allocation
    /// entries touching the node, and free counts stay within capacity.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut per_node = vec![0u32; self.nodes.len()];
        for (job, alloc) in &self.allocations {
            if alloc.is_empty() {
                return Err(format!("job {job} has an empty allocation"));
            }
            for &(node_id, count) in alloc {
                if count == 0 {
                    return Err(format!("job {job} holds 0 GPUs on node {node_id}"));
                }
                per_node[node_id as usize] += count;
            }
        }
        for node in &self.nodes {
            if node.free_gpus > node.capacity {
                return Err(format!(
                    "node {} free {} exceeds capacity {}",
                    node.node_id, node.free_gpus, node.capacity
                ));
            }
            let occupied = node.capacity - node.free_gpus;
            if occupied != per_node[node.node_id as usize] {
                return Err(format!(
                    "node {} occupancy {} disagrees with allocations {}",
                    node.node_id, occupied, per_node[node.node_id as usize]
                ));
            }
        }
        Ok(())
    }
}

impl Default for ClusterState {
    fn default() -> Self {
        Self::new(DEFAULT_NODES, DEFAULT_GPUS_PER_NODE)
    }
}
