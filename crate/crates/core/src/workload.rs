//! Seeded synthetic workload generation and the canonical workload file.
//!
//! Jobs are sampled independently from categorical marginals (type, GPU
//! count, duration band) with exponential interarrival gaps. The same
//! (spec, seed) always produces the same file.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::job::{Job, JobId, JobState, JobType};

/// Duration band edges in seconds, closed-open.
pub const SHORT_RANGE_S: (f64, f64) = (300.0, 1800.0);
pub const MEDIUM_RANGE_S: (f64, f64) = (1800.0, 7200.0);
pub const LONG_RANGE_S: (f64, f64) = (7200.0, 28800.0);
pub const VERY_LONG_RANGE_S: (f64, f64) = (28800.0, 86400.0);

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
    #[error("invalid workload file: {0}")]
    InvalidFile(String),
    #[error("failed to read/write workload: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse workload: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypeMix {
    pub inference: f64,
    pub training: f64,
    pub research: f64,
}

impl Default for TypeMix {
    fn default() -> Self {
        Self {
            inference: 0.50,
            training: 0.30,
            research: 0.20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpuMix {
    #[serde(rename = "1")]
    pub one: f64,
    #[serde(rename = "2")]
    pub two: f64,
    #[serde(rename = "4")]
    pub four: f64,
    #[serde(rename = "8")]
    pub eight: f64,
    /// Sampled uniformly from {16, 32}.
    #[serde(rename = "16+")]
    pub sixteen_plus: f64,
}

impl Default for GpuMix {
    fn default() -> Self {
        Self {
            one: 0.35,
            two: 0.25,
            four: 0.20,
            eight: 0.15,
            sixteen_plus: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DurationMix {
    pub short: f64,
    pub medium: f64,
    pub long: f64,
    pub very_long: f64,
}

impl Default for DurationMix {
    fn default() -> Self {
        Self {
            short: 0.40,
            medium: 0.35,
            long: 0.20,
            very_long: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub num_jobs: u32,
    pub seed: u64,
    pub mean_interarrival_s: f64,
    pub type_mix: TypeMix,
    pub gpu_mix: GpuMix,
    pub duration_mix: DurationMix,
    pub family_count: u32,
    /// Per-job work density: iterations = duration * U[lo, hi).
    pub throughput_factor_range: (f64, f64),
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            num_jobs: 1000,
            seed: 42,
            mean_interarrival_s: 120.0,
            type_mix: TypeMix::default(),
            gpu_mix: GpuMix::default(),
            duration_mix: DurationMix::default(),
            family_count: 10,
            throughput_factor_range: (0.5, 2.0),
        }
    }
}

const MIX_SUM_TOLERANCE: f64 = 1e-9;

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mut errs = Vec::new();
        if self.num_jobs < 1 {
            errs.push("num_jobs must be >= 1".to_string());
        }
        if !(self.mean_interarrival_s > 0.0) {
            errs.push("mean_interarrival_s must be positive".to_string());
        }
        if self.family_count < 1 {
            errs.push("family_count must be >= 1".to_string());
        }
        let (lo, hi) = self.throughput_factor_range;
        if !(lo > 0.0 && hi >= lo) {
            errs.push("throughput_factor_range must satisfy 0 < lo <= hi".to_string());
        }
        for (name, weights) in [
            ("type_mix", self.type_weights().to_vec()),
            ("gpu_mix", self.gpu_weights().to_vec()),
            ("duration_mix", self.duration_weights().to_vec()),
        ] {
            if weights.iter().any(|&w| w < 0.0) {
                errs.push(format!("{name} has a negative entry"));
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > MIX_SUM_TOLERANCE {
                errs.push(format!("{name} sums to {sum}, expected 1.0"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(WorkloadError::InvalidSpec(errs))
        }
    }

    fn type_weights(&self) -> [f64; 3] {
        [
            self.type_mix.inference,
            self.type_mix.training,
            self.type_mix.research,
        ]
    }

    fn gpu_weights(&self) -> [f64; 5] {
        [
            self.gpu_mix.one,
            self.gpu_mix.two,
            self.gpu_mix.four,
            self.gpu_mix.eight,
            self.gpu_mix.sixteen_plus,
        ]
    }

    fn duration_weights(&self) -> [f64; 4] {
        [
            self.duration_mix.short,
            self.duration_mix.medium,
            self.duration_mix.long,
            self.duration_mix.very_long,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFile {
    pub spec: WorkloadSpec,
    pub jobs: Vec<Job>,
}

/// Picks an index from cumulative weights with a single uniform draw.
fn sample_categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return i;
        }
    }
    weights.len() - 1
}

/// Exponential gap via inverse CDF; mean `mean_s`.
fn sample_exp_gap(rng: &mut ChaCha8Rng, mean_s: f64) -> f64 {
    let u: f64 = rng.gen();
    -mean_s * (1.0 - u).ln()
}

pub fn generate(spec: &WorkloadSpec) -> Result<WorkloadFile, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bands = [
        SHORT_RANGE_S,
        MEDIUM_RANGE_S,
        LONG_RANGE_S,
        VERY_LONG_RANGE_S,
    ];
    let (flo, fhi) = spec.throughput_factor_range;
    let mut arrival = 0.0;
    let mut jobs = Vec::with_capacity(spec.num_jobs as usize);
    for id in 0..spec.num_jobs {
        arrival += sample_exp_gap(&mut rng, spec.mean_interarrival_s);
        let job_type = match sample_categorical(&mut rng, &spec.type_weights()) {
            0 => JobType::Inference,
            1 => JobType::Training,
            _ => JobType::Research,
        };
        let num_gpu = match sample_categorical(&mut rng, &spec.gpu_weights()) {
            0 => 1,
            1 => 2,
            2 => 4,
            3 => 8,
            _ => {
                if rng.gen::<f64>() < 0.5 {
                    16
                } else {
                    32
                }
            }
        };
        let (lo, hi) = bands[sample_categorical(&mut rng, &spec.duration_weights())];
        let duration_s = rng.gen_range(lo..hi);
        let factor = if flo == fhi {
            flo
        } else {
            rng.gen_range(flo..fhi)
        };
        let iterations = duration_s * factor;
        let model_family = rng.gen_range(0..spec.family_count);
        jobs.push(Job {
            id: JobId(id),
            arrival_s: arrival,
            job_type,
            num_gpu,
            duration_s,
            iterations,
            model_family,
            state: JobState::Queued,
            start_s: None,
            end_s: None,
        });
    }
    Ok(WorkloadFile {
        spec: spec.clone(),
        jobs,
    })
}

/// One empirical-frequency check against a spec marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub marginal: String,
    pub category: String,
    pub expected: f64,
    pub observed: f64,
    pub count: u32,
    pub std_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub n: u32,
    pub checks: Vec<MarginalCheck>,
    pub pass: bool,
}

impl DistributionReport {
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:<10} {:>9} {:>9} {:>9}  {}\n",
            "marginal", "category", "expected", "observed", "4*SE", "status"
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<14} {:<10} {:>9.4} {:>9.4} {:>9.4}  {}\n",
                c.marginal,
                c.category,
                c.expected,
                c.observed,
                4.0 * c.std_err,
                if c.pass { "ok" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "distribution check over {} jobs: {}\n",
            self.n,
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn gpu_bucket(num_gpu: u32) -> Option<&'static str> {
    match num_gpu {
        1 => Some("1"),
        2 => Some("2"),
        4 => Some("4"),
        8 => Some("8"),
        16 | 32 => Some("16+"),
        _ => None,
    }
}

fn duration_bucket(duration_s: f64) -> Option<&'static str> {
    for (name, (lo, hi)) in [
        ("short", SHORT_RANGE_S),
        ("medium", MEDIUM_RANGE_S),
        ("long", LONG_RANGE_S),
        ("very_long", VERY_LONG_RANGE_S),
    ] {
        if duration_s >= lo && duration_s < hi {
            return Some(name);
        }
    }
    None
}

/// Flags any categorical marginal whose empirical frequency deviates from
/// the spec by more than four binomial standard errors.
pub fn validate_distribution(wf: &WorkloadFile, spec: &WorkloadSpec) -> DistributionReport {
    assert!(!wf.jobs.is_empty(), "validate_distribution needs jobs");
    let n = wf.jobs.len() as u32;
    let nf = n as f64;
    let mut checks = Vec::new();

    let mut push_marginal = |marginal: &str, cats: &[(&str, f64, u32)]| {
        for &(category, expected, count) in cats {
            let observed = count as f64 / nf;
            let std_err = (expected * (1.0 - expected) / nf).sqrt();
            let pass = (observed - expected).abs() <= 4.0 * std_err;
            checks.push(MarginalCheck {
                marginal: marginal.to_string(),
                category: category.to_string(),
                expected,
                observed,
                count,
                std_err,
                pass,
            });
        }
    };

    let mut type_counts = [0u32; 3];
    for j in &wf.jobs {
        let i = match j.job_type {
            JobType::Inference => 0,
            JobType::Training => 1,
            JobType::Research => 2,
        };
        type_counts[i] += 1;
    }
    let tw = spec.type_weights();
    push_marginal(
        "type_mix",
        &[
            ("inference", tw[0], type_counts[0]),
            ("training", tw[1], type_counts[1]),
            ("research", tw[2], type_counts[2]),
        ],
    );

    let gpu_names = ["1", "2", "4", "8", "16+"];
    let mut gpu_counts = [0u32; 5];
    for j in &wf.jobs {
        if let Some(b) = gpu_bucket(j.num_gpu) {
            gpu_counts[gpu_names.iter().position(|&n| n == b).unwrap()] += 1;
        }
    }
    let gw = spec.gpu_weights();
    push_marginal(
        "gpu_mix",
        &gpu_names
            .iter()
            .zip(gw.iter())
            .zip(gpu_counts.iter())
            .map(|((&name, &w), &c)| (name, w, c))
            .collect::<Vec<_>>(),
    );

    let dur_names = ["short", "medium", "long", "very_long"];
    let mut dur_counts = [0u32; 4];
    for j in &wf.jobs {
        if let Some(b) = duration_bucket(j.duration_s) {
            dur_counts[dur_names.iter().position(|&n| n == b).unwrap()] += 1;
        }
    }
    let dw = spec.duration_weights();
    push_marginal(
        "duration_mix",
        &dur_names
            .iter()
            .zip(dw.iter())
            .zip(dur_counts.iter())
            .map(|((&name, &w), &c)| (name, w, c))
            .collect::<Vec<_>>(),
    );

    let mut fam_counts = vec![0u32; spec.family_count as usize];
    for j in &wf.jobs {
        if (j.model_family as usize) < fam_counts.len() {
            fam_counts[j.model_family as usize] += 1;
        }
    }
    let fam_expected = 1.0 / spec.family_count as f64;
    let fam_cats: Vec<(String, f64, u32)> = fam_counts
        .iter()
        .enumerate()
        .map(|(f, &c)| (f.to_string(), fam_expected, c))
        .collect();
    for (category, expected, count) in fam_cats {
        let observed = count as f64 / nf;
        let std_err = (expected * (1.0 - expected) / nf).sqrt();
        let pass = (observed - expected).abs() <= 4.0 * std_err;
        checks.push(MarginalCheck {
            marginal: "model_family".to_string(),
            category,
            expected,
            observed,
            count,
            std_err,
            pass,
        });
    }

    let pass = checks.iter().all(|c| c.pass);
    DistributionReport { n, checks, pass }
}

/// Structural validation of a parsed workload file.
fn validate_file(wf: &WorkloadFile) -> Result<(), WorkloadError> {
    wf.spec.validate()?;
    if wf.jobs.len() != wf.spec.num_jobs as usize {
        return Err(WorkloadError::InvalidFile(format!(
            "spec.num_jobs is {} but the file holds {} jobs",
            wf.spec.num_jobs,
            wf.jobs.len()
        )));
    }
    let mut prev_arrival = 0.0;
    for (i, j) in wf.jobs.iter().enumerate() {
        if j.id.index() != i {
            return Err(WorkloadError::InvalidFile(format!(
                "job at position {i} has id {}; ids must be dense and ordered",
                j.id
            )));
        }
        if !j.arrival_s.is_finite() || j.arrival_s < 0.0 {
            return Err(WorkloadError::InvalidFile(format!(
                "job {}: arrival_s must be a finite value >= 0",
                j.id
            )));
        }
        if j.arrival_s < prev_arrival {
            return Err(WorkloadError::InvalidFile(format!(
                "job {}: arrival_s decreases ({} after {})",
                j.id, j.arrival_s, prev_arrival
            )));
        }
        prev_arrival = j.arrival_s;
        if j.num_gpu < 1 {
            return Err(WorkloadError::InvalidFile(format!(
                "job {}: num_gpu must be >= 1",
                j.id
            )));
        }
        if !j.duration_s.is_finite() || j.duration_s <= 0.0 {
            return Err(WorkloadError::InvalidFile(format!(
                "job {}: duration_s must be a finite value > 0",
                j.id
            )));
        }
        if !j.iterations.is_finite() || j.iterations <= 0.0 {
            return Err(WorkloadError::InvalidFile(format!(
                "job {}: iterations must be a finite value > 0",
                j.id
            )));
        }
    }
    Ok(())
}

pub fn write_workload(path: &Path, wf: &WorkloadFile) -> Result<(), WorkloadError> {
    let text = serde_json::to_string_pretty(wf)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_workload(path: &Path) -> Result<WorkloadFile, WorkloadError> {
    let text = fs::read_to_string(path)?;
    let wf: WorkloadFile = serde_json::from_str(&text)?;
    validate_file(&wf)?;
    Ok(wf)
}
