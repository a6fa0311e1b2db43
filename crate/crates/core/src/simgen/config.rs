//! Architecture and workload descriptions, with seeded sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latent microarchitecture parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub arch_id: String,
    pub pipeline_width: f64,
    pub rob_size: f64,
    pub lsq_size: f64,
    pub iq_size: f64,
    pub branch_accuracy: f64,
    /// L2 hit latency in cycles.
    pub cache_latency_cycles: f64,
    pub memory_latency_cycles: f64,
    pub fu_latency: FuLatency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuLatency {
    pub int_mul: f64,
    pub fp_add: f64,
    pub fp_mul: f64,
}

/// Inclusive sampling ranges.
pub const WIDTH_RANGE: (f64, f64) = (3.0, 6.0);
pub const ROB_RANGE: (f64, f64) = (96.0, 256.0);
pub const LSQ_RANGE: (f64, f64) = (32.0, 72.0);
pub const IQ_RANGE: (f64, f64) = (40.0, 100.0);
pub const BRANCH_ACCURACY_RANGE: (f64, f64) = (0.92, 0.97);
pub const CACHE_LATENCY_RANGE: (f64, f64) = (10.0, 16.0);
pub const MEMORY_LATENCY_RANGE: (f64, f64) = (150.0, 300.0);
pub const INT_MUL_RANGE: (f64, f64) = (3.0, 4.0);
pub const FP_ADD_RANGE: (f64, f64) = (3.0, 5.0);
pub const FP_MUL_RANGE: (f64, f64) = (4.0, 6.0);

fn in_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

impl ArchConfig {
    pub fn sample(arch_id: String, rng: &mut ChaCha8Rng) -> Self {
        ArchConfig {
            arch_id,
            pipeline_width: rng.random_range(3..=6) as f64,
            rob_size: draw(rng, ROB_RANGE).round(),
            lsq_size: draw(rng, LSQ_RANGE).round(),
            iq_size: draw(rng, IQ_RANGE).round(),
            branch_accuracy: draw(rng, BRANCH_ACCURACY_RANGE),
            cache_latency_cycles: draw(rng, CACHE_LATENCY_RANGE).round(),
            memory_latency_cycles: draw(rng, MEMORY_LATENCY_RANGE).round(),
            fu_latency: FuLatency {
                int_mul: draw(rng, INT_MUL_RANGE).round(),
                fp_add: draw(rng, FP_ADD_RANGE).round(),
                fp_mul: draw(rng, FP_MUL_RANGE).round(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch_id.is_empty() {
            return Err(Error::Config("empty arch_id".into()));
        }
        in_range("pipeline_width", self.pipeline_width, WIDTH_RANGE)?;
        in_range("rob_size", self.rob_size, ROB_RANGE)?;
        in_range("lsq_size", self.lsq_size, LSQ_RANGE)?;
        in_range("iq_size", self.iq_size, IQ_RANGE)?;
        in_range("branch_accuracy", self.branch_accuracy, BRANCH_ACCURACY_RANGE)?;
        in_range("cache_latency_cycles", self.cache_latency_cycles, CACHE_LATENCY_RANGE)?;
        in_range("memory_latency_cycles", self.memory_latency_cycles, MEMORY_LATENCY_RANGE)?;
        in_range("fu_latency.int_mul", self.fu_latency.int_mul, INT_MUL_RANGE)?;
        in_range("fu_latency.fp_add", self.fu_latency.fp_add, FP_ADD_RANGE)?;
        in_range("fu_latency.fp_mul", self.fu_latency.fp_mul, FP_MUL_RANGE)?;
        Ok(())
    }
}

/// Dynamic instruction mix; fractions sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mix {
    pub branch: f64,
    pub load: f64,
    pub store: f64,
    pub int: f64,
    pub fp: f64,
}

impl Mix {
    pub fn total(&self) -> f64 {
        self.branch + self.load + self.store + self.int + self.fp
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.branch, self.load, self.store, self.int, self.fp];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config("mix fractions must be finite and >= 0".into()));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mix fractions sum to {}", self.total())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub length_windows: usize,
    pub mix: Mix,
    /// Data/code locality in (0, 1); higher means fewer cache misses.
    pub locality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadProfile {
    pub workload_id: String,
    pub phases: Vec<Phase>,
    /// Log-scale amplitude of slow within-phase drift of the mix, locality
    /// and per-unit costs. Zero gives piecewise-constant behavior.
    pub jitter: f64,
    /// Seeds the drift processes, which are a property of the program and
    /// identical on every architecture.
    pub drift_seed: u64,
}

impl WorkloadProfile {
    pub fn windows(&self) -> usize {
        self.phases.iter().map(|p| p.length_windows).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.workload_id.is_empty() {
            return Err(Error::Config("empty workload_id".into()));
        }
        if self.phases.is_empty() {
            return Err(Error::Config(format!("workload {:?} has no phases", self.workload_id)));
        }
        for p in &self.phases {
            if p.length_windows == 0 {
                return Err(Error::Config("phase of zero windows".into()));
            }
            p.mix.validate()?;
            if !(p.locality > 0.0 && p.locality < 1.0) {
                return Err(Error::Config(format!("locality {} outside (0, 1)", p.locality)));
            }
        }
        if self.windows() < 2 {
            return Err(Error::Config("workloads need at least 2 windows".into()));
        }
        if !(self.jitter.is_finite() && (0.0..=1.0).contains(&self.jitter)) {
            return Err(Error::Config(format!("jitter {} outside [0, 1]", self.jitter)));
        }
        Ok(())
    }

    pub fn sample(
        workload_id: String,
        windows: usize,
        jitter: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n_phases = rng.random_range(2..=4).min(windows);
        // Split the windows into phases of at least one window each.
        let mut cuts: Vec<usize> = (1..windows).collect();
        for i in 0..n_phases - 1 {
            let j = rng.random_range(i..cuts.len());
            cuts.swap(i, j);
        }
        let mut cuts: Vec<usize> = cuts[..n_phases - 1].to_vec();
        cuts.sort_unstable();
        cuts.push(windows);
        let mut start = 0;
        let mut phases = Vec::new();
        for end in cuts {
            let branch = rng.random_range(0.06..0.22);
            let load = rng.random_range(0.15..0.35);
            let store = rng.random_range(0.05..0.15);
            let fp = rng.random_range(0.0..0.2);
            let int = 1.0 - branch - load - store - fp;
            phases.push(Phase {
                length_windows: end - start,
                mix: Mix {
                    branch,
                    load,
                    store,
                    int,
                    fp,
                },
                locality: rng.random_range(0.3..0.95),
            });
            start = end;
        }
        WorkloadProfile {
            workload_id,
            phases,
            jitter,
            drift_seed: rng.random(),
        }
    }
}
