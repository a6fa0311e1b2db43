//! Analytic per-window performance model and counter synthesis.
//!
//! Cycles per instruction are a CPI stack: `1 / width` plus one stall
//! component per unit, each a function of the architecture and the current
//! instruction mix and locality, modulated by slow program-specific drift.
//! IPC is the inverse, so the widest bottleneck dominates and IPC never
//! exceeds the pipeline width. Counters are per-window event counts derived
//! from the committed instructions and the per-instruction rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bugs::{Activity, BugSpec, Family, FAMILIES};
use super::config::{ArchConfig, Mix, WorkloadProfile};
use crate::error::{Error, Result};
use crate::label::{UnitLabel, UNITS};
use crate::trace::{CounterTrace, TraceMeta, DEFAULT_WINDOW_CYCLES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Log-normal sigma of per-window IPC measurement noise.
    pub ipc_sigma: f64,
    /// Log-normal sigma applied independently to every counter value.
    pub counter_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            ipc_sigma: 0.02,
            counter_sigma: 0.01,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        NoiseConfig {
            ipc_sigma: 0.0,
            counter_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ipc_sigma", self.ipc_sigma), ("counter_sigma", self.counter_sigma)] {
            if !(v.is_finite() && (0.0..=0.5).contains(&v)) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 0.5]")));
            }
        }
        Ok(())
    }
}

pub const ACTIVITY_COUNTERS: [&str; 14] = [
    "committed_insts",
    "fetched_insts",
    "decoded_uops",
    "branches",
    "branch_mispredicts",
    "loads",
    "stores",
    "int_ops",
    "fp_ops",
    "icache_misses",
    "l1d_misses",
    "l2_misses",
    "reg_reads",
    "squashed_insts",
];

/// Stall-cycle counter of each unit, in `UNITS` order.
pub const STALL_COUNTERS: [&str; 11] = [
    "fetch_stall_cycles",
    "decode_stall_cycles",
    "iq_full_cycles",
    "rename_stall_cycles",
    "fu_busy_cycles",
    "branch_squash_cycles",
    "regfile_port_stall_cycles",
    "lsq_full_cycles",
    "mem_stall_cycles",
    "rob_full_cycles",
    "commit_stall_cycles",
];

/// Every generated counter name in column order.
pub fn counter_names() -> Vec<String> {
    ACTIVITY_COUNTERS
        .iter()
        .chain(STALL_COUNTERS.iter())
        .copied()
        .chain(FAMILIES.iter().map(|f| f.counter))
        .map(str::to_owned)
        .collect()
}

fn unit_index(u: UnitLabel) -> usize {
    UNITS.iter().position(|x| *x == u).expect("unit label")
}

const N_DRIFT: usize = 11 + 4 + 1 + 22;
const DRIFT_RHO: f64 = 0.8;

/// Bug-free state of one window.
#[derive(Debug, Clone)]
pub struct BaseWindow {
    pub mix: Mix,
    pub locality: f64,
    /// Instruction-cache misses per instruction.
    pub code_miss: f64,
    /// L1 data misses per memory instruction.
    pub l1_miss: f64,
    /// Fraction of L1 misses that also miss in L2.
    pub l2_miss: f64,
    /// Per-instruction stall cycles per unit.
    pub costs: [f64; 11],
    /// Baseline family-counter events per instruction.
    pub family_rates: [f64; 22],
    pub ipc_noise: f64,
    pub counter_noise: Vec<f64>,
}

impl BaseWindow {
    pub fn cpi(&self, width: f64) -> f64 {
        1.0 / width + self.costs.iter().sum::<f64>()
    }

    /// Program activity relative to its nominal level.
    pub fn activity(&self, a: Activity) -> f64 {
        let m = &self.mix;
        match a {
            Activity::Constant => 1.0,
            Activity::Branch => m.branch / 0.14,
            Activity::Load => m.load / 0.25,
            Activity::Store => m.store / 0.10,
            Activity::Memory => (m.load + m.store) / 0.35,
            Activity::Int => m.int / 0.40,
            Activity::Fp => m.fp / 0.10,
            Activity::DataMiss => (m.load + m.store) * self.l1_miss / 0.015,
            Activity::CodeMiss => self.code_miss / 0.01,
        }
    }
}

fn drift(seed: u64, n: usize) -> Vec<[f64; N_DRIFT]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation = (1.0 - DRIFT_RHO * DRIFT_RHO).sqrt();
    let mut state = [0.0; N_DRIFT];
    for s in state.iter_mut() {
        *s = StandardNormal.sample(&mut rng);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(state);
        for s in state.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s = DRIFT_RHO * *s + innovation * z;
        }
    }
    out
}

/// Per-unit stall cycles per instruction for a bug-free design.
fn unit_costs(a: &ArchConfig, m: &Mix, code_miss: f64, l1: f64, l2: f64) -> [f64; 11] {
    let mem = m.load + m.store;
    let w = a.pipeline_width;
    let fu = &a.fu_latency;
    let mlp = 1.0 + a.rob_size / 64.0;
    let l2_misses = mem * l1 * l2;
    [
        // Fetch
        code_miss * a.cache_latency_cycles * 0.6,
        // Decode
        0.015 + 0.04 * m.fp + 0.03 * m.branch,
        // Issue
        (m.load + m.fp) * 0.06 * (70.0 / a.iq_size).sqrt(),
        // Rename
        0.02 * (m.int + m.fp + m.load) * (160.0 / a.rob_size).sqrt(),
        // Execute
        m.fp * (fu.fp_add + fu.fp_mul) / w * 0.2 + m.int * 0.04 * fu.int_mul / 3.0,
        // Branch
        m.branch * (1.0 - a.branch_accuracy) * (8.0 + 2.0 * w),
        // Registers
        0.012 * (1.0 + 2.0 * (m.int + m.fp)) * 4.0 / w,
        // LoadStoreQueue
        mem * 0.04 * (50.0 / a.lsq_size).sqrt(),
        // Memory
        mem * l1 * a.cache_latency_cycles * 0.5 + l2_misses * a.memory_latency_cycles / mlp,
        // ReOrderBuffer
        l2_misses * a.memory_latency_cycles * 0.2 * (128.0 / a.rob_size).sqrt(),
        // Commit
        0.01 + 0.02 * m.store * 4.0 / w,
    ]
}

/// Bug-free per-window states; depends on the architecture, the workload and
/// `seed` (measurement noise) only.
pub fn base_windows(
    arch: &ArchConfig,
    workload: &WorkloadProfile,
    noise: &NoiseConfig,
    seed: u64,
) -> Vec<BaseWindow> {
    let n = workload.windows();
    let d = drift(workload.drift_seed, n);
    let j = workload.jitter;
    let n_counters = ACTIVITY_COUNTERS.len() + STALL_COUNTERS.len() + FAMILIES.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut t = 0;
    for phase in &workload.phases {
        for _ in 0..phase.length_windows {
            let z = &d[t];
            let p = &phase.mix;
            let branch = p.branch * (j * z[11]).exp();
            let load = p.load * (j * z[12]).exp();
            let store = p.store * (j * z[13]).exp();
            let fp = p.fp * (j * z[14]).exp();
            let int = (1.0 - branch - load - store - fp).max(0.02);
            let total = branch + load + store + fp + int;
            let mix = Mix {
                branch: branch / total,
                load: load / total,
                store: store / total,
                int: int / total,
                fp: fp / total,
            };
            let locality = (phase.locality + 0.5 * j * z[15]).clamp(0.05, 0.99);
            let miss = 1.0 - locality;
            let code_miss = 0.004 + 0.03 * miss * miss;
            let l1_miss = 0.01 + 0.12 * miss * miss;
            let l2_miss = 0.1 + 0.5 * miss;
            let mut costs = unit_costs(arch, &mix, code_miss, l1_miss, l2_miss);
            for (u, c) in costs.iter_mut().enumerate() {
                *c *= (j * z[u]).exp();
            }
            let mut w = BaseWindow {
                mix,
                locality,
                code_miss,
                l1_miss,
                l2_miss,
                costs,
                family_rates: [0.0; 22],
                ipc_noise: 1.0,
                counter_noise: Vec::new(),
            };
            for (i, f) in FAMILIES.iter().enumerate() {
                w.family_rates[i] = 0.002 * (0.5 + 0.5 * w.activity(f.activity)) * (j * z[16 + i]).exp();
            }
            let zi: f64 = StandardNormal.sample(&mut rng);
            w.ipc_noise = (noise.ipc_sigma * zi).exp();
            w.counter_noise = (0..n_counters)
                .map(|_| {
                    let zc: f64 = StandardNormal.sample(&mut rng);
                    (noise.counter_sigma * zc).exp()
                })
                .collect();
            out.push(w);
            t += 1;
        }
    }
    out
}

/// Extra stall cycles per instruction a bug adds in one window.
pub fn bug_delta(bug: &BugSpec, family: &Family, w: &BaseWindow) -> f64 {
    bug.magnitude * bug.trigger.apply(w.activity(family.activity))
}

/// Measured IPC of each window, with an optional bug.
pub fn window_ipc(arch: &ArchConfig, windows: &[BaseWindow], bug: Option<(&BugSpec, &Family)>) -> Vec<f64> {
    windows
        .iter()
        .map(|w| {
            let extra = bug.map_or(0.0, |(b, f)| bug_delta(b, f, w));
            w.ipc_noise / (w.cpi(arch.pipeline_width) + extra)
        })
        .collect()
}

/// Renders windows into a counter trace.
pub fn render_trace(
    arch: &ArchConfig,
    workload: &WorkloadProfile,
    windows: &[BaseWindow],
    bug: Option<&BugSpec>,
) -> Result<CounterTrace> {
    let fam = bug.map(|b| b.family()).transpose()?;
    let cycles = DEFAULT_WINDOW_CYCLES as f64;
    let names = counter_names();
    let width = arch.pipeline_width;
    let mut samples = Vec::with_capacity(windows.len() * names.len());
    let mut ipc = Vec::with_capacity(windows.len());
    for w in windows {
        let mut costs = w.costs;
        let mut rates = w.family_rates;
        let mut extra_mispredicts = 0.0;
        let mut extra_l2 = 0.0;
        let mut delta = 0.0;
        if let (Some(b), Some(f)) = (bug, fam) {
            delta = bug_delta(b, f, w);
            let own = unit_index(f.unit);
            match f.spill {
                Some((other, frac)) => {
                    costs[own] += delta * (1.0 - frac);
                    costs[unit_index(other)] += delta * frac;
                }
                None => costs[own] += delta,
            }
            let fi = FAMILIES.iter().position(|x| x.name == f.name).expect("family");
            rates[fi] += f.events_per_cycle * delta;
            match f.name {
                "bp_alias" => extra_mispredicts = delta / (8.0 + 2.0 * width),
                "prefetch_drop" => extra_l2 = delta / arch.memory_latency_cycles,
                _ => {}
            }
        }
        let cpi = 1.0 / width + w.costs.iter().sum::<f64>() + delta;
        let insts = (cycles * w.ipc_noise / cpi).round().max(1.0);
        ipc.push(insts / cycles);

        let m = &w.mix;
        let mem = m.load + m.store;
        let miss_rate = m.branch * (1.0 - arch.branch_accuracy) + extra_mispredicts;
        let per_inst = [
            1.0,
            1.0 + miss_rate * width * 2.0,
            1.0 + 0.3 * m.fp + 0.1 * mem,
            m.branch,
            miss_rate,
            m.load,
            m.store,
            m.int,
            m.fp,
            w.code_miss,
            mem * w.l1_miss,
            mem * w.l1_miss * w.l2_miss + extra_l2,
            1.6 + 0.4 * m.fp,
            miss_rate * width * 2.0,
        ];
        let row = per_inst
            .iter()
            .chain(costs.iter())
            .chain(rates.iter())
            .zip(&w.counter_noise)
            .enumerate()
            .map(|(i, (r, noise))| {
                // The committed-instruction count is exact.
                let n = if i == 0 { 1.0 } else { *noise };
                (insts * r * n).round().max(0.0)
            });
        samples.extend(row);
    }
    let meta = TraceMeta {
        workload_id: workload.workload_id.clone(),
        arch_id: arch.arch_id.clone(),
        label: bug.map_or(UnitLabel::BugFree, |b| b.unit),
        bug_id: bug.map(|b| b.bug_id.clone()),
        window_cycles: DEFAULT_WINDOW_CYCLES,
    };
    CounterTrace::new(meta, names, samples, ipc)
}

/// Generates one trace. The bug-free twin of a buggy trace (same `seed`)
/// differs only through the bug's perturbation.
pub fn generate_trace(
    arch: &ArchConfig,
    workload: &WorkloadProfile,
    bug: Option<&BugSpec>,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<CounterTrace> {
    arch.validate()?;
    workload.validate()?;
    noise.validate()?;
    if let Some(b) = bug {
        b.validate()?;
    }
    let windows = base_windows(arch, workload, noise, seed);
    render_trace(arch, workload, &windows, bug)
}
