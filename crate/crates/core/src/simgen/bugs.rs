//! Bug families and their variations.
//!
//! A bug adds a per-instruction stall cost `k * trigger(t)` to its unit (the
//! trigger follows an activity of the running program), which shows up in
//! IPC, in the unit's stall counter and in a counter specific to the family.
//! Variations of a family differ only in magnitude `k` and trigger shape.

use serde::{Deserialize, Serialize};

use crate::dataset::Category;
use crate::error::{Error, Result};
use crate::label::UnitLabel;

/// Program activity that drives a bug's extra stall cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Constant,
    Branch,
    Load,
    Store,
    Memory,
    Int,
    Fp,
    DataMiss,
    CodeMiss,
}

/// A mechanism template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Family {
    pub name: &'static str,
    pub unit: UnitLabel,
    pub description: &'static str,
    /// Counter that only this family perturbs.
    pub counter: &'static str,
    pub activity: Activity,
    /// Fraction of the extra stall cycles attributed to another unit's stall
    /// counter instead of this unit's.
    pub spill: Option<(UnitLabel, f64)>,
    /// Extra family-counter events per extra stall cycle.
    pub events_per_cycle: f64,
    pub low_observability: bool,
}

const fn fam(
    name: &'static str,
    unit: UnitLabel,
    description: &'static str,
    counter: &'static str,
    activity: Activity,
) -> Family {
    Family {
        name,
        unit,
        description,
        counter,
        activity,
        spill: None,
        events_per_cycle: 0.05,
        low_observability: false,
    }
}

use Activity as A;
use UnitLabel as U;

pub const FAMILIES: [Family; 22] = [
    fam("fetch_line_cross", U::Fetch, "fetch stalls for extra cycles after crossing cache lines", "fetch_line_cross_stalls", A::Branch),
    fam("icache_refill", U::Fetch, "instruction cache refills wait extra cycles", "icache_refill_waits", A::CodeMiss),
    fam("decode_serialize", U::Decode, "decode stalls after a run of instructions of one type", "decode_serialize_events", A::Fp),
    fam("macro_fusion", U::Decode, "decoder fails to fuse compare-branch pairs", "macro_fusion_misses", A::Branch),
    fam("issue_wakeup", U::Issue, "dependent instructions wake up late", "issue_wakeup_delays", A::Int),
    fam("iq_dispatch_block", U::Issue, "dispatch blocks while the issue queue holds a load", "iq_dispatch_blocks", A::Load),
    fam("rename_freelist", U::Rename, "freed physical registers return to the free list late", "rename_freelist_waits", A::Constant),
    fam("rename_map_conflict", U::Rename, "rename serializes on map-table conflicts", "rename_map_conflicts", A::Int),
    fam("fu_latency", U::Execute, "floating-point units take extra cycles", "fu_latency_overruns", A::Fp),
    fam("fu_pipeline_block", U::Execute, "a functional unit stops accepting operations back to back", "fu_pipeline_blocks", A::Int),
    Family {
        events_per_cycle: 0.02,
        ..fam("bp_alias", U::Branch, "predictor table updates alias and corrupt entries", "bp_table_aliases", A::Branch)
    },
    Family {
        spill: Some((U::Fetch, 0.6)),
        events_per_cycle: 0.01,
        low_observability: true,
        ..fam("btb_redirect", U::Branch, "target buffer misses insert fetch redirect bubbles", "btb_redirect_bubbles", A::Branch)
    },
    fam("reg_read_port", U::Registers, "register file loses a read port", "reg_read_port_conflicts", A::Int),
    fam("reg_writeback", U::Registers, "register writeback is delayed", "reg_writeback_delays", A::Constant),
    fam("lsq_forward", U::LoadStoreQueue, "store-to-load forwarding fails and replays", "lsq_forward_failures", A::Load),
    fam("lsq_replay", U::LoadStoreQueue, "memory ordering checks replay stores", "lsq_ordering_replays", A::Store),
    fam("dcache_latency", U::Memory, "data cache hits take extra cycles", "dcache_extra_latency_events", A::Memory),
    Family {
        events_per_cycle: 0.01,
        low_observability: true,
        ..fam("prefetch_drop", U::Memory, "the prefetcher drops requests", "prefetch_misses", A::DataMiss)
    },
    fam("rob_block", U::ReOrderBuffer, "reorder buffer allocation blocks on a full bank", "rob_entry_blocks", A::Memory),
    fam("rob_retire", U::ReOrderBuffer, "completed entries retire late", "rob_retire_delays", A::Constant),
    fam("commit_width", U::Commit, "commit retires fewer instructions per cycle", "commit_width_stalls", A::Constant),
    fam("commit_squash", U::Commit, "squash recovery at commit takes extra cycles", "commit_squash_delays", A::Branch),
];

/// Families whose bugs never appear on training architectures by default:
/// one per unit for six units.
pub const DEFAULT_UNSEEN_TYPES: [&str; 6] = [
    "macro_fusion",
    "iq_dispatch_block",
    "fu_pipeline_block",
    "reg_writeback",
    "lsq_replay",
    "commit_squash",
];

pub fn family(name: &str) -> Result<&'static Family> {
    FAMILIES
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::Config(format!("unknown bug family {name:?}")))
}

/// How the trigger activity is shaped for one variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerShape {
    /// A quarter constant, the rest proportional to the activity.
    Linear,
    /// A quarter constant, the rest proportional to the squared activity.
    Quadratic,
    /// Half constant, half proportional.
    Damped,
}

impl TriggerShape {
    pub const ALL: [TriggerShape; 3] = [TriggerShape::Linear, TriggerShape::Quadratic, TriggerShape::Damped];

    pub fn apply(self, relative_activity: f64) -> f64 {
        match self {
            TriggerShape::Linear => 0.25 + 0.75 * relative_activity,
            TriggerShape::Quadratic => 0.25 + 0.75 * relative_activity * relative_activity,
            TriggerShape::Damped => 0.5 + 0.5 * relative_activity,
        }
    }
}

/// One concrete bug: a family plus magnitude parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugSpec {
    pub bug_id: String,
    pub unit: UnitLabel,
    pub family: String,
    pub variation: usize,
    /// Extra stall cycles per instruction at nominal activity.
    pub magnitude: f64,
    pub trigger: TriggerShape,
    pub category: Category,
    /// Requested mean IPC loss used to calibrate `magnitude`.
    pub target_impact: f64,
}

impl BugSpec {
    pub fn family(&self) -> Result<&'static Family> {
        family(&self.family)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.family()?;
        if f.unit != self.unit {
            return Err(Error::Config(format!(
                "bug {:?}: family {} belongs to {}, not {}",
                self.bug_id, f.name, f.unit, self.unit
            )));
        }
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0 && self.magnitude <= 10.0) {
            return Err(Error::Config(format!(
                "bug {:?}: magnitude {} outside [0, 10]",
                self.bug_id, self.magnitude
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::UNITS;
    use std::collections::BTreeSet;

    #[test]
    fn two_families_per_unit() {
        for u in UNITS {
            assert_eq!(FAMILIES.iter().filter(|f| f.unit == u).count(), 2, "{u}");
        }
        let names: BTreeSet<_> = FAMILIES.iter().map(|f| f.name).collect();
        let counters: BTreeSet<_> = FAMILIES.iter().map(|f| f.counter).collect();
        assert_eq!(names.len(), 22);
        assert_eq!(counters.len(), 22);
    }

    #[test]
    fn low_observability_units() {
        let low: BTreeSet<_> = FAMILIES
            .iter()
            .filter(|f| f.low_observability)
            .map(|f| f.unit)
            .collect();
        assert_eq!(low, BTreeSet::from([UnitLabel::Branch, UnitLabel::Memory]));
    }

    #[test]
    fn default_unseen_types_cover_distinct_units() {
        let units: BTreeSet<_> = DEFAULT_UNSEEN_TYPES
            .iter()
            .map(|n| family(n).unwrap().unit)
            .collect();
        assert_eq!(units.len(), 6);
    }
}
