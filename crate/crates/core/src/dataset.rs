//! Manifest-driven datasets with train/test architecture splits and
//! seen/unseen bug categories.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{UnitLabel, UNITS};
use crate::trace::{load_trace_with_meta, CounterTrace, TraceMeta};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "seen")]
    SeenVariation,
    #[serde(rename = "unseen_variation")]
    UnseenVariation,
    #[serde(rename = "unseen_type")]
    UnseenType,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::SeenVariation,
        Category::UnseenVariation,
        Category::UnseenType,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::SeenVariation => "seen",
            Category::UnseenVariation => "unseen_variation",
            Category::UnseenType => "unseen_type",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub workload_id: String,
    pub arch_id: String,
    pub label: UnitLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub window_cycles: u64,
    pub traces: Vec<ManifestEntry>,
    pub splits: BTreeMap<String, Split>,
    pub categories: BTreeMap<String, Category>,
    /// Average IPC degradation per bug id, as a fraction; written by the
    /// synthetic generator and used for impact-band reporting.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bug_impacts: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        if self.window_cycles == 0 {
            return Err(Error::Manifest("window_cycles must be positive".into()));
        }
        if self.traces.is_empty() {
            return Err(Error::Manifest("manifest lists no traces".into()));
        }
        for e in &self.traces {
            if !self.splits.contains_key(&e.arch_id) {
                return Err(Error::Manifest(format!("no split for arch {:?}", e.arch_id)));
            }
            check_label_bug(e.label, e.bug_id.as_deref(), &e.path)?;
            if let Some(bug) = &e.bug_id {
                if !self.categories.contains_key(bug) {
                    return Err(Error::Manifest(format!("no category for bug {bug:?}")));
                }
            }
        }
        for (bug, impact) in &self.bug_impacts {
            if !impact.is_finite() {
                return Err(Error::Manifest(format!("impact of {bug:?} is not finite")));
            }
        }
        Ok(())
    }
}

fn check_label_bug(label: UnitLabel, bug_id: Option<&str>, what: &str) -> Result<()> {
    match (label, bug_id) {
        (UnitLabel::BugFree, Some(b)) => Err(Error::Manifest(format!(
            "{what}: bug-free trace carries bug id {b:?}"
        ))),
        (l, None) if l.is_unit() => Err(Error::Manifest(format!(
            "{what}: buggy trace labeled {l} has no bug id"
        ))),
        _ => Ok(()),
    }
}

/// One design under evaluation: an architecture with (at most) one injected
/// bug, observed through one trace per workload.
#[derive(Debug, Clone)]
pub struct DesignInstance<'a> {
    pub arch_id: &'a str,
    pub bug_id: Option<&'a str>,
    pub label: UnitLabel,
    pub traces: Vec<&'a CounterTrace>,
}

/// Validated, immutable collection of labeled traces.
#[derive(Debug, Clone)]
pub struct Dataset {
    traces: Vec<CounterTrace>,
    workloads: Vec<String>,
    splits: BTreeMap<String, Split>,
    categories: BTreeMap<String, Category>,
    bug_impacts: BTreeMap<String, f64>,
}

impl Dataset {
    /// Builds a dataset from in-memory traces, enforcing every invariant:
    /// split/category totality, single-bug labeling, consistent bug units and
    /// the seen/unseen partition across train and test architectures.
    pub fn new(
        mut traces: Vec<CounterTrace>,
        splits: BTreeMap<String, Split>,
        categories: BTreeMap<String, Category>,
        bug_impacts: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::Manifest("dataset has no traces".into()));
        }
        let mut bug_units: BTreeMap<&str, UnitLabel> = BTreeMap::new();
        let mut seen_in_train: BTreeSet<&str> = BTreeSet::new();
        let mut keys = BTreeSet::new();
        for t in &traces {
            let split = *splits
                .get(&t.arch_id)
                .ok_or_else(|| Error::Manifest(format!("no split for arch {:?}", t.arch_id)))?;
            check_label_bug(t.label, t.bug_id.as_deref(), &t.workload_id)?;
            if !keys.insert((&t.arch_id, &t.workload_id, &t.bug_id, t.label)) {
                return Err(Error::Manifest(format!(
                    "duplicate trace for arch {:?}, workload {:?}, bug {:?}",
                    t.arch_id, t.workload_id, t.bug_id
                )));
            }
            if t.label == UnitLabel::Unknown && split == Split::Train {
                return Err(Error::Manifest(format!(
                    "Unknown-labeled trace in train arch {:?}",
                    t.arch_id
                )));
            }
            let Some(bug) = t.bug_id.as_deref() else {
                continue;
            };
            let cat = *categories
                .get(bug)
                .ok_or_else(|| Error::Manifest(format!("no category for bug {bug:?}")))?;
            if t.label.is_unit() {
                match bug_units.insert(bug, t.label) {
                    Some(prev) if prev != t.label => {
                        return Err(Error::Manifest(format!(
                            "bug {bug:?} labeled both {prev} and {}",
                            t.label
                        )))
                    }
                    _ => {}
                }
            }
            if split == Split::Train {
                if cat != Category::SeenVariation {
                    return Err(Error::Leakage(format!(
                        "{} bug {bug:?} appears in train arch {:?}",
                        cat.as_str(),
                        t.arch_id
                    )));
                }
                seen_in_train.insert(bug);
            }
        }
        for t in &traces {
            if let Some(bug) = t.bug_id.as_deref() {
                if categories[bug] == Category::SeenVariation && !seen_in_train.contains(bug) {
                    return Err(Error::Leakage(format!(
                        "seen bug {bug:?} never appears in a train architecture"
                    )));
                }
            }
        }
        traces.sort_by(|a, b| {
            (&a.arch_id, &a.workload_id, &a.bug_id, a.label)
                .cmp(&(&b.arch_id, &b.workload_id, &b.bug_id, b.label))
        });
        let workloads: BTreeSet<String> = traces.iter().map(|t| t.workload_id.clone()).collect();
        Ok(Dataset {
            traces,
            workloads: workloads.into_iter().collect(),
            splits,
            categories,
            bug_impacts,
        })
    }

    pub fn traces(&self) -> &[CounterTrace] {
        &self.traces
    }

    /// Ordered workload set W.
    pub fn workloads(&self) -> &[String] {
        &self.workloads
    }

    /// Ordered unit set U (always the full eleven-unit taxonomy).
    pub fn units(&self) -> &'static [UnitLabel] {
        &UNITS
    }

    pub fn split_of(&self, arch_id: &str) -> Option<Split> {
        self.splits.get(arch_id).copied()
    }

    pub fn category_of(&self, bug_id: &str) -> Option<Category> {
        self.categories.get(bug_id).copied()
    }

    pub fn impact_of(&self, bug_id: &str) -> Option<f64> {
        self.bug_impacts.get(bug_id).copied()
    }

    pub fn splits(&self) -> &BTreeMap<String, Split> {
        &self.splits
    }

    pub fn categories(&self) -> &BTreeMap<String, Category> {
        &self.categories
    }

    pub fn bug_impacts(&self) -> &BTreeMap<String, f64> {
        &self.bug_impacts
    }

    pub fn archs(&self, split: Split) -> Vec<&str> {
        self.splits
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(a, _)| a.as_str())
            .collect()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &CounterTrace> {
        self.traces
            .iter()
            .filter(move |t| self.splits.get(&t.arch_id) == Some(&split))
    }

    pub fn workload_traces(&self, workload: &str, split: Split) -> Vec<&CounterTrace> {
        self.in_split(split)
            .filter(|t| t.workload_id == workload)
            .collect()
    }

    /// Groups a split's traces into designs keyed by (arch, bug), in
    /// deterministic (arch, bug) order. Bug-free designs have `bug_id: None`.
    pub fn instances(&self, split: Split) -> Vec<DesignInstance<'_>> {
        let mut groups: BTreeMap<(&str, Option<&str>, UnitLabel), Vec<&CounterTrace>> =
            BTreeMap::new();
        for t in self.in_split(split) {
            groups
                .entry((t.arch_id.as_str(), t.bug_id.as_deref(), t.label))
                .or_default()
                .push(t);
        }
        groups
            .into_iter()
            .map(|((arch_id, bug_id, label), traces)| DesignInstance {
                arch_id,
                bug_id,
                label,
                traces,
            })
            .collect()
    }

    /// Keeps only the traces for which `keep` returns true, re-validating.
    pub fn filtered(&self, keep: impl Fn(&CounterTrace) -> bool) -> Result<Dataset> {
        let traces: Vec<CounterTrace> = self.traces.iter().filter(|t| keep(t)).cloned().collect();
        Dataset::new(
            traces,
            self.splits.clone(),
            self.categories.clone(),
            self.bug_impacts.clone(),
        )
    }
}

/// Loads every trace listed in `manifest`. Relative trace paths are resolved
/// against `base_dir` (normally the manifest's directory).
pub fn load_dataset(manifest: &Manifest, base_dir: &Path) -> Result<Dataset> {
    manifest.validate()?;
    let mut traces = Vec::with_capacity(manifest.traces.len());
    for e in &manifest.traces {
        let path: PathBuf = base_dir.join(&e.path);
        if !path.is_file() {
            return Err(Error::Manifest(format!(
                "trace file {} does not exist",
                path.display()
            )));
        }
        let meta = TraceMeta {
            workload_id: e.workload_id.clone(),
            arch_id: e.arch_id.clone(),
            label: e.label,
            bug_id: e.bug_id.clone(),
            window_cycles: manifest.window_cycles,
        };
        traces.push(load_trace_with_meta(&path, meta)?);
    }
    Dataset::new(
        traces,
        manifest.splits.clone(),
        manifest.categories.clone(),
        manifest.bug_impacts.clone(),
    )
}

/// Reads a manifest file and loads its dataset relative to the file's
/// directory.
pub fn load_dataset_from(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    load_dataset(&manifest, base)
}
