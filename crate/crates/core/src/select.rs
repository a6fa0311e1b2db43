//! Two-step Pearson-correlation counter selection.
//!
//! Step 1 keeps counters whose correlation with IPC, averaged over the legacy
//! (train) architectures, has magnitude at least `alpha`. Step 2 walks the
//! survivors from the most to the least IPC-correlated and drops any counter
//! whose averaged correlation with an already kept counter exceeds `beta` in
//! magnitude. Only bug-free legacy traces take part.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::label::UnitLabel;
use crate::trace::CounterTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha: 0.7,
            beta: 0.95,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Pearson correlation coefficient. Zero-variance inputs yield 0.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "pearson needs at least 2 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Averaged correlation statistics for one workload over its legacy traces.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    pub counters: Vec<String>,
    /// Mean (over traces) correlation of each counter with IPC.
    pub with_ipc: Vec<f64>,
    /// Mean (over traces) pairwise correlation, row-major `C x C`.
    pub pairwise: Vec<f64>,
}

impl CorrelationTable {
    /// Counters present in every trace, in the first trace's column order.
    pub fn from_traces(traces: &[&CounterTrace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::InsufficientData("no legacy traces".into()))?;
        let counters: Vec<String> = first
            .counter_names()
            .iter()
            .filter(|n| traces.iter().all(|t| t.counter_index(n).is_some()))
            .cloned()
            .collect();
        let c = counters.len();
        let mut with_ipc = vec![0.0; c];
        let mut pairwise = vec![0.0; c * c];
        for t in traces {
            if t.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "trace for {:?} on {:?} has {} window(s)",
                    t.workload_id,
                    t.arch_id,
                    t.len()
                )));
            }
            let cols: Vec<Vec<f64>> = counters
                .iter()
                .map(|n| t.column(t.counter_index(n).expect("filtered above")))
                .collect();
            for i in 0..c {
                with_ipc[i] += pearson(&cols[i], t.ipc())?;
                for j in (i + 1)..c {
                    let r = pearson(&cols[i], &cols[j])?;
                    pairwise[i * c + j] += r;
                    pairwise[j * c + i] += r;
                }
            }
        }
        let n = traces.len() as f64;
        with_ipc.iter_mut().for_each(|v| *v /= n);
        pairwise.iter_mut().for_each(|v| *v /= n);
        for i in 0..c {
            pairwise[i * c + i] = 1.0;
        }
        Ok(CorrelationTable {
            counters,
            with_ipc,
            pairwise,
        })
    }

    /// Applies both selection steps; result ordered by descending IPC
    /// correlation magnitude, ties by name.
    pub fn select(&self, cfg: &SelectionConfig) -> Vec<String> {
        let c = self.counters.len();
        let mut survivors: Vec<usize> = (0..c)
            .filter(|&i| self.with_ipc[i].abs() >= cfg.alpha)
            .collect();
        survivors.sort_by(|&a, &b| {
            self.with_ipc[b]
                .abs()
                .total_cmp(&self.with_ipc[a].abs())
                .then_with(|| self.counters[a].cmp(&self.counters[b]))
        });
        let mut kept: Vec<usize> = Vec::with_capacity(survivors.len());
        for i in survivors {
            if kept.iter().all(|&k| self.pairwise[i * c + k].abs() <= cfg.beta) {
                kept.push(i);
            }
        }
        kept.into_iter().map(|i| self.counters[i].clone()).collect()
    }
}

/// Bug-free legacy traces of `workload`, one per train architecture.
pub fn legacy_traces<'a>(dataset: &'a Dataset, workload: &str) -> Vec<&'a CounterTrace> {
    dataset
        .workload_traces(workload, Split::Train)
        .into_iter()
        .filter(|t| t.label == UnitLabel::BugFree)
        .collect()
}

pub fn select_counters(
    dataset: &Dataset,
    workload: &str,
    cfg: &SelectionConfig,
) -> Result<Vec<String>> {
    cfg.validate()?;
    let legacy = legacy_traces(dataset, workload);
    if legacy.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no bug-free legacy traces for workload {workload:?}"
        )));
    }
    if legacy.len() < 2 {
        log::warn!("workload {workload:?}: selection uses a single legacy architecture");
    }
    Ok(CorrelationTable::from_traces(&legacy)?.select(cfg))
}

/// De-duplicated union in order of first appearance, scanning workloads in
/// sorted id order.
pub fn build_superset(per_workload: &BTreeMap<String, Vec<String>>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for list in per_workload.values() {
        for name in list {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
    }
    out
}

/// Per-workload counter selections plus their union.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub per_workload: BTreeMap<String, Vec<String>>,
    pub superset: Vec<String>,
}

const SUPERSET_KEY: &str = "superset";

impl SelectionResult {
    pub fn from_selections(per_workload: BTreeMap<String, Vec<String>>) -> Result<Self> {
        if per_workload.is_empty() {
            return Err(Error::EmptyInput("no workload selections".into()));
        }
        let superset = build_superset(&per_workload);
        Ok(SelectionResult {
            per_workload,
            superset,
        })
    }

    /// JSON object mapping each workload id to its list, plus `"superset"`.
    pub fn to_json_string(&self) -> Result<String> {
        if self.per_workload.contains_key(SUPERSET_KEY) {
            return Err(Error::Config(format!(
                "workload id {SUPERSET_KEY:?} collides with the union key"
            )));
        }
        let mut map = serde_json::Map::new();
        for (w, list) in &self.per_workload {
            map.insert(w.clone(), serde_json::to_value(list)?);
        }
        map.insert(SUPERSET_KEY.into(), serde_json::to_value(&self.superset)?);
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let superset = map
            .remove(SUPERSET_KEY)
            .ok_or_else(|| Error::Schema(format!("selection lacks {SUPERSET_KEY:?}")))?;
        let result = SelectionResult::from_selections(map)?;
        if result.superset != superset {
            return Err(Error::Schema(
                "superset is not the ordered union of the per-workload lists".into(),
            ));
        }
        Ok(result)
    }
}

/// Runs selection for every workload of the dataset.
pub fn select_all(dataset: &Dataset, cfg: &SelectionConfig) -> Result<SelectionResult> {
    let mut per_workload = BTreeMap::new();
    for w in dataset.workloads() {
        per_workload.insert(w.clone(), select_counters(dataset, w, cfg)?);
    }
    SelectionResult::from_selections(per_workload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceMeta;

    #[test]
    fn pearson_perfect_relations() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors_and_degenerate() {
        assert_eq!(pearson(&[1.0, 2.0], &[1.0]).unwrap_err().kind(), "LengthMismatch");
        assert_eq!(pearson(&[1.0], &[1.0]).unwrap_err().kind(), "InsufficientData");
        assert_eq!(pearson(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    fn legacy(arch: &str, names: &[&str], cols: &[Vec<f64>], ipc: Vec<f64>) -> CounterTrace {
        let t = ipc.len();
        let mut samples = Vec::new();
        for r in 0..t {
            samples.extend(cols.iter().map(|c| c[r]));
        }
        CounterTrace::new(
            TraceMeta {
                workload_id: "w".into(),
                arch_id: arch.into(),
                label: UnitLabel::BugFree,
                bug_id: None,
                window_cycles: 1,
            },
            names.iter().map(|s| s.to_string()).collect(),
            samples,
            ipc,
        )
        .unwrap()
    }

    #[test]
    fn ipc_copy_kept_and_duplicates_pruned() {
        let ipc = vec![1.0, 1.4, 0.9, 2.0, 1.7];
        let noise = vec![3.0, 1.0, 4.0, 1.0, 5.0];
        let t = legacy(
            "a",
            &["dup_a", "dup_b", "ipc_copy", "noise"],
            &[ipc.clone(), ipc.clone(), ipc.clone(), noise],
            ipc,
        );
        let table = CorrelationTable::from_traces(&[&t]).unwrap();
        let sel = table.select(&SelectionConfig::default());
        // All three copies pass step 1; only the lexicographically first survives.
        assert_eq!(sel, vec!["dup_a".to_string()]);
        let no_prune = table.select(&SelectionConfig { alpha: 0.7, beta: 1.0 });
        assert_eq!(no_prune, ["dup_a", "dup_b", "ipc_copy"]);
    }

    #[test]
    fn superset_order() {
        let m: BTreeMap<String, Vec<String>> = [
            ("w1".to_string(), vec!["b".to_string(), "c".to_string()]),
            ("w0".to_string(), vec!["a".to_string(), "b".to_string()]),
        ]
        .into();
        assert_eq!(build_superset(&m), ["a", "b", "c"]);
        let single: BTreeMap<String, Vec<String>> =
            [("w".to_string(), vec!["z".to_string(), "y".to_string()])].into();
        assert_eq!(build_superset(&single), ["z", "y"]);
    }

    #[test]
    fn selection_json_shape() {
        let r = SelectionResult::from_selections(
            [
                ("w0".to_string(), vec!["a".to_string()]),
                ("w1".to_string(), vec!["b".to_string(), "a".to_string()]),
            ]
            .into(),
        )
        .unwrap();
        let text = r.to_json_string().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["superset"], serde_json::json!(["a", "b"]));
        assert_eq!(v["w1"], serde_json::json!(["b", "a"]));
        assert_eq!(SelectionResult::from_json_str(&text).unwrap(), r);
        assert!(SelectionResult::from_json_str(r#"{"w0":["a"],"superset":["b"]}"#).is_err());
        assert!(SelectionResult::from_json_str(r#"{"w0":["a"]}"#).is_err());
    }

    #[test]
    fn config_bounds() {
        assert!(SelectionConfig { alpha: 1.2, beta: 0.5 }.validate().is_err());
        assert!(SelectionConfig::default().validate().is_ok());
    }
}
