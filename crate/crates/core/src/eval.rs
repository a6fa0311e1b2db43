//! Top-k evaluation, workload-count sensitivity and the BugFree audit.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cbc::{aggregate, localize_cbc, CbcModelBank};
use crate::dataset::{Category, Dataset, DesignInstance, Split};
use crate::ensemble;
use crate::error::{Error, Result};
use crate::label::{UnitLabel, UNITS};
use crate::p2bc::P2bcModels;
use crate::score::{rank, ScoreVector};
use crate::simgen::derive_seed;
use crate::trace::CounterTrace;

/// Fraction of verdicts whose true label is among the first `k` entries.
pub fn topk_accuracy<R: AsRef<[UnitLabel]>>(verdicts: &[(R, UnitLabel)], k: usize) -> Result<f64> {
    if verdicts.is_empty() {
        return Err(Error::EmptyInput("no verdicts".into()));
    }
    if k == 0 {
        return Err(Error::Value("k must be at least 1".into()));
    }
    let hits = verdicts
        .iter()
        .filter(|(r, truth)| r.as_ref().iter().take(k).any(|u| u == truth))
        .count();
    Ok(hits as f64 / verdicts.len() as f64)
}

/// Anything that turns one design's traces into unit scores.
pub trait Localizer: Sync {
    fn name(&self) -> &str;

    /// Scores over the eleven units; a BugFree class, if any, is dropped.
    fn localize(&self, traces: &[&CounterTrace]) -> Result<ScoreVector>;
}

fn units_only(scores: &ScoreVector) -> Result<ScoreVector> {
    ScoreVector::new(
        scores
            .scores
            .iter()
            .filter(|(u, _)| u.is_unit())
            .map(|(u, v)| (*u, *v))
            .collect(),
    )
}

impl Localizer for CbcModelBank {
    fn name(&self) -> &str {
        "cbc"
    }

    fn localize(&self, traces: &[&CounterTrace]) -> Result<ScoreVector> {
        units_only(&localize_cbc(self, traces)?.scores)
    }
}

impl Localizer for P2bcModels {
    fn name(&self) -> &str {
        "p2bc"
    }

    fn localize(&self, traces: &[&CounterTrace]) -> Result<ScoreVector> {
        units_only(&P2bcModels::localize(self, traces)?.scores)
    }
}

pub struct Ensemble<'a> {
    pub cbc: &'a CbcModelBank,
    pub p2bc: &'a P2bcModels,
}

impl Localizer for Ensemble<'_> {
    fn name(&self) -> &str {
        "ensemble"
    }

    fn localize(&self, traces: &[&CounterTrace]) -> Result<ScoreVector> {
        let a = Localizer::localize(self.cbc, traces)?;
        let b = Localizer::localize(self.p2bc, traces)?;
        Ok(ensemble::combine(&a, &b)?.combined)
    }
}

/// Uniform random scores; the draw depends only on the seed and on the
/// identity of the design, so evaluation stays reproducible.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Localizer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn localize(&self, traces: &[&CounterTrace]) -> Result<ScoreVector> {
        if traces.is_empty() {
            return Err(Error::EmptyInput("no traces to localize".into()));
        }
        let mut h = 0xcbf2_9ce4_8422_2325;
        for t in traces {
            h = fnv1a(t.arch_id.as_bytes(), h);
            h = fnv1a(t.bug_id.as_deref().unwrap_or("").as_bytes(), h);
            h = fnv1a(t.workload_id.as_bytes(), h);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[h]));
        ScoreVector::new(UNITS.iter().map(|u| (*u, rng.random::<f64>())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub max_k: usize,
    /// Lower edges of the reported impact bands (IPC loss fractions).
    pub impact_bands: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_k: 5,
            impact_bands: vec![0.001, 0.01, 0.05],
        }
    }
}

/// One localized buggy test design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalVerdict {
    pub arch_id: String,
    pub bug_id: String,
    pub label: UnitLabel,
    pub category: Category,
    pub impact: Option<f64>,
    pub workloads: usize,
    pub scores: BTreeMap<UnitLabel, f64>,
    pub ranking: Vec<UnitLabel>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub group: String,
    pub n: usize,
    /// Pooled top-k accuracy for k = 1..=max_k.
    pub topk: Vec<f64>,
    /// Top-k averaged over test architectures.
    pub per_arch_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecall {
    pub n: usize,
    pub top1: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_seconds: f64,
    pub mean_seconds_per_design: f64,
    pub max_seconds_per_design: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub n_verdicts: usize,
    pub random_baseline: Vec<f64>,
    pub overall: AccuracyRow,
    pub categories: Vec<AccuracyRow>,
    /// Empty when the dataset carries no impact metadata.
    pub bands: Vec<AccuracyRow>,
    pub per_unit_recall: BTreeMap<UnitLabel, UnitRecall>,
    pub runtime: RuntimeStats,
    pub config: EvalConfig,
    pub band_note: String,
    pub verdicts: Vec<EvalVerdict>,
}

fn row(group: String, verdicts: &[&EvalVerdict], max_k: usize) -> Option<AccuracyRow> {
    if verdicts.is_empty() {
        return None;
    }
    let pairs: Vec<(&[UnitLabel], UnitLabel)> =
        verdicts.iter().map(|v| (v.ranking.as_slice(), v.label)).collect();
    let topk = (1..=max_k)
        .map(|k| topk_accuracy(&pairs, k))
        .collect::<Result<Vec<_>>>()
        .ok()?;
    let mut by_arch: BTreeMap<&str, Vec<(&[UnitLabel], UnitLabel)>> = BTreeMap::new();
    for v in verdicts {
        by_arch
            .entry(v.arch_id.as_str())
            .or_default()
            .push((v.ranking.as_slice(), v.label));
    }
    let per_arch_mean = (1..=max_k)
        .map(|k| {
            let accs: Vec<f64> = by_arch
                .values()
                .map(|p| topk_accuracy(p, k).unwrap_or(0.0))
                .collect();
            accs.iter().sum::<f64>() / accs.len() as f64
        })
        .collect();
    Some(AccuracyRow {
        group,
        n: verdicts.len(),
        topk,
        per_arch_mean,
    })
}

fn buggy_instances(dataset: &Dataset) -> Result<Vec<DesignInstance<'_>>> {
    let inst: Vec<_> = dataset
        .instances(Split::Test)
        .into_iter()
        .filter(|i| i.bug_id.is_some())
        .collect();
    if inst.is_empty() {
        return Err(Error::NoTestData("the test split has no buggy designs".into()));
    }
    Ok(inst)
}

/// Localizes every buggy test design from all of its workloads and tabulates
/// top-k accuracy overall, per category and per impact band.
pub fn evaluate(method: &dyn Localizer, dataset: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.max_k == 0 || cfg.max_k > UNITS.len() {
        return Err(Error::Config(format!("max_k {} outside 1..=11", cfg.max_k)));
    }
    let start = Instant::now();
    let instances = buggy_instances(dataset)?;
    let verdicts = instances
        .par_iter()
        .map(|inst| {
            let t0 = Instant::now();
            let scores = method.localize(&inst.traces)?;
            let bug_id = inst.bug_id.unwrap_or_default();
            let category = dataset
                .category_of(bug_id)
                .ok_or_else(|| Error::Manifest(format!("bug {bug_id:?} has no category")))?;
            Ok(EvalVerdict {
                arch_id: inst.arch_id.to_string(),
                bug_id: bug_id.to_string(),
                label: inst.label,
                category,
                impact: dataset.impact_of(bug_id),
                workloads: inst.traces.len(),
                ranking: scores.ranking(),
                scores: scores.scores,
                seconds: t0.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_seconds = start.elapsed().as_secs_f64();
    Ok(report_from_verdicts(method.name(), verdicts, cfg, total_seconds))
}

/// Builds the accuracy tables from raw verdicts.
pub fn report_from_verdicts(
    method: &str,
    verdicts: Vec<EvalVerdict>,
    cfg: &EvalConfig,
    total_seconds: f64,
) -> EvalReport {
    let all: Vec<&EvalVerdict> = verdicts.iter().collect();
    let max_k = cfg.max_k;
    let overall = row("all".into(), &all, max_k).unwrap_or(AccuracyRow {
        group: "all".into(),
        n: 0,
        topk: Vec::new(),
        per_arch_mean: Vec::new(),
    });
    let categories = Category::ALL
        .iter()
        .filter_map(|c| {
            let sel: Vec<_> = all.iter().copied().filter(|v| v.category == *c).collect();
            row(c.as_str().to_string(), &sel, max_k)
        })
        .collect();
    let bands = cfg
        .impact_bands
        .iter()
        .filter_map(|edge| {
            let sel: Vec<_> = all
                .iter()
                .copied()
                .filter(|v| v.impact.is_some_and(|i| i > *edge))
                .collect();
            row(format!("impact>{}%", edge * 100.0), &sel, max_k)
        })
        .collect();
    let mut per_unit_recall = BTreeMap::new();
    for u in UNITS {
        let pairs: Vec<(&[UnitLabel], UnitLabel)> = all
            .iter()
            .filter(|v| v.label == u)
            .map(|v| (v.ranking.as_slice(), v.label))
            .collect();
        if let (Ok(top1), Ok(top3)) = (topk_accuracy(&pairs, 1), topk_accuracy(&pairs, 3)) {
            per_unit_recall.insert(u, UnitRecall { n: pairs.len(), top1, top3 });
        }
    }
    let secs: Vec<f64> = verdicts.iter().map(|v| v.seconds).collect();
    let runtime = RuntimeStats {
        total_seconds,
        mean_seconds_per_design: if secs.is_empty() { 0.0 } else { secs.iter().sum::<f64>() / secs.len() as f64 },
        max_seconds_per_design: secs.iter().copied().fold(0.0, f64::max),
    };
    EvalReport {
        method: method.to_string(),
        n_verdicts: verdicts.len(),
        random_baseline: (1..=max_k).map(|k| k as f64 / UNITS.len() as f64).collect(),
        overall,
        categories,
        bands,
        per_unit_recall,
        runtime,
        config: cfg.clone(),
        band_note: "bands are open lower bounds on the mean IPC loss of the bug".into(),
        verdicts,
    }
}

impl EvalReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `method,group,n,k,accuracy,per_arch_mean` rows, plus the random baseline.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,group,n,k,accuracy,per_arch_mean\n");
        let rows = std::iter::once(&self.overall)
            .chain(&self.categories)
            .chain(&self.bands);
        for r in rows {
            for (i, (a, m)) in r.topk.iter().zip(&r.per_arch_mean).enumerate() {
                out.push_str(&format!("{},{},{},{},{a},{m}\n", self.method, r.group, r.n, i + 1));
            }
        }
        for (i, b) in self.random_baseline.iter().enumerate() {
            out.push_str(&format!("random,all,{},{},{b},{b}\n", self.n_verdicts, i + 1));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    /// Workload counts, strictly decreasing.
    pub grid: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl SensitivityConfig {
    /// `n, n - batch, n - 2 * batch, ...` while positive.
    pub fn batched(n_workloads: usize, batch: usize, repetitions: usize, seed: u64) -> Self {
        let batch = batch.max(1);
        let grid = (0..)
            .map(|i| n_workloads as isize - (i * batch) as isize)
            .take_while(|n| *n > 0)
            .map(|n| n as usize)
            .collect();
        SensitivityConfig {
            grid,
            repetitions,
            seed,
        }
    }

    pub fn with_defaults(n_workloads: usize) -> Self {
        Self::batched(n_workloads, 5, 100, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub workloads: usize,
    pub mean_top1: f64,
    pub min_top1: f64,
    pub max_top1: f64,
    pub per_repetition: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub grid: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub points: Vec<SensitivityPoint>,
}

impl SensitivityResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("workloads,mean_top1,min_top1,max_top1\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.workloads, p.mean_top1, p.min_top1, p.max_top1));
        }
        out
    }
}

/// Top-1 accuracy as workloads are dropped at random, without retraining.
/// Each repetition draws one random workload order and keeps its first
/// `g` workloads at grid point `g`, so the dropped sets are nested.
pub fn workload_sensitivity(
    bank: &CbcModelBank,
    dataset: &Dataset,
    cfg: &SensitivityConfig,
) -> Result<SensitivityResult> {
    let n_workloads = bank.workloads().len();
    if cfg.grid.is_empty() || cfg.repetitions == 0 {
        return Err(Error::Grid("empty grid or zero repetitions".into()));
    }
    if cfg.grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Grid(format!("grid {:?} is not strictly decreasing", cfg.grid)));
    }
    if cfg.grid[0] > n_workloads || *cfg.grid.last().unwrap_or(&0) == 0 {
        return Err(Error::Grid(format!(
            "grid {:?} outside 1..={n_workloads} workloads",
            cfg.grid
        )));
    }
    let units: Vec<UnitLabel> = bank.classes.iter().copied().filter(|c| c.is_unit()).collect();
    let instances = buggy_instances(dataset)?;
    // Per-design, per-workload scores are computed once.
    let per_design = instances
        .par_iter()
        .map(|inst| {
            let scores = localize_cbc(bank, &inst.traces)?.per_workload;
            Ok((inst.label, scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let workloads: Vec<String> = bank.workloads().iter().map(|w| w.to_string()).collect();
    let mut per_point = vec![Vec::with_capacity(cfg.repetitions); cfg.grid.len()];
    for rep in 0..cfg.repetitions {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[rep as u64]));
        let mut order = workloads.clone();
        order.shuffle(&mut rng);
        for (gi, &g) in cfg.grid.iter().enumerate() {
            let kept: std::collections::BTreeSet<&str> = order[..g].iter().map(String::as_str).collect();
            let mut pairs = Vec::with_capacity(per_design.len());
            for (label, per_workload) in &per_design {
                let sv = aggregate(
                    &units,
                    per_workload
                        .iter()
                        .filter(|(w, _)| kept.contains(w.as_str()))
                        .map(|(_, s)| s),
                )?;
                pairs.push((rank(&sv.scores), *label));
            }
            per_point[gi].push(topk_accuracy(&pairs, 1)?);
        }
    }
    let points = cfg
        .grid
        .iter()
        .zip(per_point)
        .map(|(&g, accs)| SensitivityPoint {
            workloads: g,
            mean_top1: accs.iter().sum::<f64>() / accs.len() as f64,
            min_top1: accs.iter().copied().fold(f64::INFINITY, f64::min),
            max_top1: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            per_repetition: accs,
        })
        .collect();
    Ok(SensitivityResult {
        grid: cfg.grid.clone(),
        repetitions: cfg.repetitions,
        seed: cfg.seed,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugFreeDesign {
    pub arch_id: String,
    /// 1-based position of BugFree in the ranking.
    pub bugfree_rank: usize,
    pub scores: BTreeMap<UnitLabel, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugFreeAudit {
    pub min_impact: f64,
    pub bugfree_designs: Vec<BugFreeDesign>,
    pub bugfree_ranked_first: usize,
    pub n_buggy: usize,
    /// BugFree's 1-based rank on buggy designs, as rank -> count.
    pub buggy_rank_histogram: BTreeMap<usize, usize>,
    pub buggy_with_bugfree_in_top5: usize,
}

/// Where the BugFree class lands on bug-free and on buggy test designs.
/// Buggy designs below `min_impact` (when impacts are known) are skipped.
pub fn bugfree_audit(bank: &CbcModelBank, dataset: &Dataset, min_impact: f64) -> Result<BugFreeAudit> {
    if !bank.has_class(UnitLabel::BugFree) {
        return Err(Error::MissingClass("the bank has no BugFree class".into()));
    }
    let instances = dataset.instances(Split::Test);
    if instances.is_empty() {
        return Err(Error::EmptyInput("no test designs".into()));
    }
    let ranked = instances
        .par_iter()
        .map(|inst| {
            let loc = localize_cbc(bank, &inst.traces)?;
            let pos = loc
                .ranking
                .iter()
                .position(|c| *c == UnitLabel::BugFree)
                .map_or(loc.ranking.len(), |p| p + 1);
            Ok((pos, loc.scores.scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut audit = BugFreeAudit {
        min_impact,
        bugfree_designs: Vec::new(),
        bugfree_ranked_first: 0,
        n_buggy: 0,
        buggy_rank_histogram: BTreeMap::new(),
        buggy_with_bugfree_in_top5: 0,
    };
    for (inst, (pos, scores)) in instances.iter().zip(ranked) {
        match inst.bug_id {
            None => {
                if pos == 1 {
                    audit.bugfree_ranked_first += 1;
                }
                audit.bugfree_designs.push(BugFreeDesign {
                    arch_id: inst.arch_id.to_string(),
                    bugfree_rank: pos,
                    scores,
                });
            }
            Some(bug) => {
                if dataset.impact_of(bug).is_some_and(|i| i <= min_impact) {
                    continue;
                }
                audit.n_buggy += 1;
                *audit.buggy_rank_histogram.entry(pos).or_default() += 1;
                if pos <= 5 {
                    audit.buggy_with_bugfree_in_top5 += 1;
                }
            }
        }
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_hand_count() {
        use UnitLabel::*;
        let v = vec![
            (vec![Fetch, Decode, Issue], Fetch),
            (vec![Decode, Fetch, Issue], Fetch),
            (vec![Issue, Decode, Fetch], Fetch),
            (vec![Issue, Decode, Fetch], Decode),
            (vec![Issue, Decode, Fetch], Commit),
        ];
        assert_eq!(topk_accuracy(&v, 1).unwrap(), 0.2);
        assert_eq!(topk_accuracy(&v, 2).unwrap(), 0.6);
        assert_eq!(topk_accuracy(&v, 3).unwrap(), 0.8);
        assert_eq!(topk_accuracy(&v, 11).unwrap(), 0.8);
    }

    #[test]
    fn topk_errors() {
        let empty: Vec<(Vec<UnitLabel>, UnitLabel)> = Vec::new();
        assert_eq!(topk_accuracy(&empty, 1).unwrap_err().kind(), "EmptyInput");
        let one = vec![(UNITS.to_vec(), UnitLabel::Fetch)];
        assert!(topk_accuracy(&one, 0).is_err());
    }

    #[test]
    fn batched_grid() {
        assert_eq!(SensitivityConfig::batched(12, 5, 1, 0).grid, vec![12, 7, 2]);
        assert_eq!(SensitivityConfig::batched(10, 5, 1, 0).grid, vec![10, 5]);
        assert_eq!(SensitivityConfig::with_defaults(12).repetitions, 100);
    }

    #[test]
    fn csv_has_row_per_k() {
        let v = EvalVerdict {
            arch_id: "a".into(),
            bug_id: "b".into(),
            label: UnitLabel::Fetch,
            category: Category::SeenVariation,
            impact: Some(0.02),
            workloads: 1,
            scores: BTreeMap::new(),
            ranking: UNITS.to_vec(),
            seconds: 0.0,
        };
        let r = report_from_verdicts("x", vec![v], &EvalConfig::default(), 0.0);
        assert_eq!(r.overall.topk, vec![1.0; 5]);
        assert_eq!(r.bands.len(), 2);
        let csv = r.to_csv();
        assert_eq!(csv.lines().filter(|l| l.starts_with("x,all,")).count(), 5);
    }
}
