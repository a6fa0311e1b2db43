//! Counter-based classification: one one-vs-all classifier per
//! (workload, unit) over the counter superset, with per-workload confidences
//! summed into a unit ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::fsio;
use crate::label::{UnitLabel, UNITS};
use crate::ml::{
    fit_convnet, ConvArch, ConvNet1D, Dataset3, GbdtConfig, GbdtModel, GbdtTrainer, Loss, Matrix,
    TrainConfig,
};
use crate::p2bc::resample;
use crate::score::ScoreVector;
use crate::trace::CounterTrace;

pub const BANK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbcMode {
    /// Boosted trees score every window; a trace's score is the mean.
    PerTimeStep,
    /// A convnet scores the whole trace after resampling to a fixed length.
    PerTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbcConfig {
    pub mode: CbcMode,
    pub gbdt: GbdtConfig,
    pub include_bugfree_class: bool,
    /// Per-trace mode input length; defaults to the rounded mean train length.
    pub trace_length: Option<usize>,
    pub conv_arch: ConvArch,
    pub conv_train: TrainConfig,
}

impl Default for CbcConfig {
    fn default() -> Self {
        CbcConfig {
            mode: CbcMode::PerTimeStep,
            gbdt: GbdtConfig::default(),
            include_bugfree_class: false,
            trace_length: None,
            conv_arch: ConvArch::default(),
            conv_train: TrainConfig::default(),
        }
    }
}

/// Trained classifiers, keyed by workload then class.
#[derive(Debug, Clone, PartialEq)]
pub struct CbcModelBank {
    pub mode: CbcMode,
    pub superset: Vec<String>,
    pub classes: Vec<UnitLabel>,
    pub include_bugfree_class: bool,
    pub models: BTreeMap<String, BTreeMap<UnitLabel, GbdtModel>>,
    pub trace_models: BTreeMap<String, BTreeMap<UnitLabel, ConvNet1D>>,
    pub trace_length: Option<usize>,
    /// Superset counters absent from some training trace, per workload.
    pub zero_filled: BTreeMap<String, Vec<String>>,
}

fn classes_for(include_bugfree: bool) -> Vec<UnitLabel> {
    let mut c = UNITS.to_vec();
    if include_bugfree {
        c.push(UnitLabel::BugFree);
    }
    c
}

pub(crate) fn mean_length(traces: &[&CounterTrace]) -> usize {
    let mean = traces.iter().map(|t| t.len() as f64).sum::<f64>() / traces.len() as f64;
    (mean.round() as usize).max(2)
}

/// Resamples every projected counter column of `trace` to `len` windows,
/// time-major.
fn trace_tensor(trace: &CounterTrace, superset: &[String], len: usize) -> Result<(Vec<f64>, Vec<String>)> {
    let (data, missing) = trace.project(superset);
    let c = superset.len();
    let mut out = vec![0.0; len * c];
    if trace.len() < 2 {
        return Err(Error::BadLength(format!(
            "trace of workload {:?} has a single window",
            trace.workload_id
        )));
    }
    for j in 0..c {
        let col: Vec<f64> = (0..trace.len()).map(|t| data[t * c + j]).collect();
        for (t, v) in resample(&col, len)?.into_iter().enumerate() {
            out[t * c + j] = v;
        }
    }
    Ok((out, missing))
}

pub fn train_cbc(dataset: &Dataset, superset: &[String], cfg: &CbcConfig) -> Result<CbcModelBank> {
    if superset.is_empty() {
        return Err(Error::EmptyInput("counter superset is empty".into()));
    }
    let classes = classes_for(cfg.include_bugfree_class);
    let mut per_workload = Vec::new();
    for w in dataset.workloads() {
        let traces = dataset.workload_traces(w, Split::Train);
        if traces.is_empty() {
            return Err(Error::MissingWorkload(format!("no train traces for workload {w:?}")));
        }
        per_workload.push((w.clone(), traces));
    }
    let all_train: Vec<&CounterTrace> = per_workload.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    let trace_length = match cfg.mode {
        CbcMode::PerTimeStep => None,
        CbcMode::PerTrace => Some(cfg.trace_length.unwrap_or_else(|| mean_length(&all_train))),
    };

    let mut bank = CbcModelBank {
        mode: cfg.mode,
        superset: superset.to_vec(),
        classes: classes.clone(),
        include_bugfree_class: cfg.include_bugfree_class,
        models: BTreeMap::new(),
        trace_models: BTreeMap::new(),
        trace_length,
        zero_filled: BTreeMap::new(),
    };
    for (w, traces) in &per_workload {
        let mut missing = BTreeSet::new();
        match cfg.mode {
            CbcMode::PerTimeStep => {
                let mut data = Vec::new();
                let mut labels = Vec::new();
                for t in traces {
                    let (rows, miss) = t.project(superset);
                    missing.extend(miss);
                    data.extend(rows);
                    labels.extend(std::iter::repeat(t.label).take(t.len()));
                }
                let x = Matrix::new(labels.len(), superset.len(), data)?;
                let trainer = GbdtTrainer::new(&x)?;
                let fitted: Vec<(UnitLabel, GbdtModel)> = classes
                    .par_iter()
                    .map(|&class| {
                        let y: Vec<f64> =
                            labels.iter().map(|&l| f64::from(u8::from(l == class))).collect();
                        let model = trainer.fit(&y, Loss::Logistic, &cfg.gbdt, superset.to_vec())?;
                        if model.degenerate {
                            log::warn!("workload {w:?}, class {class}: single-class training data");
                        }
                        Ok((class, model))
                    })
                    .collect::<Result<_>>()?;
                bank.models.insert(w.clone(), fitted.into_iter().collect());
            }
            CbcMode::PerTrace => {
                let len = trace_length.expect("set for per-trace mode");
                let mut samples = Vec::new();
                for t in traces {
                    let (s, miss) = trace_tensor(t, superset, len)?;
                    missing.extend(miss);
                    samples.push(s);
                }
                let x = Dataset3::from_samples(len, superset.len(), &samples)?;
                let fitted: Vec<(UnitLabel, ConvNet1D)> = classes
                    .par_iter()
                    .map(|&class| {
                        let y: Vec<f64> =
                            traces.iter().map(|t| f64::from(u8::from(t.label == class))).collect();
                        Ok((class, fit_convnet(&x, &y, &cfg.conv_arch, &cfg.conv_train)?))
                    })
                    .collect::<Result<_>>()?;
                bank.trace_models.insert(w.clone(), fitted.into_iter().collect());
            }
        }
        if !missing.is_empty() {
            log::warn!("workload {w:?}: zero-filled counters {missing:?} during training");
        }
        bank.zero_filled.insert(w.clone(), missing.into_iter().collect());
        log::info!("cbc: trained {} classes for workload {w:?}", classes.len());
    }
    Ok(bank)
}

/// Per-workload unit scores for one trace, plus the counters zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceScores {
    pub scores: BTreeMap<UnitLabel, f64>,
    pub zero_filled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbcLocalization {
    pub scores: ScoreVector,
    pub ranking: Vec<UnitLabel>,
    pub per_workload: BTreeMap<String, BTreeMap<UnitLabel, f64>>,
    pub zero_filled: Vec<String>,
}

impl CbcModelBank {
    pub fn workloads(&self) -> Vec<&str> {
        match self.mode {
            CbcMode::PerTimeStep => self.models.keys().map(String::as_str).collect(),
            CbcMode::PerTrace => self.trace_models.keys().map(String::as_str).collect(),
        }
    }

    pub fn model_count(&self) -> usize {
        self.models.values().map(BTreeMap::len).sum::<usize>()
            + self.trace_models.values().map(BTreeMap::len).sum::<usize>()
    }

    pub fn has_class(&self, class: UnitLabel) -> bool {
        self.classes.contains(&class)
    }

    /// Copy of the bank without the BugFree class.
    pub fn restricted_to_units(&self) -> CbcModelBank {
        let mut bank = self.clone();
        bank.classes.retain(|c| c.is_unit());
        bank.include_bugfree_class = false;
        for m in bank.models.values_mut() {
            m.retain(|c, _| c.is_unit());
        }
        for m in bank.trace_models.values_mut() {
            m.retain(|c, _| c.is_unit());
        }
        bank
    }

    /// Mean per-window confidence of each class model for `trace`'s workload
    /// (or the single convnet confidence in per-trace mode).
    pub fn score_trace(&self, trace: &CounterTrace) -> Result<TraceScores> {
        let w = &trace.workload_id;
        match self.mode {
            CbcMode::PerTimeStep => {
                let models = self
                    .models
                    .get(w)
                    .ok_or_else(|| Error::UnknownWorkload(format!("no models for workload {w:?}")))?;
                let (rows, zero_filled) = trace.project(&self.superset);
                let c = self.superset.len();
                let n = trace.len() as f64;
                let scores = models
                    .iter()
                    .map(|(class, m)| {
                        let total: f64 = rows.chunks_exact(c).map(|r| m.predict_row(r)).sum();
                        (*class, total / n)
                    })
                    .collect();
                Ok(TraceScores {
                    scores,
                    zero_filled,
                })
            }
            CbcMode::PerTrace => {
                let models = self
                    .trace_models
                    .get(w)
                    .ok_or_else(|| Error::UnknownWorkload(format!("no models for workload {w:?}")))?;
                let len = self
                    .trace_length
                    .ok_or_else(|| Error::Model("per-trace bank lacks a trace length".into()))?;
                let (x, zero_filled) = trace_tensor(trace, &self.superset, len)?;
                let scores = models
                    .iter()
                    .map(|(class, m)| Ok((*class, m.predict_one(&x)?)))
                    .collect::<Result<_>>()?;
                Ok(TraceScores {
                    scores,
                    zero_filled,
                })
            }
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        for (w, models) in &self.models {
            for (class, m) in models {
                let file = format!("models/m{:04}.json", files.len());
                fsio::write(&dir.join(&file), &m.to_json_string()?)?;
                files.push(BankEntry {
                    workload_id: w.clone(),
                    class: *class,
                    kind: ModelKind::Gbdt,
                    file,
                });
            }
        }
        for (w, models) in &self.trace_models {
            for (class, m) in models {
                let file = format!("models/m{:04}.json", files.len());
                fsio::write(&dir.join(&file), &m.to_json_string()?)?;
                files.push(BankEntry {
                    workload_id: w.clone(),
                    class: *class,
                    kind: ModelKind::Convnet,
                    file,
                });
            }
        }
        let index = BankIndex {
            version: BANK_FORMAT_VERSION,
            mode: self.mode,
            superset: self.superset.clone(),
            classes: self.classes.clone(),
            include_bugfree_class: self.include_bugfree_class,
            trace_length: self.trace_length,
            zero_filled: self.zero_filled.clone(),
            models: files,
        };
        fsio::write(&dir.join("bank.json"), &serde_json::to_string_pretty(&index)?)
    }

    pub fn load(dir: &Path) -> Result<CbcModelBank> {
        let index = BankIndex::from_json_str(&fsio::read(&dir.join("bank.json"))?)?;
        let mut bank = CbcModelBank {
            mode: index.mode,
            superset: index.superset,
            classes: index.classes,
            include_bugfree_class: index.include_bugfree_class,
            models: BTreeMap::new(),
            trace_models: BTreeMap::new(),
            trace_length: index.trace_length,
            zero_filled: index.zero_filled,
        };
        for e in index.models {
            let text = fsio::read(&dir.join(&e.file))?;
            match e.kind {
                ModelKind::Gbdt => {
                    let m = GbdtModel::from_json_str(&text)?;
                    if m.feature_names != bank.superset {
                        return Err(Error::Model(format!(
                            "{}: features differ from the bank superset",
                            e.file
                        )));
                    }
                    bank.models.entry(e.workload_id).or_default().insert(e.class, m);
                }
                ModelKind::Convnet => {
                    let m = ConvNet1D::from_json_str(&text)?;
                    if m.in_channels != bank.superset.len() || Some(m.input_len) != bank.trace_length {
                        return Err(Error::Model(format!("{}: input shape differs from the bank", e.file)));
                    }
                    bank.trace_models.entry(e.workload_id).or_default().insert(e.class, m);
                }
            }
        }
        bank.check()?;
        Ok(bank)
    }

    fn check(&self) -> Result<()> {
        let maps: Vec<Vec<UnitLabel>> = match self.mode {
            CbcMode::PerTimeStep => self.models.values().map(|m| m.keys().copied().collect()).collect(),
            CbcMode::PerTrace => self.trace_models.values().map(|m| m.keys().copied().collect()).collect(),
        };
        let mut want = self.classes.clone();
        want.sort();
        if maps.is_empty() || maps.iter().any(|m| *m != want) {
            return Err(Error::Model("bank does not hold one model per workload and class".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    Gbdt,
    Convnet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankEntry {
    workload_id: String,
    class: UnitLabel,
    kind: ModelKind,
    file: String,
}

/// The `bank.json` index of a saved bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankIndex {
    version: u32,
    mode: CbcMode,
    superset: Vec<String>,
    classes: Vec<UnitLabel>,
    include_bugfree_class: bool,
    trace_length: Option<usize>,
    zero_filled: BTreeMap<String, Vec<String>>,
    models: Vec<BankEntry>,
}

impl BankIndex {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let index: BankIndex = serde_json::from_str(text)?;
        if index.version != BANK_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported bank version {}", index.version)));
        }
        if index.superset.is_empty() {
            return Err(Error::Model("bank superset is empty".into()));
        }
        for e in &index.models {
            let p = Path::new(&e.file);
            if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                return Err(Error::Model(format!("model path {:?} escapes the bank", e.file)));
            }
        }
        Ok(index)
    }
}

/// Sums per-workload scores into one vector over `classes`.
pub fn aggregate<'a>(
    classes: &[UnitLabel],
    per_workload: impl IntoIterator<Item = &'a BTreeMap<UnitLabel, f64>>,
) -> Result<ScoreVector> {
    let mut total: BTreeMap<UnitLabel, f64> = classes.iter().map(|c| (*c, 0.0)).collect();
    for map in per_workload {
        for (c, v) in map {
            if let Some(t) = total.get_mut(c) {
                *t += v;
            }
        }
    }
    ScoreVector::new(total)
}

/// Scores one trace per workload and sums the per-workload scores.
pub fn localize_cbc(bank: &CbcModelBank, traces: &[&CounterTrace]) -> Result<CbcLocalization> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("no traces to localize".into()));
    }
    let mut per_workload = BTreeMap::new();
    let mut zero_filled = BTreeSet::new();
    for t in traces {
        if per_workload.contains_key(&t.workload_id) {
            return Err(Error::DuplicateWorkload(format!(
                "two traces for workload {:?}",
                t.workload_id
            )));
        }
        let s = bank.score_trace(t)?;
        zero_filled.extend(s.zero_filled);
        per_workload.insert(t.workload_id.clone(), s.scores);
    }
    if !zero_filled.is_empty() {
        log::info!("zero-filled counters during localization: {zero_filled:?}");
    }
    let scores = aggregate(&bank.classes, per_workload.values())?;
    Ok(CbcLocalization {
        ranking: scores.ranking(),
        scores,
        per_workload,
        zero_filled: zero_filled.into_iter().collect(),
    })
}
