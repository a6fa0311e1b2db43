//! Prediction-error-based classification.
//!
//! Stage 1 fits one bug-free IPC regressor per workload. The difference
//! between predicted and observed IPC forms an error trace, which is
//! resampled to a common length; the error traces of all workloads become
//! the channels of one input to per-unit convolutional classifiers (stage 2).

mod resample;

pub use resample::resample;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DesignInstance, Split};
use crate::error::{Error, Result};
use crate::fsio;
use crate::label::{UnitLabel, UNITS};
use crate::ml::{fit_convnet, ConvArch, ConvNet1D, Dataset3, GbdtConfig, GbdtModel, Loss, Matrix, TrainConfig};
use crate::score::ScoreVector;
use crate::select::SelectionResult;
use crate::trace::CounterTrace;

pub const P2BC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpcConfig {
    pub gbdt: GbdtConfig,
    /// Report leave-one-architecture-out RRMSE per workload.
    pub holdout_report: bool,
}

impl Default for IpcConfig {
    fn default() -> Self {
        IpcConfig {
            gbdt: GbdtConfig::with_trees(250),
            holdout_report: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpcModel {
    pub counters: Vec<String>,
    pub model: GbdtModel,
    /// Architectures whose bug-free traces trained the model.
    pub train_archs: Vec<String>,
    /// Leave-one-architecture-out relative RMSE, when computed.
    pub holdout_rrmse: Option<f64>,
}

/// Bug-free IPC regressors, one per workload.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IpcModelSet {
    pub models: BTreeMap<String, IpcModel>,
}

impl IpcModelSet {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Mean held-out RRMSE over workloads that report one.
    pub fn mean_rrmse(&self) -> Option<f64> {
        let v: Vec<f64> = self.models.values().filter_map(|m| m.holdout_rrmse).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Root-mean-square error divided by the mean observed value.
pub fn rrmse(predicted: &[f64], observed: &[f64]) -> f64 {
    let n = observed.len() as f64;
    let mse = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o) * (p - o))
        .sum::<f64>()
        / n;
    let mean = observed.iter().sum::<f64>() / n;
    mse.sqrt() / mean.abs().max(f64::MIN_POSITIVE)
}

fn fit_ipc(traces: &[&CounterTrace], counters: &[String], cfg: &GbdtConfig) -> Result<GbdtModel> {
    let mut data = Vec::new();
    let mut ipc = Vec::new();
    for t in traces {
        let (rows, missing) = t.project(counters);
        if !missing.is_empty() {
            log::warn!("{}/{}: zero-filled {missing:?}", t.arch_id, t.workload_id);
        }
        data.extend(rows);
        ipc.extend_from_slice(t.ipc());
    }
    let x = Matrix::new(ipc.len(), counters.len(), data)?;
    crate::ml::fit_gbdt(&x, &ipc, Loss::Squared, cfg, counters.to_vec())
}

fn predict_ipc(model: &IpcModel, trace: &CounterTrace) -> Vec<f64> {
    let (rows, _) = trace.project(&model.counters);
    let c = model.counters.len();
    (0..trace.len())
        .map(|t| model.model.predict_row(&rows[t * c..(t + 1) * c]))
        .collect()
}

pub fn train_ipc_models(
    dataset: &Dataset,
    selection: &SelectionResult,
    cfg: &IpcConfig,
) -> Result<IpcModelSet> {
    let jobs: Vec<(&String, Vec<&CounterTrace>, &Vec<String>)> = dataset
        .workloads()
        .iter()
        .map(|w| {
            let traces: Vec<&CounterTrace> = dataset
                .workload_traces(w, Split::Train)
                .into_iter()
                .filter(|t| t.label == UnitLabel::BugFree)
                .collect();
            if traces.is_empty() {
                return Err(Error::NoBugFreeData(format!(
                    "no bug-free train traces for workload {w:?}"
                )));
            }
            let counters = selection
                .per_workload
                .get(w)
                .ok_or_else(|| Error::MissingWorkload(format!("no counter selection for {w:?}")))?;
            Ok((w, traces, counters))
        })
        .collect::<Result<_>>()?;
    let models = jobs
        .into_par_iter()
        .map(|(w, traces, counters)| {
            let archs: BTreeSet<&str> = traces.iter().map(|t| t.arch_id.as_str()).collect();
            if archs.len() < 2 {
                log::warn!("workload {w:?}: IPC model sees a single bug-free architecture");
            }
            let holdout_rrmse = if cfg.holdout_report && archs.len() >= 2 {
                let mut total = 0.0;
                for a in &archs {
                    let (test, train): (Vec<&CounterTrace>, Vec<&CounterTrace>) =
                        traces.iter().partition(|t| t.arch_id == *a);
                    let m = IpcModel {
                        counters: counters.clone(),
                        model: fit_ipc(&train, counters, &cfg.gbdt)?,
                        train_archs: Vec::new(),
                        holdout_rrmse: None,
                    };
                    let (mut p, mut o) = (Vec::new(), Vec::new());
                    for t in test {
                        p.extend(predict_ipc(&m, t));
                        o.extend_from_slice(t.ipc());
                    }
                    total += rrmse(&p, &o);
                }
                Some(total / archs.len() as f64)
            } else {
                None
            };
            let model = IpcModel {
                counters: counters.clone(),
                model: fit_ipc(&traces, counters, &cfg.gbdt)?,
                train_archs: archs.iter().map(|a| a.to_string()).collect(),
                holdout_rrmse,
            };
            Ok((w.clone(), model))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let set = IpcModelSet { models };
    if let Some(r) = set.mean_rrmse() {
        log::info!("stage 1 mean held-out RRMSE {:.2}%", 100.0 * r);
    }
    Ok(set)
}

/// Predicted minus observed IPC per window of one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub workload_id: String,
    pub values: Vec<f64>,
}

pub fn error_trace(models: &IpcModelSet, trace: &CounterTrace) -> Result<ErrorTrace> {
    let m = models.models.get(&trace.workload_id).ok_or_else(|| {
        Error::UnknownWorkload(format!("no IPC model for workload {:?}", trace.workload_id))
    })?;
    let values = predict_ipc(m, trace)
        .into_iter()
        .zip(trace.ipc())
        .map(|(p, o)| p - o)
        .collect();
    Ok(ErrorTrace {
        workload_id: trace.workload_id.clone(),
        values,
    })
}

/// A `len x channels.len()` time-major stage-2 input.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub len: usize,
    pub channels: Vec<String>,
    pub data: Vec<f64>,
    /// Channels with no error trace, left at zero.
    pub missing: Vec<String>,
}

pub fn assemble_channels(
    traces: &[ErrorTrace],
    channels: &[String],
    target_len: usize,
) -> Result<ChannelTensor> {
    let mut by_workload: BTreeMap<&str, &ErrorTrace> = BTreeMap::new();
    for t in traces {
        if by_workload.insert(&t.workload_id, t).is_some() {
            return Err(Error::DuplicateWorkload(format!(
                "two error traces for workload {:?}",
                t.workload_id
            )));
        }
        if !channels.contains(&t.workload_id) {
            return Err(Error::UnknownWorkload(format!(
                "workload {:?} is not a channel",
                t.workload_id
            )));
        }
    }
    let c = channels.len();
    let mut data = vec![0.0; target_len * c];
    let mut missing = Vec::new();
    for (j, w) in channels.iter().enumerate() {
        match by_workload.get(w.as_str()) {
            Some(t) => {
                for (i, v) in resample(&t.values, target_len)?.into_iter().enumerate() {
                    data[i * c + j] = v;
                }
            }
            None => missing.push(w.clone()),
        }
    }
    Ok(ChannelTensor {
        len: target_len,
        channels: channels.to_vec(),
        data,
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    /// Common length; the rounded mean train trace length when unset.
    pub target_len: Option<usize>,
    pub arch: ConvArch,
    pub train: TrainConfig,
    pub include_bugfree_class: bool,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            target_len: None,
            arch: ConvArch::default(),
            train: TrainConfig::default(),
            include_bugfree_class: false,
        }
    }
}

/// Per-unit classifiers over channel-stacked error traces.
#[derive(Debug, Clone, PartialEq)]
pub struct P2bcStage2 {
    pub channels: Vec<String>,
    pub target_len: usize,
    pub classifiers: BTreeMap<UnitLabel, ConvNet1D>,
    /// Classes trained with fewer than two positive designs.
    pub weak_classes: Vec<UnitLabel>,
}

fn instance_tensor(
    models: &IpcModelSet,
    traces: &[&CounterTrace],
    channels: &[String],
    target_len: usize,
) -> Result<ChannelTensor> {
    let errors = traces
        .iter()
        .map(|t| error_trace(models, t))
        .collect::<Result<Vec<_>>>()?;
    assemble_channels(&errors, channels, target_len)
}

pub fn train_stage2(dataset: &Dataset, models: &IpcModelSet, cfg: &Stage2Config) -> Result<P2bcStage2> {
    let channels: Vec<String> = models.models.keys().cloned().collect();
    let instances: Vec<DesignInstance<'_>> = dataset
        .instances(Split::Train)
        .into_iter()
        .filter(|i| i.label.is_unit() || i.label == UnitLabel::BugFree)
        .collect();
    if instances.len() < 2 {
        return Err(Error::InsufficientData("stage 2 needs at least 2 train designs".into()));
    }
    let target_len = match cfg.target_len {
        Some(n) if n < 2 => return Err(Error::BadLength(format!("target length {n} is below 2"))),
        Some(n) => n,
        None => {
            let all: Vec<&CounterTrace> = dataset.in_split(Split::Train).collect();
            crate::cbc::mean_length(&all)
        }
    };
    let samples = instances
        .iter()
        .map(|i| Ok(instance_tensor(models, &i.traces, &channels, target_len)?.data))
        .collect::<Result<Vec<_>>>()?;
    let x = Dataset3::from_samples(target_len, channels.len(), &samples)?;
    let mut classes = UNITS.to_vec();
    if cfg.include_bugfree_class {
        classes.push(UnitLabel::BugFree);
    }
    let mut weak_classes = Vec::new();
    for &c in &classes {
        let pos = instances.iter().filter(|i| i.label == c).count();
        if pos < 2 {
            log::warn!("stage 2 class {c}: only {pos} positive designs");
            weak_classes.push(c);
        }
    }
    let classifiers = classes
        .par_iter()
        .map(|&c| {
            let y: Vec<f64> = instances.iter().map(|i| f64::from(u8::from(i.label == c))).collect();
            let net = fit_convnet(&x, &y, &cfg.arch, &cfg.train)?;
            log::info!("stage 2: trained classifier for {c}");
            Ok((c, net))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(P2bcStage2 {
        channels,
        target_len,
        classifiers,
        weak_classes,
    })
}

/// Both stages of a trained pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct P2bcModels {
    pub ipc: IpcModelSet,
    pub stage2: P2bcStage2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2bcConfig {
    pub ipc: IpcConfig,
    pub stage2: Stage2Config,
}

impl Default for P2bcConfig {
    fn default() -> Self {
        P2bcConfig {
            ipc: IpcConfig::default(),
            stage2: Stage2Config::default(),
        }
    }
}

pub fn train_p2bc(dataset: &Dataset, selection: &SelectionResult, cfg: &P2bcConfig) -> Result<P2bcModels> {
    let ipc = train_ipc_models(dataset, selection, &cfg.ipc)?;
    let stage2 = train_stage2(dataset, &ipc, &cfg.stage2)?;
    Ok(P2bcModels { ipc, stage2 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct P2bcLocalization {
    pub scores: ScoreVector,
    pub ranking: Vec<UnitLabel>,
    pub missing_workloads: Vec<String>,
}

impl P2bcModels {
    pub fn model_count(&self) -> usize {
        self.ipc.len() + self.stage2.classifiers.len()
    }

    pub fn localize(&self, traces: &[&CounterTrace]) -> Result<P2bcLocalization> {
        localize_p2bc(&self.ipc, &self.stage2, traces)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut stage1 = BTreeMap::new();
        for (i, (w, m)) in self.ipc.models.iter().enumerate() {
            let file = format!("stage1/m{i:04}.json");
            fsio::write(&dir.join(&file), &m.model.to_json_string()?)?;
            stage1.insert(
                w.clone(),
                Stage1Entry {
                    counters: m.counters.clone(),
                    train_archs: m.train_archs.clone(),
                    holdout_rrmse: m.holdout_rrmse,
                    file,
                },
            );
        }
        let mut stage2 = BTreeMap::new();
        for (i, (c, net)) in self.stage2.classifiers.iter().enumerate() {
            let file = format!("stage2/m{i:04}.json");
            fsio::write(&dir.join(&file), &net.to_json_string()?)?;
            stage2.insert(*c, file);
        }
        let index = P2bcIndex {
            version: P2BC_FORMAT_VERSION,
            channels: self.stage2.channels.clone(),
            target_len: self.stage2.target_len,
            weak_classes: self.stage2.weak_classes.clone(),
            stage1,
            stage2,
        };
        fsio::write(&dir.join("p2bc.json"), &serde_json::to_string_pretty(&index)?)
    }

    pub fn load(dir: &Path) -> Result<P2bcModels> {
        let index = P2bcIndex::from_json_str(&fsio::read(&dir.join("p2bc.json"))?)?;
        let mut ipc = IpcModelSet::default();
        for (w, e) in index.stage1 {
            let model = GbdtModel::from_json_str(&fsio::read(&dir.join(&e.file))?)?;
            if model.feature_names != e.counters || model.loss != Loss::Squared {
                return Err(Error::Model(format!("{}: not a regressor over the listed counters", e.file)));
            }
            ipc.models.insert(
                w,
                IpcModel {
                    counters: e.counters,
                    model,
                    train_archs: e.train_archs,
                    holdout_rrmse: e.holdout_rrmse,
                },
            );
        }
        let mut classifiers = BTreeMap::new();
        for (c, file) in index.stage2 {
            let net = ConvNet1D::from_json_str(&fsio::read(&dir.join(&file))?)?;
            if net.input_len != index.target_len || net.in_channels != index.channels.len() {
                return Err(Error::Model(format!("{file}: input shape differs from the pipeline")));
            }
            classifiers.insert(c, net);
        }
        Ok(P2bcModels {
            ipc,
            stage2: P2bcStage2 {
                channels: index.channels,
                target_len: index.target_len,
                classifiers,
                weak_classes: index.weak_classes,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stage1Entry {
    counters: Vec<String>,
    train_archs: Vec<String>,
    holdout_rrmse: Option<f64>,
    file: String,
}

/// The `p2bc.json` index of a saved pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P2bcIndex {
    version: u32,
    channels: Vec<String>,
    target_len: usize,
    weak_classes: Vec<UnitLabel>,
    stage1: BTreeMap<String, Stage1Entry>,
    stage2: BTreeMap<UnitLabel, String>,
}

impl P2bcIndex {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let index: P2bcIndex = serde_json::from_str(text)?;
        if index.version != P2BC_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported pipeline version {}", index.version)));
        }
        if index.target_len < 2 {
            return Err(Error::Model("target length below 2".into()));
        }
        let keys: Vec<&String> = index.stage1.keys().collect();
        let chans: Vec<&String> = index.channels.iter().collect();
        if keys != chans {
            return Err(Error::Model("channels differ from the stage-1 workloads".into()));
        }
        let files = index
            .stage1
            .values()
            .map(|e| e.file.as_str())
            .chain(index.stage2.values().map(String::as_str));
        for f in files {
            let p = Path::new(f);
            if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                return Err(Error::Model(format!("model path {f:?} escapes the pipeline")));
            }
        }
        Ok(index)
    }
}

pub fn localize_p2bc(
    models: &IpcModelSet,
    stage2: &P2bcStage2,
    traces: &[&CounterTrace],
) -> Result<P2bcLocalization> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("no traces to localize".into()));
    }
    let tensor = instance_tensor(models, traces, &stage2.channels, stage2.target_len)?;
    if !tensor.missing.is_empty() {
        log::info!("zero-filled channels for missing workloads {:?}", tensor.missing);
    }
    let scores = stage2
        .classifiers
        .iter()
        .map(|(c, net)| Ok((*c, net.predict_one(&tensor.data)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let scores = ScoreVector::new(scores)?;
    Ok(P2bcLocalization {
        ranking: scores.ranking(),
        scores,
        missing_workloads: tensor.missing,
    })
}
