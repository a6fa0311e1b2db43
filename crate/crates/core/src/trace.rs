//! Counter traces and their on-disk CSV form.
//!
//! A trace file holds one workload run on one design: a header row with the
//! counter names followed by the literal column `ipc`, then one row per
//! sampling window. Counter values are per-window deltas (counters are sampled
//! and reset every window). Labels and identifiers are not stored in the file;
//! they come from the dataset manifest.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::label::UnitLabel;

pub const IPC_COLUMN: &str = "ipc";
pub const DEFAULT_WINDOW_CYCLES: u64 = 100_000;

/// Identifying metadata attached to a trace by the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub workload_id: String,
    pub arch_id: String,
    pub label: UnitLabel,
    pub bug_id: Option<String>,
    pub window_cycles: u64,
}

impl TraceMeta {
    pub fn unlabeled(workload_id: impl Into<String>) -> Self {
        TraceMeta {
            workload_id: workload_id.into(),
            arch_id: String::new(),
            label: UnitLabel::Unknown,
            bug_id: None,
            window_cycles: DEFAULT_WINDOW_CYCLES,
        }
    }
}

/// One workload execution on one design.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterTrace {
    pub workload_id: String,
    pub arch_id: String,
    pub label: UnitLabel,
    pub bug_id: Option<String>,
    pub window_cycles: u64,
    counter_names: Vec<String>,
    /// Row-major `len() x counter_names.len()`.
    samples: Vec<f64>,
    ipc: Vec<f64>,
}

impl CounterTrace {
    /// Builds a trace, checking every schema and value invariant.
    pub fn new(
        meta: TraceMeta,
        counter_names: Vec<String>,
        samples: Vec<f64>,
        ipc: Vec<f64>,
    ) -> Result<Self> {
        validate_names(&counter_names)?;
        let c = counter_names.len();
        if ipc.is_empty() {
            return Err(Error::Schema("trace has no sample rows".into()));
        }
        if samples.len() != ipc.len() * c {
            return Err(Error::Schema(format!(
                "sample matrix has {} values, expected {} rows x {} counters",
                samples.len(),
                ipc.len(),
                c
            )));
        }
        if meta.window_cycles == 0 {
            return Err(Error::Value("window_cycles must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Value(format!(
                "counter {:?} row {} has invalid value {}",
                counter_names[pos % c],
                pos / c,
                samples[pos]
            )));
        }
        if let Some(pos) = ipc.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Value(format!(
                "ipc row {pos} has invalid value {}",
                ipc[pos]
            )));
        }
        Ok(CounterTrace {
            workload_id: meta.workload_id,
            arch_id: meta.arch_id,
            label: meta.label,
            bug_id: meta.bug_id,
            window_cycles: meta.window_cycles,
            counter_names,
            samples,
            ipc,
        })
    }

    /// Number of sampling windows (T).
    pub fn len(&self) -> usize {
        self.ipc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ipc.is_empty()
    }

    pub fn n_counters(&self) -> usize {
        self.counter_names.len()
    }

    pub fn counter_names(&self) -> &[String] {
        &self.counter_names
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let c = self.n_counters();
        &self.samples[t * c..(t + 1) * c]
    }

    pub fn ipc(&self) -> &[f64] {
        &self.ipc
    }

    pub fn counter_index(&self, name: &str) -> Option<usize> {
        self.counter_names.iter().position(|n| n == name)
    }

    /// Column `idx` as an owned series.
    pub fn column(&self, idx: usize) -> Vec<f64> {
        let c = self.n_counters();
        (0..self.len()).map(|t| self.samples[t * c + idx]).collect()
    }

    pub fn mean_ipc(&self) -> f64 {
        self.ipc.iter().sum::<f64>() / self.len() as f64
    }

    pub fn meta(&self) -> TraceMeta {
        TraceMeta {
            workload_id: self.workload_id.clone(),
            arch_id: self.arch_id.clone(),
            label: self.label,
            bug_id: self.bug_id.clone(),
            window_cycles: self.window_cycles,
        }
    }

    pub fn with_meta(mut self, meta: TraceMeta) -> Result<Self> {
        if meta.window_cycles == 0 {
            return Err(Error::Value("window_cycles must be positive".into()));
        }
        self.workload_id = meta.workload_id;
        self.arch_id = meta.arch_id;
        self.label = meta.label;
        self.bug_id = meta.bug_id;
        self.window_cycles = meta.window_cycles;
        Ok(self)
    }

    /// Projects the trace onto `names`, zero-filling counters the trace lacks.
    /// Returns the row-major matrix and the names that were zero-filled.
    pub fn project(&self, names: &[String]) -> (Vec<f64>, Vec<String>) {
        let idx: Vec<Option<usize>> = names.iter().map(|n| self.counter_index(n)).collect();
        let missing = names
            .iter()
            .zip(&idx)
            .filter(|(_, i)| i.is_none())
            .map(|(n, _)| n.clone())
            .collect();
        let mut out = Vec::with_capacity(self.len() * names.len());
        for t in 0..self.len() {
            let row = self.row(t);
            out.extend(idx.iter().map(|i| i.map_or(0.0, |i| row[i])));
        }
        (out, missing)
    }

    /// Parses the CSV trace format.
    pub fn from_csv_str(text: &str, meta: TraceMeta) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trace file".into()))?;
        let mut names: Vec<String> = header.split(',').map(str::to_owned).collect();
        match names.last() {
            Some(last) if last == IPC_COLUMN => {
                names.pop();
            }
            _ => {
                return Err(Error::Parse(format!(
                    "header must end with the {IPC_COLUMN:?} column"
                )))
            }
        }
        validate_names(&names)?;
        let width = names.len() + 1;
        let mut samples = Vec::new();
        let mut ipc = Vec::new();
        for (lineno, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(Error::Schema(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    width,
                    fields.len()
                )));
            }
            for (i, field) in fields.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("line {}: bad number {:?}", lineno + 1, field))
                })?;
                if i + 1 == width {
                    ipc.push(v);
                } else {
                    samples.push(v);
                }
            }
        }
        CounterTrace::new(meta, names, samples, ipc)
    }

    /// Canonical CSV rendering: shortest round-trip decimal for every value,
    /// `\n` line endings, trailing newline.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for name in &self.counter_names {
            out.push_str(name);
            out.push(',');
        }
        out.push_str(IPC_COLUMN);
        out.push('\n');
        for t in 0..self.len() {
            for v in self.row(t) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.ipc[t]);
        }
        out
    }
}

fn validate_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if name.is_empty() {
            return Err(Error::Schema("empty counter name".into()));
        }
        if name == IPC_COLUMN {
            return Err(Error::Schema(format!("{IPC_COLUMN:?} is reserved")));
        }
        if name.contains([',', '"', '\n', '\r']) {
            return Err(Error::Schema(format!("counter name {name:?} has reserved characters")));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::Schema(format!("duplicate counter name {name:?}")));
        }
    }
    Ok(())
}

/// Reads a trace file. The workload id defaults to the file stem and the label
/// to `Unknown`; dataset loading overrides both from the manifest.
pub fn load_trace(path: &Path) -> Result<CounterTrace> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_trace_with_meta(path, TraceMeta::unlabeled(stem))
}

pub fn load_trace_with_meta(path: &Path, meta: TraceMeta) -> Result<CounterTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CounterTrace::from_csv_str(&text, meta)
}

pub fn write_trace(trace: &CounterTrace, path: &Path) -> Result<()> {
    std::fs::write(path, trace.to_csv_string()).map_err(|e| Error::io(path, e))
}
