//! Seeded synthetic corpus of labeled counter traces.
//!
//! Architectures and workloads are sampled from documented ranges, every
//! bug family gets three variations whose magnitudes are calibrated to a
//! requested mean IPC impact, and the designs are partitioned so that seen
//! bugs run on training architectures while unseen variations and unseen
//! types only ever run on test architectures.

mod bugs;
mod config;
mod model;

pub use bugs::{family, Activity, BugSpec, Family, TriggerShape, DEFAULT_UNSEEN_TYPES, FAMILIES};
pub use config::{ArchConfig, FuLatency, Mix, Phase, WorkloadProfile};
pub use model::{
    base_windows, counter_names, generate_trace, render_trace, window_ipc, BaseWindow, NoiseConfig,
    ACTIVITY_COUNTERS, STALL_COUNTERS,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Category, Dataset, Manifest, ManifestEntry, Split, MANIFEST_VERSION};
use crate::error::{Error, Result};
use crate::fsio;
use crate::label::UnitLabel;
use crate::trace::{CounterTrace, DEFAULT_WINDOW_CYCLES};

/// Range of requested mean IPC impact, sampled with relative `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactBand {
    pub min: f64,
    pub max: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_train_archs: usize,
    /// Test architectures that carry every bug.
    pub n_test_archs: usize,
    /// Additional test architectures that are only simulated bug-free.
    pub n_bugfree_test_archs: usize,
    pub n_workloads: usize,
    pub windows_min: usize,
    pub windows_max: usize,
    pub jitter: f64,
    pub noise: NoiseConfig,
    pub impact_bands: Vec<ImpactBand>,
    pub unseen_type_families: Vec<String>,
    /// Families to instantiate; all when empty.
    pub families: Vec<String>,
    pub variations: usize,
    /// Explicit architectures, replacing sampled ones when non-empty.
    pub archs: Vec<ArchConfig>,
    /// Explicit workloads, replacing sampled ones when non-empty.
    pub workloads: Vec<WorkloadProfile>,
    /// Explicit bugs, replacing built and calibrated ones when non-empty.
    pub bugs: Vec<BugSpec>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 7,
            n_train_archs: 4,
            n_test_archs: 2,
            n_bugfree_test_archs: 2,
            n_workloads: 12,
            windows_min: 24,
            windows_max: 48,
            jitter: 0.15,
            noise: NoiseConfig::default(),
            impact_bands: vec![
                ImpactBand {
                    min: 0.002,
                    max: 0.01,
                    weight: 0.2,
                },
                ImpactBand {
                    min: 0.01,
                    max: 0.05,
                    weight: 0.65,
                },
                ImpactBand {
                    min: 0.05,
                    max: 0.1,
                    weight: 0.15,
                },
            ],
            unseen_type_families: DEFAULT_UNSEEN_TYPES.iter().map(|s| s.to_string()).collect(),
            families: Vec::new(),
            variations: 3,
            archs: Vec::new(),
            workloads: Vec::new(),
            bugs: Vec::new(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn n_archs(&self) -> usize {
        self.n_train_archs + self.n_test_archs + self.n_bugfree_test_archs
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train_archs == 0 || self.n_test_archs + self.n_bugfree_test_archs == 0 {
            return Err(Error::Config("need train and test architectures".into()));
        }
        if !self.archs.is_empty() && self.archs.len() != self.n_archs() {
            return Err(Error::Config(format!(
                "{} explicit archs but the split counts need {}",
                self.archs.len(),
                self.n_archs()
            )));
        }
        let ids: BTreeSet<&str> = self.archs.iter().map(|a| a.arch_id.as_str()).collect();
        if ids.len() != self.archs.len() {
            return Err(Error::Config("duplicate arch_id".into()));
        }
        for a in &self.archs {
            a.validate()?;
        }
        if self.workloads.is_empty() && self.n_workloads == 0 {
            return Err(Error::Config("need at least one workload".into()));
        }
        let ids: BTreeSet<&str> = self.workloads.iter().map(|w| w.workload_id.as_str()).collect();
        if ids.len() != self.workloads.len() {
            return Err(Error::Config("duplicate workload_id".into()));
        }
        for w in &self.workloads {
            w.validate()?;
        }
        if self.windows_min < 2 || self.windows_max < self.windows_min || self.windows_max > 10_000 {
            return Err(Error::Config("windows range must satisfy 2 <= min <= max <= 10000".into()));
        }
        if !(self.jitter.is_finite() && (0.0..=1.0).contains(&self.jitter)) {
            return Err(Error::Config("jitter outside [0, 1]".into()));
        }
        self.noise.validate()?;
        if self.bugs.is_empty() {
            if self.impact_bands.is_empty() {
                return Err(Error::Config("no impact bands".into()));
            }
            for b in &self.impact_bands {
                if !(b.min > 0.0 && b.max >= b.min && b.max < 0.5 && b.weight > 0.0 && b.weight.is_finite()) {
                    return Err(Error::Config(format!("bad impact band {b:?}")));
                }
            }
            if self.variations == 0 || self.variations > TriggerShape::ALL.len() {
                return Err(Error::Config("variations must be 1 to 3".into()));
            }
        }
        for name in self.unseen_type_families.iter().chain(&self.families) {
            family(name)?;
        }
        let mut units = BTreeSet::new();
        for name in &self.unseen_type_families {
            if !units.insert(family(name)?.unit) {
                return Err(Error::Config(format!(
                    "more than one unseen-type family for unit {}",
                    family(name)?.unit
                )));
            }
        }
        let ids: BTreeSet<&str> = self.bugs.iter().map(|b| b.bug_id.as_str()).collect();
        if ids.len() != self.bugs.len() {
            return Err(Error::Config("duplicate bug_id".into()));
        }
        for b in &self.bugs {
            b.validate()?;
        }
        Ok(())
    }
}

/// Mixes `parts` into `base` (splitmix64 finalizer per step).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for p in parts {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

/// Relative loss of mean IPC against the bug-free twin.
pub fn ipc_impact(bug_free: &[f64], buggy: &[f64]) -> f64 {
    let a = bug_free.iter().sum::<f64>() / bug_free.len() as f64;
    let b = buggy.iter().sum::<f64>() / buggy.len() as f64;
    1.0 - b / a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

pub const IMPACT_BIN_EDGES: [f64; 8] = [0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, f64::INFINITY];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    /// Test designs with a bug, per category.
    pub category_counts: BTreeMap<String, usize>,
    pub category_proportions: BTreeMap<String, f64>,
    /// Measured mean IPC impact per bug.
    pub impact_histogram: Vec<HistogramBin>,
    pub n_traces: usize,
}

/// A generated corpus held in memory.
#[derive(Debug, Clone)]
pub struct Corpus {
    /// The configuration with sampled archs, workloads and calibrated bugs
    /// filled in; regenerating from it reproduces the corpus.
    pub config: GeneratorConfig,
    pub manifest: Manifest,
    /// Aligned with `manifest.traces`.
    pub traces: Vec<CounterTrace>,
    pub report: CorpusReport,
}

impl Corpus {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(
            self.traces.clone(),
            self.manifest.splits.clone(),
            self.manifest.categories.clone(),
            self.manifest.bug_impacts.clone(),
        )
    }

    pub fn test_archs(&self) -> Vec<&str> {
        self.manifest
            .splits
            .iter()
            .filter(|(_, s)| **s == Split::Test)
            .map(|(a, _)| a.as_str())
            .collect()
    }

    pub fn impact_histogram_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        for b in &self.report.impact_histogram {
            out.push_str(&format!("{},{},{}\n", b.lower, b.upper, b.count));
        }
        out
    }
}

struct Setup {
    archs: Vec<ArchConfig>,
    workloads: Vec<WorkloadProfile>,
}

fn setup(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Setup {
    let archs = if cfg.archs.is_empty() {
        (0..cfg.n_archs())
            .map(|i| ArchConfig::sample(format!("arch{i:02}"), rng))
            .collect()
    } else {
        cfg.archs.clone()
    };
    let workloads = if cfg.workloads.is_empty() {
        (0..cfg.n_workloads)
            .map(|i| {
                let windows = rng.random_range(cfg.windows_min..=cfg.windows_max);
                WorkloadProfile::sample(format!("wl{i:02}"), windows, cfg.jitter, rng)
            })
            .collect()
    } else {
        cfg.workloads.clone()
    };
    Setup { archs, workloads }
}

fn draw_impact(bands: &[ImpactBand], rng: &mut ChaCha8Rng) -> f64 {
    let total: f64 = bands.iter().map(|b| b.weight).sum();
    let mut u = rng.random_range(0.0..total);
    for b in bands {
        if u < b.weight {
            return rng.random_range(b.min..=b.max);
        }
        u -= b.weight;
    }
    let last = bands.last().expect("validated non-empty");
    rng.random_range(last.min..=last.max)
}

/// Mean impact of `bug` over the given bug-free windows.
fn mean_impact(bug: &BugSpec, fam: &Family, designs: &[(&ArchConfig, &Vec<BaseWindow>)]) -> f64 {
    let total: f64 = designs
        .iter()
        .map(|(a, w)| ipc_impact(&window_ipc(a, w, None), &window_ipc(a, w, Some((bug, fam)))))
        .sum();
    total / designs.len() as f64
}

/// Bisects the magnitude so the mean impact over `designs` hits the target.
fn calibrate(bug: &mut BugSpec, designs: &[(&ArchConfig, &Vec<BaseWindow>)]) -> Result<()> {
    let fam = bug.family()?;
    let mut hi = 0.01;
    loop {
        bug.magnitude = hi;
        if mean_impact(bug, fam, designs) >= bug.target_impact {
            break;
        }
        hi *= 2.0;
        if hi > 10.0 {
            return Err(Error::Config(format!(
                "bug {:?} cannot reach impact {}",
                bug.bug_id, bug.target_impact
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        bug.magnitude = mid;
        if mean_impact(bug, fam, designs) < bug.target_impact {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    bug.magnitude = 0.5 * (lo + hi);
    Ok(())
}

pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let Setup { archs, workloads } = setup(cfg, &mut rng);
    let n_train = cfg.n_train_archs;
    let n_buggy = cfg.n_train_archs + cfg.n_test_archs;

    let windows: Vec<Vec<Vec<BaseWindow>>> = archs
        .iter()
        .enumerate()
        .map(|(ai, a)| {
            workloads
                .iter()
                .enumerate()
                .map(|(wi, w)| base_windows(a, w, &cfg.noise, derive_seed(cfg.seed, &[ai as u64, wi as u64])))
                .collect()
        })
        .collect();

    let bugs = if cfg.bugs.is_empty() {
        let designs: Vec<(&ArchConfig, &Vec<BaseWindow>)> = (0..n_buggy)
            .flat_map(|ai| windows[ai].iter().map(move |w| (ai, w)))
            .map(|(ai, w)| (&archs[ai], w))
            .collect();
        let mut bugs = Vec::new();
        for fam in FAMILIES.iter() {
            if !cfg.families.is_empty() && !cfg.families.iter().any(|f| f == fam.name) {
                continue;
            }
            let unseen_type = cfg.unseen_type_families.iter().any(|f| f == fam.name);
            for v in 0..cfg.variations {
                let category = if unseen_type {
                    Category::UnseenType
                } else if v + 1 == cfg.variations && cfg.variations > 1 {
                    Category::UnseenVariation
                } else {
                    Category::SeenVariation
                };
                let mut bug = BugSpec {
                    bug_id: format!("{}_v{v}", fam.name),
                    unit: fam.unit,
                    family: fam.name.to_string(),
                    variation: v,
                    magnitude: 0.0,
                    trigger: TriggerShape::ALL[v],
                    category,
                    target_impact: draw_impact(&cfg.impact_bands, &mut rng),
                };
                calibrate(&mut bug, &designs)?;
                bugs.push(bug);
            }
        }
        bugs
    } else {
        cfg.bugs.clone()
    };

    let mut splits = BTreeMap::new();
    for (ai, a) in archs.iter().enumerate() {
        splits.insert(a.arch_id.clone(), if ai < n_train { Split::Train } else { Split::Test });
    }
    let categories: BTreeMap<String, Category> =
        bugs.iter().map(|b| (b.bug_id.clone(), b.category)).collect();

    let mut entries = Vec::new();
    let mut traces = Vec::new();
    let mut impacts: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (ai, a) in archs.iter().enumerate() {
        for (wi, w) in workloads.iter().enumerate() {
            let base = &windows[ai][wi];
            let free = render_trace(a, w, base, None)?;
            let mut hosted: Vec<&BugSpec> = Vec::new();
            if ai < n_train {
                hosted.extend(bugs.iter().filter(|b| b.category == Category::SeenVariation));
            } else if ai < n_buggy {
                hosted.extend(bugs.iter());
            }
            for b in hosted {
                let t = render_trace(a, w, base, Some(b))?;
                impacts.entry(b.bug_id.clone()).or_default().push(ipc_impact(free.ipc(), t.ipc()));
                entries.push(ManifestEntry {
                    path: format!("traces/{}/{}/{}.csv", a.arch_id, b.bug_id, w.workload_id),
                    workload_id: w.workload_id.clone(),
                    arch_id: a.arch_id.clone(),
                    label: b.unit,
                    bug_id: Some(b.bug_id.clone()),
                });
                traces.push(t);
            }
            entries.push(ManifestEntry {
                path: format!("traces/{}/bugfree/{}.csv", a.arch_id, w.workload_id),
                workload_id: w.workload_id.clone(),
                arch_id: a.arch_id.clone(),
                label: UnitLabel::BugFree,
                bug_id: None,
            });
            traces.push(free);
        }
    }
    let bug_impacts: BTreeMap<String, f64> = impacts
        .into_iter()
        .map(|(b, v)| (b, v.iter().sum::<f64>() / v.len() as f64))
        .collect();

    let mut category_counts: BTreeMap<String, usize> =
        Category::ALL.iter().map(|c| (c.as_str().to_string(), 0)).collect();
    for _ in archs.iter().take(n_buggy).skip(n_train) {
        for b in &bugs {
            *category_counts.get_mut(b.category.as_str()).expect("category") += 1;
        }
    }
    let total: usize = category_counts.values().sum();
    let category_proportions = category_counts
        .iter()
        .map(|(c, n)| (c.clone(), if total > 0 { *n as f64 / total as f64 } else { 0.0 }))
        .collect();
    let impact_histogram = IMPACT_BIN_EDGES
        .windows(2)
        .map(|e| HistogramBin {
            lower: e[0],
            upper: e[1],
            count: bug_impacts.values().filter(|v| **v >= e[0] && **v < e[1]).count(),
        })
        .collect();

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        window_cycles: DEFAULT_WINDOW_CYCLES,
        traces: entries,
        splits,
        categories,
        bug_impacts,
    };
    manifest.validate()?;
    let report = CorpusReport {
        category_counts,
        category_proportions,
        impact_histogram,
        n_traces: traces.len(),
    };
    let config = GeneratorConfig {
        archs,
        workloads,
        bugs,
        ..cfg.clone()
    };
    Ok(Corpus {
        config,
        manifest,
        traces,
        report,
    })
}

/// Writes trace CSVs, `manifest.json`, `impact_histogram.csv`,
/// `summary.json` and the resolved `generator_config.json` under `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    for (e, t) in corpus.manifest.traces.iter().zip(&corpus.traces) {
        fsio::write(&dir.join(&e.path), &t.to_csv_string())?;
    }
    fsio::write(&dir.join("manifest.json"), &corpus.manifest.to_json_string()?)?;
    fsio::write(&dir.join("impact_histogram.csv"), &corpus.impact_histogram_csv())?;
    fsio::write(&dir.join("summary.json"), &serde_json::to_string_pretty(&corpus.report)?)?;
    fsio::write(&dir.join("generator_config.json"), &corpus.config.to_json_string()?)?;
    Ok(())
}
