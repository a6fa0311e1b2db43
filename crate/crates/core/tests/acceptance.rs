//! Acceptance suite. Every check prints one `[PASS]`/`[FAIL]` line with the
//! measured value and the pinned threshold, then asserts.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use perfloc::cbc::{train_cbc, CbcConfig, CbcModelBank};
use perfloc::dataset::{Category, Dataset, Split};
use perfloc::ensemble::{combine, normalize};
use perfloc::eval::{
    bugfree_audit, evaluate, topk_accuracy, workload_sensitivity, EvalConfig, EvalReport,
    RandomScorer, SensitivityConfig,
};
use perfloc::ml::{
    fit_gbdt, grad_check, predict_gbdt, Activation, ConvArch, ConvNet1D, ConvSpec, Dataset3,
    DenseSpec, GbdtConfig, Loss, Matrix, TrainConfig,
};
use perfloc::p2bc::{resample, train_p2bc, P2bcConfig};
use perfloc::score::ScoreVector;
use perfloc::select::{select_all, select_counters, SelectionConfig};
use perfloc::simgen::{generate_corpus, Corpus, GeneratorConfig};
use perfloc::trace::{CounterTrace, TraceMeta, DEFAULT_WINDOW_CYCLES};
use perfloc::{UnitLabel, UNITS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SELECTION_DATASETS: usize = 50;
const SELECTION_COUNTERS: usize = 20;
const SELECTION_MAX_SECONDS: f64 = 10.0;
const GBDT_INPUTS: usize = 1000;
const GBDT_TOL: f64 = 1e-12;
const GBDT_SEEDS: u64 = 10;
const GRAD_NETS: u64 = 10;
const GRAD_EPS: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;
const RESAMPLE_TOL: f64 = 1e-9;
const NORMALIZE_TOL: f64 = 1e-9;
const ENSEMBLE_PAIRS: usize = 1000;
const RANDOM_VERDICTS: usize = 10_000;
const RANDOM_TOL: f64 = 0.02;
const BAND: f64 = 0.01;
const MIN_TOP1_SEEN: f64 = 0.70;
const MIN_TOP3_SEEN: f64 = 0.90;
const MIN_TOP3_UNSEEN_TYPE: f64 = 0.60;
const MAX_PIPELINE: Duration = Duration::from_secs(15 * 60);
const MAX_INFERENCE_SECONDS: f64 = 10.0;
const MIN_BUGFREE_FIRST: usize = 3;
const SENSITIVITY_REPS: usize = 25;

fn report(name: &str, ok: bool, detail: String) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

struct Fixture {
    corpus: Corpus,
    dataset: Dataset,
    bank: CbcModelBank,
    eval: EvalReport,
    pipeline: Duration,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let start = Instant::now();
        let corpus = generate_corpus(&GeneratorConfig::default()).unwrap();
        let dataset = corpus.dataset().unwrap();
        let selection = select_all(&dataset, &SelectionConfig::default()).unwrap();
        let cfg = CbcConfig {
            include_bugfree_class: true,
            ..CbcConfig::default()
        };
        let bank = train_cbc(&dataset, &selection.superset, &cfg).unwrap();
        let eval = evaluate(&bank, &dataset, &EvalConfig::default()).unwrap();
        let pipeline = start.elapsed();
        Fixture {
            corpus,
            dataset,
            bank,
            eval,
            pipeline,
        }
    })
}

// ---------------------------------------------------------------- selection

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let cov = sxy - sx * sy / n;
    let vx = sxx - sx * sx / n;
    let vy = syy - sy * sy / n;
    if vx <= 0.0 || vy <= 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Three bug-free legacy traces of one workload with planted counters:
/// IPC-tracking signals of varying strength, near-duplicates of signals and
/// pure noise.
fn planted_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_len = 40;
    let n_signal = rng.random_range(4..=9);
    let n_dup = rng.random_range(0..=3);
    let mut kinds = Vec::new();
    for _ in 0..n_signal {
        kinds.push((0usize, rng.random_range(0.05..1.5), rng.random_bool(0.3)));
    }
    for _ in 0..n_dup {
        kinds.push((1 + rng.random_range(0..n_signal), rng.random_range(0.01..0.4), false));
    }
    while kinds.len() < SELECTION_COUNTERS {
        kinds.push((usize::MAX, 1.0, false));
    }
    let names: Vec<String> = (0..SELECTION_COUNTERS).map(|i| format!("c{i:02}")).collect();
    let mut traces = Vec::new();
    let mut splits = BTreeMap::new();
    for a in 0..3 {
        let arch = format!("arch{a}");
        splits.insert(arch.clone(), Split::Train);
        let ipc: Vec<f64> = (0..t_len)
            .map(|t| 1.5 + 0.5 * (t as f64 * 0.3 + a as f64).sin() + rng.random_range(-0.3..0.3))
            .collect();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for &(kind, sigma, negative) in &kinds {
            let col: Vec<f64> = match kind {
                0 => ipc
                    .iter()
                    .map(|v| {
                        let s = if negative { 3.0 - v } else { *v };
                        10.0 + 4.0 * s + 4.0 * sigma * rng.random_range(-0.5..0.5) * 0.6
                    })
                    .collect(),
                usize::MAX => (0..t_len).map(|_| rng.random_range(5.0..15.0)).collect(),
                src => {
                    let base = cols[src - 1].clone();
                    base.iter()
                        .map(|v| 2.0 * v + 8.0 * sigma * rng.random_range(-0.5..0.5))
                        .collect()
                }
            };
            cols.push(col);
        }
        let mut samples = Vec::with_capacity(t_len * SELECTION_COUNTERS);
        for t in 0..t_len {
            for c in &cols {
                samples.push(c[t]);
            }
        }
        let meta = TraceMeta {
            workload_id: "w0".into(),
            arch_id: arch,
            label: UnitLabel::BugFree,
            bug_id: None,
            window_cycles: DEFAULT_WINDOW_CYCLES,
        };
        traces.push(CounterTrace::new(meta, names.clone(), samples, ipc).unwrap());
    }
    Dataset::new(traces, splits, BTreeMap::new(), BTreeMap::new()).unwrap()
}

/// Enumerates every subset of the alpha-survivors and returns those that
/// satisfy both rules literally: no kept pair exceeds beta, and every dropped
/// survivor exceeds beta against some kept counter ranked above it.
fn brute_force_selection(ds: &Dataset, alpha: f64, beta: f64) -> Vec<BTreeSet<String>> {
    let traces: Vec<&CounterTrace> = ds.traces().iter().collect();
    let names = traces[0].counter_names().to_vec();
    let c = names.len();
    let n = traces.len() as f64;
    let mut r_ipc = vec![0.0; c];
    let mut r_pair = vec![vec![0.0; c]; c];
    for t in &traces {
        let cols: Vec<Vec<f64>> = (0..c).map(|i| t.column(i)).collect();
        for i in 0..c {
            r_ipc[i] += oracle_pearson(&cols[i], t.ipc()) / n;
            for j in 0..c {
                r_pair[i][j] += oracle_pearson(&cols[i], &cols[j]) / n;
            }
        }
    }
    let cand: Vec<usize> = (0..c).filter(|&i| r_ipc[i].abs() >= alpha).collect();
    let above = |i: usize, j: usize| {
        r_ipc[i].abs() > r_ipc[j].abs() || (r_ipc[i].abs() == r_ipc[j].abs() && names[i] < names[j])
    };
    assert!(cand.len() <= 16, "oracle limited to 16 candidates");
    let mut solutions = Vec::new();
    for mask in 0u32..(1 << cand.len()) {
        let set: Vec<usize> = (0..cand.len()).filter(|b| mask >> b & 1 == 1).map(|b| cand[b]).collect();
        let pair_ok = set
            .iter()
            .all(|&i| set.iter().all(|&j| i == j || r_pair[i][j].abs() <= beta));
        if !pair_ok {
            continue;
        }
        let dropped_ok = cand
            .iter()
            .filter(|j| !set.contains(j))
            .all(|&j| set.iter().any(|&i| above(i, j) && r_pair[i][j].abs() > beta));
        if dropped_ok {
            solutions.push(set.iter().map(|&i| names[i].clone()).collect());
        }
    }
    solutions
}

#[test]
fn selection_matches_brute_force_oracle() {
    let cfg = SelectionConfig::default();
    let mut elapsed = Duration::ZERO;
    let mut mismatches = 0;
    let mut nonempty = 0;
    let mut pruned = 0;
    for seed in 0..SELECTION_DATASETS as u64 {
        let ds = planted_dataset(1000 + seed);
        let t0 = Instant::now();
        let got = select_counters(&ds, "w0", &cfg).unwrap();
        elapsed += t0.elapsed();
        let oracle = brute_force_selection(&ds, cfg.alpha, cfg.beta);
        let got: BTreeSet<String> = got.into_iter().collect();
        if oracle.len() != 1 || oracle[0] != got {
            mismatches += 1;
        }
        nonempty += usize::from(!got.is_empty());
        let survivors = brute_force_selection(&ds, cfg.alpha, 1.0)[0].len();
        pruned += usize::from(survivors > got.len());
    }
    let ok = mismatches == 0 && elapsed.as_secs_f64() < SELECTION_MAX_SECONDS;
    report(
        "selection_oracle",
        ok,
        format!(
            "{mismatches} mismatches over {SELECTION_DATASETS} datasets \
             ({nonempty} non-empty, {pruned} with redundancy pruning), {:.3}s < {SELECTION_MAX_SECONDS}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(nonempty > SELECTION_DATASETS / 2 && pruned > 0, "planted datasets too easy");
    assert!(ok);
}

// --------------------------------------------------------------------- gbdt

fn oracle_leaf(node: &Value, x: &[f64]) -> f64 {
    if let Some(leaf) = node.get("leaf") {
        return leaf["value"].as_f64().unwrap();
    }
    let s = &node["split"];
    let f = s["feature"].as_u64().unwrap() as usize;
    let thr = s["threshold"].as_f64().unwrap();
    if x[f] <= thr {
        oracle_leaf(&s["left"], x)
    } else {
        oracle_leaf(&s["right"], x)
    }
}

fn random_regression(seed: u64, rows: usize, cols: usize) -> (Matrix, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = Matrix::new(rows, cols, data).unwrap();
    let reg: Vec<f64> = (0..rows)
        .map(|r| {
            let v = x.row(r);
            v[0] * v[0] - 0.5 * v[1] + (3.0 * v[2 % cols]).sin() + rng.random_range(-0.1..0.1)
        })
        .collect();
    let cls: Vec<f64> = reg.iter().map(|v| f64::from(u8::from(*v > 0.5))).collect();
    (x, reg, cls)
}

#[test]
fn gbdt_matches_traversal_oracle_and_loss_decreases() {
    let (x, _, y) = random_regression(11, 300, 6);
    let cfg = GbdtConfig {
        n_trees: 40,
        max_depth: 4,
        ..GbdtConfig::default()
    };
    let model = fit_gbdt(&x, &y, Loss::Logistic, &cfg, (0..6).map(|i| format!("f{i}")).collect()).unwrap();
    let json: Value = serde_json::from_str(&model.to_json_string().unwrap()).unwrap();
    let base = json["base_score"].as_f64().unwrap();
    let lr = json["learning_rate"].as_f64().unwrap();
    let trees = json["trees"].as_array().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let inputs: Vec<f64> = (0..GBDT_INPUTS * 6).map(|_| rng.random_range(-3.0..3.0)).collect();
    let m = Matrix::new(GBDT_INPUTS, 6, inputs).unwrap();
    let got = predict_gbdt(&model, &m).unwrap();
    let mut max_err: f64 = 0.0;
    for (r, g) in got.iter().enumerate() {
        let margin = base + lr * trees.iter().map(|t| oracle_leaf(t, m.row(r))).sum::<f64>();
        let p = 1.0 / (1.0 + (-margin).exp());
        max_err = max_err.max((p - g).abs());
    }
    let traversal_ok = max_err <= GBDT_TOL;
    report(
        "gbdt_traversal_oracle",
        traversal_ok,
        format!("max |diff| {max_err:.2e} <= {GBDT_TOL:.0e} on {GBDT_INPUTS} inputs"),
    );

    let mut worst_rise = f64::NEG_INFINITY;
    for seed in 0..GBDT_SEEDS {
        let (x, reg, cls) = random_regression(seed, 200, 5);
        let names: Vec<String> = (0..5).map(|i| format!("f{i}")).collect();
        for (loss, y) in [(Loss::Logistic, &cls), (Loss::Squared, &reg)] {
            let model = fit_gbdt(&x, y, loss, &GbdtConfig::with_trees(30), names.clone()).unwrap();
            assert_eq!(model.train_loss.len(), 31);
            for w in model.train_loss.windows(2) {
                worst_rise = worst_rise.max(w[1] - w[0]);
            }
        }
    }
    let loss_ok = worst_rise <= 0.0;
    report(
        "gbdt_loss_monotone",
        loss_ok,
        format!("largest per-round loss change {worst_rise:.3e} <= 0 over {GBDT_SEEDS} seeds"),
    );
    assert!(traversal_ok && loss_ok);
}

// ------------------------------------------------------------------ convnet

#[test]
fn convnet_gradients_match_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..GRAD_NETS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        // Smooth activations only: a ReLU kink within eps of a pre-activation
        // breaks central differences, not backprop.
        let act = |rng: &mut ChaCha8Rng| [Activation::Tanh, Activation::Linear][rng.random_range(0..2)];
        let arch = ConvArch {
            conv: (0..rng.random_range(1..=2))
                .map(|_| ConvSpec {
                    filters: rng.random_range(2..=4),
                    kernel_width: rng.random_range(1..=3),
                    activation: act(&mut rng),
                })
                .collect(),
            dense: (0..rng.random_range(0..=2))
                .map(|_| DenseSpec {
                    units: rng.random_range(2..=5),
                    activation: act(&mut rng),
                })
                .collect(),
        };
        let len = rng.random_range(6..=10);
        let ch = rng.random_range(1..=3);
        let n = 4;
        let net = ConvNet1D::new(len, ch, &arch, seed).unwrap();
        let data: Vec<f64> = (0..n * len * ch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let inputs = Dataset3::new(n, len, ch, data).unwrap();
        let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        worst = worst.max(grad_check(&net, &inputs, &labels, GRAD_EPS).unwrap());
    }
    let ok = worst < GRAD_TOL;
    report(
        "convnet_grad_check",
        ok,
        format!("max relative error {worst:.2e} < {GRAD_TOL:.0e} over {GRAD_NETS} nets, eps {GRAD_EPS:.0e}"),
    );
    assert!(ok);
}

// ----------------------------------------------------------------- resample

/// Fourier resampling computed from naive DFT sums: keep the lowest
/// `min(n, m) / 2 + 1` bins, apply the even-Nyquist correction, and evaluate
/// the real inverse transform directly.
fn dft_resample(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let half = m / 2 + 1;
    let mut re = vec![0.0; half];
    let mut im = vec![0.0; half];
    let nmin = n.min(m);
    let keep = (nmin / 2 + 1).min(half);
    for k in 0..keep {
        for (t, v) in x.iter().enumerate() {
            let a = -2.0 * PI * (k * t) as f64 / n as f64;
            re[k] += v * a.cos();
            im[k] += v * a.sin();
        }
    }
    if nmin % 2 == 0 && n != m {
        let f = if m < n { 2.0 } else { 0.5 };
        re[nmin / 2] *= f;
        im[nmin / 2] *= f;
    }
    (0..m)
        .map(|t| {
            let mut s = re[0];
            for k in 1..half {
                let a = 2.0 * PI * (k * t) as f64 / m as f64;
                let term = re[k] * a.cos() - im[k] * a.sin();
                if m % 2 == 0 && k == m / 2 {
                    s += re[k] * a.cos();
                } else {
                    s += 2.0 * term;
                }
            }
            s / n as f64
        })
        .collect()
}

#[test]
fn resample_matches_dft_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_oracle: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    let mut worst_linear: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    for n in 3..=64usize {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let id = resample(&x, n).unwrap();
        worst_identity = worst_identity.max(id.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let mx = x.iter().sum::<f64>() / n as f64;
        for m in 3..=64usize {
            let got = resample(&x, m).unwrap();
            let want = dft_resample(&x, m);
            worst_oracle = worst_oracle.max(got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            let my = got.iter().sum::<f64>() / m as f64;
            worst_mean = worst_mean.max((mx - my).abs());
            let (a, b) = (1.7, -0.3);
            let mix: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
            let lhs = resample(&mix, m).unwrap();
            let rz = resample(&z, m).unwrap();
            for i in 0..m {
                worst_linear = worst_linear.max((lhs[i] - (a * got[i] + b * rz[i])).abs());
            }
        }
    }
    let ok = [worst_oracle, worst_identity, worst_linear, worst_mean]
        .iter()
        .all(|v| *v <= RESAMPLE_TOL);
    report(
        "resample_oracle",
        ok,
        format!(
            "oracle {worst_oracle:.1e}, identity {worst_identity:.1e}, linearity {worst_linear:.1e}, \
             mean {worst_mean:.1e}; all <= {RESAMPLE_TOL:.0e} for lengths 3..=64 squared"
        ),
    );
    assert!(ok);
}

// ------------------------------------------------------------- model counts

#[test]
fn model_counts() {
    let f = fixture();
    let w = f.dataset.workloads().len();
    let cbc_units = f.bank.restricted_to_units().model_count();
    let cbc_full = f.bank.model_count();

    let small = GeneratorConfig {
        n_train_archs: 3,
        n_test_archs: 1,
        n_bugfree_test_archs: 0,
        n_workloads: 3,
        windows_min: 12,
        windows_max: 16,
        ..GeneratorConfig::default()
    };
    let corpus = generate_corpus(&small).unwrap();
    let ds = corpus.dataset().unwrap();
    let sel = select_all(&ds, &SelectionConfig::default()).unwrap();
    let mut cfg = P2bcConfig::default();
    cfg.ipc.gbdt = GbdtConfig::with_trees(20);
    cfg.stage2.arch = ConvArch::small();
    cfg.stage2.train = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let p2bc = train_p2bc(&ds, &sel, &cfg).unwrap();
    let pw = ds.workloads().len();

    let ok = cbc_units == w * UNITS.len()
        && cbc_full == w * (UNITS.len() + 1)
        && p2bc.model_count() == pw + UNITS.len()
        && p2bc.ipc.len() == pw
        && p2bc.stage2.classifiers.len() == UNITS.len();
    report(
        "model_counts",
        ok,
        format!(
            "CBC {cbc_units} == {w}x{} (with BugFree {cbc_full}); P2BC {} == {pw}+{}",
            UNITS.len(),
            p2bc.model_count(),
            UNITS.len()
        ),
    );
    assert!(ok);
}

// ----------------------------------------------------------------- ensemble

fn random_vector(rng: &mut ChaCha8Rng) -> ScoreVector {
    ScoreVector::new(UNITS.iter().map(|u| (*u, rng.random_range(0.0..1.0))).collect()).unwrap()
}

#[test]
fn ensemble_math() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_sum: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    let mut argmax_misses = 0;
    for _ in 0..ENSEMBLE_PAIRS {
        let a = random_vector(&mut rng);
        let mut b = random_vector(&mut rng);
        let (na, _) = normalize(&a).unwrap();
        worst_sum = worst_sum.max((na.total() - 1.0).abs());
        let c: f64 = rng.random_range(0.01..100.0);
        let scaled = ScoreVector::new(a.scores.iter().map(|(u, v)| (*u, v * c)).collect()).unwrap();
        let (ns, _) = normalize(&scaled).unwrap();
        for u in UNITS {
            worst_scale = worst_scale.max((ns.get(u) - na.get(u)).abs());
        }
        // Make `b` share `a`'s argmax.
        let top = a.ranking()[0];
        let bmax = b.scores.values().copied().fold(0.0, f64::max);
        b.scores.insert(top, bmax + rng.random_range(0.01..1.0));
        let v = combine(&a, &b).unwrap();
        worst_sum = worst_sum.max((v.combined.total() - 1.0).abs());
        if v.ranking[0] != top {
            argmax_misses += 1;
        }
    }
    let ok = worst_sum <= NORMALIZE_TOL && worst_scale <= NORMALIZE_TOL && argmax_misses == 0;
    report(
        "ensemble_math",
        ok,
        format!(
            "sum error {worst_sum:.1e}, scale error {worst_scale:.1e} (<= {NORMALIZE_TOL:.0e}); \
             {argmax_misses} argmax changes over {ENSEMBLE_PAIRS} pairs"
        ),
    );
    assert!(ok);
}

// ------------------------------------------------------------ random scorer

#[test]
fn random_scorer_matches_k_over_units() {
    let f = fixture();
    let mut pairs: Vec<(Vec<UnitLabel>, UnitLabel)> = Vec::new();
    let mut seed = 0;
    while pairs.len() < RANDOM_VERDICTS {
        let r = evaluate(&RandomScorer { seed }, &f.dataset, &EvalConfig::default()).unwrap();
        pairs.extend(r.verdicts.into_iter().map(|v| (v.ranking, v.label)));
        seed += 1;
    }
    pairs.truncate(RANDOM_VERDICTS);
    let mut worst: f64 = 0.0;
    let mut accs = Vec::new();
    for k in 1..=5 {
        let a = topk_accuracy(&pairs, k).unwrap();
        worst = worst.max((a - k as f64 / UNITS.len() as f64).abs());
        accs.push(format!("{a:.4}"));
    }
    let ok = worst <= RANDOM_TOL;
    report(
        "random_baseline",
        ok,
        format!("top-1..5 {accs:?}, max |acc - k/11| {worst:.4} <= {RANDOM_TOL} over {RANDOM_VERDICTS} verdicts"),
    );
    assert!(ok);
}

// -------------------------------------------------------------- end to end

#[test]
fn end_to_end_synthetic_reproduction() {
    let f = fixture();
    let banded: Vec<_> = f
        .eval
        .verdicts
        .iter()
        .filter(|v| v.impact.is_some_and(|i| i > BAND))
        .collect();
    let pick = |cats: &[Category]| -> Vec<(Vec<UnitLabel>, UnitLabel)> {
        banded
            .iter()
            .filter(|v| cats.contains(&v.category))
            .map(|v| (v.ranking.clone(), v.label))
            .collect()
    };
    let seen = pick(&[Category::SeenVariation, Category::UnseenVariation]);
    let unseen_type = pick(&[Category::UnseenType]);
    let top1 = topk_accuracy(&seen, 1).unwrap();
    let top3 = topk_accuracy(&seen, 3).unwrap();
    let ut3 = topk_accuracy(&unseen_type, 3).unwrap();
    let ut1 = topk_accuracy(&unseen_type, 1).unwrap();
    let cfg = &f.corpus.config;
    let shape_ok = cfg.n_train_archs == 4 && cfg.n_test_archs == 2 && f.dataset.workloads().len() == 12;
    let accuracy_ok = top1 >= MIN_TOP1_SEEN && top3 >= MIN_TOP3_SEEN && ut3 >= MIN_TOP3_UNSEEN_TYPE;
    let runtime_ok = f.pipeline < MAX_PIPELINE && f.eval.runtime.max_seconds_per_design < MAX_INFERENCE_SECONDS;
    report(
        "end_to_end_accuracy",
        shape_ok && accuracy_ok,
        format!(
            "band >{}%: seen+unseen-variation n={} top-1 {top1:.3} (>= {MIN_TOP1_SEEN}), top-3 {top3:.3} \
             (>= {MIN_TOP3_SEEN}); unseen-type n={} top-1 {ut1:.3}, top-3 {ut3:.3} (>= {MIN_TOP3_UNSEEN_TYPE})",
            BAND * 100.0,
            seen.len(),
            unseen_type.len()
        ),
    );
    report(
        "end_to_end_runtime",
        runtime_ok,
        format!(
            "pipeline {:.1}s < {}s; slowest design {:.3}s < {MAX_INFERENCE_SECONDS}s",
            f.pipeline.as_secs_f64(),
            MAX_PIPELINE.as_secs(),
            f.eval.runtime.max_seconds_per_design
        ),
    );
    println!("{}", f.eval.to_csv());
    assert!(shape_ok && accuracy_ok && runtime_ok);
}

// ---------------------------------------------------------------- bug-free

#[test]
fn bugfree_class_handling() {
    let f = fixture();
    let audit = bugfree_audit(&f.bank, &f.dataset, BAND).unwrap();
    let ranks: Vec<usize> = audit.bugfree_designs.iter().map(|d| d.bugfree_rank).collect();
    let first_ok = audit.bugfree_designs.len() == 4 && audit.bugfree_ranked_first >= MIN_BUGFREE_FIRST;
    let top5_ok = audit.buggy_with_bugfree_in_top5 == 0;
    report(
        "bugfree_ranked_first",
        first_ok,
        format!(
            "BugFree first on {} of {} bug-free designs (ranks {ranks:?}), need >= {MIN_BUGFREE_FIRST}",
            audit.bugfree_ranked_first,
            audit.bugfree_designs.len()
        ),
    );
    report(
        "bugfree_outside_top5_on_buggy",
        top5_ok,
        format!(
            "BugFree in top-5 of {} of {} buggy designs (band >{}%), need 0; rank histogram {:?}",
            audit.buggy_with_bugfree_in_top5,
            audit.n_buggy,
            BAND * 100.0,
            audit.buggy_rank_histogram
        ),
    );
    assert!(first_ok && top5_ok);
}

// ------------------------------------------------------------- sensitivity

#[test]
fn workload_sensitivity_curve() {
    let f = fixture();
    let cfg = SensitivityConfig {
        grid: vec![12, 8, 4],
        repetitions: SENSITIVITY_REPS,
        seed: 3,
    };
    let r = workload_sensitivity(&f.bank, &f.dataset, &cfg).unwrap();
    let full = f.eval.overall.topk[0];
    let at = |w: usize| r.points.iter().find(|p| p.workloads == w).unwrap().mean_top1;
    let ok = at(12) >= at(4) && (at(12) - full).abs() < 1e-12;
    report(
        "workload_sensitivity",
        ok,
        format!(
            "mean top-1 at 12 {:.4} >= at 4 {:.4} over {SENSITIVITY_REPS} repetitions (full evaluation {full:.4})",
            at(12),
            at(4)
        ),
    );
    print!("{}", r.to_csv());
    assert!(ok);
}
