use perfloc::dataset::load_dataset_from;
use perfloc::simgen::{generate_corpus, ipc_impact, write_corpus, GeneratorConfig};
use perfloc::UnitLabel;

fn small(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        n_train_archs: 2,
        n_test_archs: 1,
        n_bugfree_test_archs: 1,
        n_workloads: 3,
        windows_min: 12,
        windows_max: 16,
        ..GeneratorConfig::default()
    }
}

#[test]
fn same_seed_same_corpus() {
    let a = generate_corpus(&small(11)).unwrap();
    let b = generate_corpus(&small(11)).unwrap();
    assert_eq!(a.manifest, b.manifest);
    assert_eq!(a.traces, b.traces);
    let c = generate_corpus(&small(12)).unwrap();
    assert_ne!(a.traces, c.traces);
}

#[test]
fn resolved_config_regenerates_corpus() {
    let a = generate_corpus(&small(4)).unwrap();
    let text = a.config.to_json_string().unwrap();
    let b = generate_corpus(&GeneratorConfig::from_json_str(&text).unwrap()).unwrap();
    assert_eq!(a.manifest, b.manifest);
    assert_eq!(a.traces, b.traces);
}

#[test]
fn measured_impacts_track_calibration_targets() {
    let c = generate_corpus(&small(5)).unwrap();
    assert!(!c.config.bugs.is_empty());
    for bug in &c.config.bugs {
        let measured = c.manifest.bug_impacts[&bug.bug_id];
        assert!(
            (measured - bug.target_impact).abs() <= 0.1 * bug.target_impact + 1e-4,
            "{}: target {} measured {}",
            bug.bug_id,
            bug.target_impact,
            measured
        );
    }
}

#[test]
fn manifest_impacts_equal_paired_trace_oracle() {
    let c = generate_corpus(&small(6)).unwrap();
    let free = |arch: &str, w: &str| {
        c.traces
            .iter()
            .find(|t| t.arch_id == arch && t.workload_id == w && t.label == UnitLabel::BugFree)
            .unwrap()
    };
    for (bug, impact) in &c.manifest.bug_impacts {
        let paired: Vec<f64> = c
            .traces
            .iter()
            .filter(|t| t.bug_id.as_deref() == Some(bug))
            .map(|t| ipc_impact(free(&t.arch_id, &t.workload_id).ipc(), t.ipc()))
            .collect();
        let mean = paired.iter().sum::<f64>() / paired.len() as f64;
        assert!((mean - impact).abs() < 1e-12, "{bug}");
    }
}

#[test]
fn written_corpus_loads_back() {
    let c = generate_corpus(&small(8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&c, dir.path()).unwrap();
    let ds = load_dataset_from(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(ds.traces(), c.dataset().unwrap().traces());
    let total: f64 = c.report.category_proportions.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(c.report.n_traces, c.traces.len());
}
