//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets use. Seeds named `valid_*` must parse; every other seed must be
//! rejected with an error rather than a panic.

use std::path::PathBuf;

use perfloc::cbc::BankIndex;
use perfloc::dataset::Manifest;
use perfloc::ml::{ConvNet1D, GbdtModel};
use perfloc::p2bc::P2bcIndex;
use perfloc::score::Verdict;
use perfloc::select::SelectionResult;
use perfloc::simgen::GeneratorConfig;
use perfloc::trace::{CounterTrace, TraceMeta};

fn parse(target: &str, text: &str) -> Result<(), String> {
    let e = |r: Result<(), perfloc::Error>| r.map_err(|e| e.to_string());
    match target {
        "trace_csv" => e(CounterTrace::from_csv_str(text, TraceMeta::unlabeled("w")).map(drop)),
        "manifest_json" => e(Manifest::from_json_str(text).map(drop)),
        "gbdt_model_json" => e(GbdtModel::from_json_str(text).map(drop)),
        "convnet_json" => e(ConvNet1D::from_json_str(text).map(drop)),
        "selection_json" => e(SelectionResult::from_json_str(text).map(drop)),
        "generator_config_json" => e(GeneratorConfig::from_json_str(text).map(drop)),
        "bank_index" => e(BankIndex::from_json_str(text).map(drop)),
        "p2bc_index" => e(P2bcIndex::from_json_str(text).map(drop)),
        "verdict_json" => e(Verdict::from_json_str(text).map(drop)),
        other => panic!("no entry point for fuzz target {other}"),
    }
}

#[test]
fn seeds_replay() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut targets = 0;
    for dir in std::fs::read_dir(&root).unwrap() {
        let dir = dir.unwrap().path();
        let target = dir.file_name().unwrap().to_str().unwrap().to_string();
        let mut valid = 0;
        for f in std::fs::read_dir(&dir).unwrap() {
            let f = f.unwrap().path();
            let name = f.file_name().unwrap().to_str().unwrap().to_string();
            let text = std::fs::read_to_string(&f).unwrap();
            let r = parse(&target, &text);
            if name.starts_with("valid_") {
                assert!(r.is_ok(), "{target}/{name}: {r:?}");
                valid += 1;
            } else {
                assert!(r.is_err(), "{target}/{name} unexpectedly parsed");
            }
        }
        assert!(valid > 0, "{target} has no valid seed");
        targets += 1;
    }
    assert_eq!(targets, 9);
}
