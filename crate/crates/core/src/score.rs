//! Per-unit confidence vectors, rankings and the verdict file format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::UnitLabel;

/// Non-negative confidence per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: BTreeMap<UnitLabel, f64>,
    pub normalized: bool,
}

impl ScoreVector {
    pub fn new(scores: BTreeMap<UnitLabel, f64>) -> Result<Self> {
        if let Some((u, v)) = scores.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Value(format!("score for {u} is {v}, expected finite and >= 0")));
        }
        Ok(ScoreVector {
            scores,
            normalized: false,
        })
    }

    pub fn get(&self, unit: UnitLabel) -> f64 {
        self.scores.get(&unit).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }

    pub fn ranking(&self) -> Vec<UnitLabel> {
        rank(&self.scores)
    }
}

/// Classes by descending score; equal scores keep the fixed label order
/// (Fetch, Decode, Issue, ..., Commit, BugFree).
pub fn rank(scores: &BTreeMap<UnitLabel, f64>) -> Vec<UnitLabel> {
    let mut items: Vec<(UnitLabel, f64)> = scores.iter().map(|(u, v)| (*u, *v)).collect();
    // BTreeMap iteration is already in label order, and the sort is stable.
    items.sort_by(|a, b| b.1.total_cmp(&a.1));
    items.into_iter().map(|(u, _)| u).collect()
}

/// Localization result written by the `localize` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub scores: BTreeMap<UnitLabel, f64>,
    pub ranking: Vec<UnitLabel>,
    pub normalized: bool,
    pub zero_filled_counters: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_workloads: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cbc_normalized: Option<BTreeMap<UnitLabel, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2bc_normalized: Option<BTreeMap<UnitLabel, f64>>,
}

impl Verdict {
    pub fn from_scores(scores: &ScoreVector, zero_filled_counters: Vec<String>) -> Self {
        Verdict {
            scores: scores.scores.clone(),
            ranking: scores.ranking(),
            normalized: scores.normalized,
            zero_filled_counters,
            missing_workloads: None,
            cbc_normalized: None,
            p2bc_normalized: None,
        }
    }

    pub fn top(&self, k: usize) -> &[UnitLabel] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a verdict and checks the ranking is consistent with the scores.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Verdict = serde_json::from_str(text)?;
        ScoreVector::new(v.scores.clone())?;
        if v.ranking != rank(&v.scores) {
            return Err(Error::Schema("ranking does not order the scores".into()));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::UNITS;

    #[test]
    fn ties_follow_label_order() {
        let scores: BTreeMap<_, _> = UNITS.iter().map(|u| (*u, 1.0)).collect();
        assert_eq!(rank(&scores), UNITS.to_vec());
        let mut scores = scores;
        scores.insert(UnitLabel::Commit, 2.0);
        assert_eq!(rank(&scores)[0], UnitLabel::Commit);
        assert_eq!(rank(&scores)[1], UnitLabel::Fetch);
    }

    #[test]
    fn negative_scores_rejected() {
        let scores = BTreeMap::from([(UnitLabel::Fetch, -0.1)]);
        assert_eq!(ScoreVector::new(scores).unwrap_err().kind(), "ValueError");
    }

    #[test]
    fn verdict_round_trip() {
        let sv = ScoreVector::new(BTreeMap::from([
            (UnitLabel::Fetch, 0.9),
            (UnitLabel::Decode, 0.1),
        ]))
        .unwrap();
        let v = Verdict::from_scores(&sv, vec!["x".into()]);
        let text = v.to_json_string().unwrap();
        assert!(text.contains("\"zero_filled_counters\""));
        assert_eq!(Verdict::from_json_str(&text).unwrap(), v);
        let bad = text.replacen("\"Fetch\",\n    \"Decode\"", "\"Decode\",\n    \"Fetch\"", 1);
        assert!(Verdict::from_json_str(&bad).is_err());
    }
}
