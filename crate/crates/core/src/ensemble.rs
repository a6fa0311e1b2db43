//! Equal-weight combination of two methods' unit scores: normalize each to
//! sum to one, average, rank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::UnitLabel;
use crate::score::ScoreVector;

/// Scores divided by their total. An all-zero vector becomes uniform and the
/// returned flag is set.
pub fn normalize(scores: &ScoreVector) -> Result<(ScoreVector, bool)> {
    let checked = ScoreVector::new(scores.scores.clone())?;
    if checked.scores.is_empty() {
        return Err(Error::EmptyInput("no scores to normalize".into()));
    }
    let total = checked.total();
    if total > 0.0 {
        let scores = checked.scores.iter().map(|(u, v)| (*u, v / total)).collect();
        Ok((
            ScoreVector {
                scores,
                normalized: true,
            },
            false,
        ))
    } else {
        log::warn!("all scores are zero; falling back to uniform");
        let n = checked.scores.len() as f64;
        let scores = checked.scores.keys().map(|u| (*u, 1.0 / n)).collect();
        Ok((
            ScoreVector {
                scores,
                normalized: true,
            },
            true,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub cbc_normalized: ScoreVector,
    pub p2bc_normalized: ScoreVector,
    pub combined: ScoreVector,
    pub ranking: Vec<UnitLabel>,
    /// Set when either input was all zero and replaced by a uniform vector.
    pub all_zero_fallback: bool,
}

pub fn combine(cbc: &ScoreVector, p2bc: &ScoreVector) -> Result<EnsembleVerdict> {
    if !cbc.scores.keys().eq(p2bc.scores.keys()) {
        return Err(Error::KeyMismatch(format!(
            "unit sets differ: {:?} vs {:?}",
            cbc.scores.keys().collect::<Vec<_>>(),
            p2bc.scores.keys().collect::<Vec<_>>()
        )));
    }
    let (a, fa) = normalize(cbc)?;
    let (b, fb) = normalize(p2bc)?;
    let scores = a
        .scores
        .iter()
        .map(|(u, v)| (*u, (v + b.scores[u]) / 2.0))
        .collect();
    let combined = ScoreVector {
        scores,
        normalized: true,
    };
    Ok(EnsembleVerdict {
        ranking: combined.ranking(),
        cbc_normalized: a,
        p2bc_normalized: b,
        combined,
        all_zero_fallback: fa || fb,
    })
}
