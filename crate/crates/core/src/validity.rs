//! Rater statistics: 1-10 validity score aggregation, inter-rater agreement
//! and test-retest consistency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidityError {
    #[error("no score sheets")]
    NoSheets,
    #[error("rater `{rater}` gave {metric} a score of {value}, expected 1..=10")]
    ScoreOutOfRange { rater: String, metric: Metric, value: u8 },
    #[error("inter-rater input needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("inter-rater input has no items")]
    NoItems,
    #[error("rater row {row} has {len} items, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("test-retest input needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("scores must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Expert,
    Resident,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Face,
    Content,
    Construct,
    Concurrent,
    Predictive,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Metric::Face => "face",
            Metric::Content => "content",
            Metric::Construct => "construct",
            Metric::Concurrent => "concurrent",
            Metric::Predictive => "predictive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityScoreSheet {
    pub rater_id: String,
    pub role: Role,
    pub scores: BTreeMap<Metric, u8>,
}

impl ValidityScoreSheet {
    pub fn validate(&self) -> Result<(), ValidityError> {
        for (&metric, &value) in &self.scores {
            if !(MIN_SCORE..=MAX_SCORE).contains(&value) {
                return Err(ValidityError::ScoreOutOfRange {
                    rater: self.rater_id.clone(),
                    metric,
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValiditySummary {
    pub sheet_count: usize,
    /// Mean per metric, one decimal.
    pub overall: BTreeMap<Metric, f64>,
    pub by_role: BTreeMap<Role, BTreeMap<Metric, f64>>,
}

/// Per-metric arithmetic mean over the sheets that score it, rounded half
/// up to one decimal, overall and per role.
pub fn aggregate_validity(sheets: &[ValidityScoreSheet]) -> Result<ValiditySummary, ValidityError> {
    if sheets.is_empty() {
        return Err(ValidityError::NoSheets);
    }
    for sheet in sheets {
        sheet.validate()?;
    }
    let means = |filter: &dyn Fn(&ValidityScoreSheet) -> bool| {
        let mut acc: BTreeMap<Metric, (u64, u64)> = BTreeMap::new();
        for sheet in sheets.iter().filter(|s| filter(s)) {
            for (&metric, &value) in &sheet.scores {
                let e = acc.entry(metric).or_default();
                e.0 += value as u64;
                e.1 += 1;
            }
        }
        acc.into_iter()
            .map(|(m, (sum, n))| (m, mean_one_decimal(sum, n)))
            .collect::<BTreeMap<_, _>>()
    };
    let mut by_role = BTreeMap::new();
    for role in [Role::Expert, Role::Resident] {
        if sheets.iter().any(|s| s.role == role) {
            by_role.insert(role, means(&|s| s.role == role));
        }
    }
    Ok(ValiditySummary {
        sheet_count: sheets.len(),
        overall: means(&|_| true),
        by_role,
    })
}

/// `sum / n` to one decimal, ties rounded up, in exact integer arithmetic.
fn mean_one_decimal(sum: u64, n: u64) -> f64 {
    let tenths = (20 * sum + n) / (2 * n);
    tenths as f64 / 10.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityInput {
    /// Raters x items.
    #[serde(default)]
    pub inter_rater: Option<Vec<Vec<f64>>>,
    /// (first, second) sitting per evaluator.
    #[serde(default)]
    pub test_retest: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterRater {
    pub mean_pairwise_abs_diff: f64,
    pub exact_agreement_fraction: f64,
}

pub fn inter_rater(matrix: &[Vec<f64>]) -> Result<InterRater, ValidityError> {
    if matrix.len() < 2 {
        return Err(ValidityError::TooFewRaters(matrix.len()));
    }
    let items = matrix[0].len();
    if items == 0 {
        return Err(ValidityError::NoItems);
    }
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != items {
            return Err(ValidityError::Ragged { row, len: r.len(), expected: items });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(ValidityError::NonFinite);
        }
    }
    let raters = matrix.len();
    let pairs = (raters * (raters - 1) / 2) as f64;
    let mut diff_sum = 0.0;
    let mut agreed = 0usize;
    for j in 0..items {
        let mut item_sum = 0.0;
        for a in 0..raters {
            for b in a + 1..raters {
                item_sum += (matrix[a][j] - matrix[b][j]).abs();
            }
        }
        diff_sum += item_sum / pairs;
        agreed += (item_sum == 0.0) as usize;
    }
    Ok(InterRater {
        mean_pairwise_abs_diff: diff_sum / items as f64,
        exact_agreement_fraction: agreed as f64 / items as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestRetest {
    pub mean_abs_diff: f64,
    /// `None` when either sitting has zero variance.
    pub pearson_r: Option<f64>,
    pub pearson_defined: bool,
}

pub fn test_retest(pairs: &[(f64, f64)]) -> Result<TestRetest, ValidityError> {
    if pairs.len() < 2 {
        return Err(ValidityError::TooFewPairs(pairs.len()));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(ValidityError::NonFinite);
    }
    let n = pairs.len() as f64;
    let mean_abs_diff = pairs.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let pearson_r = (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0));
    Ok(TestRetest {
        mean_abs_diff,
        pearson_r,
        pearson_defined: pearson_r.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sheet(id: &str, role: Role, scores: &[(Metric, u8)]) -> ValidityScoreSheet {
        ValidityScoreSheet {
            rater_id: id.into(),
            role,
            scores: scores.iter().copied().collect(),
        }
    }

    #[test]
    fn face_eight_content_nine() {
        let s = [(Metric::Face, 8), (Metric::Content, 9)];
        let sheets = [
            sheet("surgeon", Role::Expert, &s),
            sheet("resident-a", Role::Resident, &s),
            sheet("resident-b", Role::Resident, &s),
        ];
        let summary = aggregate_validity(&sheets).unwrap();
        assert_eq!(summary.overall[&Metric::Face], 8.0);
        assert_eq!(summary.overall[&Metric::Content], 9.0);
        assert_eq!(summary.by_role[&Role::Expert][&Metric::Face], 8.0);
        assert_eq!(summary.by_role[&Role::Resident][&Metric::Content], 9.0);
    }

    #[test]
    fn aggregation_examples() {
        let one = sheet("r", Role::Resident, &[(Metric::Construct, 3), (Metric::Predictive, 10)]);
        let summary = aggregate_validity(std::slice::from_ref(&one)).unwrap();
        assert_eq!(summary.overall[&Metric::Construct], 3.0);
        assert_eq!(summary.overall[&Metric::Predictive], 10.0);
        let sheets: Vec<_> = [7, 8, 9]
            .iter()
            .map(|&v| sheet("r", Role::Expert, &[(Metric::Face, v)]))
            .collect();
        assert_eq!(aggregate_validity(&sheets).unwrap().overall[&Metric::Face], 8.0);
        assert_eq!(aggregate_validity(&[]), Err(ValidityError::NoSheets));
    }

    #[test]
    fn ties_round_up() {
        assert_eq!(mean_one_decimal(17, 2), 8.5);
        // 8.25 -> 8.3, 8.35 -> 8.4 (not 8.3 as binary floats would give)
        assert_eq!(mean_one_decimal(33, 4), 8.3);
        assert_eq!(mean_one_decimal(167, 20), 8.4);
        assert_eq!(mean_one_decimal(25, 3), 8.3);
    }

    #[test]
    fn out_of_range_and_unknown_metrics_rejected() {
        let bad = sheet("x", Role::Expert, &[(Metric::Face, 11)]);
        assert!(matches!(aggregate_validity(&[bad]), Err(ValidityError::ScoreOutOfRange { .. })));
        let text = r#"{"rater_id":"x","role":"expert","scores":{"realism":5}}"#;
        assert!(serde_json::from_str::<ValidityScoreSheet>(text).is_err());
        let text = r#"{"rater_id":"x","role":"student","scores":{}}"#;
        assert!(serde_json::from_str::<ValidityScoreSheet>(text).is_err());
    }

    #[test]
    fn inter_rater_examples() {
        let same = inter_rater(&[vec![8.0, 9.0], vec![8.0, 9.0]]).unwrap();
        assert_eq!((same.mean_pairwise_abs_diff, same.exact_agreement_fraction), (0.0, 1.0));
        let single = inter_rater(&[vec![8.0], vec![9.0]]).unwrap();
        assert_eq!((single.mean_pairwise_abs_diff, single.exact_agreement_fraction), (1.0, 0.0));
        assert_eq!(inter_rater(&[vec![8.0]]), Err(ValidityError::TooFewRaters(1)));
        assert!(matches!(inter_rater(&[vec![8.0], vec![]]), Err(ValidityError::Ragged { .. })));
    }

    #[test]
    fn test_retest_examples() {
        let perfect = test_retest(&[(8.0, 8.0), (9.0, 9.0), (7.0, 7.0)]).unwrap();
        assert_eq!(perfect.mean_abs_diff, 0.0);
        assert_eq!(perfect.pearson_r, Some(1.0));
        let swapped = test_retest(&[(8.0, 9.0), (9.0, 8.0)]).unwrap();
        assert_eq!(swapped.mean_abs_diff, 1.0);
        assert_eq!(swapped.pearson_r, Some(-1.0));
        let flat = test_retest(&[(8.0, 8.0), (8.0, 9.0)]).unwrap();
        assert_eq!(flat.mean_abs_diff, 0.5);
        assert_eq!(flat.pearson_r, None);
        assert!(!flat.pearson_defined);
        assert_eq!(test_retest(&[(1.0, 1.0)]), Err(ValidityError::TooFewPairs(1)));
    }
}
