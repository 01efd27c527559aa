//! Problem identification by energy-profile slope.
//!
//! Training slopes (one per problem) and test slopes (one per unknown solution
//! set) are each divided by their own minimum, which makes the comparison
//! independent of a machine's absolute power. Every test column is then
//! compared against every training row by relative difference, and the `n`
//! nearest rows form the candidate set for that test.
//!
//! The relative difference is taken against the training value:
//! `|train − test| / train × 100`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("slope for {0} is not a positive finite number")]
    NonPositiveSlope(String),
    #[error("slope table is empty")]
    Empty,
    #[error("n = {n} is outside 1..={max}")]
    InvalidN { n: usize, max: usize },
    #[error("unknown test column {0}")]
    UnknownTest(String),
    #[error("no ground truth for test column {0}")]
    MissingGroundTruth(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeTable {
    pub machine: String,
    /// Raw slopes, J/ms.
    pub entries: BTreeMap<String, f64>,
    pub normalized: BTreeMap<String, f64>,
}

/// How test slopes are scaled before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestNormalization {
    /// Divide test slopes by the smallest test slope.
    #[default]
    Independent,
    /// Divide test slopes by the smallest training slope.
    TrainingMinimum,
}

fn check(slopes: &BTreeMap<String, f64>) -> Result<(), ClassifyError> {
    if slopes.is_empty() {
        return Err(ClassifyError::Empty);
    }
    match slopes.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        Some((k, _)) => Err(ClassifyError::NonPositiveSlope(k.clone())),
        None => Ok(()),
    }
}

/// Divides every slope by `divisor`.
pub fn normalize_slopes_by(
    machine: &str,
    slopes: &BTreeMap<String, f64>,
    divisor: f64,
) -> Result<SlopeTable, ClassifyError> {
    check(slopes)?;
    if !(divisor.is_finite() && divisor > 0.0) {
        return Err(ClassifyError::NonPositiveSlope("divisor".into()));
    }
    Ok(SlopeTable {
        machine: machine.to_string(),
        entries: slopes.clone(),
        normalized: slopes.iter().map(|(k, v)| (k.clone(), v / divisor)).collect(),
    })
}

/// Divides every slope by the smallest one, so the minimum becomes exactly 1.
pub fn normalize_slopes(machine: &str, slopes: &BTreeMap<String, f64>) -> Result<SlopeTable, ClassifyError> {
    check(slopes)?;
    let min = slopes.values().copied().fold(f64::INFINITY, f64::min);
    normalize_slopes_by(machine, slopes, min)
}

/// Normalizes a test table under the chosen policy.
pub fn normalize_test(
    train: &SlopeTable,
    test_slopes: &BTreeMap<String, f64>,
    policy: TestNormalization,
) -> Result<SlopeTable, ClassifyError> {
    match policy {
        TestNormalization::Independent => normalize_slopes(&train.machine, test_slopes),
        TestNormalization::TrainingMinimum => {
            let min = train.entries.values().copied().fold(f64::INFINITY, f64::min);
            normalize_slopes_by(&train.machine, test_slopes, min)
        }
    }
}

/// `|train − test| / train × 100`
pub fn relative_difference_pct(train_norm: f64, test_norm: f64) -> f64 {
    (train_norm - test_norm).abs() / train_norm * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTable {
    pub machine: String,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// `cells[row][col]`: relative difference (%) of training row vs test column.
    pub cells: Vec<Vec<f64>>,
    /// Test column → true problem. Empty in blind mode.
    #[serde(default)]
    pub ground_truth: BTreeMap<String, String>,
}

pub fn distance_table(train: &SlopeTable, test: &SlopeTable) -> ClassificationTable {
    let train_ids: Vec<String> = train.normalized.keys().cloned().collect();
    let test_ids: Vec<String> = test.normalized.keys().cloned().collect();
    let cells = train
        .normalized
        .values()
        .map(|&tr| {
            test.normalized
                .values()
                .map(|&te| relative_difference_pct(tr, te))
                .collect()
        })
        .collect();
    ClassificationTable {
        machine: train.machine.clone(),
        train_ids,
        test_ids,
        cells,
        ground_truth: BTreeMap::new(),
    }
}

impl ClassificationTable {
    pub fn with_ground_truth(mut self, truth: BTreeMap<String, String>) -> Self {
        self.ground_truth = truth;
        self
    }

    fn column(&self, test_id: &str) -> Result<usize, ClassifyError> {
        self.test_ids
            .iter()
            .position(|t| t == test_id)
            .ok_or_else(|| ClassifyError::UnknownTest(test_id.to_string()))
    }

    /// All training problems ordered by distance to `test_id`; ties by id.
    pub fn ranked(&self, test_id: &str) -> Result<Vec<(String, f64)>, ClassifyError> {
        let col = self.column(test_id)?;
        let mut rows: Vec<(String, f64)> = self
            .train_ids
            .iter()
            .zip(&self.cells)
            .map(|(id, row)| (id.clone(), row[col]))
            .collect();
        rows.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(rows)
    }

    /// 1-based position of the true problem in the ranking of `test_id`.
    pub fn truth_rank(&self, test_id: &str) -> Result<Option<usize>, ClassifyError> {
        let truth = self
            .ground_truth
            .get(test_id)
            .ok_or_else(|| ClassifyError::MissingGroundTruth(test_id.to_string()))?;
        Ok(self
            .ranked(test_id)?
            .iter()
            .position(|(id, _)| id == truth)
            .map(|p| p + 1))
    }
}

/// The `n` training problems nearest to `test_id`.
pub fn nearest_n(table: &ClassificationTable, test_id: &str, n: usize) -> Result<Vec<String>, ClassifyError> {
    if n == 0 || n > table.train_ids.len() {
        return Err(ClassifyError::InvalidN {
            n,
            max: table.train_ids.len(),
        });
    }
    Ok(table.ranked(test_id)?.into_iter().take(n).map(|(id, _)| id).collect())
}

/// Number of test columns whose true problem is among their `n` nearest.
pub fn success_count(table: &ClassificationTable, n: usize) -> Result<usize, ClassifyError> {
    let mut hits = 0;
    for test in &table.test_ids {
        let truth = table
            .ground_truth
            .get(test)
            .ok_or_else(|| ClassifyError::MissingGroundTruth(test.clone()))?;
        if nearest_n(table, test, n)?.contains(truth) {
            hits += 1;
        }
    }
    Ok(hits)
}

/// `n → success_count(n)` for every `n` in `from..=to`.
pub fn success_curve(
    table: &ClassificationTable,
    from: usize,
    to: usize,
) -> Result<BTreeMap<usize, usize>, ClassifyError> {
    (from..=to).map(|n| success_count(table, n).map(|s| (n, s))).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn map(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn normalization() {
        let t = normalize_slopes("hpelite", &map(&[("1082", 0.00909), ("1643", 0.01253)])).unwrap();
        assert_eq!(t.normalized["1082"], 1.0);
        assert!((t.normalized["1643"] - 1.379).abs() < 1e-3);

        let t = normalize_slopes("m", &map(&[("p", 5.0)])).unwrap();
        assert_eq!(t.normalized["p"], 1.0);

        let t = normalize_slopes("m", &map(&[("a", 2.0), ("b", 4.0), ("c", 8.0)])).unwrap();
        assert_eq!(t.normalized, map(&[("a", 1.0), ("b", 2.0), ("c", 4.0)]));
    }

    #[test]
    fn bad_slopes() {
        assert_eq!(
            normalize_slopes("m", &map(&[("a", 2.0), ("b", 0.0)])).unwrap_err(),
            ClassifyError::NonPositiveSlope("b".into())
        );
        assert_eq!(
            normalize_slopes("m", &BTreeMap::new()).unwrap_err(),
            ClassifyError::Empty
        );
    }

    #[test]
    fn relative_differences() {
        assert!((relative_difference_pct(1.252, 1.255) - 0.2396).abs() < 1e-4);
        assert!((relative_difference_pct(1.0, 1.046) - 4.6).abs() < 1e-9);
        let t = normalize_slopes("m", &map(&[("a", 1.0), ("b", 1.5), ("c", 3.0)])).unwrap();
        let d = distance_table(&t, &t);
        for i in 0..3 {
            assert_eq!(d.cells[i][i], 0.0);
        }
    }

    fn column_table(col: &[(&str, f64)]) -> ClassificationTable {
        ClassificationTable {
            machine: "m".into(),
            train_ids: col.iter().map(|(k, _)| k.to_string()).collect(),
            test_ids: vec!["t".into()],
            cells: col.iter().map(|(_, v)| vec![*v]).collect(),
            ground_truth: BTreeMap::new(),
        }
    }

    #[test]
    fn nearest_selection() {
        let t = column_table(&[("row1", 0.2), ("row2", 0.1), ("row3", 5.0)]);
        assert_eq!(nearest_n(&t, "t", 2).unwrap(), vec!["row2", "row1"]);
        assert_eq!(nearest_n(&t, "t", 3).unwrap().len(), 3);
        assert!(matches!(nearest_n(&t, "t", 4), Err(ClassifyError::InvalidN { .. })));
        assert!(matches!(nearest_n(&t, "t", 0), Err(ClassifyError::InvalidN { .. })));

        let tie = column_table(&[("1082", 0.3), ("1071", 0.3), ("2000", 0.1)]);
        assert_eq!(nearest_n(&tie, "t", 3).unwrap(), vec!["2000", "1071", "1082"]);
    }

    #[test]
    fn exact_slopes_classify_at_n1() {
        let slopes = map(&[("a", 0.009), ("b", 0.010), ("c", 0.0115), ("d", 0.012)]);
        let train = normalize_slopes("m", &slopes).unwrap();
        let test_slopes: BTreeMap<String, f64> = slopes.iter().map(|(k, v)| (format!("test-{k}"), v * 1.7)).collect();
        let test = normalize_slopes("m", &test_slopes).unwrap();
        let truth = slopes.keys().map(|k| (format!("test-{k}"), k.clone())).collect();
        let table = distance_table(&train, &test).with_ground_truth(truth);
        assert_eq!(success_count(&table, 1).unwrap(), 4);
        assert_eq!(table.truth_rank("test-c").unwrap(), Some(1));
    }

    #[test]
    fn missing_truth() {
        let t = column_table(&[("a", 0.2)]);
        assert_eq!(
            success_count(&t, 1).unwrap_err(),
            ClassifyError::MissingGroundTruth("t".into())
        );
    }

    #[test]
    fn training_minimum_policy() {
        let train = normalize_slopes("m", &map(&[("a", 2.0), ("b", 4.0)])).unwrap();
        let t = normalize_test(
            &train,
            &map(&[("x", 3.0), ("y", 6.0)]),
            TestNormalization::TrainingMinimum,
        )
        .unwrap();
        assert_eq!(t.normalized["x"], 1.5);
        let t = normalize_test(&train, &map(&[("x", 3.0), ("y", 6.0)]), TestNormalization::Independent).unwrap();
        assert_eq!(t.normalized["x"], 1.0);
    }

    fn arb_tables() -> impl Strategy<Value = ClassificationTable> {
        (2usize..12, 1usize..8, any::<u64>()).prop_flat_map(|(rows, cols, _)| {
            (
                prop::collection::vec(0.001f64..1.0, rows),
                prop::collection::vec((0.001f64..1.0, 0..rows), cols),
            )
                .prop_map(move |(train, tests)| {
                    let train_map: BTreeMap<String, f64> = train
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (format!("p{i:02}"), *v))
                        .collect();
                    let test_map: BTreeMap<String, f64> = tests
                        .iter()
                        .enumerate()
                        .map(|(j, (v, _))| (format!("t{j:02}"), *v))
                        .collect();
                    let truth = tests
                        .iter()
                        .enumerate()
                        .map(|(j, (_, r))| (format!("t{j:02}"), format!("p{r:02}")))
                        .collect();
                    let tr = normalize_slopes("m", &train_map).unwrap();
                    let te = normalize_slopes("m", &test_map).unwrap();
                    distance_table(&tr, &te).with_ground_truth(truth)
                })
        })
    }

    proptest! {
        #[test]
        fn success_is_monotone_and_complete(table in arb_tables()) {
            let rows = table.train_ids.len();
            let curve = success_curve(&table, 1, rows).unwrap();
            let counts: Vec<usize> = curve.values().copied().collect();
            prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(counts[rows - 1], table.test_ids.len());
            prop_assert!(table.cells.iter().flatten().all(|c| *c >= 0.0));
        }

        #[test]
        fn nearest_is_prefix_closed(table in arb_tables()) {
            let rows = table.train_ids.len();
            for test in &table.test_ids {
                for n in 1..rows {
                    let a = nearest_n(&table, test, n).unwrap();
                    let b = nearest_n(&table, test, n + 1).unwrap();
                    prop_assert_eq!(&a[..], &b[..n]);
                }
            }
        }

        #[test]
        fn normalization_is_scale_free(
            slopes in prop::collection::btree_map("[a-z]{1,4}", 1e-4f64..1.0, 1..10),
            k in prop::sample::select(vec![0.5f64, 2.0, 4.0, 0.125, 1024.0]),
        ) {
            let a = normalize_slopes("m", &slopes).unwrap();
            let scaled: BTreeMap<String, f64> = slopes.iter().map(|(s, v)| (s.clone(), v * k)).collect();
            let b = normalize_slopes("m", &scaled).unwrap();
            prop_assert_eq!(&a.normalized, &b.normalized);
            prop_assert!(b.normalized.values().all(|v| *v >= 1.0));
            prop_assert!(b.normalized.values().any(|v| *v == 1.0));
        }
    }
}
