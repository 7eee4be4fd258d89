//! Scoring of rating predictions against quintile ground truth: MAE with
//! pooled sample std, the composite error over the 3/6/12-month horizons,
//! per-month breakdowns, rating distributions, and Spearman rank
//! correlations between sentiment signals and ratings.
//!
//! MAE suits ordinal classification because it weights how far a rating
//! lands from the truth; the quintile labeling keeps classes balanced, so
//! no macro averaging is applied.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::YearMonth;
use crate::labeler::LabelMode;
use crate::ratings::OrdinalRating;

/// The horizons the composite error averages over; 1- and 18-month values
/// are deliberately excluded.
pub const COMPOSITE_HORIZONS: [u32; 3] = [3, 6, 12];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("missing horizon {0} in per-horizon MAE map")]
    MissingHorizon(u32),
    #[error("correlation undefined: {0}")]
    Degenerate(String),
}

/// Mean absolute error with its sample standard deviation and count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeStat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// MAE over aligned prediction/truth pairs. Std is the sample standard
/// deviation (n-1) of the absolute errors, 0 when n = 1.
pub fn mae(predictions: &[OrdinalRating], truths: &[OrdinalRating]) -> Result<MaeStat, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let errors: Vec<f64> = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| p.distance(*t) as f64)
        .collect();
    let n = errors.len();
    let mean = errors.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MaeStat { mean, std, n })
}

/// Arithmetic mean of the 3-, 6-, and 12-month MAEs; other horizons in the
/// map are ignored.
pub fn composite_error(per_horizon_mae: &BTreeMap<u32, f64>) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    for horizon in COMPOSITE_HORIZONS {
        sum += per_horizon_mae
            .get(&horizon)
            .ok_or(EvalError::MissingHorizon(horizon))?;
    }
    Ok(sum / COMPOSITE_HORIZONS.len() as f64)
}

/// Counts and proportions of issued ratings per ordinal class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub counts: BTreeMap<i8, u64>,
    pub proportions: BTreeMap<i8, f64>,
    pub total: u64,
}

/// Class counts over {-2..2} plus proportions, so buy-skew claims (e.g.
/// "sell ratings under 5%") are checkable on any dataset.
pub fn rating_distribution(ratings: &[OrdinalRating]) -> Distribution {
    let mut counts: BTreeMap<i8, u64> = OrdinalRating::ALL.iter().map(|r| (r.value(), 0)).collect();
    for rating in ratings {
        *counts
            .get_mut(&rating.value())
            .expect("all classes present") += 1;
    }
    let total = ratings.len() as u64;
    let proportions = counts
        .iter()
        .map(|(k, v)| {
            (
                *k,
                if total == 0 {
                    0.0
                } else {
                    *v as f64 / total as f64
                },
            )
        })
        .collect();
    Distribution {
        counts,
        proportions,
        total,
    }
}

/// Ranks with ties replaced by the average of the positions they span
/// (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &slot in &order[i..=j] {
            ranks[slot] = avg_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Constant inputs
/// make rho undefined and surface as [`EvalError::Degenerate`], never 0.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(EvalError::Degenerate(format!("{} point(s)", xs.len())));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mean_x = rx.iter().sum::<f64>() / n;
    let mean_y = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x).powi(2);
        var_y += (y - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(EvalError::Degenerate("constant input".to_string()));
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// One joined (prediction, truth) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub company_id: String,
    pub rating_month: YearMonth,
    pub horizon_months: u32,
    pub mode: LabelMode,
    pub predicted: OrdinalRating,
    pub truth: OrdinalRating,
}

/// Pooled MAE for one (horizon, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStat {
    pub horizon_months: u32,
    pub mode: LabelMode,
    pub mae: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeStat {
    pub mode: LabelMode,
    /// Absent when a composite horizon had no evaluable observations.
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// MAE for one (month, horizon, mode) cell; months without evaluable
/// labels simply have no cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyCell {
    pub month: YearMonth,
    pub horizon_months: u32,
    pub mode: LabelMode,
    pub mae: f64,
    pub n: usize,
}

/// A named series pair to rank-correlate (e.g. company sentiment score vs
/// rating at one horizon).
#[derive(Debug, Clone)]
pub struct CorrelationPair {
    pub pair: String,
    pub horizon_months: u32,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStat {
    pub pair: String,
    pub horizon_months: u32,
    /// Absent when the correlation is degenerate (see `note`).
    pub rho: Option<f64>,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Everything needed to evaluate one method.
#[derive(Debug, Clone, Default)]
pub struct MethodEvaluationInput {
    pub method: String,
    pub scored: Vec<ScoredPrediction>,
    /// Every rating the method issued (for the class distribution).
    pub issued_ratings: Vec<OrdinalRating>,
    pub correlation_pairs: Vec<CorrelationPair>,
    /// Counts of predictions excluded before scoring, by reason.
    pub exclusions: BTreeMap<String, u64>,
}

/// The per-method section of an [`EvaluationReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub per_horizon: Vec<HorizonStat>,
    pub composite: Vec<CompositeStat>,
    pub monthly: Vec<MonthlyCell>,
    pub distribution: Distribution,
    pub correlations: Vec<CorrelationStat>,
    pub exclusions: BTreeMap<String, u64>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub methods: Vec<MethodReport>,
}

/// Scores one method: pooled per-(horizon, mode) MAE, composite error per
/// mode, monthly breakdown, distribution, and correlations.
pub fn evaluate_method(input: MethodEvaluationInput) -> MethodReport {
    type RatingPairs = (Vec<OrdinalRating>, Vec<OrdinalRating>);
    let mut by_cell: BTreeMap<(LabelMode, u32), RatingPairs> = BTreeMap::new();
    let mut by_month: BTreeMap<(LabelMode, YearMonth, u32), RatingPairs> = BTreeMap::new();
    for obs in &input.scored {
        let cell = by_cell.entry((obs.mode, obs.horizon_months)).or_default();
        cell.0.push(obs.predicted);
        cell.1.push(obs.truth);
        let monthly = by_month
            .entry((obs.mode, obs.rating_month, obs.horizon_months))
            .or_default();
        monthly.0.push(obs.predicted);
        monthly.1.push(obs.truth);
    }

    let per_horizon: Vec<HorizonStat> = by_cell
        .iter()
        .map(|((mode, horizon), (preds, truths))| {
            let stat = mae(preds, truths).expect("cell is non-empty by construction");
            HorizonStat {
                horizon_months: *horizon,
                mode: *mode,
                mae: stat.mean,
                std: stat.std,
                n: stat.n,
            }
        })
        .collect();

    let modes: Vec<LabelMode> = {
        let mut modes: Vec<LabelMode> = per_horizon.iter().map(|s| s.mode).collect();
        modes.sort_unstable();
        modes.dedup();
        modes
    };
    let composite = modes
        .iter()
        .map(|mode| {
            let per_mode: BTreeMap<u32, f64> = per_horizon
                .iter()
                .filter(|s| s.mode == *mode)
                .map(|s| (s.horizon_months, s.mae))
                .collect();
            match composite_error(&per_mode) {
                Ok(value) => CompositeStat {
                    mode: *mode,
                    value: Some(value),
                    note: None,
                },
                Err(e) => CompositeStat {
                    mode: *mode,
                    value: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();

    let monthly: Vec<MonthlyCell> = by_month
        .iter()
        .map(|((mode, month, horizon), (preds, truths))| {
            let stat = mae(preds, truths).expect("cell is non-empty by construction");
            MonthlyCell {
                month: *month,
                horizon_months: *horizon,
                mode: *mode,
                mae: stat.mean,
                n: stat.n,
            }
        })
        .collect();

    let correlations = input
        .correlation_pairs
        .iter()
        .map(|pair| match spearman(&pair.xs, &pair.ys) {
            Ok(rho) => CorrelationStat {
                pair: pair.pair.clone(),
                horizon_months: pair.horizon_months,
                rho: Some(rho),
                n: pair.xs.len(),
                note: None,
            },
            Err(e) => CorrelationStat {
                pair: pair.pair.clone(),
                horizon_months: pair.horizon_months,
                rho: None,
                n: pair.xs.len(),
                note: Some(e.to_string()),
            },
        })
        .collect();

    MethodReport {
        method: input.method,
        per_horizon,
        composite,
        monthly,
        distribution: rating_distribution(&input.issued_ratings),
        correlations,
        exclusions: input.exclusions,
    }
}

pub fn build_report(inputs: Vec<MethodEvaluationInput>) -> EvaluationReport {
    EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        methods: inputs.into_iter().map(evaluate_method).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: i8) -> OrdinalRating {
        OrdinalRating::new(v).unwrap()
    }

    fn ratings(values: &[i8]) -> Vec<OrdinalRating> {
        values.iter().map(|v| r(*v)).collect()
    }

    #[test]
    fn mae_zero_when_predictions_equal_truths() {
        let xs = ratings(&[2, -1, 0, 1]);
        let stat = mae(&xs, &xs).unwrap();
        assert_eq!(
            stat,
            MaeStat {
                mean: 0.0,
                std: 0.0,
                n: 4
            }
        );
    }

    #[test]
    fn mae_hand_example() {
        let stat = mae(&ratings(&[2, -2, 0]), &ratings(&[0, -2, 0])).unwrap();
        assert!((stat.mean - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(stat.n, 3);
    }

    #[test]
    fn mae_matches_bruteforce_on_random_pairs() {
        // Simple LCG so the fixture is self-contained and deterministic.
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) % 5) as i8 - 2
        };
        let preds: Vec<OrdinalRating> = (0..200).map(|_| r(next())).collect();
        let truths: Vec<OrdinalRating> = (0..200).map(|_| r(next())).collect();
        let stat = mae(&preds, &truths).unwrap();

        // Oracle: integer arithmetic, separate code path.
        let abs_diffs: Vec<i64> = preds
            .iter()
            .zip(&truths)
            .map(|(p, t)| (p.value() as i64 - t.value() as i64).abs())
            .collect();
        let oracle_mean = abs_diffs.iter().sum::<i64>() as f64 / abs_diffs.len() as f64;
        assert_eq!(stat.mean, oracle_mean);
        let oracle_var = abs_diffs
            .iter()
            .map(|d| (*d as f64 - oracle_mean).powi(2))
            .sum::<f64>()
            / (abs_diffs.len() - 1) as f64;
        assert!((stat.std - oracle_var.sqrt()).abs() < 1e-12);
        assert!(stat.mean >= 0.0 && stat.mean <= 4.0);
    }

    #[test]
    fn mae_error_paths() {
        assert!(matches!(
            mae(&ratings(&[0]), &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(mae(&[], &[]), Err(EvalError::EmptyInput)));
        let single = mae(&ratings(&[2]), &ratings(&[-2])).unwrap();
        assert_eq!(
            single,
            MaeStat {
                mean: 4.0,
                std: 0.0,
                n: 1
            }
        );
    }

    #[test]
    fn composite_is_mean_of_3_6_12() {
        let map = BTreeMap::from([(3u32, 1.0), (6, 2.0), (12, 3.0)]);
        assert_eq!(composite_error(&map).unwrap(), 2.0);

        let noisy = BTreeMap::from([(1u32, 9.9), (3, 1.0), (6, 1.0), (12, 1.0), (18, 9.9)]);
        assert_eq!(composite_error(&noisy).unwrap(), 1.0);

        let missing = BTreeMap::from([(3u32, 1.0), (6, 2.0)]);
        assert!(matches!(
            composite_error(&missing),
            Err(EvalError::MissingHorizon(12))
        ));
    }

    #[test]
    fn distribution_counts_and_proportions() {
        let dist = rating_distribution(&ratings(&[0; 10]));
        assert_eq!(dist.counts[&0], 10);
        assert_eq!(dist.counts[&2], 0);
        assert_eq!(dist.total, 10);

        let empty = rating_distribution(&[]);
        assert!(empty.counts.values().all(|c| *c == 0));
        assert_eq!(empty.total, 0);

        let mixed = rating_distribution(&ratings(&[2, 2, 1, 0, -1, -2, 0]));
        let sum: f64 = mixed.proportions.values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(mixed.counts.len(), 5);
    }

    #[test]
    fn spearman_perfect_monotone() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x + 1.0).collect();
        assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let zs: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((spearman(&xs, &zs).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_ties_match_average_rank_oracle() {
        let xs = [1.0, 2.0, 2.0, 2.0, 3.0, 5.0, 5.0];
        let ys = [0.2, 0.9, 0.1, 0.4, 0.4, 1.2, 0.8];

        // Oracle: average ranks computed by counting, then textbook Pearson.
        let rank_of = |values: &[f64], v: f64| -> f64 {
            let below = values.iter().filter(|x| **x < v).count() as f64;
            let equal = values.iter().filter(|x| **x == v).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let rx: Vec<f64> = xs.iter().map(|v| rank_of(&xs, *v)).collect();
        let ry: Vec<f64> = ys.iter().map(|v| rank_of(&ys, *v)).collect();
        let n = rx.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        let oracle = cov / (vx * vy).sqrt();

        let rho = spearman(&xs, &ys).unwrap();
        assert!((rho - oracle).abs() < 1e-12, "rho {rho} vs oracle {oracle}");
        assert!((-1.0..=1.0).contains(&rho));
    }

    #[test]
    fn spearman_invariant_under_increasing_transforms() {
        let xs = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        let ys = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0];
        let base = spearman(&xs, &ys).unwrap();
        let tx: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let ty: Vec<f64> = ys.iter().map(|y| 3.0 * y + 11.0).collect();
        assert!((spearman(&tx, &ty).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn spearman_degenerate_is_an_error_not_zero() {
        let constant = [2.0, 2.0, 2.0];
        let varying = [1.0, 2.0, 3.0];
        assert!(matches!(
            spearman(&constant, &varying),
            Err(EvalError::Degenerate(_))
        ));
        assert!(matches!(
            spearman(&varying, &constant),
            Err(EvalError::Degenerate(_))
        ));
        assert!(matches!(
            spearman(&[1.0], &[2.0]),
            Err(EvalError::Degenerate(_))
        ));
    }

    fn obs(month: &str, horizon: u32, pred: i8, truth: i8) -> ScoredPrediction {
        ScoredPrediction {
            company_id: "A".to_string(),
            rating_month: month.parse().unwrap(),
            horizon_months: horizon,
            mode: LabelMode::Absolute,
            predicted: r(pred),
            truth: r(truth),
        }
    }

    #[test]
    fn monthly_breakdown_matches_hand_computation() {
        // 2 months x 2 horizons, two observations per cell.
        let scored = vec![
            obs("2022-01", 3, 2, 0),  // |2|
            obs("2022-01", 3, 1, 1),  // |0| -> cell mae 1.0
            obs("2022-01", 6, -2, 2), // |4|
            obs("2022-01", 6, 0, 0),  // |0| -> cell mae 2.0
            obs("2022-02", 3, 1, 0),  // |1|
            obs("2022-02", 3, 0, 0),  // |0| -> cell mae 0.5
            obs("2022-02", 6, 2, 2),  // |0|
            obs("2022-02", 6, 2, 1),  // |1| -> cell mae 0.5
        ];
        let report = evaluate_method(MethodEvaluationInput {
            method: "vanilla".to_string(),
            scored,
            issued_ratings: vec![],
            correlation_pairs: vec![],
            exclusions: BTreeMap::new(),
        });
        assert_eq!(report.monthly.len(), 4);
        let cell = |month: &str, horizon: u32| {
            report
                .monthly
                .iter()
                .find(|c| c.month.to_string() == month && c.horizon_months == horizon)
                .unwrap()
        };
        assert_eq!(cell("2022-01", 3).mae, 1.0);
        assert_eq!(cell("2022-01", 6).mae, 2.0);
        assert_eq!(cell("2022-02", 3).mae, 0.5);
        assert_eq!(cell("2022-02", 6).mae, 0.5);

        // Report totals: per-month n sums to the overall n per cell.
        for stat in &report.per_horizon {
            let monthly_n: usize = report
                .monthly
                .iter()
                .filter(|c| c.mode == stat.mode && c.horizon_months == stat.horizon_months)
                .map(|c| c.n)
                .sum();
            assert_eq!(monthly_n, stat.n);
        }
    }

    #[test]
    fn single_record_cell_equals_absolute_error() {
        let report = evaluate_method(MethodEvaluationInput {
            method: "vanilla".to_string(),
            scored: vec![obs("2022-01", 12, -2, 1)],
            issued_ratings: vec![r(-2)],
            correlation_pairs: vec![],
            exclusions: BTreeMap::new(),
        });
        assert_eq!(report.monthly.len(), 1);
        assert_eq!(report.monthly[0].mae, 3.0);
        assert_eq!(report.monthly[0].n, 1);
    }

    #[test]
    fn method_composite_reports_missing_horizons() {
        let scored = vec![obs("2022-01", 3, 1, 1), obs("2022-01", 6, 1, 1)];
        let report = evaluate_method(MethodEvaluationInput {
            method: "vanilla".to_string(),
            scored,
            issued_ratings: vec![],
            correlation_pairs: vec![],
            exclusions: BTreeMap::new(),
        });
        assert_eq!(report.composite.len(), 1);
        assert_eq!(report.composite[0].value, None);
        assert!(report.composite[0].note.as_ref().unwrap().contains("12"));
    }

    #[test]
    fn degenerate_correlation_reported_not_zeroed() {
        let report = evaluate_method(MethodEvaluationInput {
            method: "sentiment".to_string(),
            scored: vec![],
            issued_ratings: vec![],
            correlation_pairs: vec![CorrelationPair {
                pair: "company_sentiment_vs_rating".to_string(),
                horizon_months: 3,
                xs: vec![1.0, 1.0, 1.0],
                ys: vec![0.0, 1.0, 2.0],
            }],
            exclusions: BTreeMap::new(),
        });
        assert_eq!(report.correlations.len(), 1);
        assert_eq!(report.correlations[0].rho, None);
        assert!(report.correlations[0].note.is_some());
    }
}
