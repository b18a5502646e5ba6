//! Confusion-matrix metrics, ROC/AUC, fold aggregation, and the two
//! statistical comparisons: a paired t-test over fold AUCs and the DeLong
//! test for correlated AUCs on a shared test set.
//!
//! AUC is computed by tie-aware pair counting in integer arithmetic, so it
//! equals the Mann-Whitney statistic exactly. Metrics with a zero
//! denominator are reported as explicitly undefined rather than silently
//! zero-filled, and aggregation excludes them with a count.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use special::{erfc, t_two_tailed_p};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("labels contain a single class; both classes are required")]
    SingleClass,
    #[error("length mismatch: {lhs} scores vs {rhs} labels")]
    LengthMismatch { lhs: usize, rhs: usize },
    #[error("{0}")]
    Input(String),
}

/// Binary confusion counts at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Tally predictions against labels. Scores are probabilities; a score equal
/// to the threshold predicts positive.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            lhs: scores.len(),
            rhs: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut c = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, y == 1) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Threshold metrics; `None` marks a zero-denominator metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

/// `F1 = 2·PPV·SEN / (PPV + SEN)` when both parts are defined and nonzero.
pub fn f1_from(ppv: Option<f64>, sen: Option<f64>) -> Option<f64> {
    match (ppv, sen) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    }
}

pub fn metrics(c: &ConfusionCounts) -> Result<Metrics, EvalError> {
    if c.total() == 0 {
        return Err(EvalError::EmptyInput);
    }
    let ppv = ratio(c.true_pos, c.true_pos + c.false_pos);
    let sen = ratio(c.true_pos, c.true_pos + c.false_neg);
    Ok(Metrics {
        acc: ratio(c.true_pos + c.true_neg, c.total()),
        ppv,
        npv: ratio(c.true_neg, c.true_neg + c.false_neg),
        sen,
        spe: ratio(c.true_neg, c.true_neg + c.false_pos),
        f1: f1_from(ppv, sen),
    })
}

/// One point of the ROC curve. The first point carries an infinite threshold
/// (nothing predicted positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC sweep and AUC.
///
/// The sweep emits one point per distinct score (descending) plus the (0,0)
/// origin. AUC is accumulated as integer pair counts — wins plus half-credit
/// ties over all positive×negative pairs — which equals the trapezoid area
/// under the emitted curve and the Mann-Whitney statistic exactly.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<RocPoint>), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            lhs: scores.len(),
            rhs: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::Input("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    // wins counted in half-units so ties stay integral
    let mut half_wins: u64 = 0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let mut group_pos = 0usize;
        let mut group_neg = 0usize;
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1 {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            i += 1;
        }
        tp += group_pos;
        fp += group_neg;
        // positives in this group beat all strictly-lower negatives and tie
        // with the group's negatives
        half_wins += group_pos as u64 * (2 * (n_neg - fp) as u64 + group_neg as u64);
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: t,
        });
    }
    let auc = half_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok((auc, points))
}

/// Per-fold evaluation record: threshold metrics, AUC, and the ROC polyline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
    pub auc: f64,
    pub roc_points: Vec<(f64, f64)>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Full evaluation of a score vector at one threshold.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport, EvalError> {
    let c = confusion(scores, labels, threshold)?;
    let m = metrics(&c)?;
    let (auc, points) = roc_auc(scores, labels)?;
    Ok(EvalReport {
        acc: m.acc,
        ppv: m.ppv,
        npv: m.npv,
        sen: m.sen,
        spe: m.spe,
        f1: m.f1,
        auc,
        roc_points: points.iter().map(|p| (p.fpr, p.tpr)).collect(),
        n_pos: c.true_pos + c.false_neg,
        n_neg: c.true_neg + c.false_pos,
    })
}

/// Result of a statistical comparison between two models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub auc_a: f64,
    pub auc_b: f64,
    /// Set when the variance of the statistic degenerated to zero; the
    /// p-value is then 1.0 for identical means and 0.0 otherwise.
    pub degenerate: bool,
}

/// Paired t-test on fold-aligned AUC vectors. Two-tailed p via the Student-t
/// CDF with `k-1` degrees of freedom.
pub fn paired_t_test(auc_a: &[f64], auc_b: &[f64]) -> Result<ComparisonResult, EvalError> {
    if auc_a.len() != auc_b.len() {
        return Err(EvalError::LengthMismatch {
            lhs: auc_a.len(),
            rhs: auc_b.len(),
        });
    }
    let k = auc_a.len();
    if k < 2 {
        return Err(EvalError::Input(format!(
            "paired t-test needs at least 2 folds, got {k}"
        )));
    }
    let d: Vec<f64> = auc_a.iter().zip(auc_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    let mean_a = auc_a.iter().sum::<f64>() / k as f64;
    let mean_b = auc_b.iter().sum::<f64>() / k as f64;
    if var == 0.0 {
        let (statistic, p_value) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY * mean.signum(), 0.0)
        };
        return Ok(ComparisonResult {
            test_name: "paired_t".into(),
            statistic,
            p_value,
            auc_a: mean_a,
            auc_b: mean_b,
            degenerate: true,
        });
    }
    let t = mean / (var.sqrt() / (k as f64).sqrt());
    Ok(ComparisonResult {
        test_name: "paired_t".into(),
        statistic: t,
        p_value: t_two_tailed_p(t, k - 1),
        auc_a: mean_a,
        auc_b: mean_b,
        degenerate: false,
    })
}

/// 1-based midranks with ties averaged.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Placement values and AUC for one model via midranks: `V10` per positive,
/// `V01` per negative.
fn delong_placements(scores: &[f64], labels: &[u8]) -> (f64, Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0)
        .map(|(&s, _)| s)
        .collect();
    let (m, q) = (pos.len(), neg.len());
    let mut combined = pos.clone();
    combined.extend_from_slice(&neg);
    let r_all = midranks(&combined);
    let r_pos = midranks(&pos);
    let r_neg = midranks(&neg);
    let v10: Vec<f64> = (0..m).map(|i| (r_all[i] - r_pos[i]) / q as f64).collect();
    let v01: Vec<f64> = (0..q)
        .map(|j| 1.0 - (r_all[m + j] - r_neg[j]) / m as f64)
        .collect();
    let auc =
        (r_all[..m].iter().sum::<f64>() - m as f64 * (m as f64 + 1.0) / 2.0) / (m as f64 * q as f64);
    (auc, v10, v01)
}

fn sample_cov(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// DeLong test for two correlated AUCs measured on the same test set.
///
/// Placement values give the structural components; the variance of the AUC
/// difference follows from their covariance matrices, and the z statistic is
/// referred to the standard normal.
pub fn delong_test(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[u8],
) -> Result<ComparisonResult, EvalError> {
    if scores_a.len() != scores_b.len() || scores_a.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            lhs: scores_a.len(),
            rhs: labels.len(),
        });
    }
    let m = labels.iter().filter(|&&y| y == 1).count();
    let q = labels.len() - m;
    if m == 0 || q == 0 {
        return Err(EvalError::SingleClass);
    }
    let (auc_a, v10_a, v01_a) = delong_placements(scores_a, labels);
    let (auc_b, v10_b, v01_b) = delong_placements(scores_b, labels);

    let s10 = [
        sample_cov(&v10_a, &v10_a),
        sample_cov(&v10_a, &v10_b),
        sample_cov(&v10_b, &v10_b),
    ];
    let s01 = [
        sample_cov(&v01_a, &v01_a),
        sample_cov(&v01_a, &v01_b),
        sample_cov(&v01_b, &v01_b),
    ];
    let var = (s10[0] - 2.0 * s10[1] + s10[2]) / m as f64
        + (s01[0] - 2.0 * s01[1] + s01[2]) / q as f64;

    if !(var > 0.0) {
        let delta = auc_a - auc_b;
        let (statistic, p_value) = if delta == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY * delta.signum(), 0.0)
        };
        return Ok(ComparisonResult {
            test_name: "delong".into(),
            statistic,
            p_value,
            auc_a,
            auc_b,
            degenerate: true,
        });
    }
    let z = (auc_a - auc_b) / var.sqrt();
    Ok(ComparisonResult {
        test_name: "delong".into(),
        statistic: z,
        p_value: erfc(z.abs() / std::f64::consts::SQRT_2),
        auc_a,
        auc_b,
        degenerate: false,
    })
}

/// DeLong variance of the AUC difference, exposed for oracle comparison.
pub fn delong_variance(scores_a: &[f64], scores_b: &[f64], labels: &[u8]) -> f64 {
    let m = labels.iter().filter(|&&y| y == 1).count() as f64;
    let q = labels.len() as f64 - m;
    let (_, v10_a, v01_a) = delong_placements(scores_a, labels);
    let (_, v10_b, v01_b) = delong_placements(scores_b, labels);
    (sample_cov(&v10_a, &v10_a) - 2.0 * sample_cov(&v10_a, &v10_b) + sample_cov(&v10_b, &v10_b))
        / m
        + (sample_cov(&v01_a, &v01_a) - 2.0 * sample_cov(&v01_a, &v01_b)
            + sample_cov(&v01_b, &v01_b))
            / q
}

/// Mean, sample standard deviation, and the count of folds where the metric
/// was defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub n_defined: usize,
}

fn summarize(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(MetricSummary {
        mean,
        std,
        n_defined: n,
    })
}

/// Per-metric aggregation over folds. Undefined fold entries are excluded;
/// `n_defined` records how many folds contributed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSummary {
    pub acc: Option<MetricSummary>,
    pub ppv: Option<MetricSummary>,
    pub npv: Option<MetricSummary>,
    pub sen: Option<MetricSummary>,
    pub spe: Option<MetricSummary>,
    pub f1: Option<MetricSummary>,
    pub auc: Option<MetricSummary>,
}

pub fn aggregate_folds(reports: &[EvalReport]) -> FoldSummary {
    let collect = |f: &dyn Fn(&EvalReport) -> Option<f64>| -> Vec<f64> {
        reports.iter().filter_map(f).collect()
    };
    FoldSummary {
        acc: summarize(&collect(&|r| r.acc)),
        ppv: summarize(&collect(&|r| r.ppv)),
        npv: summarize(&collect(&|r| r.npv)),
        sen: summarize(&collect(&|r| r.sen)),
        spe: summarize(&collect(&|r| r.spe)),
        f1: summarize(&collect(&|r| r.f1)),
        auc: summarize(&collect(&|r| Some(r.auc))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn confusion_trivial_case() {
        let c = confusion(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                true_pos: 1,
                false_pos: 0,
                true_neg: 1,
                false_neg: 0
            }
        );
    }

    #[test]
    fn confusion_threshold_tie_predicts_positive() {
        let c = confusion(&[0.5], &[0], 0.5).unwrap();
        assert_eq!(c.false_pos, 1);
    }

    #[test]
    fn confusion_matches_naive_recount() {
        let mut rng = Rng::from_seed(40);
        let scores: Vec<f64> = (0..50).map(|_| rng.uniform(0.0, 1.0)).collect();
        let labels: Vec<u8> = (0..50).map(|_| rng.index(2) as u8).collect();
        let c = confusion(&scores, &labels, 0.5).unwrap();
        let mut want = [0usize; 4];
        for (s, &y) in scores.iter().zip(&labels) {
            match (*s >= 0.5, y == 1) {
                (true, true) => want[0] += 1,
                (true, false) => want[1] += 1,
                (false, false) => want[2] += 1,
                (false, true) => want[3] += 1,
            }
        }
        assert_eq!(
            [c.true_pos, c.false_pos, c.true_neg, c.false_neg],
            want
        );
    }

    #[test]
    fn metrics_all_perfect() {
        let c = ConfusionCounts {
            true_pos: 1,
            false_pos: 0,
            true_neg: 1,
            false_neg: 0,
        };
        let m = metrics(&c).unwrap();
        for v in [m.acc, m.ppv, m.npv, m.sen, m.spe, m.f1] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn metrics_undefined_when_denominator_zero() {
        let c = ConfusionCounts {
            true_pos: 0,
            false_pos: 0,
            true_neg: 3,
            false_neg: 2,
        };
        let m = metrics(&c).unwrap();
        assert_eq!(m.ppv, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.spe, Some(1.0));
    }

    #[test]
    fn metrics_hand_case() {
        let c = ConfusionCounts {
            true_pos: 8,
            false_neg: 2,
            true_neg: 6,
            false_pos: 4,
        };
        let m = metrics(&c).unwrap();
        assert!((m.acc.unwrap() - 0.7).abs() < 1e-15);
        assert!((m.sen.unwrap() - 0.8).abs() < 1e-15);
        assert!((m.spe.unwrap() - 0.6).abs() < 1e-15);
        assert!((m.ppv.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1.unwrap() - 0.7272727272727273).abs() < 1e-12);
    }

    #[test]
    fn acc_identity_holds_for_all_counts() {
        // ACC == (SEN·P + SPE·N)/(P+N)
        let mut rng = Rng::from_seed(41);
        for _ in 0..500 {
            let c = ConfusionCounts {
                true_pos: rng.index(20) + 1,
                false_neg: rng.index(20),
                true_neg: rng.index(20) + 1,
                false_pos: rng.index(20),
            };
            let m = metrics(&c).unwrap();
            let p = (c.true_pos + c.false_neg) as f64;
            let n = (c.true_neg + c.false_pos) as f64;
            let lhs = m.acc.unwrap();
            let rhs = (m.sen.unwrap() * p + m.spe.unwrap() * n) / (p + n);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_identity_holds_whenever_defined() {
        let mut rng = Rng::from_seed(42);
        for _ in 0..500 {
            let c = ConfusionCounts {
                true_pos: rng.index(20),
                false_neg: rng.index(20),
                true_neg: rng.index(20) + 1,
                false_pos: rng.index(20),
            };
            let m = metrics(&c).unwrap();
            if let (Some(f1), Some(ppv), Some(sen)) = (m.f1, m.ppv, m.sen) {
                assert!((f1 - 2.0 * ppv * sen / (ppv + sen)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn roc_perfect_separation() {
        let (auc, points) = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(points.first().unwrap().fpr, 0.0);
        assert_eq!(points.last().unwrap().tpr, 1.0);
        assert_eq!(points.last().unwrap().fpr, 1.0);
    }

    #[test]
    fn roc_all_ties_is_half() {
        let (auc, points) = roc_auc(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap();
        assert_eq!(auc, 0.5);
        // (0,0) plus one point for the single distinct score
        assert_eq!(points.len(), 2);
    }

    #[test]
    fn roc_single_class_rejected() {
        assert!(matches!(
            roc_auc(&[0.1, 0.9], &[1, 1]),
            Err(EvalError::SingleClass)
        ));
    }

    /// O(n²) Mann-Whitney oracle in half-win units.
    fn pair_counting_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut half_wins: u64 = 0;
        let mut pairs: u64 = 0;
        for (i, &yi) in labels.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                pairs += 1;
                if scores[i] > scores[j] {
                    half_wins += 2;
                } else if scores[i] == scores[j] {
                    half_wins += 1;
                }
            }
        }
        half_wins as f64 / (2 * pairs) as f64
    }

    #[test]
    fn roc_matches_pair_counting_oracle_exactly() {
        let mut rng = Rng::from_seed(43);
        for trial in 0..300 {
            let n = 2 + rng.index(60);
            // quantized scores force plenty of ties
            let scores: Vec<f64> =
                (0..n).map(|_| (rng.uniform(0.0, 1.0) * 8.0).round() / 8.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.index(2) as u8).collect();
            labels[0] = 1;
            if n > 1 {
                labels[1] = 0;
            }
            let (auc, _) = roc_auc(&scores, &labels).unwrap();
            let want = pair_counting_auc(&scores, &labels);
            assert_eq!(auc.to_bits(), want.to_bits(), "trial {trial}");
        }
    }

    #[test]
    fn roc_invariant_under_monotone_transforms() {
        let mut rng = Rng::from_seed(44);
        for _ in 0..200 {
            let n = 4 + rng.index(40);
            let scores: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.index(2) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let (base, _) = roc_auc(&scores, &labels).unwrap();
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 11.0).collect();
            assert_eq!(base, roc_auc(&exp, &labels).unwrap().0);
            assert_eq!(base, roc_auc(&affine, &labels).unwrap().0);
        }
    }

    #[test]
    fn trapezoid_over_roc_points_matches_auc() {
        let mut rng = Rng::from_seed(45);
        let scores: Vec<f64> = (0..60).map(|_| (rng.uniform(0.0, 1.0) * 10.0).round() / 10.0).collect();
        let mut labels: Vec<u8> = (0..60).map(|_| rng.index(2) as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        let (auc, points) = roc_auc(&scores, &labels).unwrap();
        let mut area = 0.0;
        for w in points.windows(2) {
            area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
        }
        assert!((area - auc).abs() < 1e-12);
    }

    #[test]
    fn t_test_identical_vectors_degenerate() {
        let a = [0.7, 0.72, 0.69, 0.71, 0.7];
        let r = paired_t_test(&a, &a).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn t_test_constant_nonzero_difference_degenerate() {
        let a = [0.8, 0.8, 0.8, 0.8, 0.8];
        let b = [0.7, 0.7, 0.7, 0.7, 0.7];
        let r = paired_t_test(&a, &b).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn t_test_matches_reference_case() {
        // d = [0.02, -0.01, 0.03, 0.00, 0.01]: t = sqrt(2), p = 0.230200
        let b = [0.0; 5];
        let a = [0.02, -0.01, 0.03, 0.00, 0.01];
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.statistic - 1.414213562373095).abs() < 1e-12);
        assert!((r.p_value - 0.23019964108049898).abs() < 1e-10);
    }

    #[test]
    fn delong_identical_scores_p_one() {
        let scores = [0.8, 0.3, 0.6, 0.2, 0.9, 0.1];
        let labels = [1, 0, 1, 0, 1, 0];
        let r = delong_test(&scores, &scores, &labels).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn delong_auc_equals_mann_whitney() {
        let mut rng = Rng::from_seed(46);
        for _ in 0..100 {
            let n = 6 + rng.index(30);
            let scores: Vec<f64> = (0..n).map(|_| (rng.uniform(0.0, 1.0) * 6.0).round() / 6.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.index(2) as u8).collect();
            labels[0] = 1;
            labels[1] = 0;
            let other: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
            let r = delong_test(&scores, &other, &labels).unwrap();
            let (auc, _) = roc_auc(&scores, &labels).unwrap();
            assert!((r.auc_a - auc).abs() < 1e-12);
        }
    }

    /// Direct double-loop structural components, the brute-force oracle.
    pub(crate) fn delong_brute_force(
        scores_a: &[f64],
        scores_b: &[f64],
        labels: &[u8],
    ) -> (f64, f64, f64) {
        let psi = |x: f64, y: f64| {
            if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            }
        };
        let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        let (m, q) = (pos.len(), neg.len());
        let mut components = Vec::new();
        let mut aucs = Vec::new();
        for scores in [scores_a, scores_b] {
            let v10: Vec<f64> = pos
                .iter()
                .map(|&i| neg.iter().map(|&j| psi(scores[i], scores[j])).sum::<f64>() / q as f64)
                .collect();
            let v01: Vec<f64> = neg
                .iter()
                .map(|&j| pos.iter().map(|&i| psi(scores[i], scores[j])).sum::<f64>() / m as f64)
                .collect();
            aucs.push(v10.iter().sum::<f64>() / m as f64);
            components.push((v10, v01));
        }
        let var = (sample_cov(&components[0].0, &components[0].0)
            - 2.0 * sample_cov(&components[0].0, &components[1].0)
            + sample_cov(&components[1].0, &components[1].0))
            / m as f64
            + (sample_cov(&components[0].1, &components[0].1)
                - 2.0 * sample_cov(&components[0].1, &components[1].1)
                + sample_cov(&components[1].1, &components[1].1))
                / q as f64;
        (aucs[0], aucs[1], var)
    }

    #[test]
    fn delong_variance_matches_brute_force() {
        let mut rng = Rng::from_seed(47);
        for trial in 0..100 {
            let n = 8 + rng.index(40);
            let a: Vec<f64> = (0..n).map(|_| (rng.uniform(0.0, 1.0) * 12.0).round() / 12.0).collect();
            let b: Vec<f64> = (0..n).map(|_| (rng.uniform(0.0, 1.0) * 12.0).round() / 12.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.index(2) as u8).collect();
            labels[0] = 1;
            labels[1] = 1;
            labels[2] = 0;
            labels[3] = 0;
            let (auc_a, auc_b, var) = delong_brute_force(&a, &b, &labels);
            let fast = delong_variance(&a, &b, &labels);
            assert!((fast - var).abs() < 1e-12, "trial {trial}: {fast} vs {var}");
            let r = delong_test(&a, &b, &labels).unwrap();
            assert!((r.auc_a - auc_a).abs() < 1e-12);
            assert!((r.auc_b - auc_b).abs() < 1e-12);
        }
    }

    #[test]
    fn delong_matches_precomputed_reference() {
        // frozen from an independent high-precision computation
        let labels: Vec<u8> = vec![1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let a = [
            0.6251, 0.8972, 0.7757, 0.2252, 0.3002, 0.8736, 0.0053, 0.8212, 0.7971, 0.4679,
            0.303, 0.2784, 0.2549, 0.4451, 0.5045, 0.5535, 0.9955, 0.7927, 0.6222, 0.989,
        ];
        let b = [
            0.3488, 0.8619, 0.5856, 0.2659, 0.3237, 0.8456, 0.0, 0.7404, 0.7898, 0.4849,
            0.0735, 0.2067, 0.1081, 0.3238, 0.6636, 0.4324, 0.9906, 0.9254, 0.5347, 0.9722,
        ];
        let r = delong_test(&a, &b, &labels).unwrap();
        assert!((r.auc_a - 0.5).abs() < 1e-12);
        assert!((r.auc_b - 0.44791666666666663).abs() < 1e-12);
        assert!((delong_variance(&a, &b, &labels) - 0.00618066829004329).abs() < 1e-12);
        assert!((r.statistic - 0.6624926330368437).abs() < 1e-10);
        assert!((r.p_value - 0.5076555546147732).abs() < 1e-10);
    }

    fn report(acc: Option<f64>, auc: f64) -> EvalReport {
        EvalReport {
            acc,
            ppv: acc,
            npv: acc,
            sen: acc,
            spe: acc,
            f1: acc,
            auc,
            roc_points: vec![],
            n_pos: 1,
            n_neg: 1,
        }
    }

    #[test]
    fn aggregate_single_fold() {
        let s = aggregate_folds(&[report(Some(0.8), 0.9)]);
        let acc = s.acc.unwrap();
        assert_eq!(acc.mean, 0.8);
        assert_eq!(acc.std, 0.0);
        assert_eq!(acc.n_defined, 1);
    }

    #[test]
    fn aggregate_identical_folds_zero_std() {
        let s = aggregate_folds(&[report(Some(0.8), 0.9), report(Some(0.8), 0.9)]);
        assert_eq!(s.auc.unwrap().std, 0.0);
    }

    #[test]
    fn aggregate_hand_case_and_undefined_exclusion() {
        let s = aggregate_folds(&[
            report(Some(0.6), 0.7),
            report(None, 0.8),
            report(Some(0.9), 0.9),
        ]);
        let acc = s.acc.unwrap();
        assert_eq!(acc.n_defined, 2);
        assert!((acc.mean - 0.75).abs() < 1e-12);
        // sample std of {0.6, 0.9}
        assert!((acc.std - 0.21213203435596426).abs() < 1e-12);
        let auc = s.auc.unwrap();
        assert_eq!(auc.n_defined, 3);
        assert!((auc.mean - 0.8).abs() < 1e-12);
        assert!((auc.std - 0.1).abs() < 1e-12);
    }
}
