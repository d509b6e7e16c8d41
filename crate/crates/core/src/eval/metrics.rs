use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no predictions to score")]
    Empty,
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error("label {0} is not binary")]
    InvalidLabel(u8),
    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(&l) = labels.iter().find(|l| **l > 1) {
        return Err(MetricError::InvalidLabel(l));
    }
    Ok(())
}

/// Mann-Whitney AUC with midranks for ties.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based
        let midrank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            if labels[i] == 1 {
                rank_sum_pos += midrank;
            }
        }
        start = end + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

pub fn brier(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check(scores, labels)?;
    if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(MetricError::ScoreOutOfRange(s));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &l)| (s - f64::from(l)).powi(2))
        .sum();
    Ok(total / scores.len() as f64)
}

/// Fraction of predictions on the right side of 0.5 (0.5 itself counts as 1).
pub fn accuracy(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, &l)| u8::from(**s >= 0.5) == l)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Entropy in nats of a class-probability vector.
pub fn predictive_entropy(probs: &[f64]) -> Result<f64, MetricError> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(MetricError::NotNormalized(total));
    }
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(MetricError::ScoreOutOfRange(p));
    }
    Ok(-probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>())
}

/// Pearson correlation, or `None` when it is undefined (fewer than two
/// points, mismatched lengths or a constant column).
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub n: usize,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub brier: f64,
    pub accuracy: f64,
    /// Mean binary predictive entropy in nats.
    pub mean_entropy: f64,
}

pub fn evaluate_predictions(scores: &[f64], labels: &[u8]) -> Result<MetricBundle, MetricError> {
    let brier = brier(scores, labels)?;
    let auc = match auc(scores, labels) {
        Ok(v) => Some(v),
        Err(MetricError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let mut entropy = 0.0;
    for &p in scores {
        entropy += predictive_entropy(&[p, 1.0 - p])?;
    }
    Ok(MetricBundle {
        n: scores.len(),
        auc,
        brier,
        accuracy: accuracy(scores, labels)?,
        mean_entropy: entropy / scores.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts positive-over-negative wins pair by pair.
    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [0, 0, 1, 1];
        assert_eq!(auc(&s, &y).unwrap(), 0.75);
        assert_eq!(pairwise_auc(&s, &y), 0.75);
        assert_eq!(auc(&[0.1, 0.2], &[1, 1]), Err(MetricError::SingleClass));
    }

    #[test]
    fn brier_and_accuracy_examples() {
        assert_eq!(brier(&[0.0, 1.0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[0, 1, 1, 0]).unwrap(), 0.25);
        assert!((brier(&[0.2, 0.9], &[0, 1]).unwrap() - 0.025).abs() < 1e-17);
        assert_eq!(accuracy(&[0.2, 0.9, 0.6], &[0, 1, 0]).unwrap(), 2.0 / 3.0);
        assert!(brier(&[1.2], &[1]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(predictive_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((predictive_entropy(&[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((predictive_entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(predictive_entropy(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn pearson_edge_cases() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[0.0, 1.0, 0.0]), None);
        assert_eq!(pearson(&[1.0], &[1.0]), None);
        assert!((pearson(&[0.0, 1.0, 0.0, 1.0], &[1.0, 0.0, 1.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_and_is_monotone_invariant(
            data in prop::collection::vec((0u8..20, 0u8..2), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 20.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(a, auc(&warped, &labels).unwrap());
        }
    }
}
