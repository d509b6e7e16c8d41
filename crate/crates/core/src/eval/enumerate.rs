//! Brute-force posterior over unordered concept supports drawn from a finite
//! pool, under a uniform prior over supports.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{log_marginal_rows, AnnotationMatrix, Coefficients, ModelConfig, ModelError};

/// Largest number of supports enumerated.
pub const ENUMERATION_BUDGET: u128 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnumerationError {
    #[error("{count} supports exceed the enumeration budget of {budget}")]
    Budget { count: u128, budget: u128 },
    #[error("cannot choose {k} concepts from a pool of {pool}")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("pool column {column} has {found} values for {expected} labels")]
    ColumnLength {
        column: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportProbability {
    /// Sorted pool indices.
    pub support: Vec<usize>,
    pub log_marginal: f64,
    pub probability: f64,
    /// MAP coefficients with columns in `support` order.
    pub theta: Coefficients,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnumeration {
    pub k: usize,
    pub log_normalizer: f64,
    /// Supports in lexicographic order.
    pub supports: Vec<SupportProbability>,
}

impl PosteriorEnumeration {
    pub fn probability_of(&self, support: &[usize]) -> f64 {
        let mut key = support.to_vec();
        key.sort_unstable();
        self.supports
            .binary_search_by(|s| s.support.cmp(&key))
            .map(|i| self.supports[i].probability)
            .unwrap_or(0.0)
    }

    pub fn as_map(&self) -> BTreeMap<Vec<usize>, f64> {
        self.supports
            .iter()
            .map(|s| (s.support.clone(), s.probability))
            .collect()
    }

    /// Probability of each pool concept being in the support.
    pub fn inclusion_probabilities(&self, pool: usize) -> Vec<f64> {
        let mut p = vec![0.0; pool];
        for s in &self.supports {
            for &j in &s.support {
                p[j] += s.probability;
            }
        }
        p
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Every sorted `k`-subset of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let Some(i) = (0..k).rev().find(|&i| current[i] < n - k + i) else {
            break;
        };
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
    out
}

/// `p(c | y, X) ∝ p(y | c, X)` over all `k`-subsets of the pool, using only
/// the labelled rows in `rows` (all rows when `None`). `columns[j]` holds
/// pool concept `j`'s values on every row.
pub fn enumerate_posterior(
    columns: &[Vec<f64>],
    k: usize,
    y: &[u8],
    cfg: &ModelConfig,
    rows: Option<&[usize]>,
) -> Result<PosteriorEnumeration, EnumerationError> {
    let pool = columns.len();
    if k == 0 || k > pool {
        return Err(EnumerationError::PoolTooSmall { pool, k });
    }
    let count = binomial(pool, k);
    if count > ENUMERATION_BUDGET {
        return Err(EnumerationError::Budget {
            count,
            budget: ENUMERATION_BUDGET,
        });
    }
    for (column, c) in columns.iter().enumerate() {
        if c.len() != y.len() {
            return Err(EnumerationError::ColumnLength {
                column,
                expected: y.len(),
                found: c.len(),
            });
        }
    }
    let all: Vec<usize> = (0..y.len()).collect();
    let rows = rows.unwrap_or(&all);
    let cfg = ModelConfig { k, ..cfg.clone() };

    let scored: Vec<(Vec<usize>, f64, Coefficients)> = k_subsets(pool, k)
        .into_par_iter()
        .map(|support| {
            let cols: Vec<&[f64]> = support.iter().map(|&j| columns[j].as_slice()).collect();
            let phi = AnnotationMatrix::from_unnamed_columns(&cols, cfg.include_intercept)?;
            let lm = log_marginal_rows(&phi, y, rows, &cfg)?;
            Ok((support, lm.value, lm.theta_map))
        })
        .collect::<Result<_, ModelError>>()?;

    let max = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = scored.iter().map(|s| (s.1 - max).exp()).sum();
    let log_normalizer = max + total.ln();
    Ok(PosteriorEnumeration {
        k,
        log_normalizer,
        supports: scored
            .into_iter()
            .map(|(support, lm, theta)| SupportProbability {
                support,
                log_marginal: lm,
                probability: (lm - log_normalizer).exp(),
                theta,
            })
            .collect(),
    })
}

/// Half the ℓ1 distance between two distributions over the same keys.
pub fn tv_distance<K: Ord + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut total = 0.0;
    for (key, pv) in p {
        total += (pv - q.get(key).copied().unwrap_or(0.0)).abs();
    }
    for (key, qv) in q {
        if !p.contains_key(key) {
            total += qv.abs();
        }
    }
    total / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_and_binomials() {
        assert_eq!(binomial(10, 2), 45);
        assert_eq!(binomial(30, 5), 142_506);
        assert_eq!(k_subsets(10, 2).len(), 45);
        assert_eq!(k_subsets(4, 2)[0], vec![0, 1]);
        assert_eq!(k_subsets(4, 2)[5], vec![2, 3]);
        assert_eq!(k_subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    fn toy() -> (Vec<Vec<f64>>, Vec<u8>) {
        let y: Vec<u8> = (0..12).map(|i| u8::from(i % 2 == 0)).collect();
        let cols = vec![
            (0..12).map(|i| f64::from(i % 2 == 0)).collect(),
            (0..12).map(|i| f64::from(i % 3 == 0)).collect(),
            (0..12).map(|i| f64::from(i % 3 == 0)).collect(),
            (0..12).map(|i| f64::from(i < 4)).collect(),
        ];
        (cols, y)
    }

    #[test]
    fn whole_pool_has_probability_one() {
        let (cols, y) = toy();
        let e = enumerate_posterior(&cols, 4, &y, &ModelConfig::new(1.0, 4).unwrap(), None).unwrap();
        assert_eq!(e.supports.len(), 1);
        assert_eq!(e.supports[0].probability, 1.0);
    }

    #[test]
    fn identical_columns_tie_and_total_is_one() {
        let (cols, y) = toy();
        let e = enumerate_posterior(&cols, 1, &y, &ModelConfig::new(1.0, 1).unwrap(), None).unwrap();
        assert_eq!(e.probability_of(&[1]), e.probability_of(&[2]));
        let total: f64 = e.supports.iter().map(|s| s.probability).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(e.probability_of(&[0]) > 0.5);
    }

    #[test]
    fn budget_is_enforced() {
        let cols = vec![vec![0.0; 2]; 30];
        let err = enumerate_posterior(&cols, 5, &[0, 1], &ModelConfig::new(1.0, 5).unwrap(), None);
        assert!(matches!(err, Err(EnumerationError::Budget { count: 142_506, .. })));
    }

    #[test]
    fn tv_examples() {
        let p: BTreeMap<u8, f64> = [(0, 0.5), (1, 0.5)].into();
        let q: BTreeMap<u8, f64> = [(1, 0.5), (2, 0.5)].into();
        assert!((tv_distance(&p, &q) - 0.5).abs() < 1e-15);
        assert_eq!(tv_distance(&p, &p), 0.0);
    }
}
