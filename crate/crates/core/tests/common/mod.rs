//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ccbm_core::concept::{ConceptId, ConceptSet};
use ccbm_core::eval::{generate_synthetic, PosteriorEnumeration, SyntheticData, SyntheticFeature, SyntheticSpec};
use ccbm_core::Concept;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_normal(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `log ∫ p(y | θ) N(θ; 0, γ²I) dθ` for one concept column plus intercept,
/// by the trapezoid rule on a `nodes × nodes` grid over `[−8, 8]²`.
pub fn quadrature_log_marginal(x: &[f64], y: &[u8], gamma: f64, nodes: usize) -> f64 {
    let lo = -8.0;
    let h = 16.0 / (nodes - 1) as f64;
    let mut terms = Vec::with_capacity(nodes * nodes);
    for a in 0..nodes {
        let t1 = lo + a as f64 * h;
        let wa = if a == 0 || a == nodes - 1 { 0.5 } else { 1.0 };
        for b in 0..nodes {
            let t0 = lo + b as f64 * h;
            let wb = if b == 0 || b == nodes - 1 { 0.5 } else { 1.0 };
            let mut ll = 0.0;
            for (xi, yi) in x.iter().zip(y) {
                let z = t1 * xi + t0;
                ll += f64::from(*yi) * z - log1pexp(z);
            }
            terms.push(ll + log_normal(t1, gamma) + log_normal(t0, gamma) + (wa * wb * h * h).ln());
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// The regularized objective `Σ[−yz + log(1+eᶻ)] + ‖θ‖²/2γ²` on a design
/// whose rows already include the intercept entry.
pub fn ridge_objective(rows: &[Vec<f64>], y: &[u8], gamma: f64, theta: &[f64]) -> (f64, Vec<f64>) {
    let mut value = theta.iter().map(|t| t * t).sum::<f64>() / (2.0 * gamma * gamma);
    let mut grad: Vec<f64> = theta.iter().map(|t| t / (gamma * gamma)).collect();
    for (row, yi) in rows.iter().zip(y) {
        let z: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        value += -f64::from(*yi) * z + log1pexp(z);
        let p = 1.0 / (1.0 + (-z).exp());
        for (g, a) in grad.iter_mut().zip(row) {
            *g += (p - f64::from(*yi)) * a;
        }
    }
    (value, grad)
}

/// Plain gradient descent with a fixed step bounded by the objective's
/// smoothness constant.
pub fn gradient_descent(rows: &[Vec<f64>], y: &[u8], gamma: f64) -> Vec<f64> {
    let d = rows[0].len();
    let row_norm: f64 = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum();
    let step = 1.0 / (0.25 * row_norm + 1.0 / (gamma * gamma));
    let mut theta = vec![0.0; d];
    for _ in 0..200_000 {
        let (_, g) = ridge_objective(rows, y, gamma, &theta);
        if g.iter().all(|v| v.abs() < 1e-11) {
            break;
        }
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= step * gi;
        }
    }
    theta
}

/// A concept column in `[0, 1]` and labels loosely tied to it.
pub fn random_instance(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y = x
        .iter()
        .map(|xi| u8::from(rng.random::<f64>() < 0.2 + 0.6 * xi))
        .collect();
    (x, y)
}

/// A ten-feature pool with two true features.
pub fn pool_testbed(n: usize, seed: u64, coefficients: [f64; 2]) -> SyntheticData {
    let pool = (0..10)
        .map(|j| SyntheticFeature {
            name: format!("feature {j}"),
            question: format!("Does the note mention feature {j}?"),
            prevalence: 0.5,
        })
        .collect();
    let spec = SyntheticSpec {
        n,
        pool,
        true_support: vec![0, 1],
        coefficients: coefficients.to_vec(),
        intercept: 0.0,
        feature_correlation: None,
        seed,
        id_prefix: "obs".into(),
    };
    generate_synthetic(&spec).expect("valid testbed spec")
}

pub fn pool_concepts(data: &SyntheticData) -> Vec<Concept> {
    data.pool.concepts.iter().map(|c| Concept::new(c.question.clone())).collect()
}

pub fn pool_columns(data: &SyntheticData) -> Vec<Vec<f64>> {
    (0..data.pool.concepts.len()).map(|j| data.column(j)).collect()
}

/// Enumerated posterior keyed like [`ccbm_core::eval::support_frequencies`].
pub fn keyed_enumeration(
    enumeration: &PosteriorEnumeration,
    concepts: &[Concept],
) -> BTreeMap<Vec<ConceptId>, f64> {
    enumeration
        .supports
        .iter()
        .map(|s| {
            let mut ids: Vec<ConceptId> = s.support.iter().map(|&j| concepts[j].id().clone()).collect();
            ids.sort();
            (ids, s.probability)
        })
        .collect()
}

pub fn set_of(concepts: &[Concept], idx: &[usize]) -> ConceptSet {
    ConceptSet::new(idx.iter().map(|&j| concepts[j].clone()).collect()).expect("distinct")
}
