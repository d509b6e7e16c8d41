//! Pure pieces of a slot update: the subset draw and the acceptance
//! arithmetic, all in log space.

use rand::Rng;

use super::SamplerError;

pub fn subset_size(n: usize, omega: f64) -> Result<usize, SamplerError> {
    let size = (omega * n as f64).floor();
    if !(omega > 0.0 && omega < 1.0) || size < 1.0 || size > n as f64 - 1.0 {
        return Err(SamplerError::Subset { omega, n });
    }
    Ok(size as usize)
}

/// Uniform subset of `0..n` of size `⌊ωn⌋`, sorted.
pub fn draw_subset<R: Rng + ?Sized>(
    n: usize,
    omega: f64,
    rng: &mut R,
) -> Result<Vec<usize>, SamplerError> {
    let size = subset_size(n, omega)?;
    let mut s = rand::seq::index::sample(rng, n, size).into_vec();
    s.sort_unstable();
    Ok(s)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log α` for a single-try update: `min(Δ, 0)` with `Δ` the difference of
/// the candidate's and incumbent's partial Bayes terms.
pub fn single_try_log_acceptance(candidate: f64, incumbent: f64) -> f64 {
    let delta = candidate - incumbent;
    if delta.is_nan() {
        // both infinite in the same direction: the states are indistinguishable
        return 0.0;
    }
    delta.min(0.0)
}

/// `log α` for a multiple-try update.
///
/// `log_w[m] = log pbf_m + log q_m` for the candidates, `log_w0` and `log_q0`
/// for the incumbent, `chosen` the selected candidate.
pub fn multi_try_log_acceptance(
    log_w0: f64,
    log_q0: f64,
    log_w: &[f64],
    log_q: &[f64],
    chosen: usize,
) -> f64 {
    let numerator = log_q0 + log_sum_exp(log_w.iter().copied());
    let others = log_w
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != chosen)
        .map(|(_, w)| *w);
    let denominator = log_q[chosen] + log_sum_exp(std::iter::once(log_w0).chain(others));
    let ratio = numerator - denominator;
    if ratio.is_nan() {
        return 0.0;
    }
    ratio.min(0.0)
}

/// Index drawn with probability proportional to `exp(log_w)`, given a
/// uniform draw `u ∈ [0, 1)`.
pub fn sample_from_log_weights(log_w: &[f64], u: f64) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return ((u * log_w.len() as f64) as usize).min(log_w.len() - 1);
    }
    let weights: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = u * total;
    for (m, w) in weights.iter().enumerate() {
        if target < *w {
            return m;
        }
        target -= w;
    }
    // rounding left a sliver past the last bucket
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Greedy choice: `None` keeps the incumbent, `Some(m)` installs candidate
/// `m`. Ties go to the incumbent, then to the lowest index.
pub fn greedy_choice(log_w0: f64, log_w: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut best_w = log_w0;
    for (m, &w) in log_w.iter().enumerate() {
        if w > best_w {
            best = Some(m);
            best_w = w;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn subset_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(draw_subset(10, 0.5, &mut rng).unwrap().len(), 5);
        assert_eq!(draw_subset(3, 0.5, &mut rng).unwrap().len(), 1);
        let err = draw_subset(1, 0.5, &mut rng).unwrap_err().to_string();
        assert!(err.contains("0.5") && err.contains(" 1 "), "{err}");
        assert!(draw_subset(10, 0.99, &mut rng).is_ok());
        assert!(draw_subset(2, 0.3, &mut rng).is_err());
    }

    #[test]
    fn subset_inclusion_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = [0usize; 10];
        for _ in 0..10_000 {
            for i in draw_subset(10, 0.5, &mut rng).unwrap() {
                hits[i] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / 10_000.0 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn single_try_cases() {
        assert_eq!(single_try_log_acceptance(-3.0, -3.0), 0.0);
        assert_eq!(single_try_log_acceptance(0.0, 0.0), 0.0);
        assert_eq!(single_try_log_acceptance(-1.0, -4.0), 0.0);
        assert_eq!(single_try_log_acceptance(-4.0, -1.0), -3.0);
    }

    #[test]
    fn identical_candidates_always_accept() {
        let w = [-2.0, -2.0, -2.0];
        let q = [(1.0f64 / 3.0).ln(); 3];
        assert_eq!(multi_try_log_acceptance(-2.0, q[0], &w, &q, 1), 0.0);
    }

    #[test]
    fn sampling_from_weights() {
        let lw = [0.0, (3.0f64).ln()];
        assert_eq!(sample_from_log_weights(&lw, 0.2), 0);
        assert_eq!(sample_from_log_weights(&lw, 0.3), 1);
        assert_eq!(sample_from_log_weights(&[f64::NEG_INFINITY, 0.0], 0.0), 1);
        assert_eq!(sample_from_log_weights(&[-1e308, 1e308], 0.999), 1);
    }

    #[test]
    fn greedy_ties() {
        assert_eq!(greedy_choice(1.0, &[0.0, 1.0]), None);
        assert_eq!(greedy_choice(0.0, &[1.0, 1.0]), Some(0));
        assert_eq!(greedy_choice(0.0, &[-1.0, 2.0]), Some(1));
    }

    proptest! {
        #[test]
        fn acceptance_is_a_probability(
            w0 in -500.0f64..50.0,
            q0 in 1e-6f64..1.0,
            ws in prop::collection::vec((-500.0f64..50.0, 1e-6f64..1.0), 1..8),
            pick in 0usize..8,
        ) {
            let log_w: Vec<f64> = ws.iter().map(|(w, q)| w + q.ln()).collect();
            let log_q: Vec<f64> = ws.iter().map(|(_, q)| q.ln()).collect();
            let chosen = pick % ws.len();
            let a = multi_try_log_acceptance(w0 + q0.ln(), q0.ln(), &log_w, &log_q, chosen);
            prop_assert!(a <= 0.0 && !a.is_nan());
        }

        #[test]
        fn one_try_reduces_to_single(
            lpbf0 in -300.0f64..10.0,
            lpbf1 in -300.0f64..10.0,
            q0 in 1e-6f64..1.0,
            q1 in 1e-6f64..1.0,
        ) {
            let single = single_try_log_acceptance(lpbf1, lpbf0);
            let multi = multi_try_log_acceptance(
                lpbf0 + q0.ln(), q0.ln(), &[lpbf1 + q1.ln()], &[q1.ln()], 0,
            );
            prop_assert!((single.exp() - multi.exp()).abs() <= 1e-12);
        }
    }
}
