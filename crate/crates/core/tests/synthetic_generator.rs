use ccbm_core::eval::{generate_synthetic, SyntheticFeature, SyntheticSpec};

fn feature(j: usize, prevalence: f64) -> SyntheticFeature {
    SyntheticFeature {
        name: format!("feature {j}"),
        question: format!("Does the note mention feature {j}?"),
        prevalence,
    }
}

/// Empirical log-odds in each cell of the two true features against the
/// generating model.
#[test]
fn cell_log_odds_follow_the_generating_model() {
    let spec = SyntheticSpec {
        n: 50_000,
        pool: vec![feature(0, 0.5), feature(1, 0.4), feature(2, 0.3)],
        true_support: vec![0, 1],
        coefficients: vec![1.2, -0.8],
        intercept: 0.3,
        feature_correlation: None,
        seed: 17,
        id_prefix: "obs".into(),
    };
    let data = generate_synthetic(&spec).unwrap();
    let labels = data.labels();
    let mut counts = [[0usize; 2]; 4];
    for (row, &y) in data.features.iter().zip(&labels) {
        counts[usize::from(row[0]) * 2 + usize::from(row[1])][usize::from(y)] += 1;
    }
    for (cell, [neg, pos]) in counts.iter().enumerate() {
        let (a, b) = ((cell / 2) as f64, (cell % 2) as f64);
        let expected = 0.3 + 1.2 * a - 0.8 * b;
        let observed = (*pos as f64 / *neg as f64).ln();
        assert!((observed - expected).abs() <= 0.15, "cell {cell}: {observed} vs {expected}");
    }
    let decoy = data.column(2).iter().sum::<f64>() / 50_000.0;
    assert!((decoy - 0.3).abs() < 0.01);
}
