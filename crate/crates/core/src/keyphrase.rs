//! Bag-of-keyphrases design and the ridge keyphrase model.
//!
//! The keyphrase model regresses the label on the current concepts (almost
//! unpenalized) plus binary keyphrase indicators (ridge-penalized), with the
//! penalty picked by k-fold cross-validation. Its largest keyphrase
//! coefficients summarize the signal the concepts miss and are what the oracle
//! sees when proposing a replacement concept.
//!
//! Multiclass labels use the reference-class parameterization (class 0 is the
//! baseline), so a two-class fit is exactly the binary logistic fit.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::log1pexp;
use crate::optim::{self, NewtonFailure, NewtonOptions, SmoothObjective};
use crate::oracle::KeyphraseBag;

/// Ridge applied to concept and intercept coefficients for conditioning only.
pub const CONCEPT_RIDGE: f64 = 1e-6;

/// Coefficients smaller than this are treated as zero in summaries.
const NEGLIGIBLE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KeyphraseError {
    #[error("no keyphrase appears in at least {min_df} documents")]
    EmptyVocabulary { min_df: usize },
    #[error("need at least 2 folds and no more folds than rows (folds = {folds}, rows = {rows})")]
    InvalidFolds { folds: usize, rows: usize },
    #[error("lambda grid must be non-empty with positive finite entries")]
    InvalidGrid,
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("class label {label} at row {row} is not below the class count {classes}")]
    InvalidClass {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("keyphrase model solver failed at lambda {lambda}: {reason}")]
    Solver { lambda: f64, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    phrases: Vec<String>,
    doc_freq: Vec<usize>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    fn from_counts(counts: BTreeMap<String, usize>) -> Self {
        let mut phrases = Vec::with_capacity(counts.len());
        let mut doc_freq = Vec::with_capacity(counts.len());
        let mut index = BTreeMap::new();
        for (j, (phrase, df)) in counts.into_iter().enumerate() {
            index.insert(phrase.clone(), j);
            phrases.push(phrase);
            doc_freq.push(df);
        }
        Vocabulary {
            phrases,
            doc_freq,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn index_of(&self, phrase: &str) -> Option<usize> {
        self.index.get(phrase).copied()
    }

    pub fn document_frequency(&self, column: usize) -> usize {
        self.doc_freq[column]
    }
}

/// Sparse binary presence matrix: for each row, the sorted columns set to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BowMatrix {
    row_ids: Vec<String>,
    rows: Vec<Vec<usize>>,
    ncols: usize,
}

impl BowMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Columns present in row `i`.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn column_sum(&self, j: usize) -> usize {
        self.rows.iter().filter(|r| r.binary_search(&j).is_ok()).count()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                m[(i, j)] = 1.0;
            }
        }
        m
    }
}

/// Vocabulary of phrases found in at least `min_df` bags, in lexicographic
/// order, and the matching presence matrix.
pub fn build_bow(
    bags: &[KeyphraseBag],
    min_df: usize,
) -> Result<(Vocabulary, BowMatrix), KeyphraseError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for bag in bags {
        for phrase in &bag.phrases {
            *counts.entry(phrase.clone()).or_default() += 1;
        }
    }
    counts.retain(|_, df| *df >= min_df);
    if counts.is_empty() {
        return Err(KeyphraseError::EmptyVocabulary { min_df });
    }
    let vocab = Vocabulary::from_counts(counts);
    let rows = bags
        .iter()
        .map(|bag| {
            // BTreeSet iteration is sorted and so are vocabulary indices
            bag.phrases
                .iter()
                .filter_map(|p| vocab.index_of(p))
                .collect()
        })
        .collect();
    let bow = BowMatrix {
        row_ids: bags.iter().map(|b| b.observation_id.clone()).collect(),
        rows,
        ncols: vocab.len(),
    };
    Ok((vocab, bow))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyphraseSettings {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub min_df: usize,
    pub top_n: usize,
    /// Seed for fold assignment.
    pub seed: u64,
}

/// `count` points log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

impl Default for KeyphraseSettings {
    fn default() -> Self {
        KeyphraseSettings {
            lambda_grid: log_grid(1e-3, 1e3, 10),
            folds: 5,
            min_df: 2,
            top_n: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyphraseModelFit {
    pub vocabulary: Vec<String>,
    pub n_classes: usize,
    /// Keyphrase coefficients, one vector per non-baseline class.
    pub beta_w: Vec<Vec<f64>>,
    /// Concept coefficients, one vector per non-baseline class.
    pub beta_c: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
    pub lambda: f64,
    /// Mean held-out log loss per grid entry.
    pub cv_scores: Vec<f64>,
}

/// Mean multinomial log loss plus ridge terms. Parameters are laid out per
/// non-baseline class as `[keyphrases | concepts | intercept]`.
struct SoftmaxRidge<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [usize],
    rows: &'a [usize],
    classes: usize,
    penalty: Vec<f64>,
}

impl SoftmaxRidge<'_> {
    fn width(&self) -> usize {
        self.x.ncols()
    }

    /// Linear predictors for the non-baseline classes.
    fn scores(&self, beta: &DVector<f64>, i: usize) -> Vec<f64> {
        let p = self.width();
        (0..self.classes - 1)
            .map(|r| {
                let block = beta.rows(r * p, p);
                self.x.row(i).iter().zip(block.iter()).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

fn log_sum_exp_with_zero(z: &[f64]) -> f64 {
    if z.len() == 1 {
        return log1pexp(z[0]);
    }
    let max = z.iter().copied().fold(0.0, f64::max);
    let total: f64 = (-max).exp() + z.iter().map(|v| (v - max).exp()).sum::<f64>();
    max + total.ln()
}

impl SmoothObjective for SoftmaxRidge<'_> {
    fn dim(&self) -> usize {
        self.width() * (self.classes - 1)
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        let mut loss = 0.0;
        for &i in self.rows {
            let z = self.scores(beta, i);
            let picked = if self.y[i] == 0 { 0.0 } else { z[self.y[i] - 1] };
            loss += log_sum_exp_with_zero(&z) - picked;
        }
        let n = self.rows.len().max(1) as f64;
        let ridge: f64 = beta
            .iter()
            .zip(self.penalty.iter().cycle())
            .map(|(b, l)| l * b * b)
            .sum();
        loss / n + ridge
    }

    fn derivatives(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.width();
        let c = self.classes - 1;
        let d = p * c;
        let n = self.rows.len().max(1) as f64;
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for &i in self.rows {
            let z = self.scores(beta, i);
            let lse = log_sum_exp_with_zero(&z);
            let prob: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
            let xi = self.x.row(i);
            for r in 0..c {
                let resid = prob[r] - f64::from(u8::from(self.y[i] == r + 1));
                for a in 0..p {
                    g[r * p + a] += resid * xi[a];
                }
                for s in 0..=r {
                    let w = if r == s { prob[r] * (1.0 - prob[r]) } else { -prob[r] * prob[s] };
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..p {
                        let wa = w * xi[a];
                        if wa == 0.0 {
                            continue;
                        }
                        for b in 0..p {
                            h[(r * p + a, s * p + b)] += wa * xi[b];
                        }
                    }
                }
            }
        }
        g /= n;
        h /= n;
        for a in 0..d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        for (j, l) in (0..d).zip(self.penalty.iter().cycle()) {
            g[j] += 2.0 * l * beta[j];
            h[(j, j)] += 2.0 * l;
        }
        (g, h)
    }
}

const SOLVER: NewtonOptions = NewtonOptions {
    max_iterations: 200,
    gradient_tolerance: 1e-9,
};

fn design(bow: &BowMatrix, concepts: &[Vec<f64>]) -> DMatrix<f64> {
    let v = bow.ncols();
    let kc = concepts.len();
    let mut x = DMatrix::zeros(bow.nrows(), v + kc + 1);
    for i in 0..bow.nrows() {
        for &j in bow.row(i) {
            x[(i, j)] = 1.0;
        }
        for (k, col) in concepts.iter().enumerate() {
            x[(i, v + k)] = col[i];
        }
        x[(i, v + kc)] = 1.0;
    }
    x
}

fn penalty(v: usize, kc: usize, lambda: f64) -> Vec<f64> {
    let mut pen = vec![lambda; v];
    pen.extend(std::iter::repeat_n(CONCEPT_RIDGE, kc + 1));
    pen
}

fn solve(
    x: &DMatrix<f64>,
    y: &[usize],
    rows: &[usize],
    classes: usize,
    pen: Vec<f64>,
    start: DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>, KeyphraseError> {
    let objective = SoftmaxRidge {
        x,
        y,
        rows,
        classes,
        penalty: pen,
    };
    match optim::minimize(&objective, start, &SOLVER) {
        Ok(out) => Ok(out.x),
        Err(NewtonFailure::NotConverged { gradient_norm, .. }) => Err(KeyphraseError::Solver {
            lambda,
            reason: format!("no convergence, gradient norm {gradient_norm:e}"),
        }),
        Err(e) => Err(KeyphraseError::Solver {
            lambda,
            reason: format!("{e:?}"),
        }),
    }
}

fn held_out_loss(
    x: &DMatrix<f64>,
    y: &[usize],
    rows: &[usize],
    classes: usize,
    beta: &DVector<f64>,
) -> f64 {
    let objective = SoftmaxRidge {
        x,
        y,
        rows,
        classes,
        penalty: vec![0.0],
    };
    objective.value(beta)
}

/// Fold of each row, a function of the row id and seed only so that
/// reordering rows does not change the split.
fn fold_assignment(row_ids: &[String], folds: usize, seed: u64) -> Vec<usize> {
    let mut keyed: Vec<([u8; 32], usize)> = row_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(id.as_bytes());
            (h.finalize().into(), i)
        })
        .collect();
    keyed.sort();
    let mut fold = vec![0; row_ids.len()];
    for (rank, (_, i)) in keyed.into_iter().enumerate() {
        fold[i] = rank % folds;
    }
    fold
}

/// Binary keyphrase model. `concepts` holds one column per concept in
/// `c_{−k}`, each aligned with the rows of `bow`.
pub fn fit_keyphrase_model(
    bow: &BowMatrix,
    concepts: &[Vec<f64>],
    y: &[u8],
    settings: &KeyphraseSettings,
) -> Result<KeyphraseModelFit, KeyphraseError> {
    let classes: Vec<usize> = y.iter().map(|&v| usize::from(v)).collect();
    fit_multinomial(bow, concepts, &classes, 2, settings)
}

/// Multinomial keyphrase model over `n_classes` classes.
pub fn fit_multinomial(
    bow: &BowMatrix,
    concepts: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    settings: &KeyphraseSettings,
) -> Result<KeyphraseModelFit, KeyphraseError> {
    let n = bow.nrows();
    if y.len() != n {
        return Err(KeyphraseError::DimensionMismatch {
            what: "labels vs keyphrase rows",
            expected: n,
            found: y.len(),
        });
    }
    if let Some(col) = concepts.iter().find(|c| c.len() != n) {
        return Err(KeyphraseError::DimensionMismatch {
            what: "concept column vs keyphrase rows",
            expected: n,
            found: col.len(),
        });
    }
    if let Some((row, &label)) = y.iter().enumerate().find(|(_, l)| **l >= n_classes) {
        return Err(KeyphraseError::InvalidClass {
            row,
            label,
            classes: n_classes,
        });
    }
    if n_classes < 2 {
        return Err(KeyphraseError::InvalidClass {
            row: 0,
            label: 0,
            classes: n_classes,
        });
    }
    if settings.folds < 2 || settings.folds > n {
        return Err(KeyphraseError::InvalidFolds {
            folds: settings.folds,
            rows: n,
        });
    }
    if settings.lambda_grid.is_empty()
        || settings.lambda_grid.iter().any(|l| !l.is_finite() || *l <= 0.0)
    {
        return Err(KeyphraseError::InvalidGrid);
    }

    let x = design(bow, concepts);
    let v = bow.ncols();
    let kc = concepts.len();
    let width = x.ncols();
    let dim = width * (n_classes - 1);
    let fold = fold_assignment(bow.row_ids(), settings.folds, settings.seed);

    // Solve each fold along the grid from the largest penalty down, starting
    // every solve from the previous solution.
    let mut order: Vec<usize> = (0..settings.lambda_grid.len()).collect();
    order.sort_by(|&a, &b| settings.lambda_grid[b].total_cmp(&settings.lambda_grid[a]));
    let per_fold: Vec<Vec<f64>> = (0..settings.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let mut losses = vec![0.0; settings.lambda_grid.len()];
            let mut start = DVector::zeros(dim);
            for &g in &order {
                let lambda = settings.lambda_grid[g];
                let beta = solve(&x, y, &train, n_classes, penalty(v, kc, lambda), start, lambda)?;
                losses[g] = held_out_loss(&x, y, &test, n_classes, &beta);
                start = beta;
            }
            Ok(losses)
        })
        .collect::<Result<_, KeyphraseError>>()?;

    let cv_scores: Vec<f64> = (0..settings.lambda_grid.len())
        .map(|g| per_fold.iter().map(|l| l[g]).sum::<f64>() / settings.folds as f64)
        .collect();
    let mut best = 0;
    for (g, score) in cv_scores.iter().enumerate() {
        if *score < cv_scores[best] {
            best = g;
        }
    }
    let lambda = settings.lambda_grid[best];
    let all: Vec<usize> = (0..n).collect();
    let beta = solve(&x, y, &all, n_classes, penalty(v, kc, lambda), DVector::zeros(dim), lambda)?;

    let block = |r: usize, from: usize, to: usize| -> Vec<f64> {
        (from..to).map(|j| beta[r * width + j]).collect()
    };
    Ok(KeyphraseModelFit {
        vocabulary: Vec::new(),
        n_classes,
        beta_w: (0..n_classes - 1).map(|r| block(r, 0, v)).collect(),
        beta_c: (0..n_classes - 1).map(|r| block(r, v, v + kc)).collect(),
        intercept: (0..n_classes - 1).map(|r| beta[r * width + v + kc]).collect(),
        lambda,
        cv_scores,
    })
}

/// Attach phrase names to a fit.
pub fn with_vocabulary(mut fit: KeyphraseModelFit, vocab: &Vocabulary) -> KeyphraseModelFit {
    fit.vocabulary = vocab.phrases().to_vec();
    fit
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub phrase: String,
    pub coefficient: f64,
    /// Class the coefficient belongs to (1 for binary labels).
    pub class: usize,
}

/// Keyphrases ranked by absolute coefficient, descending.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyphraseSummary {
    entries: Vec<SummaryEntry>,
}

fn rank(a: &SummaryEntry, b: &SummaryEntry) -> std::cmp::Ordering {
    b.coefficient
        .abs()
        .total_cmp(&a.coefficient.abs())
        .then_with(|| a.phrase.cmp(&b.phrase))
        .then(a.class.cmp(&b.class))
}

impl KeyphraseSummary {
    /// Sorts the entries into summary order.
    pub fn new(mut entries: Vec<SummaryEntry>) -> Self {
        entries.sort_by(rank);
        KeyphraseSummary { entries }
    }

    pub fn entries(&self) -> &[SummaryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct phrases in summary order.
    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .map(|e| e.phrase.as_str())
            .filter(move |p| seen.insert(*p))
    }

    /// One line per entry, for the proposal prompt.
    pub fn render(&self) -> String {
        if self.entries.is_empty() {
            return "(no residual signal)".to_string();
        }
        let multiclass = self.entries.iter().any(|e| e.class != 1);
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let class = if multiclass { format!(" [class {}]", e.class) } else { String::new() };
                format!("{}. {} ({:+.3}){class}", i + 1, e.phrase, e.coefficient)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn summarize_top_keyphrases(fit: &KeyphraseModelFit, top_n: usize) -> KeyphraseSummary {
    let mut entries = Vec::new();
    for (r, betas) in fit.beta_w.iter().enumerate() {
        for (j, &b) in betas.iter().enumerate() {
            if b.abs() > NEGLIGIBLE {
                let phrase = fit
                    .vocabulary
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| format!("#{j}"));
                entries.push(SummaryEntry {
                    phrase,
                    coefficient: b,
                    class: r + 1,
                });
            }
        }
    }
    let mut summary = KeyphraseSummary::new(entries);
    summary.entries.truncate(top_n);
    summary
}

/// Step 1 end to end: vocabulary from `bags`, fit with the given concept
/// columns, ranked summary. A subset with no phrase reaching `min_df` yields
/// an empty summary.
pub fn summarize_subset(
    bags: &[KeyphraseBag],
    concepts: &[Vec<f64>],
    y: &[u8],
    settings: &KeyphraseSettings,
) -> Result<(KeyphraseSummary, Option<KeyphraseModelFit>), KeyphraseError> {
    let (vocab, bow) = match build_bow(bags, settings.min_df) {
        Ok(v) => v,
        Err(KeyphraseError::EmptyVocabulary { .. }) => return Ok((KeyphraseSummary::default(), None)),
        Err(e) => return Err(e),
    };
    let folds = settings.folds.min(bow.nrows());
    let settings = KeyphraseSettings {
        folds,
        ..settings.clone()
    };
    let fit = with_vocabulary(fit_keyphrase_model(&bow, concepts, y, &settings)?, &vocab);
    Ok((summarize_top_keyphrases(&fit, settings.top_n), Some(fit)))
}
