//! Logistic CBM likelihood, Gaussian-prior MAP estimation and
//! Laplace-approximated marginal likelihoods.
//!
//! For a design `Φ` (concept values plus an intercept column) and a row set
//! `T`, the negative log joint is
//!
//! ```text
//! g_T(θ) = Σ_{i∈T} [log(1 + exp(θᵀΦ_i)) − y_i θᵀΦ_i] + ‖θ‖² / (2γ²)
//! ```
//!
//! and the Laplace marginal is
//!
//! ```text
//! log p(y_T | c, X) ≈ −g_T(θ̂) − (d/2) log γ² − ½ log det H_T(θ̂)
//! ```
//!
//! with `H_T(θ) = Σ σ(1−σ) Φ_i Φ_iᵀ + γ⁻² I`. The determinant term is computed
//! as `log det(γ² H_T)`, which is `log det(I + γ² Σ σ(1−σ) Φ_i Φ_iᵀ)` and cancels
//! the prior normalization without loss of precision for small γ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{self, NewtonFailure, NewtonOptions, SmoothObjective};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("annotation value {value} at row {row}, column {column} is outside [0, 1]")]
    AnnotationOutOfRange { row: usize, column: usize, value: f64 },
    #[error("label at index {index} is {value}, expected 0 or 1")]
    InvalidLabel { index: usize, value: u8 },
    #[error("subset index {index} out of range for {n} rows")]
    SubsetOutOfRange { index: usize, n: usize },
    #[error("subset index {0} appears more than once")]
    DuplicateSubsetIndex(usize),
    #[error("MAP estimation did not converge after {iterations} Newton iterations (gradient norm {gradient_norm:e})")]
    OptimizationFailed {
        iterations: usize,
        gradient_norm: f64,
        last: Coefficients,
    },
    #[error("Hessian factorization failed (eigenvalues in [{min_eigenvalue:e}, {max_eigenvalue:e}], condition {condition:e})")]
    Factorization {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        condition: f64,
    },
    #[error("posterior predictive needs at least one sample")]
    EmptyEnsemble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Prior standard deviation of every coefficient.
    pub gamma: f64,
    /// Number of concepts per set.
    pub k: usize,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
    #[serde(default)]
    pub solver: NewtonOptions,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn new(gamma: f64, k: usize) -> Result<Self, ModelError> {
        let cfg = ModelConfig {
            gamma,
            k,
            include_intercept: true,
            solver: NewtonOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if self.k == 0 {
            return Err(ModelError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fitted coefficients `(θ_1, …, θ_K, θ_0)`: the intercept, when present, is
/// the last entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients {
    pub theta: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(d: usize) -> Self {
        Coefficients { theta: vec![0.0; d] }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMarginal {
    /// Laplace-approximated log marginal likelihood in nats.
    pub value: f64,
    pub theta_map: Coefficients,
    /// `log det H_T(θ̂)`.
    pub log_det_hessian: f64,
}

/// Concept annotations as an `n × (K+1)` design, intercept column last.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationMatrix {
    values: DMatrix<f64>,
    row_ids: Vec<String>,
    include_intercept: bool,
}

impl AnnotationMatrix {
    /// Build from concept columns (one slice per concept, each of length
    /// `row_ids.len()`), checking every value lies in `[0, 1]`.
    pub fn from_columns(
        row_ids: Vec<String>,
        columns: &[&[f64]],
        include_intercept: bool,
    ) -> Result<Self, ModelError> {
        let n = row_ids.len();
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(ModelError::DimensionMismatch {
                    what: "annotation column length",
                    expected: n,
                    found: col.len(),
                });
            }
            if let Some((i, &v)) = col
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(ModelError::AnnotationOutOfRange {
                    row: i,
                    column: j,
                    value: v,
                });
            }
        }
        let d = columns.len() + usize::from(include_intercept);
        let values = DMatrix::from_fn(n, d, |i, j| {
            if j < columns.len() {
                columns[j][i]
            } else {
                1.0
            }
        });
        Ok(AnnotationMatrix {
            values,
            row_ids,
            include_intercept,
        })
    }

    /// Same as [`from_columns`](Self::from_columns) with generated row ids.
    pub fn from_unnamed_columns(
        columns: &[&[f64]],
        include_intercept: bool,
    ) -> Result<Self, ModelError> {
        let n = columns.first().map_or(0, |c| c.len());
        Self::from_columns((0..n).map(|i| i.to_string()).collect(), columns, include_intercept)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Dimension `d` of the coefficient vector.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_concepts(&self) -> usize {
        self.values.ncols() - usize::from(self.include_intercept)
    }

    pub fn include_intercept(&self) -> bool {
        self.include_intercept
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }
}

/// Append the intercept entry to a row of concept values.
pub fn design_row(concept_values: &[f64], include_intercept: bool) -> Vec<f64> {
    let mut row = concept_values.to_vec();
    if include_intercept {
        row.push(1.0);
    }
    row
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid_predict(theta: &Coefficients, phi_row: &[f64]) -> Result<f64, ModelError> {
    if theta.len() != phi_row.len() {
        return Err(ModelError::DimensionMismatch {
            what: "coefficients vs design row",
            expected: theta.len(),
            found: phi_row.len(),
        });
    }
    let z: f64 = theta.theta.iter().zip(phi_row).map(|(t, x)| t * x).sum();
    Ok(sigmoid(z))
}

/// Ridge-penalized logistic negative log joint restricted to `rows`.
struct RidgeLogistic<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [u8],
    rows: &'a [usize],
    precision: f64,
}

impl RidgeLogistic<'_> {
    fn linear(&self, theta: &DVector<f64>, i: usize) -> f64 {
        let mut z = 0.0;
        for j in 0..self.x.ncols() {
            z += self.x[(i, j)] * theta[j];
        }
        z
    }

    fn data_hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let d = self.x.ncols();
        let mut h = DMatrix::zeros(d, d);
        for &i in self.rows {
            let p = sigmoid(self.linear(theta, i));
            let w = p * (1.0 - p);
            for a in 0..d {
                let xa = w * self.x[(i, a)];
                for b in 0..=a {
                    h[(a, b)] += xa * self.x[(i, b)];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        h
    }
}

impl SmoothObjective for RidgeLogistic<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for &i in self.rows {
            let z = self.linear(theta, i);
            total += log1pexp(z) - f64::from(self.y[i]) * z;
        }
        total + 0.5 * self.precision * theta.norm_squared()
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.x.ncols();
        let mut g = theta * self.precision;
        for &i in self.rows {
            let r = sigmoid(self.linear(theta, i)) - f64::from(self.y[i]);
            for j in 0..d {
                g[j] += r * self.x[(i, j)];
            }
        }
        let mut h = self.data_hessian(theta);
        for j in 0..d {
            h[(j, j)] += self.precision;
        }
        (g, h)
    }
}

fn check_labels(phi: &AnnotationMatrix, y: &[u8]) -> Result<(), ModelError> {
    if y.len() != phi.nrows() {
        return Err(ModelError::DimensionMismatch {
            what: "labels vs annotation rows",
            expected: phi.nrows(),
            found: y.len(),
        });
    }
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| **v > 1) {
        return Err(ModelError::InvalidLabel { index, value });
    }
    Ok(())
}

/// Sorted copy of a subset after range and duplicate checks.
fn canonical_rows(subset: &[usize], n: usize) -> Result<Vec<usize>, ModelError> {
    let mut rows = subset.to_vec();
    rows.sort_unstable();
    for w in rows.windows(2) {
        if w[0] == w[1] {
            return Err(ModelError::DuplicateSubsetIndex(w[0]));
        }
    }
    if let Some(&index) = rows.last().filter(|&&i| i >= n) {
        return Err(ModelError::SubsetOutOfRange { index, n });
    }
    Ok(rows)
}

fn fit_rows<'a>(
    phi: &'a AnnotationMatrix,
    y: &'a [u8],
    rows: &'a [usize],
    cfg: &ModelConfig,
) -> Result<(RidgeLogistic<'a>, DVector<f64>, f64), ModelError> {
    cfg.validate()?;
    let objective = RidgeLogistic {
        x: &phi.values,
        y,
        rows,
        precision: cfg.gamma.powi(-2),
    };
    let start = DVector::zeros(phi.dim());
    match optim::minimize(&objective, start, &cfg.solver) {
        Ok(out) => Ok((objective, out.x, out.value)),
        Err(NewtonFailure::NotConverged {
            last,
            iterations,
            gradient_norm,
        }) => Err(ModelError::OptimizationFailed {
            iterations,
            gradient_norm,
            last: Coefficients {
                theta: last.iter().copied().collect(),
            },
        }),
        Err(NewtonFailure::IndefiniteHessian { .. }) => {
            Err(factorization_error(&objective.derivatives(&DVector::zeros(phi.dim())).1))
        }
        Err(NewtonFailure::NonFinite { iteration }) => Err(ModelError::OptimizationFailed {
            iterations: iteration,
            gradient_norm: f64::NAN,
            last: Coefficients::zeros(phi.dim()),
        }),
    }
}

fn factorization_error(h: &DMatrix<f64>) -> ModelError {
    let eig = h.clone().symmetric_eigenvalues();
    let min = eig.min();
    let max = eig.max();
    ModelError::Factorization {
        min_eigenvalue: min,
        max_eigenvalue: max,
        condition: (max / min).abs(),
    }
}

/// MAP coefficients on all rows.
pub fn map_estimate(
    phi: &AnnotationMatrix,
    y: &[u8],
    cfg: &ModelConfig,
) -> Result<Coefficients, ModelError> {
    let rows: Vec<usize> = (0..phi.nrows()).collect();
    map_estimate_rows(phi, y, &rows, cfg)
}

/// MAP coefficients on the rows in `subset`.
pub fn map_estimate_rows(
    phi: &AnnotationMatrix,
    y: &[u8],
    subset: &[usize],
    cfg: &ModelConfig,
) -> Result<Coefficients, ModelError> {
    check_labels(phi, y)?;
    let rows = canonical_rows(subset, phi.nrows())?;
    let (_, theta, _) = fit_rows(phi, y, &rows, cfg)?;
    Ok(Coefficients {
        theta: theta.iter().copied().collect(),
    })
}

pub fn log_marginal_likelihood(
    phi: &AnnotationMatrix,
    y: &[u8],
    cfg: &ModelConfig,
) -> Result<LogMarginal, ModelError> {
    let rows: Vec<usize> = (0..phi.nrows()).collect();
    log_marginal_rows(phi, y, &rows, cfg)
}

/// Laplace marginal likelihood of the labels in `subset`.
pub fn log_marginal_rows(
    phi: &AnnotationMatrix,
    y: &[u8],
    subset: &[usize],
    cfg: &ModelConfig,
) -> Result<LogMarginal, ModelError> {
    check_labels(phi, y)?;
    let rows = canonical_rows(subset, phi.nrows())?;
    let (objective, theta, g_min) = fit_rows(phi, y, &rows, cfg)?;
    let d = phi.dim();
    let gamma2 = cfg.gamma * cfg.gamma;

    let mut scaled = objective.data_hessian(&theta) * gamma2;
    for j in 0..d {
        scaled[(j, j)] += 1.0;
    }
    let Some(chol) = scaled.clone().cholesky() else {
        return Err(factorization_error(&scaled));
    };
    let log_det_scaled: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();

    let value = -g_min - 0.5 * log_det_scaled;
    let log_det_hessian = log_det_scaled - d as f64 * gamma2.ln();
    if !value.is_finite() || !log_det_hessian.is_finite() {
        return Err(factorization_error(&scaled));
    }
    Ok(LogMarginal {
        value,
        theta_map: Coefficients {
            theta: theta.iter().copied().collect(),
        },
        log_det_hessian,
    })
}

/// `log p(y_{Sᶜ} | y_S, c, X)` as the difference of the full-data and
/// subset Laplace marginals.
pub fn log_partial_bayes(
    phi: &AnnotationMatrix,
    y: &[u8],
    subset: &[usize],
    cfg: &ModelConfig,
) -> Result<f64, ModelError> {
    let full = log_marginal_likelihood(phi, y, cfg)?;
    let part = log_marginal_rows(phi, y, subset, cfg)?;
    Ok(full.value - part.value)
}

/// Mean of the members' predicted probabilities. Each member pairs a sample's
/// plug-in coefficients with the observation's design row under that
/// sample's concept set.
pub fn posterior_predictive(members: &[(&Coefficients, &[f64])]) -> Result<f64, ModelError> {
    if members.is_empty() {
        return Err(ModelError::EmptyEnsemble);
    }
    let mut total = 0.0;
    for (theta, row) in members {
        total += sigmoid_predict(theta, row)?;
    }
    Ok(total / members.len() as f64)
}
