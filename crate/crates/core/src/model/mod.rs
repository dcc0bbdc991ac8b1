//! Logistic risk models: unpenalized IRLS and L1-penalized coordinate
//! descent with cross-validated shrinkage.

mod concordance;
mod irls;
mod lasso;

pub use concordance::c_statistic;
pub use irls::fit_logistic_mle;
pub use lasso::{auto_lambda_grid, fit_logistic_lasso, lambda_max, lasso_path, stratified_folds, LassoPath, PathPoint};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_transforms, count_weighted_support, Dataset, TransformSpec};
use crate::error::{Error, Result};
use crate::numeric::expit;

/// Largest tolerated |coefficient| on the standardized scale before a fit
/// is declared separated.
pub const SEPARATION_BOUND: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    None,
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaGrid {
    /// 100 log-spaced values from the null-model bound down to 0.001 of it.
    Auto,
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub penalty: Penalty,
    pub cv_folds: usize,
    pub lambda_grid: LambdaGrid,
    /// Convergence threshold on the absolute change in deviance.
    pub tol: f64,
    pub max_iter: usize,
    pub min_events: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::None,
            cv_folds: 10,
            lambda_grid: LambdaGrid::Auto,
            tol: 1e-8,
            max_iter: 100,
            min_events: 8,
        }
    }
}

impl FitConfig {
    pub fn lasso() -> Self {
        Self {
            penalty: Penalty::L1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.penalty == Penalty::L1 {
            if self.cv_folds < 2 {
                return Err(Error::InvalidConfig("cv_folds must be at least 2".into()));
            }
            if let LambdaGrid::Values(v) = &self.lambda_grid {
                if v.is_empty() {
                    return Err(Error::EmptyLambdaGrid);
                }
                if v.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
                    return Err(Error::InvalidConfig("lambda values must be finite and >= 0".into()));
                }
                if v.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidConfig("lambda grid must be descending".into()));
                }
            }
        }
        Ok(())
    }

    /// Checks the event guard on rows carrying positive weight.
    pub fn check_support(&self, ds: &Dataset) -> Result<()> {
        let (events, non_events) = count_weighted_support(ds);
        if events < self.min_events.max(1) {
            return Err(Error::TooFewEvents {
                events,
                required: self.min_events.max(1),
            });
        }
        if non_events == 0 {
            return Err(Error::NoNonEvents);
        }
        Ok(())
    }
}

/// A fitted logistic model on the transformed column basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelDocument", try_from = "ModelDocument")]
pub struct FittedModel {
    pub intercept: f64,
    /// Aligned with `terms`; exact zeros mark dropped predictors.
    pub coefficients: Vec<f64>,
    /// Names of the design columns produced by `transform`.
    pub terms: Vec<String>,
    /// Raw columns the transform expects, in order.
    pub input_columns: Vec<String>,
    pub transform: TransformSpec,
    pub lambda: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct NamedCoefficient {
    term: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    intercept: f64,
    coefficients: Vec<NamedCoefficient>,
    input_columns: Vec<String>,
    transform: TransformSpec,
    lambda: Option<f64>,
    converged: bool,
    iterations: usize,
}

impl From<FittedModel> for ModelDocument {
    fn from(m: FittedModel) -> Self {
        ModelDocument {
            intercept: m.intercept,
            coefficients: m
                .terms
                .into_iter()
                .zip(m.coefficients)
                .map(|(term, value)| NamedCoefficient { term, value })
                .collect(),
            input_columns: m.input_columns,
            transform: m.transform,
            lambda: m.lambda,
            converged: m.converged,
            iterations: m.iterations,
        }
    }
}

impl TryFrom<ModelDocument> for FittedModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let expected = doc.transform.output_names(&doc.input_columns)?;
        let terms: Vec<String> = doc.coefficients.iter().map(|c| c.term.clone()).collect();
        if expected != terms {
            return Err(Error::ColumnMismatch {
                expected,
                actual: terms,
            });
        }
        Ok(FittedModel {
            intercept: doc.intercept,
            coefficients: doc.coefficients.into_iter().map(|c| c.value).collect(),
            terms,
            input_columns: doc.input_columns,
            transform: doc.transform,
            lambda: doc.lambda,
            converged: doc.converged,
            iterations: doc.iterations,
        })
    }
}

impl FittedModel {
    /// Model with the given coefficients on an untransformed design.
    pub fn from_coefficients(intercept: f64, terms: Vec<String>, coefficients: Vec<f64>) -> Self {
        FittedModel {
            intercept,
            coefficients,
            input_columns: terms.clone(),
            terms,
            transform: TransformSpec::identity(),
            lambda: None,
            converged: true,
            iterations: 0,
        }
    }

    /// Re-labels a model fit on a transformed design with the transform
    /// that produced it.
    pub fn with_transform(mut self, input_columns: Vec<String>, transform: TransformSpec) -> Self {
        self.input_columns = input_columns;
        self.transform = transform;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Predicted risks on an already-transformed design whose columns
    /// match `terms`.
    pub fn predict_design(&self, design: &Dataset) -> Result<Vec<f64>> {
        if design.feature_names() != self.terms.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.terms.clone(),
                actual: design.feature_names().to_vec(),
            });
        }
        let mut eta = vec![self.intercept; design.n()];
        for (col, &b) in design.columns().iter().zip(&self.coefficients) {
            if b != 0.0 {
                for (e, &x) in eta.iter_mut().zip(col) {
                    *e += b * x;
                }
            }
        }
        Ok(eta.into_iter().map(expit).collect())
    }

    /// Applies the model's transform to raw data.
    pub fn design(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.feature_names() != self.input_columns.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.input_columns.clone(),
                actual: ds.feature_names().to_vec(),
            });
        }
        apply_transforms(ds, &self.transform)
    }

    pub fn nonzero_terms(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

/// Predicted risks for raw data: transform, then inverse-logit of the
/// linear predictor.
pub fn predict(model: &FittedModel, ds: &Dataset) -> Result<Vec<f64>> {
    let design = model.design(ds)?;
    model.predict_design(&design)
}

/// Transforms raw data and fits the configured model.
pub fn fit<R: Rng + ?Sized>(
    ds: &Dataset,
    transform: &TransformSpec,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<FittedModel> {
    let design = apply_transforms(ds, transform)?;
    fit_design(&design, cfg, rng).map(|m| m.with_transform(ds.feature_names().to_vec(), transform.clone()))
}

/// Fits the configured model to an already-transformed design.
pub fn fit_design<R: Rng + ?Sized>(design: &Dataset, cfg: &FitConfig, rng: &mut R) -> Result<FittedModel> {
    match cfg.penalty {
        Penalty::None => fit_logistic_mle(design, cfg),
        Penalty::L1 => fit_logistic_lasso(design, cfg, rng),
    }
}

/// Weighted column centering and scaling used internally by both fitters.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Columns with no variation among positively weighted rows.
    pub constant: Vec<bool>,
}

impl Standardization {
    pub fn new(columns: &[Vec<f64>], w: &[f64]) -> Self {
        let total: f64 = w.iter().sum();
        let mut means = Vec::with_capacity(columns.len());
        let mut sds = Vec::with_capacity(columns.len());
        let mut constant = Vec::with_capacity(columns.len());
        for col in columns {
            let m = col.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / total;
            let var = col.iter().zip(w).map(|(x, w)| w * (x - m) * (x - m)).sum::<f64>() / total;
            let sd = var.sqrt();
            let is_const = !(sd > 1e-10 * (1.0 + m.abs()));
            means.push(m);
            sds.push(if is_const { 1.0 } else { sd });
            constant.push(is_const);
        }
        Self { means, sds, constant }
    }

    pub fn apply(&self, columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
        columns
            .iter()
            .enumerate()
            .map(|(j, col)| {
                if self.constant[j] {
                    vec![0.0; col.len()]
                } else {
                    col.iter().map(|x| (x - self.means[j]) / self.sds[j]).collect()
                }
            })
            .collect()
    }

    /// Converts standardized-scale coefficients back to the column scale.
    pub fn destandardize(&self, intercept: f64, coef: &[f64]) -> (f64, Vec<f64>) {
        let raw: Vec<f64> = coef
            .iter()
            .enumerate()
            .map(|(j, &b)| if self.constant[j] { 0.0 } else { b / self.sds[j] })
            .collect();
        let shift: f64 = raw.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        (intercept - shift, raw)
    }
}

pub(crate) fn check_separation(terms: &[String], coef_std: &[f64]) -> Result<()> {
    if let Some((j, &b)) = coef_std.iter().enumerate().find(|(_, b)| b.abs() > SEPARATION_BOUND) {
        return Err(Error::Separation {
            term: terms[j].clone(),
            coefficient: b,
        });
    }
    Ok(())
}
