//! L1-penalized logistic regression.
//!
//! Objective on the standardized design, with case weights normalized to
//! sum to one and the intercept unpenalized:
//!
//! ```text
//! -sum_i w_i [y_i eta_i - log(1 + exp(eta_i))] + lambda * sum_j |b_j|
//! ```
//!
//! Each outer step forms the quadratic (IRLS) approximation of the
//! log-likelihood and minimizes it by cyclic coordinate descent with an
//! active-set strategy. Paths are warm-started from the largest lambda.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{check_separation, FitConfig, FittedModel, LambdaGrid, Standardization};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{expit, log1p_exp, logit};

const AUTO_GRID_LEN: usize = 100;
const AUTO_GRID_RATIO: f64 = 1e-3;
/// Working-weight floor, as mu * (1 - mu) at mu = 1e-5.
const MIN_WORKING_WEIGHT: f64 = 1e-5 * (1.0 - 1e-5);
/// Inner coordinate descent stops when max_j xv_j * delta_j^2 falls below this.
const INNER_TOL: f64 = 1e-18;
const OUTER_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;
/// Paths stop once the fit explains this fraction of the null deviance.
const MAX_DEVIANCE_RATIO: f64 = 0.999;
/// Paths also stop once a step explains less than this fraction of the null deviance.
const MIN_DEVIANCE_GAIN: f64 = 1e-5;
/// Points fit before the gain rule applies.
const MIN_PATH_POINTS: usize = 5;

/// Solution at one lambda on the standardized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub intercept_std: f64,
    pub coef_std: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Normalized-weight deviance at the solution.
    pub deviance: f64,
}

#[derive(Debug, Clone)]
pub struct LassoPath {
    pub points: Vec<PathPoint>,
    pub null_deviance: f64,
    std: Standardization,
    terms: Vec<String>,
}

impl LassoPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    /// L1 norm of the standardized slopes at path index `k`.
    pub fn l1_norm(&self, k: usize) -> f64 {
        self.points[k].coef_std.iter().map(|b| b.abs()).sum()
    }

    /// Coefficients at path index `k`, on the column scale.
    pub fn model(&self, k: usize) -> FittedModel {
        let pt = &self.points[k];
        let (intercept, coefficients) = self.std.destandardize(pt.intercept_std, &pt.coef_std);
        FittedModel {
            intercept,
            coefficients,
            terms: self.terms.clone(),
            input_columns: self.terms.clone(),
            transform: Default::default(),
            lambda: Some(pt.lambda),
            converged: pt.converged,
            iterations: pt.iterations,
        }
    }

    /// Largest violation of the optimality conditions at path index `k`,
    /// measured on the standardized scale. `ds` must be the data the path
    /// was fit to.
    pub fn kkt_residual(&self, ds: &Dataset, k: usize) -> f64 {
        let pt = &self.points[k];
        let w = ds.weights_or_ones();
        let total: f64 = w.iter().sum();
        let xs = self.std.apply(ds.columns());
        let n = ds.n();
        let mut eta = vec![pt.intercept_std; n];
        for (col, &b) in xs.iter().zip(&pt.coef_std) {
            for (e, x) in eta.iter_mut().zip(col) {
                *e += b * x;
            }
        }
        let r: Vec<f64> = (0..n)
            .map(|i| w[i] / total * (ds.outcomes()[i] - expit(eta[i])))
            .collect();
        let mut worst = r.iter().sum::<f64>().abs();
        for (j, col) in xs.iter().enumerate() {
            if self.std.constant[j] {
                continue;
            }
            let g: f64 = col.iter().zip(&r).map(|(x, r)| x * r).sum();
            let b = pt.coef_std[j];
            let v = if b != 0.0 {
                (g - pt.lambda * b.signum()).abs()
            } else {
                (g.abs() - pt.lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Smallest lambda at which every standardized slope is zero.
pub fn lambda_max(ds: &Dataset) -> f64 {
    let w = ds.weights_or_ones();
    let total: f64 = w.iter().sum();
    let std = Standardization::new(ds.columns(), &w);
    let y = ds.outcomes();
    let ybar = y.iter().zip(w.iter()).map(|(y, w)| y * w).sum::<f64>() / total;
    std.apply(ds.columns())
        .iter()
        .map(|col| {
            col.iter()
                .zip(y)
                .zip(w.iter())
                .map(|((x, y), w)| w / total * x * (y - ybar))
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Descending log-spaced grid from `lambda_max` to 0.001 * `lambda_max`.
pub fn auto_lambda_grid(lambda_max: f64) -> Vec<f64> {
    (0..AUTO_GRID_LEN)
        .map(|k| {
            let t = k as f64 / (AUTO_GRID_LEN - 1) as f64;
            lambda_max * AUTO_GRID_RATIO.powf(t)
        })
        .collect()
}

/// Fold label per row, stratified on outcome; rows with zero weight get
/// `usize::MAX` and belong to no fold.
pub fn stratified_folds<R: Rng + ?Sized>(ds: &Dataset, k: usize, rng: &mut R) -> Vec<usize> {
    let w = ds.weights_or_ones();
    let mut events: Vec<usize> = (0..ds.n()).filter(|&i| w[i] > 0.0 && ds.outcomes()[i] == 1.0).collect();
    let mut non_events: Vec<usize> = (0..ds.n()).filter(|&i| w[i] > 0.0 && ds.outcomes()[i] == 0.0).collect();
    events.shuffle(rng);
    non_events.shuffle(rng);
    let mut folds = vec![usize::MAX; ds.n()];
    for (pos, &i) in events.iter().chain(&non_events).enumerate() {
        folds[i] = pos % k;
    }
    folds
}

/// Fits the whole path over `lambdas` (descending).
pub fn lasso_path(ds: &Dataset, cfg: &FitConfig, lambdas: &[f64]) -> Result<LassoPath> {
    if lambdas.is_empty() {
        return Err(Error::EmptyLambdaGrid);
    }
    let w = ds.weights_or_ones();
    let problem = Problem::new(ds.columns(), ds.outcomes(), &w);
    let (points, null_deviance) = problem.path(lambdas, cfg)?;
    Ok(LassoPath {
        points,
        null_deviance,
        std: problem.std,
        terms: ds.feature_names().to_vec(),
    })
}

/// Fits the L1-penalized model at the lambda minimizing cross-validated
/// mean squared prediction error.
pub fn fit_logistic_lasso<R: Rng + ?Sized>(ds: &Dataset, cfg: &FitConfig, rng: &mut R) -> Result<FittedModel> {
    cfg.validate()?;
    cfg.check_support(ds)?;
    let lambdas = match &cfg.lambda_grid {
        LambdaGrid::Auto => auto_lambda_grid(lambda_max(ds)),
        LambdaGrid::Values(v) => v.clone(),
    };
    let path = lasso_path(ds, cfg, &lambdas)?;
    let chosen = if lambdas.len() == 1 {
        0
    } else {
        let mse = cv_prediction_error(ds, cfg, &lambdas, rng)?;
        mse.iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
            )
            .0
    };
    let k = chosen.min(path.points.len() - 1);
    check_separation(&path.terms, &path.points[k].coef_std)?;
    Ok(path.model(k))
}

/// Weighted mean of (y - risk)^2 over held-out rows, per lambda.
fn cv_prediction_error<R: Rng + ?Sized>(
    ds: &Dataset,
    cfg: &FitConfig,
    lambdas: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let folds = stratified_folds(ds, cfg.cv_folds, rng);
    let w = ds.weights_or_ones();
    let y = ds.outcomes();
    let mut sse = vec![0.0; lambdas.len()];
    let mut held_weight = 0.0;
    for f in 0..cfg.cv_folds {
        let train_w: Vec<f64> = w
            .iter()
            .zip(&folds)
            .map(|(&w, &fold)| if fold == f { 0.0 } else { w })
            .collect();
        let held: Vec<usize> = (0..ds.n()).filter(|&i| folds[i] == f).collect();
        if held.is_empty() {
            continue;
        }
        let has_event = (0..ds.n()).any(|i| train_w[i] > 0.0 && y[i] == 1.0);
        let has_non_event = (0..ds.n()).any(|i| train_w[i] > 0.0 && y[i] == 0.0);
        if !has_event || !has_non_event {
            return Err(Error::TooFewEvents {
                events: usize::from(has_event),
                required: 1,
            });
        }
        let problem = Problem::new(ds.columns(), y, &train_w);
        let (points, _) = problem.path(lambdas, cfg)?;
        for l in 0..lambdas.len() {
            let pt = &points[l.min(points.len() - 1)];
            let (b0, b) = problem.std.destandardize(pt.intercept_std, &pt.coef_std);
            for &i in &held {
                let eta = b0 + ds.columns().iter().zip(&b).map(|(c, b)| b * c[i]).sum::<f64>();
                let d = y[i] - expit(eta);
                sse[l] += w[i] * d * d;
            }
        }
        held_weight += held.iter().map(|&i| w[i]).sum::<f64>();
    }
    Ok(sse.into_iter().map(|s| s / held_weight).collect())
}

fn soft_threshold(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// Penalized fit restricted to the positively weighted rows.
struct Problem {
    xs: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Weights normalized to sum to one.
    w: Vec<f64>,
    std: Standardization,
    cols: Vec<usize>,
}

impl Problem {
    fn new(columns: &[Vec<f64>], y: &[f64], w: &[f64]) -> Self {
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let std = Standardization::new(columns, &w);
        let rows: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
        let xs = std
            .apply(columns)
            .into_iter()
            .map(|col| rows.iter().map(|&i| col[i]).collect())
            .collect();
        let cols = (0..columns.len()).filter(|&j| !std.constant[j]).collect();
        Self {
            xs,
            y: rows.iter().map(|&i| y[i]).collect(),
            w: rows.iter().map(|&i| w[i]).collect(),
            std,
            cols,
        }
    }

    fn eta(&self, b0: f64, b: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.y.len()];
        for &j in &self.cols {
            if b[j] != 0.0 {
                for (e, x) in eta.iter_mut().zip(&self.xs[j]) {
                    *e += b[j] * x;
                }
            }
        }
        eta
    }

    fn deviance(&self, eta: &[f64]) -> f64 {
        2.0 * eta
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&e, &y), &w)| if w > 0.0 { w * (log1p_exp(e) - y * e) } else { 0.0 })
            .sum::<f64>()
    }

    /// Penalized objective at `eta`, also writing the risks into `mu`.
    fn objective(&self, eta: &[f64], b: &[f64], lambda: f64, mu: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for i in 0..eta.len() {
            let e = eta[i];
            let t = (-e.abs()).exp();
            mu[i] = if e >= 0.0 { 1.0 / (1.0 + t) } else { t / (1.0 + t) };
            if self.w[i] > 0.0 {
                loss += self.w[i] * (e.max(0.0) + t.ln_1p() - self.y[i] * e);
            }
        }
        loss + lambda * b.iter().map(|x| x.abs()).sum::<f64>()
    }

    fn path(&self, lambdas: &[f64], cfg: &FitConfig) -> Result<(Vec<PathPoint>, f64)> {
        let ybar: f64 = self.y.iter().zip(&self.w).map(|(y, w)| y * w).sum();
        let mut b0 = logit(ybar);
        let mut b = vec![0.0; self.xs.len()];
        let null_deviance = self.deviance(&vec![b0; self.y.len()]);
        let mut points = Vec::with_capacity(lambdas.len());
        let mut previous = null_deviance;
        for &lambda in lambdas {
            let (converged, iterations, deviance) = self.solve(lambda, &mut b0, &mut b, cfg)?;
            points.push(PathPoint {
                lambda,
                intercept_std: b0,
                coef_std: b.clone(),
                converged,
                iterations,
                deviance,
            });
            if null_deviance > 0.0 {
                let gain = (previous - deviance) / null_deviance;
                if 1.0 - deviance / null_deviance > MAX_DEVIANCE_RATIO
                    || (points.len() >= MIN_PATH_POINTS && gain < MIN_DEVIANCE_GAIN)
                {
                    break;
                }
            }
            previous = deviance;
        }
        Ok((points, null_deviance))
    }

    /// Minimizes the penalized objective at `lambda`, warm-started from
    /// `(b0, b)`. Returns (converged, outer iterations, deviance).
    ///
    /// Coordinate descent runs on gradients kept current through cached
    /// weighted Gram columns, so each update costs O(p) once a column is cached.
    fn solve(&self, lambda: f64, b0: &mut f64, b: &mut [f64], cfg: &FitConfig) -> Result<(bool, usize, f64)> {
        let n = self.y.len();
        let p = self.xs.len();
        let eta = self.eta(*b0, b);
        let mut mu = vec![0.0; n];
        let mut new_mu = vec![0.0; n];
        let mut obj = self.objective(&eta, b, lambda, &mut mu);
        let mut v = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut xv = vec![0.0; p];
        // Slot p holds the intercept.
        let mut grad = vec![0.0; p + 1];
        let mut gram: Vec<Option<Vec<f64>>> = vec![None; p + 1];

        for iter in 1..=cfg.max_iter {
            for i in 0..n {
                v[i] = self.w[i] * (mu[i] * (1.0 - mu[i])).max(MIN_WORKING_WEIGHT);
                r[i] = self.w[i] * (self.y[i] - mu[i]);
            }
            let sv: f64 = v.iter().sum();
            grad[p] = r.iter().sum();
            for &j in &self.cols {
                let x = &self.xs[j];
                xv[j] = x.iter().zip(&v).map(|(x, v)| x * x * v).sum();
                grad[j] = x.iter().zip(&r).map(|(x, r)| x * r).sum();
            }
            gram.iter_mut().for_each(|g| *g = None);
            let mut intercept_col = vec![0.0; p + 1];
            intercept_col[p] = sv;
            for &j in &self.cols {
                intercept_col[j] = self.xs[j].iter().zip(&v).map(|(x, v)| x * v).sum();
            }
            gram[p] = Some(intercept_col);

            let mut nb0 = *b0;
            let mut nb = b.to_vec();
            let mut full_sweep = true;
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(Error::NonConvergence { iterations: iter });
                }
                let d0 = grad[p] / sv;
                nb0 += d0;
                let col = gram[p].as_ref().expect("intercept column");
                for (g, c) in grad.iter_mut().zip(col) {
                    *g -= d0 * c;
                }
                let mut max_change = sv * d0 * d0;
                for &j in &self.cols {
                    if !full_sweep && nb[j] == 0.0 {
                        continue;
                    }
                    let updated = soft_threshold(grad[j] + xv[j] * nb[j], lambda) / xv[j];
                    let d = updated - nb[j];
                    if d != 0.0 {
                        nb[j] = updated;
                        let col = gram[j].get_or_insert_with(|| self.gram_column(j, &v));
                        for (g, c) in grad.iter_mut().zip(col.iter()) {
                            *g -= d * c;
                        }
                        max_change = max_change.max(xv[j] * d * d);
                    }
                }
                if max_change < INNER_TOL {
                    if full_sweep {
                        break;
                    }
                    full_sweep = true;
                } else {
                    full_sweep = false;
                }
            }

            // Backtrack toward the previous iterate if the objective rose.
            let mut new_eta = self.eta(nb0, &nb);
            let mut new_obj = self.objective(&new_eta, &nb, lambda, &mut new_mu);
            let mut halvings = 0;
            while new_obj > obj + 1e-13 * obj.abs().max(1.0) && halvings < 30 {
                nb0 = 0.5 * (nb0 + *b0);
                for (x, old) in nb.iter_mut().zip(b.iter()) {
                    *x = 0.5 * (*x + old);
                }
                new_eta = self.eta(nb0, &nb);
                new_obj = self.objective(&new_eta, &nb, lambda, &mut new_mu);
                halvings += 1;
            }

            let change = nb
                .iter()
                .zip(b.iter())
                .map(|(a, c)| (a - c).abs())
                .fold((nb0 - *b0).abs(), f64::max);
            *b0 = nb0;
            b.copy_from_slice(&nb);
            std::mem::swap(&mut mu, &mut new_mu);
            obj = new_obj;
            if change < OUTER_TOL {
                let l1: f64 = b.iter().map(|x| x.abs()).sum();
                return Ok((true, iter, 2.0 * (obj - lambda * l1)));
            }
        }
        Err(Error::NonConvergence {
            iterations: cfg.max_iter,
        })
    }

    /// Weighted cross-products of column `j` with every column, intercept last.
    fn gram_column(&self, j: usize, v: &[f64]) -> Vec<f64> {
        let p = self.xs.len();
        let xjv: Vec<f64> = self.xs[j].iter().zip(v).map(|(x, v)| x * v).collect();
        let mut col = vec![0.0; p + 1];
        for &k in &self.cols {
            col[k] = self.xs[k].iter().zip(&xjv).map(|(x, y)| x * y).sum();
        }
        col[p] = xjv.iter().sum();
        col
    }
}
