//! Maximum likelihood logistic regression by iteratively reweighted least
//! squares (Newton-Raphson) with step halving.

use nalgebra::{DMatrix, DVector};

use super::{check_separation, FitConfig, FittedModel, Standardization, SEPARATION_BOUND};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{binomial_deviance, expit, logit};

const MAX_HALVINGS: usize = 30;
/// mu * (1 - mu) below this marks a fitted risk as numerically 0 or 1.
const DEGENERATE_RISK_VARIANCE: f64 = 1e-10;

/// Fits an unpenalized logistic model to a design, treating the dataset
/// weights as likelihood case weights.
///
/// Columns with no variation among positively weighted rows are aliased
/// with the intercept; they get a zero coefficient.
pub fn fit_logistic_mle(ds: &Dataset, cfg: &FitConfig) -> Result<FittedModel> {
    cfg.validate()?;
    cfg.check_support(ds)?;

    let y = ds.outcomes();
    let w = ds.weights_or_ones();
    let std = Standardization::new(ds.columns(), &w);
    let xs = std.apply(ds.columns());
    let active: Vec<usize> = (0..ds.p()).filter(|&j| !std.constant[j]).collect();
    let k = active.len() + 1;
    let n = ds.n();

    let total: f64 = w.iter().sum();
    let ybar = y.iter().zip(w.iter()).map(|(y, w)| y * w).sum::<f64>() / total;

    // beta[0] is the intercept, beta[1..] follow `active`.
    let mut beta = vec![0.0; k];
    beta[0] = logit(ybar);
    let linear_predictor = |beta: &[f64]| -> Vec<f64> {
        let mut eta = vec![beta[0]; n];
        for (a, &j) in active.iter().enumerate() {
            let b = beta[a + 1];
            for (e, &x) in eta.iter_mut().zip(&xs[j]) {
                *e += b * x;
            }
        }
        eta
    };

    let mut eta = linear_predictor(&beta);
    let mut deviance = binomial_deviance(&eta, y, &w);
    let mut converged = false;
    let mut iterations = 0;
    let mut v = vec![0.0; n];
    let mut resid = vec![0.0; n];

    while iterations < cfg.max_iter {
        iterations += 1;
        for i in 0..n {
            let mu = expit(eta[i]);
            v[i] = w[i] * mu * (1.0 - mu);
            resid[i] = w[i] * (y[i] - mu);
        }

        // Score and information on the standardized basis.
        let col = |a: usize| -> Option<&[f64]> {
            if a == 0 {
                None
            } else {
                Some(&xs[active[a - 1]])
            }
        };
        let mut info = DMatrix::<f64>::zeros(k, k);
        let mut score = DVector::<f64>::zeros(k);
        for a in 0..k {
            score[a] = match col(a) {
                None => resid.iter().sum(),
                Some(xa) => xa.iter().zip(&resid).map(|(x, r)| x * r).sum(),
            };
            for b in 0..=a {
                let s: f64 = match (col(a), col(b)) {
                    (None, None) => v.iter().sum(),
                    (Some(x), None) | (None, Some(x)) => x.iter().zip(&v).map(|(x, v)| x * v).sum(),
                    (Some(xa), Some(xb)) => xa.iter().zip(xb).zip(&v).map(|((xa, xb), v)| xa * xb * v).sum(),
                };
                info[(a, b)] = s;
                info[(b, a)] = s;
            }
        }
        let step = match info.cholesky() {
            Some(factor) => factor.solve(&score),
            None => return Err(singular_or_separated(ds, &active, &beta, &eta, &w)),
        };
        if step.iter().any(|s| !s.is_finite()) {
            return Err(singular_or_separated(ds, &active, &beta, &eta, &w));
        }

        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_eta: Vec<f64>;
        let mut cand_dev: f64;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            cand_eta = linear_predictor(&candidate);
            cand_dev = binomial_deviance(&cand_eta, y, &w);
            if cand_dev <= deviance + 1e-12 * deviance.abs() || halvings >= MAX_HALVINGS {
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }

        let max_step = step.iter().skip(1).fold(0.0f64, |m, s| m.max((scale * s).abs()));
        let dev_change = (deviance - cand_dev).abs();
        beta = candidate;
        eta = cand_eta;
        deviance = cand_dev;

        if beta[1..].iter().any(|b| b.abs() > SEPARATION_BOUND) {
            // Diverging coefficients: stop iterating and report below.
            break;
        }
        // The coefficient-step guard keeps a separated fit from stalling
        // on a flat deviance before its coefficients reach the bound.
        if dev_change < cfg.tol {
            if max_step < 1e-4 {
                converged = true;
                break;
            }
            if degenerate_risks(&eta, &w) {
                break;
            }
        }
    }

    let terms: Vec<String> = active.iter().map(|&j| ds.feature_names()[j].clone()).collect();
    check_separation(&terms, &beta[1..])?;
    if !converged {
        if degenerate_risks(&eta, &w) {
            return Err(separation(ds, &active, &beta).unwrap_or(Error::NonConvergence { iterations }));
        }
        return Err(Error::NonConvergence { iterations });
    }

    let mut coef_std = vec![0.0; ds.p()];
    for (a, &j) in active.iter().enumerate() {
        coef_std[j] = beta[a + 1];
    }
    let (intercept, coefficients) = std.destandardize(beta[0], &coef_std);
    Ok(FittedModel {
        intercept,
        coefficients,
        terms: ds.feature_names().to_vec(),
        input_columns: ds.feature_names().to_vec(),
        transform: Default::default(),
        lambda: None,
        converged,
        iterations,
    })
}

/// True when some positively weighted row has a fitted risk numerically 0 or 1.
fn degenerate_risks(eta: &[f64], w: &[f64]) -> bool {
    eta.iter().zip(w).any(|(&e, &w)| {
        let mu = expit(e);
        w > 0.0 && mu * (1.0 - mu) < DEGENERATE_RISK_VARIANCE
    })
}

/// Quasi-complete separation, reported at the largest standardized slope.
fn separation(ds: &Dataset, active: &[usize], beta: &[f64]) -> Option<Error> {
    beta[1..]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(a, &b)| Error::Separation {
            term: ds.feature_names()[active[a]].clone(),
            coefficient: b,
        })
}

/// A singular information matrix with degenerate fitted risks is separation.
fn singular_or_separated(ds: &Dataset, active: &[usize], beta: &[f64], eta: &[f64], w: &[f64]) -> Error {
    if degenerate_risks(eta, w) {
        separation(ds, active, beta).unwrap_or(Error::Singular)
    } else {
        Error::Singular
    }
}
