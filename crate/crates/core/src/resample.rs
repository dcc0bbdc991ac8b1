//! Ordinary and Bayesian bootstrap replicates as case-weight vectors, and
//! posterior draws of the correct model obtained by refitting on them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_transforms, Dataset, TransformSpec};
use crate::error::{Error, Result};
use crate::model::{fit_design, FitConfig, FittedModel};
use crate::numeric::quantile;
use crate::parallel::map_indexed;
use crate::rng::{domain, stream};

/// Replicates tried per draw before giving up on the event guard.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapKind {
    Ordinary,
    Bayesian,
}

impl fmt::Display for BootstrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BootstrapKind::Ordinary => "ordinary",
            BootstrapKind::Bayesian => "bayesian",
        })
    }
}

impl FromStr for BootstrapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordinary" => Ok(BootstrapKind::Ordinary),
            "bayesian" => Ok(BootstrapKind::Bayesian),
            other => Err(Error::InvalidConfig(format!("unknown bootstrap kind `{other}`"))),
        }
    }
}

/// Case weights of one bootstrap replicate; they sum to n.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateWeights {
    pub weights: Vec<f64>,
    pub kind: BootstrapKind,
    pub draw_index: usize,
}

/// Multinomial(n; 1/n, ..., 1/n) counts, i.e. how often each row is picked
/// when sampling n rows with replacement.
pub fn ordinary_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ReplicateWeights {
    let mut weights = vec![0.0; n];
    for _ in 0..n {
        weights[rng.random_range(0..n)] += 1.0;
    }
    ReplicateWeights {
        weights,
        kind: BootstrapKind::Ordinary,
        draw_index: 0,
    }
}

/// n times the gaps between n - 1 sorted standard uniforms (with 0 and 1
/// as end points): a scaled Dirichlet(1, ..., 1) draw.
pub fn bayesian_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ReplicateWeights {
    let mut u: Vec<f64> = (0..n.saturating_sub(1)).map(|_| rng.random::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    ReplicateWeights {
        weights: gap_weights(&u),
        kind: BootstrapKind::Bayesian,
        draw_index: 0,
    }
}

/// Weights from already-sorted uniforms; the result has one more entry
/// than the input.
pub fn gap_weights(sorted_uniforms: &[f64]) -> Vec<f64> {
    let n = sorted_uniforms.len() + 1;
    let scale = n as f64;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(n);
    for &u in sorted_uniforms.iter().chain(std::iter::once(&1.0)) {
        out.push((u - prev) * scale);
        prev = u;
    }
    out
}

pub fn replicate_weights<R: Rng + ?Sized>(
    kind: BootstrapKind,
    n: usize,
    draw_index: usize,
    rng: &mut R,
) -> ReplicateWeights {
    let mut rw = match kind {
        BootstrapKind::Ordinary => ordinary_weights(n, rng),
        BootstrapKind::Bayesian => bayesian_weights(n, rng),
    };
    rw.draw_index = draw_index;
    rw
}

/// One draw from the bootstrap posterior of the correct model.
#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    pub draw_index: usize,
    pub model: FittedModel,
    /// Correct-risk vector evaluated on the original sample.
    pub risks: Vec<f64>,
    /// Replicates rejected before this one was accepted.
    pub redraws: usize,
}

/// Refits the configured model on a bootstrap replicate and evaluates it on
/// the original rows.
///
/// Replicates below the event guard, or on which the refit separates, are
/// rejected and redrawn from the same stream, up to [`MAX_REDRAWS`]
/// attempts. Any other fit failure is returned tagged with `draw_index`.
pub fn draw_posterior<R: Rng + ?Sized>(
    ds: &Dataset,
    transform: &TransformSpec,
    cfg: &FitConfig,
    kind: BootstrapKind,
    draw_index: usize,
    rng: &mut R,
) -> Result<PosteriorDraw> {
    let design = apply_transforms(ds, transform)?;
    draw_posterior_design(&design, ds.feature_names(), transform, cfg, kind, draw_index, rng)
}

pub(crate) fn draw_posterior_design<R: Rng + ?Sized>(
    design: &Dataset,
    input_columns: &[String],
    transform: &TransformSpec,
    cfg: &FitConfig,
    kind: BootstrapKind,
    draw_index: usize,
    rng: &mut R,
) -> Result<PosteriorDraw> {
    for attempt in 0..MAX_REDRAWS {
        let rw = replicate_weights(kind, design.n(), draw_index, rng);
        let replicate = design.reweighted(&rw.weights).map_err(|e| e.in_draw(draw_index))?;
        if cfg.check_support(&replicate).is_err() {
            continue;
        }
        match fit_on_replicate(design, &replicate, input_columns, transform, cfg, rng) {
            Ok((model, risks)) => {
                return Ok(PosteriorDraw {
                    draw_index,
                    model,
                    risks,
                    redraws: attempt,
                })
            }
            Err(Error::Separation { .. }) => continue,
            Err(e) => return Err(e.in_draw(draw_index)),
        }
    }
    Err(Error::ExcessRedraws {
        draw_index,
        attempts: MAX_REDRAWS,
    })
}

/// Fits on explicitly supplied replicate weights (no redraws).
pub fn fit_replicate<R: Rng + ?Sized>(
    ds: &Dataset,
    transform: &TransformSpec,
    cfg: &FitConfig,
    weights: &ReplicateWeights,
    rng: &mut R,
) -> Result<PosteriorDraw> {
    let design = apply_transforms(ds, transform)?;
    let replicate = design.reweighted(&weights.weights)?;
    let (model, risks) = fit_on_replicate(&design, &replicate, ds.feature_names(), transform, cfg, rng)
        .map_err(|e| e.in_draw(weights.draw_index))?;
    Ok(PosteriorDraw {
        draw_index: weights.draw_index,
        model,
        risks,
        redraws: 0,
    })
}

fn fit_on_replicate<R: Rng + ?Sized>(
    original: &Dataset,
    replicate: &Dataset,
    input_columns: &[String],
    transform: &TransformSpec,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<(FittedModel, Vec<f64>)> {
    let model = fit_design(replicate, cfg, rng)?;
    let risks = model.predict_design(original)?;
    Ok((model.with_transform(input_columns.to_vec(), transform.clone()), risks))
}

/// Bootstrap summary of one coefficient of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermUncertainty {
    pub term: String,
    pub estimate: f64,
    /// Share of refits in which the coefficient is non-zero.
    pub selection_probability: f64,
    /// 2.5th and 97.5th percentiles over refits.
    pub lower: f64,
    pub upper: f64,
}

/// Refits `model`'s specification on `n_boot` ordinary bootstrap
/// replicates and summarizes the spread of every coefficient, intercept
/// first. Replicates are redrawn as in [`draw_posterior`].
pub fn coefficient_uncertainty(
    ds: &Dataset,
    model: &FittedModel,
    cfg: &FitConfig,
    n_boot: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<TermUncertainty>> {
    if n_boot == 0 {
        return Err(Error::InvalidConfig("n_boot must be at least 1".into()));
    }
    cfg.validate()?;
    let design = model.design(ds)?;
    let refits = map_indexed(n_boot, threads, |b| {
        let mut rng = stream(seed, &[domain::UNCERTAINTY, b as u64]);
        let draw = draw_posterior_design(
            &design,
            &model.input_columns,
            &model.transform,
            cfg,
            BootstrapKind::Ordinary,
            b,
            &mut rng,
        )?;
        let mut coef = vec![draw.model.intercept];
        coef.extend(draw.model.coefficients);
        Ok(coef)
    })?;
    let names = std::iter::once("(intercept)".to_string()).chain(model.terms.iter().cloned());
    let estimates = std::iter::once(model.intercept).chain(model.coefficients.iter().copied());
    Ok(names
        .zip(estimates)
        .enumerate()
        .map(|(k, (term, estimate))| {
            let values: Vec<f64> = refits.iter().map(|c| c[k]).collect();
            TermUncertainty {
                term,
                estimate,
                selection_probability: values.iter().filter(|v| **v != 0.0).count() as f64 / n_boot as f64,
                lower: quantile(&values, 0.025),
                upper: quantile(&values, 0.975),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit, predict};
    use crate::rng::stream;
    use crate::synthetic::simulate_logistic;

    #[test]
    fn single_row_weights() {
        let mut rng = stream(1, &[]);
        assert_eq!(ordinary_weights(1, &mut rng).weights, vec![1.0]);
        assert_eq!(bayesian_weights(1, &mut rng).weights, vec![1.0]);
    }

    #[test]
    fn weights_sum_to_n() {
        let mut rng = stream(2, &[]);
        for n in [2, 7, 100, 1000] {
            let o = ordinary_weights(n, &mut rng);
            assert_eq!(o.weights.iter().sum::<f64>(), n as f64);
            assert!(o.weights.iter().all(|w| w.fract() == 0.0 && *w >= 0.0));
            let b = bayesian_weights(n, &mut rng);
            assert!((b.weights.iter().sum::<f64>() - n as f64).abs() < 1e-9);
            assert!(b.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn gap_formula_by_hand() {
        let w = gap_weights(&[0.3, 0.7]);
        let expected = [0.9, 1.2, 0.9];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_means_are_one() {
        // Both kinds have E[w_i] = 1; Var is (n-1)/n (ordinary) and
        // (n-1)/(n+1) (Bayesian), so the 3-sigma band is about 0.03.
        let n = 20;
        let draws = 10_000;
        let mut rng = stream(3, &[]);
        let mut sum_o = vec![0.0; n];
        let mut sum_b = vec![0.0; n];
        for _ in 0..draws {
            for (s, w) in sum_o.iter_mut().zip(ordinary_weights(n, &mut rng).weights) {
                *s += w;
            }
            for (s, w) in sum_b.iter_mut().zip(bayesian_weights(n, &mut rng).weights) {
                *s += w;
            }
        }
        let se_o = ((n - 1) as f64 / n as f64 / draws as f64).sqrt();
        let se_b = ((n - 1) as f64 / (n + 1) as f64 / draws as f64).sqrt();
        for i in 0..n {
            assert!(
                (sum_o[i] / draws as f64 - 1.0).abs() < 3.0 * se_o,
                "ordinary position {i}"
            );
            assert!(
                (sum_b[i] / draws as f64 - 1.0).abs() < 3.0 * se_b,
                "bayesian position {i}"
            );
        }
    }

    #[test]
    fn ordinary_weights_are_binomial() {
        // Chi-square goodness of fit of weight_0 against Binomial(5, 1/5).
        let n = 5;
        let draws = 100_000;
        let mut rng = stream(4, &[]);
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            counts[ordinary_weights(n, &mut rng).weights[0] as usize] += 1;
        }
        let pmf = |k: u32| {
            let c = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0][k as usize];
            c * 0.2f64.powi(k as i32) * 0.8f64.powi(5 - k as i32)
        };
        // Pool k = 4, 5 so every expected count exceeds 5.
        let mut chi2 = 0.0;
        for k in 0..4u32 {
            let e = pmf(k) * draws as f64;
            chi2 += (counts[k as usize] as f64 - e).powi(2) / e;
        }
        let e_tail = (pmf(4) + pmf(5)) * draws as f64;
        chi2 += ((counts[4] + counts[5]) as f64 - e_tail).powi(2) / e_tail;
        // 99.9th percentile of chi-square with 4 degrees of freedom.
        assert!(chi2 < 18.467, "chi2 = {chi2}");
    }

    #[test]
    fn identity_replicate_reproduces_full_refit() {
        let ds = simulate_logistic(300, &[-1.0, 0.8, -0.5], 5);
        let cfg = FitConfig::default();
        let spec = TransformSpec::identity();
        let ones = ReplicateWeights {
            weights: vec![1.0; ds.n()],
            kind: BootstrapKind::Ordinary,
            draw_index: 3,
        };
        let draw = fit_replicate(&ds, &spec, &cfg, &ones, &mut stream(0, &[])).unwrap();
        let full = fit(&ds, &spec, &cfg, &mut stream(0, &[])).unwrap();
        assert_eq!(draw.risks, predict(&full, &ds).unwrap());
        assert_eq!(draw.draw_index, 3);
    }

    #[test]
    fn ordinary_replicate_matches_physical_resample() {
        let ds = simulate_logistic(250, &[-0.5, 0.6, 0.3], 6);
        let cfg = FitConfig::default();
        let spec = TransformSpec::identity();
        let rw = ordinary_weights(ds.n(), &mut stream(7, &[]));
        let draw = fit_replicate(&ds, &spec, &cfg, &rw, &mut stream(0, &[])).unwrap();
        let rows: Vec<usize> = (0..ds.n())
            .flat_map(|i| std::iter::repeat_n(i, rw.weights[i] as usize))
            .collect();
        let physical = fit(&ds.select_rows(&rows), &spec, &cfg, &mut stream(0, &[])).unwrap();
        assert!((draw.model.intercept - physical.intercept).abs() < 1e-6);
        for (a, b) in draw.model.coefficients.iter().zip(&physical.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn draws_are_reproducible_and_redrawn_under_guard() {
        let ds = simulate_logistic(200, &[-2.0, 0.5], 8);
        let cfg = FitConfig::default();
        let spec = TransformSpec::identity();
        let a = draw_posterior(&ds, &spec, &cfg, BootstrapKind::Bayesian, 4, &mut stream(9, &[4])).unwrap();
        let b = draw_posterior(&ds, &spec, &cfg, BootstrapKind::Bayesian, 4, &mut stream(9, &[4])).unwrap();
        assert_eq!(a.risks, b.risks);
        assert_eq!(a.risks.len(), ds.n());

        let impossible = FitConfig {
            min_events: ds.n() + 1,
            ..FitConfig::default()
        };
        assert!(matches!(
            draw_posterior(&ds, &spec, &impossible, BootstrapKind::Ordinary, 2, &mut stream(9, &[])),
            Err(Error::ExcessRedraws { draw_index: 2, .. })
        ));
    }

    #[test]
    fn coefficient_uncertainty_summaries() {
        let ds = simulate_logistic(300, &[-1.0, 1.0, 0.0], 13);
        let spec = TransformSpec::identity();
        let mle = fit(&ds, &spec, &FitConfig::default(), &mut stream(0, &[])).unwrap();
        let rows = coefficient_uncertainty(&ds, &mle, &FitConfig::default(), 60, 1, None).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].term, "(intercept)");
        for r in &rows {
            assert_eq!(r.selection_probability, 1.0);
            assert!(r.lower <= r.estimate && r.estimate <= r.upper, "{r:?}");
        }
        let lasso = fit(&ds, &spec, &FitConfig::lasso(), &mut stream(0, &[])).unwrap();
        let rows = coefficient_uncertainty(&ds, &lasso, &FitConfig::lasso(), 20, 1, Some(2)).unwrap();
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.selection_probability)));
        assert!(rows[2].selection_probability < 1.0);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("bayesian".parse::<BootstrapKind>().unwrap(), BootstrapKind::Bayesian);
        assert!("parametric".parse::<BootstrapKind>().is_err());
        assert_eq!(BootstrapKind::Ordinary.to_string(), "ordinary");
    }
}
