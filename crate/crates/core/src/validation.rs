//! Bootstrap optimism correction of apparent performance.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{format_sig12, Dataset};
use crate::error::{Error, Result};
use crate::model::{c_statistic, fit_design, predict, FitConfig, FittedModel};
use crate::netbenefit::{nb_empirical_model, Threshold};
use crate::numeric::KahanSum;
use crate::parallel::map_indexed;
use crate::resample::ordinary_weights;
use crate::rng::{domain, stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NbCurve,
    CStatistic,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::NbCurve => "nb_curve",
            Metric::CStatistic => "c_statistic",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb_curve" => Ok(Metric::NbCurve),
            "c_statistic" => Ok(Metric::CStatistic),
            other => Err(Error::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimismReport {
    pub metric: Metric,
    /// Grid of the net benefit curve; empty for the c-statistic.
    pub thresholds: Vec<f64>,
    pub apparent: Vec<f64>,
    pub optimism: Vec<f64>,
    pub corrected: Vec<f64>,
    pub n_bootstraps: usize,
    pub n_failed: usize,
}

/// Share of bootstrap refits that must succeed.
pub const MIN_SUCCESS_RATE: f64 = 0.8;

fn evaluate(metric: Metric, risks: &[f64], y: &[f64], w: Option<&[f64]>, grid: &[Threshold]) -> Result<Vec<f64>> {
    match metric {
        Metric::CStatistic => Ok(vec![c_statistic(risks, y, w)?]),
        Metric::NbCurve => grid.iter().map(|&z| nb_empirical_model(risks, y, z, w)).collect(),
    }
}

/// Harrell's optimism: refit on `n_boot` ordinary bootstrap replicates and
/// average the drop in the metric from the replicate to the original
/// sample, then subtract it from the apparent value.
///
/// Refits that fail are skipped and counted; at least 80% must succeed.
#[allow(clippy::too_many_arguments)]
pub fn harrell_optimism(
    ds: &Dataset,
    model: &FittedModel,
    cfg: &FitConfig,
    metric: Metric,
    n_boot: usize,
    grid: &[Threshold],
    seed: u64,
    threads: Option<usize>,
) -> Result<OptimismReport> {
    let n = ds.n();
    run(ds, model, cfg, metric, n_boot, grid, seed, threads, |_, rng| {
        ordinary_weights(n, rng).weights
    })
}

/// As [`harrell_optimism`] with caller-supplied replicate weights; the
/// seed only drives randomness inside the refits.
#[allow(clippy::too_many_arguments)]
pub fn optimism_from_replicates(
    ds: &Dataset,
    model: &FittedModel,
    cfg: &FitConfig,
    metric: Metric,
    replicates: &[Vec<f64>],
    grid: &[Threshold],
    seed: u64,
    threads: Option<usize>,
) -> Result<OptimismReport> {
    for r in replicates {
        if r.len() != ds.n() {
            return Err(Error::LengthMismatch {
                expected: ds.n(),
                actual: r.len(),
            });
        }
    }
    run(ds, model, cfg, metric, replicates.len(), grid, seed, threads, |b, _| {
        replicates[b].clone()
    })
}

#[allow(clippy::too_many_arguments)]
fn run<F>(
    ds: &Dataset,
    model: &FittedModel,
    cfg: &FitConfig,
    metric: Metric,
    n_boot: usize,
    grid: &[Threshold],
    seed: u64,
    threads: Option<usize>,
    weights_for: F,
) -> Result<OptimismReport>
where
    F: Fn(usize, &mut Stream) -> Vec<f64> + Sync + Send,
{
    if n_boot == 0 {
        return Err(Error::InvalidConfig("n_boot must be at least 1".into()));
    }
    if metric == Metric::NbCurve && grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    cfg.validate()?;
    let y = ds.outcomes();
    let base = ds.weights();
    let apparent = evaluate(metric, &predict(model, ds)?, y, base, grid)?;
    let design = model.design(ds)?;

    let outcomes = map_indexed(n_boot, threads, |b| {
        let mut rng = stream(seed, &[domain::OPTIMISM, b as u64]);
        let weights = weights_for(b, &mut rng);
        let replicate = design.reweighted(&weights)?;
        let refit = match fit_design(&replicate, cfg, &mut rng) {
            Ok(m) => m,
            Err(_) => return Ok(None),
        };
        let risks = refit.predict_design(&design)?;
        let on_replicate = match evaluate(metric, &risks, y, replicate.weights(), grid) {
            Ok(v) => v,
            Err(Error::DegenerateOutcome) => return Ok(None),
            Err(e) => return Err(e),
        };
        let on_original = evaluate(metric, &risks, y, base, grid)?;
        Ok(Some(
            on_replicate
                .iter()
                .zip(&on_original)
                .map(|(a, b)| a - b)
                .collect::<Vec<f64>>(),
        ))
    })?;

    let succeeded: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    if (succeeded.len() as f64) < MIN_SUCCESS_RATE * n_boot as f64 {
        return Err(Error::TooManyFailures {
            succeeded: succeeded.len(),
            attempted: n_boot,
        });
    }
    let optimism: Vec<f64> = (0..apparent.len())
        .map(|k| succeeded.iter().map(|d| d[k]).collect::<KahanSum>().value() / succeeded.len() as f64)
        .collect();
    let corrected = apparent.iter().zip(&optimism).map(|(a, o)| a - o).collect();
    Ok(OptimismReport {
        metric,
        thresholds: match metric {
            Metric::NbCurve => grid.iter().map(|z| z.value()).collect(),
            Metric::CStatistic => Vec::new(),
        },
        apparent,
        optimism,
        corrected,
        n_bootstraps: n_boot,
        n_failed: n_boot - succeeded.len(),
    })
}

impl OptimismReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["threshold", "apparent", "optimism", "corrected"])?;
        for k in 0..self.apparent.len() {
            let label = match self.metric {
                Metric::CStatistic => "c_statistic".to_string(),
                Metric::NbCurve => format_sig12(self.thresholds[k]),
            };
            out.write_record([
                label,
                format!("{:.6}", self.apparent[k]),
                format!("{:.6}", self.optimism[k]),
                format!("{:.6}", self.corrected[k]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
