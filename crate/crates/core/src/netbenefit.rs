//! Net benefit of treating by a model, treating all and treating by the
//! correct risks, both empirically (observed outcomes) and as posterior
//! expectations (correct risks in place of outcomes).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{format_sig12, Dataset};
use crate::error::{Error, Result};
use crate::model::{predict, FittedModel};
use crate::numeric::KahanSum;

/// Thresholds reported in the acute-MI case study.
pub const CASE_STUDY_THRESHOLDS: [f64; 4] = [0.01, 0.02, 0.05, 0.10];

/// A risk threshold z in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(z: f64) -> Result<Self> {
        if (0.0..1.0).contains(&z) {
            Ok(Threshold(z))
        } else {
            Err(Error::InvalidThreshold(z))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Exchange rate z / (1 - z) of a false positive against a true positive.
    pub fn harm_weight(self) -> f64 {
        self.0 / (1.0 - self.0)
    }
}

impl TryFrom<f64> for Threshold {
    type Error = Error;

    fn try_from(z: f64) -> Result<Self> {
        Threshold::new(z)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// 0.00, 0.01, ..., 0.99.
pub fn default_grid() -> Vec<Threshold> {
    (0..100).map(|k| Threshold(k as f64 / 100.0)).collect()
}

pub fn case_study_grid() -> Vec<Threshold> {
    CASE_STUDY_THRESHOLDS.iter().map(|&z| Threshold(z)).collect()
}

/// Validates raw values; the grid must be non-empty, strictly increasing
/// and inside [0, 1).
pub fn threshold_grid(values: &[f64]) -> Result<Vec<Threshold>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    let grid = values.iter().map(|&z| Threshold::new(z)).collect::<Result<Vec<_>>>()?;
    if grid.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidConfig("thresholds must be strictly increasing".into()));
    }
    Ok(grid)
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

/// Weighted mean of per-individual contributions.
fn weighted_mean(n: usize, w: Option<&[f64]>, contribution: impl Fn(usize) -> f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    match w {
        None => {
            let mut s = KahanSum::new();
            for i in 0..n {
                s.add(contribution(i));
            }
            Ok(s.value() / n as f64)
        }
        Some(w) => {
            check_len(n, w.len())?;
            let mut s = KahanSum::new();
            let mut total = KahanSum::new();
            for (i, &wi) in w.iter().enumerate() {
                if wi != 0.0 {
                    s.add(wi * contribution(i));
                }
                total.add(wi);
            }
            let total = total.value();
            if !(total > 0.0) {
                return Err(Error::InvalidWeights("weights sum to zero".into()));
            }
            Ok(s.value() / total)
        }
    }
}

/// Y - (1 - Y) z / (1 - z), written as (Y - z) / (1 - z) so that its sign
/// is exactly that of Y - z.
fn contribution(y: f64, z: Threshold) -> f64 {
    (y - z.0) / (1.0 - z.0)
}

/// Mean of I(pi > z) [Y - (1 - Y) z / (1 - z)].
pub fn nb_empirical_model(pi: &[f64], y: &[f64], z: Threshold, w: Option<&[f64]>) -> Result<f64> {
    check_len(pi.len(), y.len())?;
    weighted_mean(pi.len(), w, |i| if pi[i] > z.0 { contribution(y[i], z) } else { 0.0 })
}

/// Mean of Y - (1 - Y) z / (1 - z).
pub fn nb_empirical_all(y: &[f64], z: Threshold, w: Option<&[f64]>) -> Result<f64> {
    weighted_mean(y.len(), w, |i| contribution(y[i], z))
}

/// Mean of I(pi > z) [p - (1 - p) z / (1 - z)].
pub fn nb_bayes_model(pi: &[f64], p: &[f64], z: Threshold, w: Option<&[f64]>) -> Result<f64> {
    nb_empirical_model(pi, p, z, w)
}

/// Mean of p - (1 - p) z / (1 - z).
pub fn nb_bayes_all(p: &[f64], z: Threshold, w: Option<&[f64]>) -> Result<f64> {
    nb_empirical_all(p, z, w)
}

/// Mean of I(p > z) [p - (1 - p) z / (1 - z)]: treating by the correct risks.
pub fn nb_bayes_max(p: &[f64], z: Threshold, w: Option<&[f64]>) -> Result<f64> {
    nb_empirical_model(p, p, z, w)
}

/// Net benefit of the three strategies under one posterior draw, aligned
/// with a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbDraw {
    pub draw_index: usize,
    pub nb_model: Vec<f64>,
    pub nb_all: Vec<f64>,
    pub nb_max: Vec<f64>,
}

/// Evaluates the model risks `pi` against the correct risks `p` of one
/// draw at every grid threshold.
pub fn evaluate_draw(
    draw_index: usize,
    pi: &[f64],
    p: &[f64],
    grid: &[Threshold],
    w: Option<&[f64]>,
) -> Result<NbDraw> {
    check_len(pi.len(), p.len())?;
    let mut draw = NbDraw {
        draw_index,
        nb_model: Vec::with_capacity(grid.len()),
        nb_all: Vec::with_capacity(grid.len()),
        nb_max: Vec::with_capacity(grid.len()),
    };
    for &z in grid {
        draw.nb_model.push(nb_bayes_model(pi, p, z, w)?);
        draw.nb_all.push(nb_bayes_all(p, z, w)?);
        draw.nb_max.push(nb_bayes_max(p, z, w)?);
    }
    Ok(draw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCurveRow {
    pub threshold: f64,
    pub nb_none: f64,
    pub nb_all: f64,
    pub nb_model_apparent: f64,
    pub nb_model_corrected: f64,
    pub nb_model_bayes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCurve {
    pub rows: Vec<DecisionCurveRow>,
}

/// Apparent, optimism-corrected and posterior-mean net benefit of the
/// model next to treat-all and treat-none.
///
/// `draws` must be evaluated on `grid`; `optimism` has one entry per grid
/// point.
pub fn decision_curve(
    ds: &Dataset,
    model: &FittedModel,
    grid: &[Threshold],
    draws: &[NbDraw],
    optimism: &[f64],
) -> Result<DecisionCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    if draws.is_empty() {
        return Err(Error::NoDraws);
    }
    check_len(grid.len(), optimism.len())?;
    for d in draws {
        check_len(grid.len(), d.nb_model.len())?;
    }
    let pi = predict(model, ds)?;
    let w = ds.weights();
    let mut rows = Vec::with_capacity(grid.len());
    for (k, &z) in grid.iter().enumerate() {
        let apparent = nb_empirical_model(&pi, ds.outcomes(), z, w)?;
        let bayes: KahanSum = draws.iter().map(|d| d.nb_model[k]).collect();
        rows.push(DecisionCurveRow {
            threshold: z.value(),
            nb_none: 0.0,
            nb_all: nb_empirical_all(ds.outcomes(), z, w)?,
            nb_model_apparent: apparent,
            nb_model_corrected: apparent - optimism[k],
            nb_model_bayes: bayes.value() / draws.len() as f64,
        });
    }
    Ok(DecisionCurve { rows })
}

impl DecisionCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "threshold",
            "nb_none",
            "nb_all",
            "nb_model_apparent",
            "nb_model_corrected",
            "nb_model_bayes",
        ])?;
        for r in &self.rows {
            out.write_record([
                format_sig12(r.threshold),
                format!("{:.4}", r.nb_none),
                format!("{:.4}", r.nb_all),
                format!("{:.4}", r.nb_model_apparent),
                format!("{:.4}", r.nb_model_corrected),
                format!("{:.4}", r.nb_model_bayes),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
