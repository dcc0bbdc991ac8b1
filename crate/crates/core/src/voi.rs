//! Monte Carlo expected value of perfect information for a proposed risk
//! model, with relative EVPI, risk of decision reversal and Monte Carlo
//! standard errors.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{format_sig12, Dataset};
use crate::error::{Error, Result};
use crate::model::{predict, FitConfig, FittedModel};
use crate::netbenefit::{default_grid, evaluate_draw, NbDraw, Threshold};
use crate::numeric::{sample_sd, KahanSum};
use crate::parallel::map_indexed;
use crate::resample::{draw_posterior_design, BootstrapKind, PosteriorDraw};
use crate::rng::{domain, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiConfig {
    pub n_draws: usize,
    pub kind: BootstrapKind,
    pub thresholds: Vec<Threshold>,
    pub seed: u64,
    /// Configuration used to refit the model on every replicate.
    pub fit: FitConfig,
    /// Worker threads; `None` uses the ambient pool. Results do not depend
    /// on it.
    pub threads: Option<usize>,
    /// Retain refit models and risk vectors of every draw.
    pub keep_posterior: bool,
}

impl Default for VoiConfig {
    fn default() -> Self {
        Self {
            n_draws: 1000,
            kind: BootstrapKind::Ordinary,
            thresholds: default_grid(),
            seed: 0,
            fit: FitConfig::default(),
            threads: None,
            keep_posterior: false,
        }
    }
}

impl VoiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 2 {
            return Err(Error::InvalidConfig("n_draws must be at least 2".into()));
        }
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig("threshold grid is empty".into()));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    All,
    Model,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::All => "all",
            Strategy::Model => "model",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelativeEvpi {
    Finite(f64),
    /// The model adds nothing over the best default strategy, yet perfect
    /// information would.
    Infinite,
    /// Neither the model nor perfect information improves on the defaults.
    Undefined,
}

impl RelativeEvpi {
    pub fn finite(self) -> Option<f64> {
        match self {
            RelativeEvpi::Finite(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for RelativeEvpi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelativeEvpi::Finite(v) => write!(f, "{v:.2}"),
            RelativeEvpi::Infinite => f.write_str("inf"),
            RelativeEvpi::Undefined => f.write_str("undef"),
        }
    }
}

impl Serialize for RelativeEvpi {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RelativeEvpi::Finite(v) => s.serialize_f64(*v),
            RelativeEvpi::Infinite => s.serialize_str("inf"),
            RelativeEvpi::Undefined => s.serialize_str("undef"),
        }
    }
}

impl<'de> Deserialize<'de> for RelativeEvpi {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Flag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(RelativeEvpi::Finite(v)),
            Repr::Flag(s) if s == "inf" => Ok(RelativeEvpi::Infinite),
            Repr::Flag(s) if s == "undef" => Ok(RelativeEvpi::Undefined),
            Repr::Flag(s) => Err(serde::de::Error::custom(format!("unknown relative EVPI `{s}`"))),
        }
    }
}

/// Posterior summaries at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiResult {
    pub threshold: f64,
    pub enb_model: f64,
    pub enb_all: f64,
    pub enb_max: f64,
    pub best_strategy: Strategy,
    pub evpi: f64,
    pub evpi_relative: RelativeEvpi,
    pub reversal_risk: f64,
    pub mcse_evpi: f64,
}

/// Net benefit draws aligned with their threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSet {
    pub thresholds: Vec<Threshold>,
    pub draws: Vec<NbDraw>,
}

/// Expected net benefit of the three strategies at one grid position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedNb {
    pub model: f64,
    pub all: f64,
    pub max: f64,
}

impl ExpectedNb {
    /// Strategy with the highest expectation; ties go to the simpler one.
    pub fn best(&self) -> Strategy {
        let mut best = (Strategy::None, 0.0);
        if self.all > best.1 {
            best = (Strategy::All, self.all);
        }
        if self.model > best.1 {
            best = (Strategy::Model, self.model);
        }
        best.0
    }

    fn best_value(&self) -> f64 {
        0.0f64.max(self.model).max(self.all)
    }
}

impl DrawSet {
    pub fn new(thresholds: Vec<Threshold>, draws: Vec<NbDraw>) -> Result<Self> {
        for d in &draws {
            for len in [d.nb_model.len(), d.nb_all.len(), d.nb_max.len()] {
                if len != thresholds.len() {
                    return Err(Error::LengthMismatch {
                        expected: thresholds.len(),
                        actual: len,
                    });
                }
            }
        }
        Ok(DrawSet { thresholds, draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Grid position of `z`.
    pub fn position(&self, z: Threshold) -> Result<usize> {
        self.thresholds
            .iter()
            .position(|t| *t == z)
            .ok_or_else(|| Error::InvalidConfig(format!("threshold {} is not on the draw grid", z.value())))
    }

    pub fn expected(&self, k: usize) -> Result<ExpectedNb> {
        if self.draws.is_empty() {
            return Err(Error::NoDraws);
        }
        let n = self.draws.len() as f64;
        let mean = |f: &dyn Fn(&NbDraw) -> f64| self.draws.iter().map(f).collect::<KahanSum>().value() / n;
        Ok(ExpectedNb {
            model: mean(&|d| d.nb_model[k]),
            all: mean(&|d| d.nb_all[k]),
            max: mean(&|d| d.nb_max[k]),
        })
    }

    fn strategy_nb(d: &NbDraw, k: usize, s: Strategy) -> f64 {
        match s {
            Strategy::None => 0.0,
            Strategy::All => d.nb_all[k],
            Strategy::Model => d.nb_model[k],
        }
    }

    pub fn evpi_at(&self, k: usize) -> Result<f64> {
        let e = self.expected(k)?;
        Ok(e.max - e.best_value())
    }

    pub fn relative_evpi_at(&self, k: usize) -> Result<RelativeEvpi> {
        let e = self.expected(k)?;
        let baseline = e.all.max(0.0);
        let numerator = e.max - baseline;
        let denominator = e.best_value() - baseline;
        Ok(if !(numerator > 0.0) {
            RelativeEvpi::Undefined
        } else if !(denominator > 0.0) {
            RelativeEvpi::Infinite
        } else {
            RelativeEvpi::Finite(numerator / denominator)
        })
    }

    pub fn reversal_risk_at(&self, k: usize) -> Result<f64> {
        let best = self.expected(k)?.best();
        let reversed = self
            .draws
            .iter()
            .filter(|d| {
                let own = Self::strategy_nb(d, k, best);
                [Strategy::None, Strategy::All, Strategy::Model]
                    .into_iter()
                    .any(|s| Self::strategy_nb(d, k, s) > own)
            })
            .count();
        Ok(reversed as f64 / self.draws.len() as f64)
    }

    pub fn mcse_evpi_at(&self, k: usize) -> Result<f64> {
        if self.draws.len() < 2 {
            return Err(Error::InvalidConfig(
                "Monte Carlo standard error needs at least 2 draws".into(),
            ));
        }
        let best = self.expected(k)?.best();
        let gaps: Vec<f64> = self
            .draws
            .iter()
            .map(|d| d.nb_max[k] - Self::strategy_nb(d, k, best))
            .collect();
        Ok(sample_sd(&gaps) / (gaps.len() as f64).sqrt())
    }

    pub fn summarize(&self) -> Result<Vec<VoiResult>> {
        (0..self.thresholds.len())
            .map(|k| {
                let e = self.expected(k)?;
                Ok(VoiResult {
                    threshold: self.thresholds[k].value(),
                    enb_model: e.model,
                    enb_all: e.all,
                    enb_max: e.max,
                    best_strategy: e.best(),
                    evpi: self.evpi_at(k)?,
                    evpi_relative: self.relative_evpi_at(k)?,
                    reversal_risk: self.reversal_risk_at(k)?,
                    mcse_evpi: self.mcse_evpi_at(k)?,
                })
            })
            .collect()
    }
}

/// E[NB_max] - max(0, E[NB_model], E[NB_all]).
pub fn evpi(draws: &DrawSet, z: Threshold) -> Result<f64> {
    draws.evpi_at(draws.position(z)?)
}

/// (E[NB_max] - max(0, E[NB_all])) / (max(0, E[NB_model], E[NB_all]) - max(0, E[NB_all])).
pub fn relative_evpi(draws: &DrawSet, z: Threshold) -> Result<RelativeEvpi> {
    draws.relative_evpi_at(draws.position(z)?)
}

/// Share of draws in which the strategy with the highest expected net
/// benefit is strictly beaten by another.
pub fn reversal_risk(draws: &DrawSet, z: Threshold) -> Result<f64> {
    draws.reversal_risk_at(draws.position(z)?)
}

/// sd(NB_max - NB_best) / sqrt(N) with the best strategy fixed from the
/// posterior means.
pub fn mcse_evpi(draws: &DrawSet, z: Threshold) -> Result<f64> {
    draws.mcse_evpi_at(draws.position(z)?)
}

#[derive(Debug, Clone)]
pub struct VoiRun {
    pub draws: DrawSet,
    pub results: Vec<VoiResult>,
    /// Empty unless `keep_posterior` was set.
    pub posterior: Vec<PosteriorDraw>,
    /// Replicates rejected by the event guard or separation, summed over
    /// draws.
    pub redraws: usize,
}

/// Draws `cfg.n_draws` bootstrap posterior samples of the correct model,
/// evaluates net benefit of the fixed predictions of `model` against each
/// and summarizes per threshold.
pub fn run_voi(ds: &Dataset, model: &FittedModel, cfg: &VoiConfig) -> Result<VoiRun> {
    cfg.validate()?;
    let pi = predict(model, ds)?;
    let design = model.design(ds)?;
    let per_draw = map_indexed(cfg.n_draws, cfg.threads, |i| {
        let mut rng = stream(cfg.seed, &[domain::POSTERIOR_DRAW, i as u64]);
        let draw = draw_posterior_design(
            &design,
            &model.input_columns,
            &model.transform,
            &cfg.fit,
            cfg.kind,
            i,
            &mut rng,
        )?;
        let nb = evaluate_draw(i, &pi, &draw.risks, &cfg.thresholds, ds.weights())?;
        Ok((nb, draw))
    })?;

    let mut redraws = 0;
    let mut draws = Vec::with_capacity(cfg.n_draws);
    let mut posterior = Vec::new();
    for (nb, draw) in per_draw {
        redraws += draw.redraws;
        draws.push(nb);
        if cfg.keep_posterior {
            posterior.push(draw);
        }
    }
    let draws = DrawSet::new(cfg.thresholds.clone(), draws)?;
    let results = draws.summarize()?;
    Ok(VoiRun {
        draws,
        results,
        posterior,
        redraws,
    })
}

pub fn write_results_csv<W: Write>(results: &[VoiResult], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "threshold",
        "enb_none",
        "enb_all",
        "enb_model",
        "enb_max",
        "best_strategy",
        "evpi",
        "evpi_relative",
        "reversal_risk",
        "mcse_evpi",
    ])?;
    for r in results {
        out.write_record([
            format_sig12(r.threshold),
            format!("{:.4}", 0.0),
            format!("{:.4}", r.enb_all),
            format!("{:.4}", r.enb_model),
            format!("{:.4}", r.enb_max),
            r.best_strategy.to_string(),
            format!("{:.5}", r.evpi),
            r.evpi_relative.to_string(),
            format!("{:.2}", r.reversal_risk),
            format!("{:.6}", r.mcse_evpi),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_results_csv(results: &[VoiResult], path: impl AsRef<Path>) -> Result<()> {
    write_results_csv(results, std::fs::File::create(path)?)
}

pub fn results_to_json(results: &[VoiResult]) -> Result<String> {
    Ok(serde_json::to_string_pretty(results)?)
}

/// One row per draw: refit coefficients, then the correct-risk vector on
/// the original rows (`p_0`, `p_1`, ...).
pub fn write_posterior_csv<W: Write>(posterior: &[PosteriorDraw], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let Some(first) = posterior.first() else {
        out.flush()?;
        return Ok(());
    };
    let mut header = vec!["draw_index".to_string(), "redraws".into(), "intercept".into()];
    header.extend(first.model.terms.iter().cloned());
    header.extend((0..first.risks.len()).map(|i| format!("p_{i}")));
    out.write_record(&header)?;
    for d in posterior {
        let mut row = vec![
            d.draw_index.to_string(),
            d.redraws.to_string(),
            format_sig12(d.model.intercept),
        ];
        row.extend(d.model.coefficients.iter().map(|&b| format_sig12(b)));
        row.extend(d.risks.iter().map(|&p| format_sig12(p)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
