//! EVPI and relative EVPI as functions of development sample size, from
//! repeated subsamples of a large donor dataset.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{count_events, format_sig12, subsample_without_replacement, Dataset, TransformSpec};
use crate::error::{Error, Result};
use crate::model::{fit, FitConfig, FittedModel};
use crate::netbenefit::{case_study_grid, Threshold};
use crate::numeric::KahanSum;
use crate::parallel::map_indexed;
use crate::rng::{derive_seed, domain, stream, Stream};
use crate::voi::{run_voi, RelativeEvpi, VoiConfig};

/// Subsamples tried per replicate before the size is abandoned.
pub const MAX_DISCARDS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub thresholds: Vec<Threshold>,
    pub min_events: usize,
    /// Transform of the proposed model developed on each subsample.
    pub transform: TransformSpec,
    /// Fit of the proposed model; `voi.fit` governs the posterior refits.
    pub fit: FitConfig,
    /// Template for the per-replicate EVPI runs; its thresholds, seed and
    /// threads are overridden.
    pub voi: VoiConfig,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl SweepConfig {
    /// Default schedule for a donor of `donor_n` rows.
    pub fn new(donor_n: usize) -> Self {
        Self {
            sizes: doubling_sizes(donor_n),
            replicates: 10,
            thresholds: case_study_grid(),
            min_events: 8,
            transform: TransformSpec::identity(),
            fit: FitConfig::default(),
            voi: VoiConfig::default(),
            seed: 0,
            threads: None,
        }
    }

    pub fn validate(&self, donor_n: usize) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidConfig("no sample sizes".into()));
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) || self.sizes[0] == 0 {
            return Err(Error::InvalidConfig(
                "sizes must be positive and strictly increasing".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig("threshold grid is empty".into()));
        }
        let largest = *self.sizes.last().unwrap();
        if largest > donor_n {
            return Err(Error::SampleTooLarge {
                requested: largest,
                available: donor_n,
            });
        }
        self.fit.validate()?;
        VoiConfig {
            thresholds: self.thresholds.clone(),
            ..self.voi.clone()
        }
        .validate()
    }
}

/// 500, 1000, 2000, ... below `donor_n`, then `donor_n` itself.
pub fn doubling_sizes(donor_n: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut s = 500;
    while s < donor_n {
        sizes.push(s);
        s *= 2;
    }
    if donor_n > 0 {
        sizes.push(donor_n);
    }
    sizes
}

/// Streams of one replicate: subsampling, the proposed-model fit, and the
/// seed of its EVPI run.
pub fn replicate_streams(seed: u64, size: usize, replicate: usize) -> (Stream, Stream, u64) {
    let keys = [size as u64, replicate as u64];
    (
        stream(seed, &[domain::SWEEP_SUBSAMPLE, keys[0], keys[1]]),
        stream(seed, &[domain::SWEEP_FIT, keys[0], keys[1]]),
        derive_seed(seed, &[domain::SWEEP_VOI, keys[0], keys[1]]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelativeSummary {
    Value(RelativeEvpi),
    /// More than half of the replicates are +inf.
    Flagged,
}

impl fmt::Display for RelativeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelativeSummary::Value(v) => v.fmt(f),
            RelativeSummary::Flagged => f.write_str("flagged"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub evpi: Vec<f64>,
    pub relative: Vec<RelativeEvpi>,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    pub threshold: f64,
    pub mean_evpi: f64,
    pub median_relative_evpi: RelativeSummary,
    pub n_discarded: usize,
    /// Per-replicate values behind the summaries.
    pub evpi: Vec<f64>,
    pub relative: Vec<RelativeEvpi>,
}

/// Median with +inf above every finite value; undefined entries are left
/// out and an even count averages the middle pair.
pub fn median_relative(values: &[RelativeEvpi]) -> RelativeSummary {
    let infinite = values.iter().filter(|v| **v == RelativeEvpi::Infinite).count();
    if 2 * infinite > values.len() {
        return RelativeSummary::Flagged;
    }
    let mut ranked: Vec<f64> = values
        .iter()
        .filter_map(|v| match v {
            RelativeEvpi::Finite(x) => Some(*x),
            RelativeEvpi::Infinite => Some(f64::INFINITY),
            RelativeEvpi::Undefined => None,
        })
        .collect();
    if ranked.is_empty() {
        return RelativeSummary::Value(RelativeEvpi::Undefined);
    }
    ranked.sort_by(f64::total_cmp);
    let m = ranked.len();
    let median = if m % 2 == 1 {
        ranked[m / 2]
    } else {
        0.5 * (ranked[m / 2 - 1] + ranked[m / 2])
    };
    RelativeSummary::Value(if median.is_infinite() {
        RelativeEvpi::Infinite
    } else {
        RelativeEvpi::Finite(median)
    })
}

/// Develops the proposed model on a fresh subsample and runs the EVPI loop
/// on it. Subsamples below the event guard, on which the proposed model
/// separates, or whose bootstrap replicates keep failing the event guard,
/// are discarded and redrawn.
pub fn run_replicate(donor: &Dataset, cfg: &SweepConfig, size: usize, replicate: usize) -> Result<ReplicateOutcome> {
    let (mut sub_rng, mut fit_rng, voi_seed) = replicate_streams(cfg.seed, size, replicate);
    let voi_cfg = VoiConfig {
        thresholds: cfg.thresholds.clone(),
        seed: voi_seed,
        threads: None,
        keep_posterior: false,
        ..cfg.voi.clone()
    };
    let mut discarded = 0;
    loop {
        if discarded >= MAX_DISCARDS {
            return Err(Error::AllDiscarded {
                size,
                attempts: MAX_DISCARDS,
            });
        }
        let sample = subsample_without_replacement(donor, size, &mut sub_rng)?;
        if count_events(&sample) < cfg.min_events {
            discarded += 1;
            continue;
        }
        let model = match develop(&sample, cfg, &mut fit_rng) {
            Ok(model) => model,
            Err(Error::Separation { .. } | Error::TooFewEvents { .. } | Error::NoNonEvents) => {
                discarded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match run_voi(&sample, &model, &voi_cfg) {
            Ok(run) => {
                return Ok(ReplicateOutcome {
                    evpi: run.results.iter().map(|r| r.evpi).collect(),
                    relative: run.results.iter().map(|r| r.evpi_relative).collect(),
                    discarded,
                })
            }
            Err(Error::ExcessRedraws { .. }) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
}

fn develop(sample: &Dataset, cfg: &SweepConfig, rng: &mut Stream) -> Result<FittedModel> {
    fit(sample, &cfg.transform, &cfg.fit, rng)
}

/// One row per (size, threshold), sizes ascending.
pub fn run_sweep(donor: &Dataset, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate(donor.n())?;
    let units: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&s| (0..cfg.replicates).map(move |r| (s, r)))
        .collect();
    let outcomes = map_indexed(units.len(), cfg.threads, |u| {
        let (size, rep) = units[u];
        run_replicate(donor, cfg, size, rep)
    })?;

    let mut rows = Vec::new();
    for (s_idx, &size) in cfg.sizes.iter().enumerate() {
        let reps = &outcomes[s_idx * cfg.replicates..(s_idx + 1) * cfg.replicates];
        let discarded: usize = reps.iter().map(|r| r.discarded).sum();
        for (k, z) in cfg.thresholds.iter().enumerate() {
            let evpi: Vec<f64> = reps.iter().map(|r| r.evpi[k]).collect();
            let relative: Vec<RelativeEvpi> = reps.iter().map(|r| r.relative[k]).collect();
            rows.push(SweepRow {
                size,
                threshold: z.value(),
                mean_evpi: evpi.iter().copied().collect::<KahanSum>().value() / evpi.len() as f64,
                median_relative_evpi: median_relative(&relative),
                n_discarded: discarded,
                evpi,
                relative,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["size", "threshold", "mean_evpi", "median_relative_evpi", "n_discarded"])?;
    for r in rows {
        out.write_record([
            r.size.to_string(),
            format_sig12(r.threshold),
            format!("{:.5}", r.mean_evpi),
            r.median_relative_evpi.to_string(),
            r.n_discarded.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    write_sweep_csv(rows, std::fs::File::create(path)?)
}
