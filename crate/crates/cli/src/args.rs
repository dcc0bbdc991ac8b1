use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use predvoi::data::{load_csv_selected, load_csv_weighted, Dataset, TransformSpec};
use predvoi::model::{FitConfig, FittedModel, Penalty};
use predvoi::netbenefit::{default_grid, threshold_grid, Threshold};
use predvoi::resample::BootstrapKind;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "predvoi",
    version,
    about = "Value of information analysis for clinical risk prediction models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a logistic risk model and write it as JSON with a coefficient table.
    Fit(FitArgs),
    /// Decision curve with apparent, optimism-corrected and Bayesian net benefit.
    Dca(DcaArgs),
    /// EVPI, relative EVPI and risk of decision reversal per threshold.
    Voi(VoiArgs),
    /// EVPI against development sample size from subsamples of a donor dataset.
    Sweep(SweepArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyArg {
    None,
    L1,
}

impl From<PenaltyArg> for Penalty {
    fn from(p: PenaltyArg) -> Penalty {
        match p {
            PenaltyArg::None => Penalty::None,
            PenaltyArg::L1 => Penalty::L1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Ordinary,
    Bayesian,
}

impl From<KindArg> for BootstrapKind {
    fn from(k: KindArg) -> BootstrapKind {
        match k {
            KindArg::Ordinary => BootstrapKind::Ordinary,
            KindArg::Bayesian => BootstrapKind::Bayesian,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Binary (0/1) outcome column.
    #[arg(long)]
    pub outcome: String,
    /// Optional case-weight column.
    #[arg(long)]
    pub weights: Option<String>,
    /// Comma-separated predictor columns; default is every other column.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
}

impl DataArgs {
    pub fn load(&self) -> CliResult<Dataset> {
        let ds = match &self.predictors {
            Some(names) => {
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                load_csv_selected(&self.data, &self.outcome, self.weights.as_deref(), &names)?
            }
            None => load_csv_weighted(&self.data, &self.outcome, self.weights.as_deref())?,
        };
        Ok(ds)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Seed of every random stream in the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (outputs do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for outputs and the run manifest.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelSpecArgs {
    #[arg(long, value_enum, default_value_t = PenaltyArg::None)]
    pub penalty: PenaltyArg,
    /// Cap a column from above, as COLUMN=VALUE; repeatable.
    #[arg(long, value_name = "COLUMN=VALUE")]
    pub cap: Vec<String>,
    /// Linear spline with one knot, as COLUMN=KNOT; repeatable.
    #[arg(long, value_name = "COLUMN=KNOT")]
    pub spline: Vec<String>,
    #[command(flatten)]
    pub refit: RefitArgs,
}

impl ModelSpecArgs {
    pub fn transform(&self) -> CliResult<TransformSpec> {
        let mut spec = TransformSpec::identity();
        for item in &self.cap {
            let (col, v) = parse_assignment(item, "--cap")?;
            spec = spec.cap_above(&col, v);
        }
        for item in &self.spline {
            let (col, v) = parse_assignment(item, "--spline")?;
            spec = spec.linear_spline(&col, v);
        }
        Ok(spec)
    }

    pub fn fit_config(&self) -> FitConfig {
        self.refit.config(self.penalty.into())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RefitArgs {
    /// Cross-validation folds for the LASSO penalty.
    #[arg(long, default_value_t = 10)]
    pub cv_folds: usize,
    /// Fits need at least this many events.
    #[arg(long, default_value_t = 8)]
    pub min_events: usize,
}

impl RefitArgs {
    pub fn config(&self, penalty: Penalty) -> FitConfig {
        FitConfig {
            penalty,
            cv_folds: self.cv_folds,
            min_events: self.min_events,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub spec: ModelSpecArgs,
    /// Bootstrap selection probabilities and percentile intervals.
    #[arg(long)]
    pub uncertainty: bool,
    /// Bootstrap optimism-corrected c-statistic.
    #[arg(long)]
    pub optimism: bool,
    #[arg(long, default_value_t = 1000)]
    pub n_boot: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PosteriorArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Comma list, START:STOP:STEP range, or `default` (0 to 0.99 by 0.01).
    #[arg(long, default_value = "default")]
    pub thresholds: String,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    pub n_boot: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Ordinary)]
    pub kind: KindArg,
    /// Penalty of the refits; defaults to that of the model.
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    #[command(flatten)]
    pub refit: RefitArgs,
}

impl PosteriorArgs {
    pub fn load_model(&self) -> CliResult<FittedModel> {
        let text = std::fs::read_to_string(&self.model)?;
        Ok(FittedModel::from_json(&text)?)
    }

    pub fn fit_config(&self, model: &FittedModel) -> FitConfig {
        let penalty = match self.penalty {
            Some(p) => p.into(),
            None if model.lambda.is_some() => Penalty::L1,
            None => Penalty::None,
        };
        self.refit.config(penalty)
    }

    pub fn grid(&self) -> CliResult<Vec<Threshold>> {
        parse_thresholds(&self.thresholds)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DcaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub posterior: PosteriorArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VoiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub posterior: PosteriorArgs,
    /// Also write every posterior draw (coefficients and risks).
    #[arg(long)]
    pub dump_draws: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub spec: ModelSpecArgs,
    /// Comma-separated sample sizes; default doubles from 500 up to the donor size.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, default_value = "0.01,0.02,0.05,0.1")]
    pub thresholds: String,
    /// Bootstrap replicates per EVPI run.
    #[arg(long, default_value_t = 1000)]
    pub n_boot: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Ordinary)]
    pub kind: KindArg,
    /// Subsamples with fewer events are discarded and redrawn.
    #[arg(long, default_value_t = 8)]
    pub subsample_min_events: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_assignment(item: &str, flag: &str) -> CliResult<(String, f64)> {
    let bad = || CliError::Usage(format!("{flag} expects COLUMN=NUMBER, got `{item}`"));
    let (col, v) = item.split_once('=').ok_or_else(bad)?;
    let v: f64 = v.trim().parse().map_err(|_| bad())?;
    Ok((col.trim().to_string(), v))
}

/// `default`, `START:STOP:STEP` (inclusive of STOP) or a comma list.
pub fn parse_thresholds(text: &str) -> CliResult<Vec<Threshold>> {
    let text = text.trim();
    if text == "default" {
        return Ok(default_grid());
    }
    let number = |s: &str| -> CliResult<f64> {
        s.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad threshold `{s}` in `{text}`")))
    };
    let values: Vec<f64> = if let Some((start, rest)) = text.split_once(':') {
        let (stop, step) = rest
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("range `{text}` needs START:STOP:STEP")))?;
        let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
        if !(step > 0.0) || stop < start {
            return Err(CliError::Usage(format!("empty or invalid range `{text}`")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
            .collect()
    } else {
        text.split(',').map(number).collect::<CliResult<_>>()?
    };
    threshold_grid(&values).map_err(|e| CliError::Usage(e.to_string()))
}
