//! Development datasets: CSV ingestion, column transforms and subsampling.

use std::borrow::Cow;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary outcomes plus a column-major matrix of finite predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcome_name: String,
    outcomes: Vec<f64>,
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        outcome_name: impl Into<String>,
        outcomes: Vec<f64>,
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some((row, &v)) = outcomes.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryOutcome {
                row,
                value: v.to_string(),
            });
        }
        if feature_names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: feature_names.len(),
                actual: columns.len(),
            });
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row,
                    column: name.clone(),
                });
            }
        }
        if let Some(w) = &weights {
            validate_weights(w, n)?;
        }
        Ok(Self {
            outcome_name: outcome_name.into(),
            outcomes,
            feature_names,
            columns,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Case weights, materializing ones when none were given.
    pub fn weights_or_ones(&self) -> Cow<'_, [f64]> {
        match &self.weights {
            Some(w) => Cow::Borrowed(w),
            None => Cow::Owned(vec![1.0; self.n()]),
        }
    }

    /// Same rows and columns with case weights replaced.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Dataset> {
        validate_weights(&weights, self.n())?;
        Ok(Dataset {
            weights: Some(weights),
            ..self.clone()
        })
    }

    /// Same rows and columns with existing case weights multiplied by `factors`.
    pub fn reweighted(&self, factors: &[f64]) -> Result<Dataset> {
        let combined = match &self.weights {
            Some(w) => w.iter().zip(factors).map(|(a, b)| a * b).collect(),
            None => factors.to_vec(),
        };
        if factors.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                actual: factors.len(),
            });
        }
        self.with_weights(combined)
    }

    pub fn without_weights(&self) -> Dataset {
        Dataset {
            weights: None,
            ..self.clone()
        }
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            outcome_name: self.outcome_name.clone(),
            outcomes: pick(&self.outcomes),
            feature_names: self.feature_names.clone(),
            columns: self.columns.iter().map(pick).collect(),
            weights: self.weights.as_ref().map(pick),
        }
    }

    /// Predictor values of row `i`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

fn validate_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: w.len(),
        });
    }
    if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
    }
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidWeights("weights sum to zero".into()));
    }
    Ok(())
}

/// Number of rows with outcome 1.
pub fn count_events(ds: &Dataset) -> usize {
    ds.outcomes.iter().filter(|&&y| y == 1.0).count()
}

/// Events and non-events among rows carrying positive weight.
pub fn count_weighted_support(ds: &Dataset) -> (usize, usize) {
    let w = ds.weights_or_ones();
    ds.outcomes
        .iter()
        .zip(w.iter())
        .filter(|(_, &w)| w > 0.0)
        .fold(
            (0, 0),
            |(e, ne), (&y, _)| {
                if y == 1.0 {
                    (e + 1, ne)
                } else {
                    (e, ne + 1)
                }
            },
        )
}

/// `m` distinct rows drawn uniformly, kept in their original order.
pub fn subsample_without_replacement<R: Rng + ?Sized>(ds: &Dataset, m: usize, rng: &mut R) -> Result<Dataset> {
    if m == 0 || m > ds.n() {
        return Err(Error::SampleTooLarge {
            requested: m,
            available: ds.n(),
        });
    }
    let mut rows = rand::seq::index::sample(rng, ds.n(), m).into_vec();
    rows.sort_unstable();
    Ok(ds.select_rows(&rows))
}

// ---------------------------------------------------------------------------
// Transforms

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    /// min(x, cap)
    CapAbove {
        cap: f64,
    },
    /// (x, max(x - knot, 0))
    LinearSpline {
        knot: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub column: String,
    #[serde(flatten)]
    pub kind: TransformKind,
}

/// Per-column transforms; columns not listed pass through unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub transforms: Vec<ColumnTransform>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn cap_above(mut self, column: &str, cap: f64) -> Self {
        self.transforms.push(ColumnTransform {
            column: column.into(),
            kind: TransformKind::CapAbove { cap },
        });
        self
    }

    pub fn linear_spline(mut self, column: &str, knot: f64) -> Self {
        self.transforms.push(ColumnTransform {
            column: column.into(),
            kind: TransformKind::LinearSpline { knot },
        });
        self
    }

    fn kind_for(&self, column: &str) -> TransformKind {
        self.transforms
            .iter()
            .find(|t| t.column == column)
            .map(|t| t.kind)
            .unwrap_or(TransformKind::Identity)
    }

    fn check(&self, input: &[String]) -> Result<()> {
        for (i, t) in self.transforms.iter().enumerate() {
            if !input.contains(&t.column) {
                return Err(Error::UnknownColumn(t.column.clone()));
            }
            if self.transforms[..i].iter().any(|u| u.column == t.column) {
                return Err(Error::InvalidTransform(format!(
                    "column `{}` transformed twice",
                    t.column
                )));
            }
            let param = match t.kind {
                TransformKind::Identity => 0.0,
                TransformKind::CapAbove { cap } => cap,
                TransformKind::LinearSpline { knot } => knot,
            };
            if !param.is_finite() {
                return Err(Error::InvalidTransform(format!(
                    "non-finite parameter for `{}`",
                    t.column
                )));
            }
        }
        Ok(())
    }

    /// Names of the design columns produced from `input` columns.
    pub fn output_names(&self, input: &[String]) -> Result<Vec<String>> {
        self.check(input)?;
        let mut out = Vec::with_capacity(input.len() + self.transforms.len());
        for name in input {
            out.push(name.clone());
            if let TransformKind::LinearSpline { knot } = self.kind_for(name) {
                out.push(hinge_name(name, knot));
            }
        }
        Ok(out)
    }
}

fn hinge_name(name: &str, knot: f64) -> String {
    format!("{name}_gt{knot}")
}

/// Applies `spec` to the predictor columns, leaving the input untouched.
pub fn apply_transforms(ds: &Dataset, spec: &TransformSpec) -> Result<Dataset> {
    spec.check(&ds.feature_names)?;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (name, col) in ds.feature_names.iter().zip(&ds.columns) {
        match spec.kind_for(name) {
            TransformKind::Identity => {
                names.push(name.clone());
                columns.push(col.clone());
            }
            TransformKind::CapAbove { cap } => {
                names.push(name.clone());
                columns.push(col.iter().map(|&x| x.min(cap)).collect());
            }
            TransformKind::LinearSpline { knot } => {
                names.push(name.clone());
                columns.push(col.clone());
                names.push(hinge_name(name, knot));
                columns.push(col.iter().map(|&x| (x - knot).max(0.0)).collect());
            }
        }
    }
    Dataset::new(
        ds.outcome_name.clone(),
        ds.outcomes.clone(),
        names,
        columns,
        ds.weights.clone(),
    )
}

// ---------------------------------------------------------------------------
// CSV

/// Reads a dataset from a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, outcome_column: &str) -> Result<Dataset> {
    load_csv_weighted(path, outcome_column, None)
}

pub fn load_csv_weighted(path: impl AsRef<Path>, outcome_column: &str, weight_column: Option<&str>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, outcome_column, weight_column)
}

/// Reads only the named predictors; other columns are ignored and may hold
/// anything.
pub fn load_csv_selected(
    path: impl AsRef<Path>,
    outcome_column: &str,
    weight_column: Option<&str>,
    predictors: &[&str],
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv_selected(file, outcome_column, weight_column, Some(predictors))
}

/// Every column other than the outcome (and weight) column becomes a predictor.
pub fn read_csv<R: Read>(reader: R, outcome_column: &str, weight_column: Option<&str>) -> Result<Dataset> {
    read_csv_selected(reader, outcome_column, weight_column, None)
}

/// As [`read_csv`], restricted to `predictors` (in that order) when given.
pub fn read_csv_selected<R: Read>(
    reader: R,
    outcome_column: &str,
    weight_column: Option<&str>,
    predictors: Option<&[&str]>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    };
    let y_idx = find(outcome_column)?;
    let w_idx = weight_column.map(find).transpose()?;
    let predictor_idx: Vec<usize> = match predictors {
        None => (0..headers.len()).filter(|&j| j != y_idx && Some(j) != w_idx).collect(),
        Some(names) => {
            let idx = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
            if let Some(k) = (1..idx.len()).find(|&k| idx[..k].contains(&idx[k])) {
                return Err(Error::InvalidConfig(format!("column `{}` selected twice", names[k])));
            }
            if idx.iter().any(|&j| j == y_idx || Some(j) == w_idx) {
                return Err(Error::InvalidConfig(
                    "outcome and weight columns cannot be predictors".into(),
                ));
            }
            idx
        }
    };

    let mut outcomes = Vec::new();
    let mut weights = Vec::new();
    let mut columns = vec![Vec::new(); predictor_idx.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let y = record.get(y_idx).unwrap_or("");
        outcomes.push(match y {
            "0" => 0.0,
            "1" => 1.0,
            "" | "NA" => {
                return Err(Error::MissingValue {
                    row,
                    column: outcome_column.to_owned(),
                })
            }
            other => {
                return Err(Error::NonBinaryOutcome {
                    row,
                    value: other.to_owned(),
                })
            }
        });
        if let Some(j) = w_idx {
            weights.push(parse_cell(&record, j, row, &headers[j])?);
        }
        for (col, &j) in columns.iter_mut().zip(&predictor_idx) {
            col.push(parse_cell(&record, j, row, &headers[j])?);
        }
    }
    Dataset::new(
        outcome_column,
        outcomes,
        predictor_idx.iter().map(|&j| headers[j].clone()).collect(),
        columns,
        w_idx.map(|_| weights),
    )
}

fn parse_cell(record: &csv::StringRecord, j: usize, row: usize, column: &str) -> Result<f64> {
    let raw = record.get(j).unwrap_or("");
    if raw.is_empty() || raw == "NA" {
        return Err(Error::MissingValue {
            row,
            column: column.to_owned(),
        });
    }
    let v: f64 = raw.parse().map_err(|_| Error::NonNumeric {
        row,
        column: column.to_owned(),
        value: raw.to_owned(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            row,
            column: column.to_owned(),
        });
    }
    Ok(v)
}

/// Formats `x` rounded to 12 significant digits, in the shortest text that
/// parses back to the rounded value.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    let mag = rounded.abs();
    if (1e-5..1e15).contains(&mag) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

/// Writes outcome, predictors and (if present) a `weight` column.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![ds.outcome_name.clone()];
    header.extend(ds.feature_names.iter().cloned());
    if ds.weights.is_some() {
        header.push("weight".into());
    }
    wtr.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec = vec![if ds.outcomes[i] == 1.0 { "1" } else { "0" }.to_string()];
        rec.extend(ds.columns.iter().map(|c| format_sig12(c[i])));
        if let Some(w) = &ds.weights {
            rec.push(format_sig12(w[i]));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file))
}
