//! Seeded data generators: an acute-MI-like cohort with a known risk model,
//! and generic logistic samples for tests.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, TransformSpec};
use crate::numeric::expit;
use crate::rng::stream;

pub const AMI_OUTCOME: &str = "day30";
pub const AMI_COLUMNS: [&str; 9] = [
    "age",
    "miloc_other",
    "miloc_anterior",
    "pmi",
    "sysbp",
    "killip",
    "pulse",
    "htn",
    "dia",
];
/// Seed of the bundled `data/synthetic_ami.csv`.
pub const BUNDLED_SEED: u64 = 20_211_006;
pub const BUNDLED_N: usize = 1000;

const INTERCEPT: f64 = -4.5453;

/// Systolic blood pressure capped at 100 and pulse as a linear spline with
/// a knot at 50.
pub fn ami_transform() -> TransformSpec {
    TransformSpec::identity()
        .cap_above("sysbp", 100.0)
        .linear_spline("pulse", 50.0)
}

/// True 30-day risk of one covariate row laid out as [`AMI_COLUMNS`].
pub fn ami_true_risk(row: &[f64]) -> f64 {
    let [age, other, anterior, pmi, sysbp, killip, pulse, htn, dia] = row else {
        panic!("expected {} covariates, got {}", AMI_COLUMNS.len(), row.len());
    };
    let eta = INTERCEPT + 0.075 * (age - 61.0) - 0.06 * (sysbp.min(100.0) - 100.0)
        + 0.004 * pulse
        + 0.025 * (pulse - 50.0).max(0.0)
        + 0.9 * killip
        + 0.35 * anterior
        + 0.3 * other
        + 0.3 * pmi
        + 0.1 * htn
        + 0.25 * dia;
    expit(eta)
}

fn rounded_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    Normal::new(mean, sd)
        .expect("valid normal")
        .sample(rng)
        .round()
        .clamp(lo, hi)
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Simulated cohort with about 7% 30-day mortality and a c-statistic of
/// the true model near 0.78.
pub fn generate_ami_like(n: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, &[]);
    let mut columns = vec![Vec::with_capacity(n); AMI_COLUMNS.len()];
    let mut outcomes = Vec::with_capacity(n);
    for _ in 0..n {
        let age = rounded_normal(&mut rng, 61.0, 12.0, 20.0, 95.0);
        let loc: f64 = rng.random();
        let anterior = if loc < 0.39 { 1.0 } else { 0.0 };
        let other = if (0.39..0.43).contains(&loc) { 1.0 } else { 0.0 };
        let pmi = bernoulli(&mut rng, 0.17);
        let sysbp = rounded_normal(&mut rng, 130.0, 24.0, 60.0, 250.0);
        let killip = bernoulli(&mut rng, 0.14);
        let pulse = rounded_normal(&mut rng, 76.0, 18.0, 30.0, 180.0);
        let htn = bernoulli(&mut rng, 0.38);
        let dia = bernoulli(&mut rng, 0.15);
        let row = [age, other, anterior, pmi, sysbp, killip, pulse, htn, dia];
        outcomes.push(bernoulli(&mut rng, ami_true_risk(&row)));
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    Dataset::new(
        AMI_OUTCOME,
        outcomes,
        AMI_COLUMNS.iter().map(|s| s.to_string()).collect(),
        columns,
        None,
    )
    .expect("generated data is valid")
}

/// The bundled development sample, regenerated in memory.
pub fn bundled_ami() -> Dataset {
    generate_ami_like(BUNDLED_N, BUNDLED_SEED)
}

/// Uniform(-2, 2) covariates `x0, x1, ...` and a logistic outcome with
/// coefficients `beta = [intercept, slopes...]`.
pub fn simulate_logistic(n: usize, beta: &[f64], seed: u64) -> Dataset {
    let mut rng = stream(seed, &[]);
    let p = beta.len().saturating_sub(1);
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
        .collect();
    let outcomes = (0..n)
        .map(|i| {
            let eta = beta[0] + (0..p).map(|j| beta[j + 1] * columns[j][i]).sum::<f64>();
            bernoulli(&mut rng, expit(eta))
        })
        .collect();
    Dataset::new("y", outcomes, (0..p).map(|j| format!("x{j}")).collect(), columns, None)
        .expect("simulated data is valid")
}
