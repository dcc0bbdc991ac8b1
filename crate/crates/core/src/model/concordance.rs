use crate::error::{Error, Result};

/// Weighted probability that an event receives a higher risk than a
/// non-event; tied risks count one half.
pub fn c_statistic(risks: &[f64], outcomes: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if risks.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            expected: outcomes.len(),
            actual: risks.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != outcomes.len() {
            return Err(Error::LengthMismatch {
                expected: outcomes.len(),
                actual: w.len(),
            });
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut order: Vec<usize> = (0..risks.len()).filter(|&i| weight(i) > 0.0).collect();
    order.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]));

    // Sweep tie groups in ascending risk, tracking non-event weight below.
    let mut below = 0.0;
    let mut concordant = 0.0;
    let mut total_events = 0.0;
    let mut total_non_events = 0.0;
    let mut start = 0;
    while start < order.len() {
        let r = risks[order[start]];
        let mut end = start;
        let (mut ev, mut ne) = (0.0, 0.0);
        while end < order.len() && risks[order[end]] == r {
            let i = order[end];
            if outcomes[i] == 1.0 {
                ev += weight(i);
            } else {
                ne += weight(i);
            }
            end += 1;
        }
        concordant += ev * (below + 0.5 * ne);
        below += ne;
        total_events += ev;
        total_non_events += ne;
        start = end;
    }
    if total_events == 0.0 || total_non_events == 0.0 {
        return Err(Error::DegenerateOutcome);
    }
    Ok(concordant / (total_events * total_non_events))
}
