use std::collections::BTreeMap;

use super::golden::golden_section_minimize;
use super::{check_validation, logit_rows, neg_log_softmax, Calibrator, FitReport};
use crate::data::Dataset;
use crate::error::Result;

/// Search interval for `ln T`.
pub const LOG_T_RANGE: (f64, f64) = (-4.0, 4.0);
const LOG_T_TOL: f64 = 1e-6;

pub(crate) fn temperature_nll(z: &[Vec<f64>], labels: &[usize], temperature: f64) -> f64 {
    let total: f64 = z
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
            neg_log_softmax(&scaled, y)
        })
        .sum();
    total / z.len() as f64
}

/// Temperature minimizing validation NLL of `softmax(z / T)`, by golden-section
/// search over `ln T`. A minimum on the edge of the search interval is
/// reported as not converged.
pub fn fit_temperature(val: &Dataset) -> Result<(Calibrator, FitReport)> {
    check_validation(val)?;
    let (z, labels) = logit_rows(val);
    let objective = |log_t: f64| temperature_nll(&z, &labels, log_t.exp());
    let initial_nll = objective(0.0);
    let search = golden_section_minimize(objective, LOG_T_RANGE.0, LOG_T_RANGE.1, LOG_T_TOL, 500);
    let on_edge = search.x - LOG_T_RANGE.0 < 2.0 * LOG_T_TOL || LOG_T_RANGE.1 - search.x < 2.0 * LOG_T_TOL;
    let (temperature, final_nll) = if search.fx <= initial_nll {
        (search.x.exp(), search.fx)
    } else {
        (1.0, initial_nll)
    };
    let report = FitReport {
        method: "temperature".into(),
        parameters: BTreeMap::from([("temperature".to_string(), vec![temperature])]),
        initial_nll,
        final_nll,
        iterations: search.iterations,
        converged: search.converged && !on_edge,
    };
    Ok((Calibrator::TemperatureScaling { temperature }, report))
}
