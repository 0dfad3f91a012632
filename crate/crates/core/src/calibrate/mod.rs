//! Post-hoc calibrators fit on a validation split by negative log likelihood.

mod bcts;
mod golden;
mod histogram;
mod temperature;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub use bcts::{bcts_nll_grad, fit_bcts, fit_bcts_with, BctsOptions};
pub use golden::{golden_section_minimize, GoldenResult};
pub use histogram::{fit_histogram_binning, fit_histogram_binning_auto, HistogramBins, DEFAULT_HB_BIN_CHOICES};
pub use temperature::{fit_temperature, LOG_T_RANGE};

use crate::data::{Dataset, PredictionRecord, ProbabilityVector};
use crate::error::{Error, Result};

/// Floor on probabilities inside the log likelihood.
pub const NLL_FLOOR: f64 = 1e-12;
/// Floor used when reporting histogram-binning likelihoods.
pub const HB_NLL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Calibrator {
    TemperatureScaling { temperature: f64 },
    Bcts { temperature: f64, bias: Vec<f64> },
    HistogramBinning(HistogramBins),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub parameters: BTreeMap<String, Vec<f64>>,
    pub initial_nll: f64,
    pub final_nll: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean `-ln p[label]` with `p` floored at `floor`.
pub fn nll_from_probs(dataset: &Dataset, floor: f64) -> f64 {
    let total: f64 = dataset
        .records()
        .iter()
        .map(|r| -r.probs()[r.label()].max(floor).ln())
        .sum();
    total / dataset.len() as f64
}

/// Logit matrix and labels for fitting; records without logits use log-probabilities.
pub(crate) fn logit_rows(val: &Dataset) -> (Vec<Vec<f64>>, Vec<usize>) {
    let z = val.records().iter().map(|r| r.logits_or_log_probs(NLL_FLOOR)).collect();
    (z, val.labels())
}

pub(crate) fn check_validation(val: &Dataset) -> Result<()> {
    if val.len() < 2 {
        return Err(Error::TooFewRecords {
            needed: 2,
            found: val.len(),
        });
    }
    let first = val.records()[0].label();
    if val.records().iter().all(|r| r.label() == first) {
        return Err(Error::DegenerateValidation);
    }
    Ok(())
}

/// `-ln softmax(a)[label]`, computed stably.
pub(crate) fn neg_log_softmax(a: &[f64], label: usize) -> f64 {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - a[label]
}

impl Calibrator {
    pub fn validate(&self) -> Result<()> {
        let t_ok = |t: f64| t.is_finite() && t > 0.0;
        match self {
            Calibrator::TemperatureScaling { temperature } if !t_ok(*temperature) => {
                Err(Error::InvalidCalibrator(format!("temperature {temperature}")))
            }
            Calibrator::Bcts { temperature, bias } => {
                if !t_ok(*temperature) {
                    Err(Error::InvalidCalibrator(format!("temperature {temperature}")))
                } else if bias.len() < 2 || bias.iter().any(|b| !b.is_finite()) {
                    Err(Error::InvalidCalibrator(
                        "bias must be finite with at least two entries".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Calibrator::HistogramBinning(h) => h.validate(),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Calibrator::TemperatureScaling { .. } => "temperature",
            Calibrator::Bcts { .. } => "bcts",
            Calibrator::HistogramBinning(_) => "histogram",
        }
    }

    fn apply_record(&self, rec: &PredictionRecord) -> Result<PredictionRecord> {
        match self {
            Calibrator::TemperatureScaling { temperature } => {
                let z: Vec<f64> = rec
                    .logits_or_log_probs(NLL_FLOOR)
                    .iter()
                    .map(|v| v / temperature)
                    .collect();
                PredictionRecord::from_logits(z, rec.label())
            }
            Calibrator::Bcts { temperature, bias } => {
                if bias.len() != rec.k() {
                    return Err(Error::DimensionMismatch {
                        left: bias.len(),
                        right: rec.k(),
                    });
                }
                let z: Vec<f64> = rec
                    .logits_or_log_probs(NLL_FLOOR)
                    .iter()
                    .zip(bias)
                    .map(|(v, b)| v / temperature + b)
                    .collect();
                PredictionRecord::from_logits(z, rec.label())
            }
            Calibrator::HistogramBinning(h) => {
                let p = h.map(rec.probs().as_slice())?;
                PredictionRecord::from_probs(ProbabilityVector::new(p, crate::data::INTERNAL_TOLERANCE)?, rec.label())
            }
        }
    }

    /// JSON document `{variant, parameters}` with every number written as a
    /// 17-significant-digit decimal string.
    pub fn to_json(&self) -> Value {
        let s = |x: f64| Value::String(format!("{x:.16e}"));
        let list = |xs: &[f64]| Value::Array(xs.iter().map(|&x| s(x)).collect());
        let parameters = match self {
            Calibrator::TemperatureScaling { temperature } => json!({ "temperature": s(*temperature) }),
            Calibrator::Bcts { temperature, bias } => json!({ "temperature": s(*temperature), "bias": list(bias) }),
            Calibrator::HistogramBinning(h) => json!({
                "edges": h.edges.iter().map(|e| list(e)).collect::<Vec<_>>(),
                "values": h.values.iter().map(|v| list(v)).collect::<Vec<_>>(),
            }),
        };
        json!({ "variant": self.name(), "parameters": parameters })
    }

    pub fn from_json(doc: &Value) -> Result<Self> {
        let bad = |m: &str| Error::InvalidCalibrator(m.to_string());
        let num = |v: &Value| -> Result<f64> {
            match v {
                Value::String(s) => s.parse().map_err(|_| bad("bad number")),
                Value::Number(n) => n.as_f64().ok_or_else(|| bad("bad number")),
                _ => Err(bad("expected a number")),
            }
        };
        let list = |v: &Value| -> Result<Vec<f64>> {
            v.as_array()
                .ok_or_else(|| bad("expected a list"))?
                .iter()
                .map(num)
                .collect()
        };
        let table = |v: &Value| -> Result<Vec<Vec<f64>>> {
            v.as_array()
                .ok_or_else(|| bad("expected a list of lists"))?
                .iter()
                .map(list)
                .collect()
        };
        let empty = Map::new();
        let params = doc.get("parameters").and_then(Value::as_object).unwrap_or(&empty);
        let field = |k: &str| params.get(k).ok_or_else(|| bad(&format!("missing parameter {k}")));
        let cal = match doc.get("variant").and_then(Value::as_str) {
            Some("temperature") => Calibrator::TemperatureScaling {
                temperature: num(field("temperature")?)?,
            },
            Some("bcts") => Calibrator::Bcts {
                temperature: num(field("temperature")?)?,
                bias: list(field("bias")?)?,
            },
            Some("histogram") => Calibrator::HistogramBinning(HistogramBins {
                edges: table(field("edges")?)?,
                values: table(field("values")?)?,
            }),
            other => return Err(bad(&format!("unknown variant {other:?}"))),
        };
        cal.validate()?;
        Ok(cal)
    }
}

/// Maps every record through `cal`; labels and order are kept.
pub fn apply_calibrator(cal: &Calibrator, dataset: &Dataset) -> Result<Dataset> {
    cal.validate()?;
    let records = dataset
        .records()
        .iter()
        .map(|r| cal.apply_record(r))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::from_parts(
        records,
        dataset.class_names().map(<[String]>::to_vec),
        dataset.k(),
    ))
}
