//! One-vs-rest histogram binning followed by renormalization.

use std::collections::BTreeMap;

use super::{nll_from_probs, Calibrator, FitReport, HB_NLL_FLOOR};
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_HB_BIN_CHOICES: [usize; 4] = [10, 15, 25, 50];

/// Per-class bin edges over `[0, 1]` and the calibrated value of each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBins {
    pub edges: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    // Interior edges only: a value on an edge belongs to the upper bin, and 1.0 closes the last.
    let interior = &edges[1..edges.len() - 1];
    interior.partition_point(|&e| e <= x)
}

impl HistogramBins {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCalibrator(m));
        if self.edges.len() != self.values.len() || self.edges.len() < 2 {
            return bad("need matching edges and values for at least two classes".into());
        }
        for (c, (e, v)) in self.edges.iter().zip(&self.values).enumerate() {
            if e.len() < 2 || e.len() != v.len() + 1 {
                return bad(format!("class {c}: {} edges for {} values", e.len(), v.len()));
            }
            if e[0] != 0.0 || e[e.len() - 1] != 1.0 || e.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("class {c}: edges must increase strictly from 0 to 1"));
            }
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return bad(format!("class {c}: bin values must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.values.len()
    }

    /// Bin index of each class entry.
    pub fn bin_indices(&self, probs: &[f64]) -> Vec<usize> {
        probs.iter().zip(&self.edges).map(|(&p, e)| bin_of(e, p)).collect()
    }

    /// Replaces each entry by its bin value and renormalizes; falls back to
    /// uniform if every bin value is zero.
    pub fn map(&self, probs: &[f64]) -> Result<Vec<f64>> {
        if probs.len() != self.n_classes() {
            return Err(Error::DimensionMismatch {
                left: self.n_classes(),
                right: probs.len(),
            });
        }
        let raw: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(c, &p)| self.values[c][bin_of(&self.edges[c], p)])
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            Ok(raw.into_iter().map(|v| v / total).collect())
        } else {
            Ok(vec![1.0 / probs.len() as f64; probs.len()])
        }
    }
}

fn uniform_edges(n_bins: usize) -> Vec<f64> {
    (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect()
}

/// Per class, the fraction of validation records labelled with that class in
/// each uniform bin of its predicted probability. Empty bins keep their midpoint.
pub fn fit_histogram_binning(val: &Dataset, n_bins: usize) -> Result<(Calibrator, FitReport)> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter(
            "histogram binning needs at least one bin".into(),
        ));
    }
    if val.is_empty() {
        return Err(Error::Empty);
    }
    let k = val.k();
    let edges = uniform_edges(n_bins);
    let mut values = Vec::with_capacity(k);
    for c in 0..k {
        let mut count = vec![0usize; n_bins];
        let mut hits = vec![0usize; n_bins];
        for r in val.records() {
            let b = bin_of(&edges, r.probs()[c]);
            count[b] += 1;
            hits[b] += usize::from(r.label() == c);
        }
        values.push(
            (0..n_bins)
                .map(|b| {
                    if count[b] == 0 {
                        0.5 * (edges[b] + edges[b + 1])
                    } else {
                        hits[b] as f64 / count[b] as f64
                    }
                })
                .collect(),
        );
    }
    let bins = HistogramBins {
        edges: vec![edges; k],
        values,
    };
    let cal = Calibrator::HistogramBinning(bins);
    let calibrated = super::apply_calibrator(&cal, val)?;
    let report = FitReport {
        method: "histogram".into(),
        parameters: BTreeMap::from([("n_bins".to_string(), vec![n_bins as f64])]),
        initial_nll: nll_from_probs(val, HB_NLL_FLOOR),
        final_nll: nll_from_probs(&calibrated, HB_NLL_FLOOR),
        iterations: 0,
        converged: true,
    };
    Ok((cal, report))
}

/// Fits every bin count in `choices` and keeps the lowest validation NLL
/// (ties go to fewer bins).
pub fn fit_histogram_binning_auto(val: &Dataset, choices: &[usize]) -> Result<(Calibrator, FitReport)> {
    let mut best: Option<(Calibrator, FitReport)> = None;
    for &n in choices {
        let fit = fit_histogram_binning(val, n)?;
        if best.as_ref().is_none_or(|b| fit.1.final_nll < b.1.final_nll) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no bin counts to choose from".into()))
}
