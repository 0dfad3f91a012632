//! Histogram estimation of the generalized expected calibration error.
//!
//! A dataset is filtered by a selector, each remaining record is mapped
//! through a lens, the lensed outputs are partitioned into bins, and the
//! estimate is the occupancy-weighted sum of per-bin distances between the
//! mean lensed output and the mean lensed target.

mod adaptive;
mod uniform;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use adaptive::{adaptive_capacity, bin_adaptive};
pub use uniform::bin_uniform;

use crate::data::Dataset;
use crate::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::lens::{LensSpec, LensedPair};
use crate::select::SelectorSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinningSpec {
    /// `bins` equal-width cells per axis over `[low, high]`.
    Uniform { bins: usize, low: f64, high: f64 },
    /// k-d tree median splits until no bin holds more than `ceil(gamma * N)` points.
    Adaptive { gamma: f64 },
}

impl BinningSpec {
    pub fn uniform(bins: usize) -> Self {
        BinningSpec::Uniform {
            bins,
            low: 0.0,
            high: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BinningSpec::Uniform { bins, low, high } => {
                if bins == 0 {
                    Err(Error::InvalidBinning("uniform binning needs at least one bin".into()))
                } else if !(low.is_finite() && high.is_finite() && low < high) {
                    Err(Error::InvalidBinning(format!("bad range [{low}, {high}]")))
                } else {
                    Ok(())
                }
            }
            BinningSpec::Adaptive { gamma } => {
                if gamma > 0.0 && gamma <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidBinning(format!("gamma {gamma} outside (0, 1]")))
                }
            }
        }
    }

    pub fn apply(&self, pairs: &[LensedPair]) -> Result<Binning> {
        self.validate()?;
        Ok(match *self {
            BinningSpec::Uniform { bins, low, high } => bin_uniform(pairs, bins, (low, high)),
            BinningSpec::Adaptive { gamma } => bin_adaptive(pairs, gamma),
        })
    }
}

impl fmt::Display for BinningSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BinningSpec::Uniform { bins, low, high } if low == 0.0 && high == 1.0 => write!(f, "uniform:{bins}"),
            BinningSpec::Uniform { bins, low, high } => write!(f, "uniform:{bins}:{low}:{high}"),
            BinningSpec::Adaptive { gamma } => write!(f, "adaptive:{gamma}"),
        }
    }
}

impl std::str::FromStr for BinningSpec {
    type Err = Error;

    /// `uniform:B`, `uniform:B:LO:HI`, or `adaptive:GAMMA`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidBinning(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["uniform", b] => BinningSpec::uniform(b.parse().map_err(|_| bad())?),
            ["uniform", b, lo, hi] => BinningSpec::Uniform {
                bins: b.parse().map_err(|_| bad())?,
                low: lo.parse().map_err(|_| bad())?,
                high: hi.parse().map_err(|_| bad())?,
            },
            ["adaptive", g] => BinningSpec::Adaptive {
                gamma: g.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Axis-aligned box `[lower, upper]` covering a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    /// Indices into the lensed point list, ascending.
    pub members: Vec<usize>,
    pub mean_output: Vec<f64>,
    pub mean_target: Vec<f64>,
    pub region: Region,
}

impl Bin {
    pub(crate) fn new(members: Vec<usize>, pairs: &[LensedPair], region: Region) -> Self {
        let dim = pairs[members[0]].output.len();
        let mean_output = (0..dim)
            .map(|j| order_free_mean(members.iter().map(|&i| pairs[i].output[j])))
            .collect();
        let mean_target = (0..dim)
            .map(|j| order_free_mean(members.iter().map(|&i| pairs[i].target[j])))
            .collect();
        Self {
            members,
            mean_output,
            mean_target,
            region,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Mean computed over the values sorted ascending, so the result does not
/// depend on the order the points arrive in.
fn order_free_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// A partition of lensed points into non-empty bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub bins: Vec<Bin>,
}

impl Binning {
    pub fn n_points(&self) -> usize {
        self.bins.iter().map(Bin::len).sum()
    }

    pub fn occupancies(&self) -> Vec<usize> {
        self.bins.iter().map(Bin::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinResult {
    pub count: usize,
    pub mean_output: Vec<f64>,
    pub mean_target: Vec<f64>,
    pub distance: f64,
}

/// Textual echo of the four components plus the seed, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub lens: String,
    pub selector: String,
    pub distance: String,
    pub binning: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

impl MetricConfig {
    pub fn new(lens: &LensSpec, selector: &SelectorSpec, dist: &DistanceSpec, binning: &BinningSpec) -> Self {
        Self {
            lens: lens.to_string(),
            selector: selector.to_string(),
            distance: dist.to_string(),
            binning: binning.to_string(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub value: f64,
    #[serde(rename = "n")]
    pub n_selected: usize,
    pub bins: Vec<BinResult>,
    pub config: MetricConfig,
}

/// Occupancy-weighted sum of per-bin distances over an existing binning.
pub fn score_binning(binning: &Binning, dist: &DistanceSpec) -> (f64, Vec<BinResult>) {
    let n = binning.n_points() as f64;
    let per_bin: Vec<BinResult> = binning
        .bins
        .iter()
        .map(|b| BinResult {
            count: b.len(),
            distance: dist.eval(&b.mean_output, &b.mean_target),
            mean_output: b.mean_output.clone(),
            mean_target: b.mean_target.clone(),
        })
        .collect();
    let value = per_bin.iter().map(|b| b.count as f64 / n * b.distance).sum();
    (value, per_bin)
}

/// Estimate over already lensed points.
pub fn gece_lensed(pairs: &[LensedPair], dist: &DistanceSpec, binning: &BinningSpec) -> Result<(f64, Vec<BinResult>)> {
    let first = pairs.first().ok_or(Error::EmptySelection)?;
    dist.check_dim(first.output.len())?;
    let bins = binning.apply(pairs)?;
    Ok(score_binning(&bins, dist))
}

/// Validates the configuration against `dataset`, applies the selector and
/// the lens, and returns the lensed points in dataset order.
pub fn lensed_points(
    dataset: &Dataset,
    lens: &LensSpec,
    selector: &SelectorSpec,
    dist: &DistanceSpec,
) -> Result<Vec<LensedPair>> {
    lens.validate(dataset.k())?;
    dist.check_dim(lens.output_dim(dataset.k()))?;
    let idx = selector.matching_indices(dataset)?;
    if idx.is_empty() {
        return Err(Error::EmptySelection);
    }
    let records = dataset.records();
    Ok(idx
        .into_iter()
        .map(|i| lens.transform(records[i].probs(), records[i].label()))
        .collect())
}

pub fn gece(
    dataset: &Dataset,
    lens: &LensSpec,
    selector: &SelectorSpec,
    dist: &DistanceSpec,
    binning: &BinningSpec,
) -> Result<MetricResult> {
    binning.validate()?;
    let pairs = lensed_points(dataset, lens, selector, dist)?;
    let (value, bins) = gece_lensed(&pairs, dist, binning)?;
    Ok(MetricResult {
        value,
        n_selected: pairs.len(),
        bins,
        config: MetricConfig::new(lens, selector, dist, binning),
    })
}

/// Top-1 confidence against correctness, TVD, 15 uniform bins over `[0, 1]`.
pub fn traditional_ece(dataset: &Dataset) -> Result<MetricResult> {
    gece(
        dataset,
        &LensSpec::TopK(1),
        &SelectorSpec::All,
        &DistanceSpec::Tvd,
        &BinningSpec::uniform(15),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PredictionRecord, ProbabilityVector};

    /// Scalar outputs {0.9, 0.9, 0.7, 0.7}, correct {1, 0, 1, 1}.
    fn hand_fixture() -> Dataset {
        let rows = [(0.9, 1), (0.9, 0), (0.7, 1), (0.7, 1)];
        Dataset::new(
            rows.iter()
                .map(|&(p, l)| PredictionRecord::from_probs(ProbabilityVector::from_binary(p).unwrap(), l).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_fixture_two_bins() {
        let r = gece(
            &hand_fixture(),
            &LensSpec::TopK(1),
            &SelectorSpec::All,
            &DistanceSpec::Tvd,
            &BinningSpec::Uniform {
                bins: 2,
                low: 0.5,
                high: 1.0,
            },
        )
        .unwrap();
        assert!((r.value - 0.35).abs() < 1e-12);
        assert_eq!(r.bins.len(), 2);
        assert_eq!(r.bins[0].mean_output, vec![0.7]);
        assert_eq!(r.bins[1].mean_target, vec![0.5]);
    }

    #[test]
    fn hand_fixture_traditional() {
        let r = traditional_ece(&hand_fixture()).unwrap();
        assert!((r.value - 0.35).abs() < 1e-12);
        assert_eq!(r.config.binning, "uniform:15");
    }

    #[test]
    fn constant_classifier_exact_rate() {
        let g = ProbabilityVector::new(vec![0.6, 0.4], 1e-9).unwrap();
        let recs = (0..10)
            .map(|i| PredictionRecord::from_probs(g.clone(), usize::from(i >= 6)).unwrap())
            .collect();
        let d = Dataset::new(recs).unwrap();
        let r = gece(
            &d,
            &LensSpec::Full,
            &SelectorSpec::All,
            &DistanceSpec::Tvd,
            &BinningSpec::uniform(1),
        )
        .unwrap();
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn constant_confidence_traditional() {
        let recs = (0..10)
            .map(|i| {
                PredictionRecord::from_probs(ProbabilityVector::from_binary(0.8).unwrap(), usize::from(i < 6)).unwrap()
            })
            .collect();
        let r = traditional_ece(&Dataset::new(recs).unwrap()).unwrap();
        assert!((r.value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_bin_reduces_to_global_means() {
        let d = hand_fixture();
        let r = gece(
            &d,
            &LensSpec::Full,
            &SelectorSpec::All,
            &DistanceSpec::L2,
            &BinningSpec::uniform(1),
        )
        .unwrap();
        // mean output [0.2, 0.8], mean target [0.25, 0.75]
        let expected = (2.0f64 * 0.05 * 0.05).sqrt();
        assert!((r.value - expected).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let d = hand_fixture();
        assert_eq!(
            gece(
                &d,
                &LensSpec::Full,
                &SelectorSpec::LabelEquals(1),
                &DistanceSpec::Tvd,
                &BinningSpec::uniform(0)
            ),
            Err(Error::InvalidBinning("uniform binning needs at least one bin".into()))
        );
        let none: SelectorSpec = "p>0.95".parse().unwrap();
        assert_eq!(
            gece(&d, &LensSpec::Full, &none, &DistanceSpec::Tvd, &BinningSpec::uniform(2)),
            Err(Error::EmptySelection)
        );
        let interval = DistanceSpec::interval(0.0, 0.3).unwrap();
        assert!(matches!(
            gece(
                &d,
                &LensSpec::Full,
                &SelectorSpec::All,
                &interval,
                &BinningSpec::uniform(2)
            ),
            Err(Error::DistanceLensMismatch { dim: 2, .. })
        ));
    }

    #[test]
    fn binning_text_forms() {
        for s in ["uniform:15", "uniform:2:0.5:1", "adaptive:0.1"] {
            assert_eq!(s.parse::<BinningSpec>().unwrap().to_string(), s);
        }
        assert!("adaptive:0".parse::<BinningSpec>().is_err());
        assert!("adaptive:1.5".parse::<BinningSpec>().is_err());
        assert!("uniform:3:1:0".parse::<BinningSpec>().is_err());
    }

    #[test]
    fn metric_json_shape() {
        let r = traditional_ece(&hand_fixture()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert!(v.get("value").is_some());
        assert_eq!(v["n"], 4);
        assert_eq!(v["bins"][0]["count"], 2);
        assert!(v["bins"][0].get("mean_output").is_some());
        assert!(v["bins"][0].get("mean_target").is_some());
        assert!(v["bins"][0].get("distance").is_some());
        assert_eq!(v["config"]["lens"], "topk:1");
        let back: MetricResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
