//! Bootstrap diagnostics for the histogram estimator and descriptive
//! profiles of classifier outputs.
//!
//! Resampling RNG: every resample owns a ChaCha8 stream. The generator is
//! seeded with the user seed and its stream id is `(grid_index << 32) | resample_index`,
//! so resamples can run in any order or in parallel and still reproduce.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::estimator::{gece_lensed, lensed_points, Binning, BinningSpec};
use crate::lens::{LensSpec, LensedPair};
use crate::select::SelectorSpec;
use crate::stats::{mean, median_usize, std_dev};

/// Fallback adaptive-binning fraction when no plateau is detected.
pub const BASELINE_GAMMA: f64 = 0.1;
pub const DEFAULT_STABILITY_EPSILON: f64 = 0.005;
pub const DEFAULT_RESAMPLES: usize = 1000;

/// Powers of two from `2^0` down to `2^-8`.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..=8).map(|e| 0.5f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Sorted descending (coarse to fine).
    pub gammas: Vec<f64>,
    pub n_resamples: usize,
    pub seed: u64,
    pub stability_epsilon: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            gammas: default_gamma_grid(),
            n_resamples: DEFAULT_RESAMPLES,
            seed: 0,
            stability_epsilon: DEFAULT_STABILITY_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub gammas: Vec<f64>,
    pub mean_ece: Vec<f64>,
    pub std_ece: Vec<f64>,
    pub n_resamples: usize,
    pub recommended_gamma: f64,
    /// False when `recommended_gamma` is the baseline fallback.
    pub plateau_found: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub fractions: Vec<f64>,
    pub mean_ece: Vec<f64>,
    pub std_ece: Vec<f64>,
    pub n_resamples: usize,
    pub gamma: f64,
    pub seed: u64,
}

fn resample_rng(seed: u64, grid_index: usize, resample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((grid_index as u64) << 32) | resample as u64);
    rng
}

/// GECE on `draws` points drawn with replacement from `pairs`, one value per resample.
fn bootstrap_values(
    pairs: &[LensedPair],
    draws: usize,
    dist: &DistanceSpec,
    binning: &BinningSpec,
    n_resamples: usize,
    seed: u64,
    grid_index: usize,
) -> Result<Vec<f64>> {
    (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = resample_rng(seed, grid_index, r);
            let sample: Vec<LensedPair> = (0..draws)
                .map(|_| pairs[rng.random_range(0..pairs.len())].clone())
                .collect();
            gece_lensed(&sample, dist, binning).map(|(v, _)| v)
        })
        .collect()
}

/// Bootstrap mean and spread of adaptive-binning GECE across a grid of `gamma`.
///
/// The recommendation is the coarsest `gamma` whose mean differs from the
/// next finer one by less than `stability_epsilon`.
pub fn gamma_sweep(
    dataset: &Dataset,
    lens: &LensSpec,
    selector: &SelectorSpec,
    dist: &DistanceSpec,
    config: &SweepConfig,
) -> Result<SweepResult> {
    if config.gammas.is_empty() {
        return Err(Error::InvalidParameter("empty gamma grid".into()));
    }
    if config.gammas.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidParameter("gamma grid must be strictly descending".into()));
    }
    if config.n_resamples == 0 {
        return Err(Error::InvalidParameter("need at least one resample".into()));
    }
    for &gamma in &config.gammas {
        BinningSpec::Adaptive { gamma }.validate()?;
    }
    let pairs = lensed_points(dataset, lens, selector, dist)?;
    let mut mean_ece = Vec::with_capacity(config.gammas.len());
    let mut std_ece = Vec::with_capacity(config.gammas.len());
    for (gi, &gamma) in config.gammas.iter().enumerate() {
        let values = bootstrap_values(
            &pairs,
            pairs.len(),
            dist,
            &BinningSpec::Adaptive { gamma },
            config.n_resamples,
            config.seed,
            gi,
        )?;
        mean_ece.push(mean(&values));
        std_ece.push(std_dev(&values));
    }
    let plateau = mean_ece
        .windows(2)
        .position(|w| (w[0] - w[1]).abs() < config.stability_epsilon);
    Ok(SweepResult {
        recommended_gamma: plateau.map_or(BASELINE_GAMMA, |i| config.gammas[i]),
        plateau_found: plateau.is_some(),
        gammas: config.gammas.clone(),
        mean_ece,
        std_ece,
        n_resamples: config.n_resamples,
        seed: config.seed,
    })
}

/// Bootstrap spread of GECE when only `floor(f * N)` draws are available.
#[allow(clippy::too_many_arguments)]
pub fn variance_profile(
    dataset: &Dataset,
    lens: &LensSpec,
    selector: &SelectorSpec,
    dist: &DistanceSpec,
    gamma: f64,
    fractions: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<VarianceProfile> {
    let binning = BinningSpec::Adaptive { gamma };
    binning.validate()?;
    if n_resamples == 0 {
        return Err(Error::InvalidParameter("need at least one resample".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidParameter(format!("fraction {f} outside (0, 1]")));
    }
    let pairs = lensed_points(dataset, lens, selector, dist)?;
    let n = pairs.len();
    let mut mean_ece = Vec::with_capacity(fractions.len());
    let mut std_ece = Vec::with_capacity(fractions.len());
    for (fi, &fraction) in fractions.iter().enumerate() {
        let draws = (fraction * n as f64).floor() as usize;
        if draws == 0 {
            return Err(Error::FractionTooSmall { fraction, n });
        }
        let values = bootstrap_values(&pairs, draws, dist, &binning, n_resamples, seed, fi)?;
        mean_ece.push(mean(&values));
        std_ece.push(std_dev(&values));
    }
    Ok(VarianceProfile {
        fractions: fractions.to_vec(),
        mean_ece,
        std_ece,
        n_resamples,
        gamma,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub median: f64,
    pub min: usize,
    pub max: usize,
}

/// Median, min, and max points per bin.
pub fn bin_stats(binning: &Binning) -> Result<BinStats> {
    let occ = binning.occupancies();
    if occ.is_empty() {
        return Err(Error::Empty);
    }
    Ok(BinStats {
        median: median_usize(&occ),
        min: *occ.iter().min().unwrap(),
        max: *occ.iter().max().unwrap(),
    })
}

fn check_ks(ks: &[usize], k: usize) -> Result<()> {
    match ks.iter().find(|&&m| m == 0 || m > k) {
        Some(m) => Err(Error::InvalidParameter(format!("rank {m} outside 1..={k}"))),
        None => Ok(()),
    }
}

/// Mean of the `m`-th largest probability for each `m` in `ks` (1-based).
pub fn confidence_profile(dataset: &Dataset, ks: &[usize]) -> Result<Vec<f64>> {
    check_ks(ks, dataset.k())?;
    let sorted: Vec<Vec<f64>> = dataset
        .records()
        .iter()
        .map(|r| {
            let mut p = r.probs().as_slice().to_vec();
            p.sort_by(|a, b| b.total_cmp(a));
            p
        })
        .collect();
    Ok(ks
        .iter()
        .map(|&m| mean(&sorted.iter().map(|p| p[m - 1]).collect::<Vec<_>>()))
        .collect())
}

/// Fraction of records whose label is among the `m` largest outputs, per `m`.
/// Ranking ties go to the lowest class index.
pub fn topk_accuracy(dataset: &Dataset, ks: &[usize]) -> Result<Vec<f64>> {
    check_ks(ks, dataset.k())?;
    let ranks: Vec<usize> = dataset
        .records()
        .iter()
        .map(|r| r.probs().ranked_indices().iter().position(|&c| c == r.label()).unwrap())
        .collect();
    let n = ranks.len() as f64;
    Ok(ks
        .iter()
        .map(|&m| ranks.iter().filter(|&&rank| rank < m).count() as f64 / n)
        .collect())
}

/// Mean Shannon entropy of the outputs in nats, with `0 ln 0 = 0`.
pub fn mean_entropy(dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty);
    }
    let h: Vec<f64> = dataset
        .records()
        .iter()
        .map(|r| {
            -r.probs()
                .as_slice()
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>()
        })
        .collect();
    Ok(mean(&h))
}

/// Mean grouped output over the records whose label lies in group `group`.
pub fn group_conditional_confidence(dataset: &Dataset, grouping: &LensSpec, group: usize) -> Result<Vec<f64>> {
    let LensSpec::Grouping(groups) = grouping else {
        return Err(Error::InvalidParameter(format!("{grouping} is not a grouping lens")));
    };
    grouping.validate(dataset.k())?;
    let members = groups.get(group).ok_or(Error::IndexOutOfRange {
        index: group,
        k: groups.len(),
    })?;
    let selected = crate::select::select(&SelectorSpec::LabelInGroup(members.clone()), dataset)?;
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let outputs: Vec<Vec<f64>> = selected
        .records()
        .iter()
        .map(|r| grouping.transform(r.probs(), r.label()).output)
        .collect();
    Ok((0..groups.len())
        .map(|j| mean(&outputs.iter().map(|o| o[j]).collect::<Vec<_>>()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PredictionRecord, ProbabilityVector};
    use crate::estimator::bin_uniform;

    fn records(rows: &[(&[f64], usize)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .map(|(p, l)| {
                    PredictionRecord::from_probs(ProbabilityVector::new(p.to_vec(), 1e-9).unwrap(), *l).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn bin_stats_cases() {
        let pairs: Vec<LensedPair> = [0.1, 0.2, 0.45, 0.55, 0.6, 0.9]
            .iter()
            .map(|&x| LensedPair {
                output: vec![x],
                target: vec![0.0],
            })
            .collect();
        let b = bin_uniform(&pairs, 3, (0.0, 1.0));
        assert_eq!(
            bin_stats(&b).unwrap(),
            BinStats {
                median: 2.0,
                min: 1,
                max: 3
            }
        );
        let one = bin_uniform(&pairs, 1, (0.0, 1.0));
        assert_eq!(
            bin_stats(&one).unwrap(),
            BinStats {
                median: 6.0,
                min: 6,
                max: 6
            }
        );
        assert_eq!(bin_stats(&Binning { bins: vec![] }), Err(Error::Empty));
    }

    #[test]
    fn confidence_profile_cases() {
        let d = records(&[(&[0.5, 0.3, 0.2], 0)]);
        assert_eq!(confidence_profile(&d, &[1, 2, 3]).unwrap(), vec![0.5, 0.3, 0.2]);
        let d = records(&[(&[0.5, 0.5], 0), (&[1.0, 0.0], 1)]);
        assert_eq!(confidence_profile(&d, &[1]).unwrap(), vec![0.75]);
        let d = records(&[(&[0.25; 4], 0), (&[0.25; 4], 3)]);
        assert_eq!(confidence_profile(&d, &[1, 2, 3, 4]).unwrap(), vec![0.25; 4]);
        assert!(confidence_profile(&d, &[5]).is_err());
    }

    #[test]
    fn topk_accuracy_cases() {
        let d = records(&[(&[0.5, 0.3, 0.2], 1)]);
        assert_eq!(topk_accuracy(&d, &[1, 2, 3]).unwrap(), vec![0.0, 1.0, 1.0]);
        assert!(topk_accuracy(&d, &[]).unwrap().is_empty());
    }

    #[test]
    fn entropy_cases() {
        let uniform = records(&[(&[0.25; 4], 0)]);
        assert!((mean_entropy(&uniform).unwrap() - 4f64.ln()).abs() < 1e-12);
        let hot = records(&[(&[0.0, 1.0, 0.0, 0.0], 1)]);
        assert_eq!(mean_entropy(&hot).unwrap(), 0.0);
        let mix = records(&[(&[0.25; 4], 0), (&[0.0, 1.0, 0.0, 0.0], 1)]);
        assert!((mean_entropy(&mix).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn group_confidence_cases() {
        let lens = LensSpec::Grouping(vec![vec![0, 1], vec![2]]);
        let d = records(&[(&[0.5, 0.3, 0.2], 0), (&[0.5, 0.3, 0.2], 1)]);
        let g = group_conditional_confidence(&d, &lens, 0).unwrap();
        assert!((g[0] - 0.8).abs() < 1e-12 && (g[1] - 0.2).abs() < 1e-12);
        assert_eq!(group_conditional_confidence(&d, &lens, 1), Err(Error::EmptySelection));
        let singles = LensSpec::Grouping(vec![vec![0], vec![1], vec![2]]);
        let d = records(&[(&[0.5, 0.3, 0.2], 1), (&[0.1, 0.7, 0.2], 1), (&[0.9, 0.05, 0.05], 0)]);
        let g = group_conditional_confidence(&d, &singles, 1).unwrap();
        assert!((g[1] - 0.5).abs() < 1e-12);
    }

    fn small_binary() -> Dataset {
        let rows: Vec<(Vec<f64>, usize)> = (0..40)
            .map(|i| {
                let p = 0.05 + 0.9 * (i as f64) / 40.0;
                (vec![1.0 - p, p], usize::from(i % 3 == 0))
            })
            .collect();
        Dataset::new(
            rows.into_iter()
                .map(|(p, l)| PredictionRecord::from_probs(ProbabilityVector::new(p, 1e-9).unwrap(), l).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sweep_single_gamma_is_mean_of_resamples() {
        let d = small_binary();
        let cfg = SweepConfig {
            gammas: vec![0.25],
            n_resamples: 7,
            seed: 3,
            ..Default::default()
        };
        let r = gamma_sweep(&d, &LensSpec::Full, &SelectorSpec::All, &DistanceSpec::Tvd, &cfg).unwrap();
        let pairs = lensed_points(&d, &LensSpec::Full, &SelectorSpec::All, &DistanceSpec::Tvd).unwrap();
        let manual: Vec<f64> = (0..7)
            .map(|i| {
                let mut rng = resample_rng(3, 0, i);
                let s: Vec<LensedPair> = (0..pairs.len())
                    .map(|_| pairs[rng.random_range(0..pairs.len())].clone())
                    .collect();
                gece_lensed(&s, &DistanceSpec::Tvd, &BinningSpec::Adaptive { gamma: 0.25 })
                    .unwrap()
                    .0
            })
            .collect();
        assert_eq!(r.mean_ece, vec![mean(&manual)]);
        assert!(!r.plateau_found);
        assert_eq!(r.recommended_gamma, BASELINE_GAMMA);
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let d = small_binary();
        let cfg = SweepConfig {
            gammas: vec![0.25, 0.5],
            n_resamples: 2,
            ..Default::default()
        };
        assert!(gamma_sweep(&d, &LensSpec::Full, &SelectorSpec::All, &DistanceSpec::Tvd, &cfg).is_err());
    }

    #[test]
    fn variance_profile_basics() {
        let d = small_binary();
        let p = variance_profile(
            &d,
            &LensSpec::Full,
            &SelectorSpec::All,
            &DistanceSpec::Tvd,
            0.25,
            &[0.5, 1.0],
            1,
            9,
        )
        .unwrap();
        assert_eq!(p.std_ece, vec![0.0, 0.0]);
        let a = variance_profile(
            &d,
            &LensSpec::Full,
            &SelectorSpec::All,
            &DistanceSpec::Tvd,
            0.25,
            &[0.5, 1.0],
            20,
            9,
        )
        .unwrap();
        let b = variance_profile(
            &d,
            &LensSpec::Full,
            &SelectorSpec::All,
            &DistanceSpec::Tvd,
            0.25,
            &[0.5, 1.0],
            20,
            9,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            variance_profile(
                &d,
                &LensSpec::Full,
                &SelectorSpec::All,
                &DistanceSpec::Tvd,
                0.25,
                &[0.01],
                2,
                9
            ),
            Err(Error::FractionTooSmall { .. })
        ));
    }
}
