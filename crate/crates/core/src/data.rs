//! Prediction records, one-hot targets, and probability simplex helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance applied when ingesting prediction files.
pub const INGEST_TOLERANCE: f64 = 1e-6;
/// Tolerance for simplex checks on internally produced vectors.
pub const INTERNAL_TOLERANCE: f64 = 1e-9;
/// Largest allowed disagreement between stored probabilities and `softmax(logits)`.
pub const LOGIT_AGREEMENT: f64 = 1e-6;

/// A point of the probability simplex with at least two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Checks `values` against the simplex and renormalizes the sum to one.
    pub fn new(values: Vec<f64>, tolerance: f64) -> Result<Self> {
        validate_simplex(&values, tolerance)
    }

    /// Binary convention: a scalar `p` stands for `[1 - p, p]`.
    pub fn from_binary(p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::EntryOutOfRange { index: 1, value: p });
        }
        Ok(Self(vec![1.0 - p, p]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// Class indices ordered by decreasing probability, ties by lowest index.
    pub fn ranked_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A one-hot label vector, or a lensed target with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetVector(Vec<f64>);

impl TargetVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn validate_simplex(values: &[f64], tolerance: f64) -> Result<ProbabilityVector> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if values.len() < 2 {
        return Err(Error::TooFewClasses(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    for (index, &value) in values.iter().enumerate() {
        if value < -tolerance || value > 1.0 + tolerance {
            return Err(Error::EntryOutOfRange { index, value });
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(Error::SumOutOfTolerance { sum, tolerance });
    }
    if (sum - 1.0).abs() <= 1e-12 && values.iter().all(|v| (0.0..=1.0).contains(v)) {
        return Ok(ProbabilityVector(values.to_vec()));
    }
    let clipped: Vec<f64> = values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let total: f64 = clipped.iter().sum();
    Ok(ProbabilityVector(clipped.into_iter().map(|v| v / total).collect()))
}

pub fn one_hot(label: usize, k: usize) -> Result<TargetVector> {
    if label >= k {
        return Err(Error::IndexOutOfRange { index: label, k });
    }
    let mut v = vec![0.0; k];
    v[label] = 1.0;
    Ok(TargetVector(v))
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbabilityVector> {
    if logits.len() < 2 {
        return Err(Error::TooFewClasses(logits.len()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(ProbabilityVector(softmax_unchecked(logits)))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One evaluation instance: classifier output plus the true class.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    probs: ProbabilityVector,
    logits: Option<Vec<f64>>,
    label: usize,
}

impl PredictionRecord {
    pub fn from_probs(probs: ProbabilityVector, label: usize) -> Result<Self> {
        if label >= probs.len() {
            return Err(Error::IndexOutOfRange {
                index: label,
                k: probs.len(),
            });
        }
        Ok(Self {
            probs,
            logits: None,
            label,
        })
    }

    pub fn from_logits(logits: Vec<f64>, label: usize) -> Result<Self> {
        let probs = softmax(&logits)?;
        let mut rec = Self::from_probs(probs, label)?;
        rec.logits = Some(logits);
        Ok(rec)
    }

    /// Both representations present: they must agree within [`LOGIT_AGREEMENT`].
    pub fn from_both(probs: ProbabilityVector, logits: Vec<f64>, label: usize) -> Result<Self> {
        let implied = softmax(&logits)?;
        if implied.len() != probs.len() {
            return Err(Error::InconsistentWidth {
                expected: probs.len(),
                found: implied.len(),
            });
        }
        let gap = implied
            .as_slice()
            .iter()
            .zip(probs.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap > LOGIT_AGREEMENT {
            return Err(Error::ProbsLogitsMismatch(gap));
        }
        let mut rec = Self::from_probs(probs, label)?;
        rec.logits = Some(logits);
        Ok(rec)
    }

    pub fn probs(&self) -> &ProbabilityVector {
        &self.probs
    }

    pub fn logits(&self) -> Option<&[f64]> {
        self.logits.as_deref()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn target(&self) -> TargetVector {
        let mut v = vec![0.0; self.k()];
        v[self.label] = 1.0;
        TargetVector(v)
    }

    /// Logits if stored, otherwise log-probabilities clamped at `floor`.
    pub fn logits_or_log_probs(&self, floor: f64) -> Vec<f64> {
        match &self.logits {
            Some(z) => z.clone(),
            None => self.probs.as_slice().iter().map(|p| p.max(floor).ln()).collect(),
        }
    }
}

/// A non-empty collection of records sharing one class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<PredictionRecord>,
    class_names: Option<Vec<String>>,
    k: usize,
}

impl Dataset {
    pub fn new(records: Vec<PredictionRecord>) -> Result<Self> {
        let first = records.first().ok_or(Error::Empty)?;
        let k = first.k();
        if let Some(bad) = records.iter().find(|r| r.k() != k) {
            return Err(Error::InconsistentWidth {
                expected: k,
                found: bad.k(),
            });
        }
        Ok(Self {
            records,
            class_names: None,
            k,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k {
            return Err(Error::InconsistentWidth {
                expected: self.k,
                found: names.len(),
            });
        }
        self.class_names = Some(names);
        Ok(self)
    }

    /// Subset by record indices, keeping `k` and class names even when empty.
    pub(crate) fn subset(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            records: indices.into_iter().map(|i| self.records[i].clone()).collect(),
            class_names: self.class_names.clone(),
            k: self.k,
        }
    }

    pub(crate) fn from_parts(records: Vec<PredictionRecord>, class_names: Option<Vec<String>>, k: usize) -> Self {
        Self {
            records,
            class_names,
            k,
        }
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simplex_accepts_exact_point() {
        let p = validate_simplex(&[0.7, 0.2, 0.1], 1e-9).unwrap();
        assert_eq!(p.as_slice(), &[0.7, 0.2, 0.1]);
    }

    #[test]
    fn simplex_renormalizes_within_tolerance() {
        let p = validate_simplex(&[0.5, 0.5, 1e-10], 1e-9).unwrap();
        let sum: f64 = p.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert!(p[2] > 0.0);
    }

    #[test]
    fn simplex_rejects_bad_sum() {
        assert!(matches!(
            validate_simplex(&[0.9, 0.3], 1e-9),
            Err(Error::SumOutOfTolerance { .. })
        ));
        assert!(matches!(
            validate_simplex(&[1.5, -0.5], 1e-9),
            Err(Error::EntryOutOfRange { index: 0, .. })
        ));
        assert_eq!(validate_simplex(&[], 1e-9), Err(Error::Empty));
    }

    #[test]
    fn one_hot_cases() {
        assert_eq!(one_hot(0, 3).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(one_hot(2, 3).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        assert!(matches!(one_hot(3, 3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().as_slice(), &[0.5, 0.5]);
        let p = softmax(&[2.0, 0.0]).unwrap();
        assert!((p[0] - 0.8808).abs() < 1e-4);
        assert!((p[1] - 0.1192).abs() < 1e-4);
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] < 1e-300);
        assert_eq!(softmax(&[f64::NAN, 0.0]), Err(Error::NonFiniteInput));
    }

    #[test]
    fn argmax_ties_go_low() {
        let p = ProbabilityVector::new(vec![0.4, 0.4, 0.2], 1e-9).unwrap();
        assert_eq!(p.argmax(), 0);
        assert_eq!(p.ranked_indices(), vec![0, 1, 2]);
    }

    #[test]
    fn record_checks_logit_agreement() {
        let probs = softmax(&[2.0, 0.0]).unwrap();
        assert!(PredictionRecord::from_both(probs.clone(), vec![2.0, 0.0], 0).is_ok());
        assert!(matches!(
            PredictionRecord::from_both(probs, vec![0.0, 2.0], 0),
            Err(Error::ProbsLogitsMismatch(_))
        ));
        assert!(PredictionRecord::from_logits(vec![0.0, 1.0], 2).is_err());
    }

    #[test]
    fn dataset_rejects_mixed_width() {
        let a = PredictionRecord::from_probs(ProbabilityVector::from_binary(0.3).unwrap(), 1).unwrap();
        let b = PredictionRecord::from_logits(vec![0.0, 0.0, 0.0], 0).unwrap();
        assert!(matches!(Dataset::new(vec![a, b]), Err(Error::InconsistentWidth { .. })));
        assert_eq!(Dataset::new(vec![]), Err(Error::Empty));
    }

    proptest! {
        #[test]
        fn softmax_is_a_simplex_point(z in prop::collection::vec(-50.0f64..50.0, 2..8)) {
            let p = softmax(&z).unwrap();
            prop_assert!(validate_simplex(p.as_slice(), 1e-9).is_ok());
        }

        #[test]
        fn softmax_shift_invariant(z in prop::collection::vec(-20.0f64..20.0, 2..8), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let a = softmax(&z).unwrap();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn one_hot_single_nonzero(k in 2usize..20, seed in 0usize..1000) {
            let label = seed % k;
            let t = one_hot(label, k).unwrap();
            prop_assert_eq!(t.as_slice().iter().filter(|v| **v != 0.0).count(), 1);
        }
    }
}
