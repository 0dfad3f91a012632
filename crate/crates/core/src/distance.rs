//! Discrepancy functions between mean lensed outputs and mean lensed targets.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest eigenvalue accepted for a weight matrix.
pub const PSD_TOLERANCE: f64 = -1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum DistanceSpec {
    /// Total variation distance. A scalar (`k' = 1`) pair `(p, q)` is read as the
    /// binary vectors `[1-p, p]`, `[1-q, q]`, which gives `|p - q|`.
    Tvd,
    L2,
    /// Hinge on the mean target leaving `[low, high]`; needs scalar inputs.
    InterInterval {
        low: f64,
        high: f64,
    },
    /// `sqrt(dᵀ M d)` for a symmetric PSD matrix `M`. Build with [`validate_weight_matrix`].
    Weighted(WeightMatrix),
}

/// A symmetric positive semi-definite matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl WeightMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }
}

/// Symmetrizes `rows` as `(M + Mᵀ)/2` and rejects it if an eigenvalue falls
/// below [`PSD_TOLERANCE`].
pub fn validate_weight_matrix(rows: &[Vec<f64>]) -> Result<DistanceSpec> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            left: n,
            right: r.len(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            entries[i * n + j] = 0.5 * (rows[i][j] + rows[j][i]);
        }
    }
    let eigen = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &entries));
    let smallest = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < PSD_TOLERANCE {
        return Err(Error::NonPsdMatrix { eigenvalue: smallest });
    }
    Ok(DistanceSpec::Weighted(WeightMatrix { dim: n, entries }))
}

impl DistanceSpec {
    pub fn interval(low: f64, high: f64) -> Result<Self> {
        if !(0.0 <= low && low < high && high <= 1.0) {
            return Err(Error::InvalidDistance(format!(
                "interval [{low}, {high}] must satisfy 0 <= l < h <= 1"
            )));
        }
        Ok(DistanceSpec::InterInterval { low, high })
    }

    /// Checks that the distance accepts lensed vectors of dimension `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            DistanceSpec::InterInterval { .. } if dim != 1 => Err(Error::DistanceLensMismatch {
                distance: self.to_string(),
                dim,
            }),
            DistanceSpec::Weighted(m) if m.dim != dim => Err(Error::DistanceLensMismatch {
                distance: self.to_string(),
                dim,
            }),
            _ => Ok(()),
        }
    }

    /// Evaluates the distance after [`DistanceSpec::check_dim`] has passed.
    pub(crate) fn eval(&self, g_bar: &[f64], y_bar: &[f64]) -> f64 {
        match self {
            DistanceSpec::Tvd => {
                if g_bar.len() == 1 {
                    (g_bar[0] - y_bar[0]).abs()
                } else {
                    0.5 * g_bar.iter().zip(y_bar).map(|(g, y)| (g - y).abs()).sum::<f64>()
                }
            }
            DistanceSpec::L2 => g_bar
                .iter()
                .zip(y_bar)
                .map(|(g, y)| (g - y) * (g - y))
                .sum::<f64>()
                .sqrt(),
            DistanceSpec::InterInterval { low, high } => {
                let y = y_bar[0];
                f64::max(0.0, f64::max(low - y, y - high))
            }
            DistanceSpec::Weighted(m) => {
                let d: Vec<f64> = g_bar.iter().zip(y_bar).map(|(g, y)| g - y).collect();
                let mut q = 0.0;
                for i in 0..m.dim {
                    for j in 0..m.dim {
                        q += d[i] * m.get(i, j) * d[j];
                    }
                }
                // PSD within tolerance can leave a tiny negative quadratic form.
                q.max(0.0).sqrt()
            }
        }
    }
}

/// `d(g_bar, y_bar)` for the given spec.
pub fn distance(spec: &DistanceSpec, g_bar: &[f64], y_bar: &[f64]) -> Result<f64> {
    if g_bar.len() != y_bar.len() {
        return Err(Error::DimensionMismatch {
            left: g_bar.len(),
            right: y_bar.len(),
        });
    }
    if g_bar.is_empty() {
        return Err(Error::Empty);
    }
    if let DistanceSpec::InterInterval { .. } = spec {
        if g_bar.len() != 1 {
            return Err(Error::InterIntervalOnNonScalar(g_bar.len()));
        }
    }
    if let DistanceSpec::Weighted(m) = spec {
        if m.dim != g_bar.len() {
            return Err(Error::DimensionMismatch {
                left: m.dim,
                right: g_bar.len(),
            });
        }
    }
    Ok(spec.eval(g_bar, y_bar))
}

impl fmt::Display for DistanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceSpec::Tvd => write!(f, "tvd"),
            DistanceSpec::L2 => write!(f, "l2"),
            DistanceSpec::InterInterval { low, high } => write!(f, "interval:{low}:{high}"),
            DistanceSpec::Weighted(m) => {
                let rows: Vec<String> = m
                    .rows()
                    .iter()
                    .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
                    .collect();
                write!(f, "weighted:[{}]", rows.join(";"))
            }
        }
    }
}

impl std::str::FromStr for DistanceSpec {
    type Err = Error;

    /// `tvd`, `l2`, `interval:L:H`. The `weighted:<path>` form is resolved by the I/O layer.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "tvd" => return Ok(DistanceSpec::Tvd),
            "l2" => return Ok(DistanceSpec::L2),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("interval:") {
            let (l, h) = rest
                .split_once(':')
                .ok_or_else(|| Error::InvalidDistance(s.to_string()))?;
            let l: f64 = l.parse().map_err(|_| Error::InvalidDistance(s.to_string()))?;
            let h: f64 = h.parse().map_err(|_| Error::InvalidDistance(s.to_string()))?;
            return DistanceSpec::interval(l, h);
        }
        Err(Error::InvalidDistance(s.to_string()))
    }
}
