//! Synthetic prediction sets whose calibration error is known by construction,
//! plus a naive reference implementation of the histogram estimator.

mod oracle;

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub use oracle::oracle_gece;

use crate::data::{Dataset, PredictionRecord, ProbabilityVector, INTERNAL_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// `g ~ Dirichlet(alpha * 1)`, `y ~ Categorical(g)`.
    Calibrated { alpha: f64, k: usize, n: usize },
    /// Class-1 probability alternates 0.3 / 0.7, labels are fair coin flips.
    TwoPointBinary { n: usize },
    /// Calibrated draw, reported as `softmax(inv_temp * ln g)`; labels still follow `g`.
    Sharpened {
        alpha: f64,
        k: usize,
        n: usize,
        inv_temp: f64,
    },
    /// Every record outputs `p` for class 1; labels are `Bernoulli(rate)`.
    ConstantBinary { p: f64, rate: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub generator: Generator,
    pub seed: u64,
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(format!("{self}: {m}")));
        match *self {
            Generator::Calibrated { n: 0, .. }
            | Generator::TwoPointBinary { n: 0 }
            | Generator::Sharpened { n: 0, .. }
            | Generator::ConstantBinary { n: 0, .. } => bad("need at least one record"),
            Generator::Calibrated { alpha, k, .. } | Generator::Sharpened { alpha, k, .. }
                if !(alpha.is_finite() && alpha > 0.0) || k < 2 =>
            {
                bad("alpha must be positive and k at least 2")
            }
            Generator::Sharpened { inv_temp, .. } if !(inv_temp.is_finite() && inv_temp > 1.0) => {
                bad("inverse temperature must exceed 1")
            }
            Generator::ConstantBinary { p, rate, .. } if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&rate) => {
                bad("p and rate must lie in [0, 1]")
            }
            _ => Ok(()),
        }
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, k: usize) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|d| d / total).collect();
        }
    }
}

fn categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just under one: take the last class with mass.
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}

/// `g^beta` renormalized, scaled by the maximum so it cannot underflow to all zeros.
fn sharpen(g: &[f64], beta: f64) -> Vec<f64> {
    let max = g.iter().copied().fold(0.0, f64::max);
    let powered: Vec<f64> = g.iter().map(|&v| (v / max).powf(beta)).collect();
    let total: f64 = powered.iter().sum();
    powered.into_iter().map(|v| v / total).collect()
}

pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.generator.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let record = |p: Vec<f64>, label: usize| -> Result<PredictionRecord> {
        PredictionRecord::from_probs(ProbabilityVector::new(p, INTERNAL_TOLERANCE)?, label)
    };
    let records = match spec.generator {
        Generator::Calibrated { alpha, k, n } | Generator::Sharpened { alpha, k, n, .. } => {
            let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            let inv_temp = match spec.generator {
                Generator::Sharpened { inv_temp, .. } => Some(inv_temp),
                _ => None,
            };
            (0..n)
                .map(|_| {
                    let g = dirichlet(&mut rng, &gamma, k);
                    let label = categorical(&mut rng, &g);
                    let out = inv_temp.map_or_else(|| g.clone(), |beta| sharpen(&g, beta));
                    record(out, label)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Generator::TwoPointBinary { n } => (0..n)
            .map(|i| {
                let p = if i % 2 == 0 { 0.3 } else { 0.7 };
                let label = usize::from(rng.random_bool(0.5));
                PredictionRecord::from_probs(ProbabilityVector::from_binary(p)?, label)
            })
            .collect::<Result<Vec<_>>>()?,
        Generator::ConstantBinary { p, rate, n } => (0..n)
            .map(|_| {
                let label = usize::from(rng.random_bool(rate));
                PredictionRecord::from_probs(ProbabilityVector::from_binary(p)?, label)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Dataset::new(records)
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Calibrated { alpha, k, n } => write!(f, "calibrated:{alpha}:{k}:{n}"),
            Generator::TwoPointBinary { n } => write!(f, "two-point:{n}"),
            Generator::Sharpened { alpha, k, n, inv_temp } => write!(f, "sharpened:{alpha}:{k}:{n}:{inv_temp}"),
            Generator::ConstantBinary { p, rate, n } => write!(f, "constant:{p}:{rate}:{n}"),
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = Error;

    /// `calibrated:ALPHA:K:N`, `two-point:N`, `sharpened:ALPHA:K:N:INV_TEMP`, `constant:P:RATE:N`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
        let u = |i: usize| parts[i].parse::<usize>().map_err(|_| bad());
        let g = match (parts[0], parts.len()) {
            ("calibrated", 4) => Generator::Calibrated {
                alpha: f(1)?,
                k: u(2)?,
                n: u(3)?,
            },
            ("two-point", 2) => Generator::TwoPointBinary { n: u(1)? },
            ("sharpened", 5) => Generator::Sharpened {
                alpha: f(1)?,
                k: u(2)?,
                n: u(3)?,
                inv_temp: f(4)?,
            },
            ("constant", 4) => Generator::ConstantBinary {
                p: f(1)?,
                rate: f(2)?,
                n: u(3)?,
            },
            _ => return Err(bad()),
        };
        g.validate()?;
        Ok(g)
    }
}
