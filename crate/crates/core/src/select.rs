//! Selection operators over evaluation records.

use std::fmt;

use crate::data::{Dataset, PredictionRecord};
use crate::error::{Error, Result};

const EQ_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// Largest class probability.
    MaxProb,
    /// Probability of one class.
    ClassProb(usize),
    /// Binary convention: probability of class 1 in a two-class problem.
    ScalarBinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparator {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Eq => (lhs - rhs).abs() <= EQ_TOLERANCE,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectorSpec {
    All,
    LabelEquals(usize),
    LabelInGroup(Vec<usize>),
    OutputCompare {
        projection: Projection,
        comparator: Comparator,
        threshold: f64,
    },
    /// Every member must hold.
    And(Vec<SelectorSpec>),
}

impl SelectorSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        let class_ok = |c: usize| {
            if c < k {
                Ok(())
            } else {
                Err(Error::IndexOutOfRange { index: c, k })
            }
        };
        match self {
            SelectorSpec::All => Ok(()),
            SelectorSpec::LabelEquals(c) => class_ok(*c),
            SelectorSpec::LabelInGroup(group) => {
                if group.is_empty() {
                    return Err(Error::InvalidSelector("empty label group".into()));
                }
                group.iter().try_for_each(|&c| class_ok(c))
            }
            SelectorSpec::OutputCompare {
                projection, threshold, ..
            } => {
                if !(0.0..=1.0).contains(threshold) {
                    return Err(Error::InvalidSelector(format!("threshold {threshold} outside [0, 1]")));
                }
                match projection {
                    Projection::ClassProb(c) => class_ok(*c),
                    Projection::ScalarBinary if k != 2 => Err(Error::InvalidSelector(format!(
                        "scalar binary projection needs 2 classes, dataset has {k}"
                    ))),
                    _ => Ok(()),
                }
            }
            SelectorSpec::And(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidSelector("empty conjunction".into()));
                }
                parts.iter().try_for_each(|p| p.validate(k))
            }
        }
    }

    pub fn matches(&self, record: &PredictionRecord) -> bool {
        match self {
            SelectorSpec::All => true,
            SelectorSpec::LabelEquals(c) => record.label() == *c,
            SelectorSpec::LabelInGroup(group) => group.contains(&record.label()),
            SelectorSpec::OutputCompare {
                projection,
                comparator,
                threshold,
            } => {
                let g = record.probs();
                let value = match projection {
                    Projection::MaxProb => g.max(),
                    Projection::ClassProb(c) => g[*c],
                    Projection::ScalarBinary => g[1],
                };
                comparator.holds(value, *threshold)
            }
            SelectorSpec::And(parts) => parts.iter().all(|p| p.matches(record)),
        }
    }

    /// Indices of matching records, in dataset order.
    pub fn matching_indices(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        self.validate(dataset.k())?;
        Ok(dataset
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| self.matches(r))
            .map(|(i, _)| i)
            .collect())
    }
}

/// The subset of `dataset` satisfying `selector`, order preserved. May be empty.
pub fn select(selector: &SelectorSpec, dataset: &Dataset) -> Result<Dataset> {
    let idx = selector.matching_indices(dataset)?;
    Ok(dataset.subset(idx))
}

impl fmt::Display for SelectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorSpec::All => write!(f, "all"),
            SelectorSpec::LabelEquals(c) => write!(f, "label={c}"),
            SelectorSpec::LabelInGroup(g) => {
                let parts: Vec<String> = g.iter().map(|c| c.to_string()).collect();
                write!(f, "label-in={}", parts.join(","))
            }
            SelectorSpec::OutputCompare {
                projection,
                comparator,
                threshold,
            } => {
                match projection {
                    Projection::MaxProb => write!(f, "maxprob")?,
                    Projection::ClassProb(c) => write!(f, "p[{c}]")?,
                    Projection::ScalarBinary => write!(f, "p")?,
                }
                write!(f, "{}{}", comparator.symbol(), threshold)
            }
            SelectorSpec::And(parts) => {
                let parts: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

fn parse_compare(token: &str) -> Result<SelectorSpec> {
    let bad = || Error::InvalidSelector(token.to_string());
    let (pos, op) = ["<=", ">=", "==", "<", ">", "="]
        .iter()
        .filter_map(|op| token.find(op).map(|p| (p, *op)))
        .min_by_key(|(p, op)| (*p, std::cmp::Reverse(op.len())))
        .ok_or_else(bad)?;
    let lhs = token[..pos].trim();
    let rhs = token[pos + op.len()..].trim();
    let comparator = match op {
        "<" => Comparator::Lt,
        "<=" => Comparator::Le,
        ">" => Comparator::Gt,
        ">=" => Comparator::Ge,
        _ => Comparator::Eq,
    };
    if lhs == "label" && comparator == Comparator::Eq {
        return rhs.parse().map(SelectorSpec::LabelEquals).map_err(|_| bad());
    }
    let projection = match lhs {
        "maxprob" => Projection::MaxProb,
        "p" => Projection::ScalarBinary,
        _ => {
            let c = lhs
                .strip_prefix("p[")
                .and_then(|r| r.strip_suffix(']'))
                .and_then(|c| c.parse().ok())
                .ok_or_else(bad)?;
            Projection::ClassProb(c)
        }
    };
    let threshold: f64 = rhs.parse().map_err(|_| bad())?;
    Ok(SelectorSpec::OutputCompare {
        projection,
        comparator,
        threshold,
    })
}

impl std::str::FromStr for SelectorSpec {
    type Err = Error;

    /// `all`, `label=3`, `label-in=1,4,5`, `maxprob>=0.66`, `p<0.33`, `p[2]>0.5`,
    /// joined by commas into a conjunction. Bare integers after `label-in=`
    /// extend that group.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts: Vec<SelectorSpec> = Vec::new();
        for token in s.split(',').map(str::trim) {
            if token.is_empty() {
                return Err(Error::InvalidSelector(s.to_string()));
            }
            if let Ok(c) = token.parse::<usize>() {
                match parts.last_mut() {
                    Some(SelectorSpec::LabelInGroup(g)) => g.push(c),
                    _ => return Err(Error::InvalidSelector(s.to_string())),
                }
                continue;
            }
            if token == "all" {
                parts.push(SelectorSpec::All);
            } else if let Some(rest) = token.strip_prefix("label-in=") {
                let c = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidSelector(token.to_string()))?;
                parts.push(SelectorSpec::LabelInGroup(vec![c]));
            } else {
                parts.push(parse_compare(token)?);
            }
        }
        Ok(match parts.len() {
            0 => return Err(Error::InvalidSelector(s.to_string())),
            1 => parts.pop().unwrap(),
            _ => SelectorSpec::And(parts),
        })
    }
}
