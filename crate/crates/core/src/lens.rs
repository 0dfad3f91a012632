//! Output/target transformation pairs that induce the classification problem
//! a calibration condition refers to.

use std::collections::BTreeMap;
use std::fmt;

use crate::data::{ProbabilityVector, TargetVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LensSpec {
    /// Identity on outputs and targets.
    Full,
    /// The `k_sel` largest outputs in descending order, with the matching targets.
    TopK(usize),
    /// Outputs and targets summed within each group of classes.
    Grouping(Vec<Vec<usize>>),
    /// Only the entry of one class.
    ClassConditional(usize),
}

/// A lensed output together with its lensed target, both of length `k'`.
#[derive(Debug, Clone, PartialEq)]
pub struct LensedPair {
    pub output: Vec<f64>,
    pub target: Vec<f64>,
}

impl LensSpec {
    /// Checks that the lens is well formed for `k` classes.
    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |reason: &str| Error::InvalidLensForK {
            lens: self.to_string(),
            k,
            reason: reason.to_string(),
        };
        match self {
            LensSpec::Full => Ok(()),
            LensSpec::TopK(m) => {
                if *m == 0 || *m > k {
                    Err(bad("top-k size must be in 1..=k"))
                } else {
                    Ok(())
                }
            }
            LensSpec::ClassConditional(c) => {
                if *c >= k {
                    Err(bad("class index out of range"))
                } else {
                    Ok(())
                }
            }
            LensSpec::Grouping(groups) => {
                let mut seen = vec![false; k];
                for g in groups {
                    if g.is_empty() {
                        return Err(bad("empty group"));
                    }
                    for &c in g {
                        if c >= k {
                            return Err(bad("class index out of range"));
                        }
                        if seen[c] {
                            return Err(bad("groups overlap"));
                        }
                        seen[c] = true;
                    }
                }
                if seen.iter().all(|s| *s) {
                    Ok(())
                } else {
                    Err(bad("groups do not cover every class"))
                }
            }
        }
    }

    /// Dimension `k'` of the lensed space for `k` input classes.
    pub fn output_dim(&self, k: usize) -> usize {
        match self {
            LensSpec::Full => k,
            LensSpec::TopK(m) => *m,
            LensSpec::Grouping(groups) => groups.len(),
            LensSpec::ClassConditional(_) => 1,
        }
    }

    /// Applies the lens without re-validating it; callers check once per dataset.
    pub(crate) fn transform(&self, g: &ProbabilityVector, label: usize) -> LensedPair {
        let probs = g.as_slice();
        let hot = |i: usize| if i == label { 1.0 } else { 0.0 };
        match self {
            LensSpec::Full => LensedPair {
                output: probs.to_vec(),
                target: (0..probs.len()).map(hot).collect(),
            },
            LensSpec::TopK(m) => {
                let ranked = &g.ranked_indices()[..*m];
                LensedPair {
                    output: ranked.iter().map(|&i| probs[i]).collect(),
                    target: ranked.iter().map(|&i| hot(i)).collect(),
                }
            }
            LensSpec::Grouping(groups) => {
                let sum = |f: &dyn Fn(usize) -> f64, members: &[usize]| {
                    members[1..].iter().fold(f(members[0]), |acc, &i| acc + f(i))
                };
                // Summing rounded entries can overshoot 1 by an ulp.
                LensedPair {
                    output: groups.iter().map(|grp| sum(&|i| probs[i], grp).min(1.0)).collect(),
                    target: groups.iter().map(|grp| sum(&hot, grp)).collect(),
                }
            }
            LensSpec::ClassConditional(c) => LensedPair {
                output: vec![probs[*c]],
                target: vec![hot(*c)],
            },
        }
    }
}

/// Applies `lens` to an output `g` and a one-hot target `y`.
pub fn apply_lens(lens: &LensSpec, g: &ProbabilityVector, y: &TargetVector) -> Result<LensedPair> {
    if g.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: g.len(),
            right: y.len(),
        });
    }
    lens.validate(g.len())?;
    let label = y
        .as_slice()
        .iter()
        .position(|v| *v == 1.0)
        .filter(|_| y.as_slice().iter().filter(|v| **v != 0.0).count() == 1)
        .ok_or_else(|| Error::InvalidLensForK {
            lens: lens.to_string(),
            k: g.len(),
            reason: "target is not one-hot".into(),
        })?;
    Ok(lens.transform(g, label))
}

/// Builds a grouping lens from a class-to-group map.
///
/// Group ids are compacted to `0..|G|` in order of first appearance when
/// scanning classes `0..k`.
pub fn make_grouping(group_map: &BTreeMap<usize, usize>, k: usize) -> Result<LensSpec> {
    if let Some((&c, _)) = group_map.iter().find(|(&c, _)| c >= k) {
        return Err(Error::IndexOutOfRange { index: c, k });
    }
    let mut order: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for c in 0..k {
        let gid = *group_map.get(&c).ok_or(Error::PartialMap(c))?;
        match order.iter().position(|&g| g == gid) {
            Some(j) => groups[j].push(c),
            None => {
                order.push(gid);
                groups.push(vec![c]);
            }
        }
    }
    if let Some(j) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::EmptyGroup(j));
    }
    Ok(LensSpec::Grouping(groups))
}

impl fmt::Display for LensSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LensSpec::Full => write!(f, "full"),
            LensSpec::TopK(m) => write!(f, "topk:{m}"),
            LensSpec::ClassConditional(c) => write!(f, "class:{c}"),
            LensSpec::Grouping(groups) => {
                let parts: Vec<String> = groups
                    .iter()
                    .map(|g| g.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+"))
                    .collect();
                write!(f, "groups:{}", parts.join("|"))
            }
        }
    }
}

impl std::str::FromStr for LensSpec {
    type Err = Error;

    /// Parses `full`, `topk:N`, `class:C`, and the inline `groups:0+1|2` form.
    /// The file-backed `group:<path>` form is resolved by the I/O layer.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |reason: &str| Error::InvalidSpec(format!("lens `{s}`: {reason}"));
        if s == "full" {
            return Ok(LensSpec::Full);
        }
        let (head, tail) = s.split_once(':').ok_or_else(|| bad("unknown lens"))?;
        match head {
            "topk" => tail.parse().map(LensSpec::TopK).map_err(|_| bad("bad top-k size")),
            "class" => tail
                .parse()
                .map(LensSpec::ClassConditional)
                .map_err(|_| bad("bad class index")),
            "groups" => {
                let groups = tail
                    .split('|')
                    .map(|g| {
                        g.split('+')
                            .map(|c| c.trim().parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("bad group list"))?;
                Ok(LensSpec::Grouping(groups))
            }
            "group" => Err(bad("group:<path> must be loaded from a file")),
            _ => Err(bad("unknown lens")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{one_hot, validate_simplex};
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbabilityVector {
        validate_simplex(v, 1e-9).unwrap()
    }

    #[test]
    fn topk_keeps_largest_in_order() {
        let out = apply_lens(&LensSpec::TopK(2), &pv(&[0.5, 0.3, 0.2]), &one_hot(1, 3).unwrap()).unwrap();
        assert_eq!(out.output, vec![0.5, 0.3]);
        assert_eq!(out.target, vec![0.0, 1.0]);
    }

    #[test]
    fn grouping_sums() {
        let lens = LensSpec::Grouping(vec![vec![0, 1], vec![2]]);
        let out = apply_lens(&lens, &pv(&[0.5, 0.3, 0.2]), &one_hot(2, 3).unwrap()).unwrap();
        assert_eq!(out.output, vec![0.8, 0.2]);
        assert_eq!(out.target, vec![0.0, 1.0]);
    }

    #[test]
    fn full_and_class_conditional() {
        let g = pv(&[0.5, 0.3, 0.2]);
        let y = one_hot(1, 3).unwrap();
        let full = apply_lens(&LensSpec::Full, &g, &y).unwrap();
        assert_eq!(full.output, g.as_slice());
        assert_eq!(full.target, y.as_slice());
        let cc = apply_lens(&LensSpec::ClassConditional(1), &g, &y).unwrap();
        assert_eq!(
            cc,
            LensedPair {
                output: vec![0.3],
                target: vec![1.0]
            }
        );
    }

    #[test]
    fn invalid_lenses() {
        let g = pv(&[0.5, 0.3, 0.2]);
        let y = one_hot(1, 3).unwrap();
        for lens in [
            LensSpec::TopK(0),
            LensSpec::TopK(4),
            LensSpec::ClassConditional(3),
            LensSpec::Grouping(vec![vec![0, 1], vec![1, 2]]),
            LensSpec::Grouping(vec![vec![0, 1]]),
            LensSpec::Grouping(vec![vec![0, 1, 2], vec![]]),
        ] {
            assert!(
                matches!(apply_lens(&lens, &g, &y), Err(Error::InvalidLensForK { .. })),
                "{lens}"
            );
        }
    }

    #[test]
    fn make_grouping_cases() {
        let m: BTreeMap<usize, usize> = [(0, 0), (1, 0), (2, 1)].into();
        assert_eq!(
            make_grouping(&m, 3).unwrap(),
            LensSpec::Grouping(vec![vec![0, 1], vec![2]])
        );
        let m: BTreeMap<usize, usize> = [(0, 0), (1, 1), (2, 2)].into();
        assert_eq!(
            make_grouping(&m, 3).unwrap(),
            LensSpec::Grouping(vec![vec![0], vec![1], vec![2]])
        );
        let m: BTreeMap<usize, usize> = [(0, 0), (1, 0)].into();
        assert_eq!(make_grouping(&m, 3), Err(Error::PartialMap(2)));
        // ids are compacted by first appearance
        let m: BTreeMap<usize, usize> = [(0, 7), (1, 3), (2, 7)].into();
        assert_eq!(
            make_grouping(&m, 3).unwrap(),
            LensSpec::Grouping(vec![vec![0, 2], vec![1]])
        );
    }

    #[test]
    fn text_forms() {
        for s in ["full", "topk:5", "class:12", "groups:0+1|2"] {
            assert_eq!(s.parse::<LensSpec>().unwrap().to_string(), s);
        }
        assert!("topk:x".parse::<LensSpec>().is_err());
        assert!("group:/tmp/x.csv".parse::<LensSpec>().is_err());
    }

    fn arb_point() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (2usize..7).prop_flat_map(|k| {
            (prop::collection::vec(0.001f64..1.0, k), 0..k).prop_map(|(raw, label)| {
                let s: f64 = raw.iter().sum();
                (raw.into_iter().map(|v| v / s).collect(), label)
            })
        })
    }

    proptest! {
        #[test]
        fn grouping_output_is_simplex((raw, label) in arb_point(), split in 1usize..6) {
            let k = raw.len();
            let cut = split.min(k - 1);
            let lens = LensSpec::Grouping(vec![(0..cut).collect(), (cut..k).collect()]);
            let out = lens.transform(&pv(&raw), label);
            prop_assert!(validate_simplex(&out.output, 1e-9).is_ok());
        }

        #[test]
        fn singleton_grouping_is_full((raw, label) in arb_point()) {
            let g = pv(&raw);
            let lens = LensSpec::Grouping((0..raw.len()).map(|c| vec![c]).collect());
            let a = lens.transform(&g, label);
            let b = LensSpec::Full.transform(&g, label);
            prop_assert_eq!(a.output.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.output.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(a.target, b.target);
        }

        #[test]
        fn topk_properties((raw, label) in arb_point()) {
            let g = pv(&raw);
            let k = raw.len();
            for m in 1..=k {
                let out = LensSpec::TopK(m).transform(&g, label);
                prop_assert!(out.output.iter().sum::<f64>() <= 1.0 + 1e-9);
                prop_assert!(out.output.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(out.target.iter().filter(|v| **v != 0.0).count() <= 1);
            }
            let full = LensSpec::TopK(k).transform(&g, label);
            let mut sorted = g.as_slice().to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            prop_assert_eq!(&full.output, &sorted);
            prop_assert_eq!(full.target.iter().sum::<f64>(), 1.0);
            let again = LensSpec::TopK(k).transform(&g, label);
            prop_assert_eq!(full, again);
        }
    }
}
