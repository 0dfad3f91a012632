use std::cmp::Ordering;

use super::{Bin, Binning, Region};
use crate::lens::LensedPair;

/// Largest number of points an adaptive bin may hold: `ceil(gamma * n)`, at least 1.
pub fn adaptive_capacity(gamma: f64, n: usize) -> usize {
    // The slack absorbs products like 0.1 * 30 landing one ulp above an integer.
    ((gamma * n as f64 - 1e-9).ceil() as usize).max(1)
}

/// k-d tree partition with median splits.
///
/// A node holding more than [`adaptive_capacity`] points is split on axis
/// `depth mod k'`. Points are ordered by that coordinate, then by index, and
/// the left child takes the first `ceil(n / 2)` of them, so the lower median
/// goes left. Leaves are emitted left to right.
pub fn bin_adaptive(pairs: &[LensedPair], gamma: f64) -> Binning {
    if pairs.is_empty() {
        return Binning { bins: Vec::new() };
    }
    let dim = pairs[0].output.len();
    let cap = adaptive_capacity(gamma, pairs.len());
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    let mut leaves = Vec::new();
    let lower = (0..dim)
        .map(|j| pairs.iter().map(|p| p.output[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let upper = (0..dim)
        .map(|j| pairs.iter().map(|p| p.output[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    split(pairs, &mut idx, 0, Region { lower, upper }, cap, &mut leaves);
    Binning { bins: leaves }
}

fn split(pairs: &[LensedPair], idx: &mut [usize], depth: usize, region: Region, cap: usize, leaves: &mut Vec<Bin>) {
    if idx.len() <= cap {
        let mut members = idx.to_vec();
        members.sort_unstable();
        leaves.push(Bin::new(members, pairs, region));
        return;
    }
    let axis = depth % region.lower.len();
    let by_axis =
        |a: &usize, b: &usize| -> Ordering { pairs[*a].output[axis].total_cmp(&pairs[*b].output[axis]).then(a.cmp(b)) };
    let left_len = idx.len().div_ceil(2);
    idx.select_nth_unstable_by(left_len - 1, by_axis);
    let cut = pairs[idx[left_len - 1]].output[axis];
    let (left, right) = idx.split_at_mut(left_len);

    let mut left_region = region.clone();
    left_region.upper[axis] = cut;
    let mut right_region = region;
    right_region.lower[axis] = cut;
    split(pairs, left, depth + 1, left_region, cap, leaves);
    split(pairs, right, depth + 1, right_region, cap, leaves);
}
