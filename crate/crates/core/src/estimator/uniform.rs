use std::collections::BTreeMap;

use super::{Bin, Binning, Region};
use crate::lens::LensedPair;

/// Cell index along one axis. Interior boundaries go to the upper cell; the
/// top edge closes the last cell.
pub(crate) fn axis_cell(x: f64, bins: usize, low: f64, high: f64) -> usize {
    let x = x.clamp(low, high);
    let raw = ((x - low) / (high - low) * bins as f64).floor() as usize;
    raw.min(bins - 1)
}

/// Equal-width grid with `bins` cells per axis of the lensed space.
/// Empty cells are dropped; bins come out in lexicographic cell order.
pub fn bin_uniform(pairs: &[LensedPair], bins: usize, range: (f64, f64)) -> Binning {
    let (low, high) = range;
    let width = (high - low) / bins as f64;
    let mut cells: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let key: Vec<usize> = p.output.iter().map(|&x| axis_cell(x, bins, low, high)).collect();
        cells.entry(key).or_default().push(i);
    }
    let bins = cells
        .into_iter()
        .map(|(key, members)| {
            let region = Region {
                lower: key.iter().map(|&c| low + c as f64 * width).collect(),
                upper: key.iter().map(|&c| low + (c + 1) as f64 * width).collect(),
            };
            Bin::new(members, pairs, region)
        })
        .collect();
    Binning { bins }
}
