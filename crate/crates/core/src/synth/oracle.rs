//! Reference estimator written for clarity: explicit loops everywhere and no
//! code shared with the production binning or lens paths. Quadratic in the
//! worst case; meant for test-sized inputs.

use crate::data::{Dataset, PredictionRecord};
use crate::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::estimator::BinningSpec;
use crate::lens::LensSpec;
use crate::select::{Comparator, Projection, SelectorSpec};

fn keep(selector: &SelectorSpec, r: &PredictionRecord) -> bool {
    let p = r.probs().as_slice();
    match selector {
        SelectorSpec::All => true,
        SelectorSpec::LabelEquals(c) => r.label() == *c,
        SelectorSpec::LabelInGroup(g) => g.iter().any(|&c| c == r.label()),
        SelectorSpec::OutputCompare {
            projection,
            comparator,
            threshold,
        } => {
            let v = match projection {
                Projection::MaxProb => {
                    let mut m = p[0];
                    for &x in p {
                        if x > m {
                            m = x;
                        }
                    }
                    m
                }
                Projection::ClassProb(c) => p[*c],
                Projection::ScalarBinary => p[1],
            };
            let t = *threshold;
            match comparator {
                Comparator::Lt => v < t,
                Comparator::Le => v <= t,
                Comparator::Gt => v > t,
                Comparator::Ge => v >= t,
                Comparator::Eq => (v - t).abs() <= 1e-9,
            }
        }
        SelectorSpec::And(parts) => {
            for part in parts {
                if !keep(part, r) {
                    return false;
                }
            }
            true
        }
    }
}

fn lensed(lens: &LensSpec, r: &PredictionRecord) -> (Vec<f64>, Vec<f64>) {
    let p = r.probs().as_slice();
    let y = |i: usize| if i == r.label() { 1.0 } else { 0.0 };
    match lens {
        LensSpec::Full => (p.to_vec(), (0..p.len()).map(y).collect()),
        LensSpec::ClassConditional(c) => (vec![p[*c]], vec![y(*c)]),
        LensSpec::TopK(m) => {
            // Repeatedly take the largest remaining entry; the first index wins ties.
            let mut taken = vec![false; p.len()];
            let (mut out, mut tgt) = (Vec::new(), Vec::new());
            for _ in 0..*m {
                let mut best: Option<usize> = None;
                for i in 0..p.len() {
                    if taken[i] {
                        continue;
                    }
                    match best {
                        Some(b) if p[i] <= p[b] => {}
                        _ => best = Some(i),
                    }
                }
                let b = best.unwrap();
                taken[b] = true;
                out.push(p[b]);
                tgt.push(y(b));
            }
            (out, tgt)
        }
        LensSpec::Grouping(groups) => {
            let mut out = Vec::new();
            let mut tgt = Vec::new();
            for g in groups {
                let mut s = p[g[0]];
                let mut t = y(g[0]);
                for &i in &g[1..] {
                    s += p[i];
                    t += y(i);
                }
                out.push(s);
                tgt.push(t);
            }
            (out, tgt)
        }
    }
}

fn dist(spec: &DistanceSpec, g: &[f64], y: &[f64]) -> f64 {
    let k = g.len();
    match spec {
        DistanceSpec::Tvd => {
            if k == 1 {
                // binary completion [1-g, g] vs [1-y, y]
                0.5 * (((1.0 - g[0]) - (1.0 - y[0])).abs() + (g[0] - y[0]).abs())
            } else {
                let mut s = 0.0;
                for i in 0..k {
                    s += (g[i] - y[i]).abs();
                }
                s / 2.0
            }
        }
        DistanceSpec::L2 => {
            let mut s = 0.0;
            for i in 0..k {
                s += (g[i] - y[i]).powi(2);
            }
            s.sqrt()
        }
        DistanceSpec::InterInterval { low, high } => {
            let yb = y[0];
            if yb < *low {
                low - yb
            } else if yb > *high {
                yb - high
            } else {
                0.0
            }
        }
        DistanceSpec::Weighted(m) => {
            let mut s = 0.0;
            for i in 0..k {
                let mut row = 0.0;
                for j in 0..k {
                    row += m.get(i, j) * (g[j] - y[j]);
                }
                s += (g[i] - y[i]) * row;
            }
            if s < 0.0 {
                0.0
            } else {
                s.sqrt()
            }
        }
    }
}

fn uniform_groups(points: &[Vec<f64>], bins: usize, low: f64, high: f64) -> Vec<Vec<usize>> {
    let mut cells: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for (i, x) in points.iter().enumerate() {
        let mut cell = Vec::new();
        for &v in x {
            let v = if v < low {
                low
            } else if v > high {
                high
            } else {
                v
            };
            let t = (v - low) / (high - low) * bins as f64;
            let mut found = bins - 1;
            for j in 0..bins {
                if t >= j as f64 && t < (j + 1) as f64 {
                    found = j;
                    break;
                }
            }
            cell.push(found);
        }
        match cells.iter_mut().find(|(c, _)| *c == cell) {
            Some((_, members)) => members.push(i),
            None => cells.push((cell, vec![i])),
        }
    }
    cells.into_iter().map(|(_, m)| m).collect()
}

fn adaptive_groups(points: &[Vec<f64>], members: Vec<usize>, depth: usize, cap: usize, out: &mut Vec<Vec<usize>>) {
    if members.len() <= cap {
        out.push(members);
        return;
    }
    let axis = depth % points[0].len();
    let mut sorted = members;
    sorted.sort_by(|&a, &b| points[a][axis].partial_cmp(&points[b][axis]).unwrap().then(a.cmp(&b)));
    let half = sorted.len() / 2 + sorted.len() % 2;
    let right = sorted.split_off(half);
    adaptive_groups(points, sorted, depth + 1, cap, out);
    adaptive_groups(points, right, depth + 1, cap, out);
}

/// Naive histogram GECE. Same contract and errors as [`crate::estimator::gece`].
pub fn oracle_gece(
    dataset: &Dataset,
    lens: &LensSpec,
    selector: &SelectorSpec,
    distance: &DistanceSpec,
    binning: &BinningSpec,
) -> Result<f64> {
    lens.validate(dataset.k())?;
    selector.validate(dataset.k())?;
    binning.validate()?;
    distance.check_dim(lens.output_dim(dataset.k()))?;

    let mut outs = Vec::new();
    let mut tgts = Vec::new();
    for r in dataset.records() {
        if keep(selector, r) {
            let (o, t) = lensed(lens, r);
            outs.push(o);
            tgts.push(t);
        }
    }
    let n = outs.len();
    if n == 0 {
        return Err(Error::EmptySelection);
    }
    let groups = match *binning {
        BinningSpec::Uniform { bins, low, high } => uniform_groups(&outs, bins, low, high),
        BinningSpec::Adaptive { gamma } => {
            let mut cap = (gamma * n as f64).ceil() as usize;
            // match the production slack for products like 0.1 * 30
            if cap > 1 && ((cap - 1) as f64) >= gamma * n as f64 - 1e-9 {
                cap -= 1;
            }
            let mut out = Vec::new();
            adaptive_groups(&outs, (0..n).collect(), 0, cap.max(1), &mut out);
            out
        }
    };
    let dim = outs[0].len();
    let mut total = 0.0;
    for members in groups {
        let mut g_bar = vec![0.0; dim];
        let mut y_bar = vec![0.0; dim];
        for &i in &members {
            for j in 0..dim {
                g_bar[j] += outs[i][j];
                y_bar[j] += tgts[i][j];
            }
        }
        for j in 0..dim {
            g_bar[j] /= members.len() as f64;
            y_bar[j] /= members.len() as f64;
        }
        total += members.len() as f64 / n as f64 * dist(distance, &g_bar, &y_bar);
    }
    Ok(total)
}
