//! Shared test oracles: independent brute-force enumerations, finite
//! differences, and simplex grids. These deliberately avoid the library's
//! own argmin/enumeration paths so they can stand as independent checks.

#![allow(dead_code)]

use topk_surrogates::losses::{surrogate_loss, LossId};
use topk_surrogates::simplex::{LabelSpace, ProbVector, ScoreVector};

/// All size-m subsets of `1..=n`, lexicographic.
pub fn label_subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m);
    fn rec(n: usize, m: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == m {
            out.push(current.clone());
            return;
        }
        for y in start..=n {
            current.push(y);
            rec(n, m, y + 1, current, out);
            current.pop();
        }
    }
    rec(n, m, 1, &mut current, &mut out);
    out
}

/// Brute-force Bayes top-k risk: minimum miss probability over all size-k sets.
pub fn brute_bayes_topk(p: &ProbVector, space: LabelSpace) -> f64 {
    label_subsets(space.n(), space.k())
        .iter()
        .map(|s| 1.0 - s.iter().map(|&y| p.prob(y)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Brute-force minimum of the expected subset loss
/// `(1 - mass(T)) (k+1)/(k+1-|T|)` over all subsets of size at most k,
/// computed straight from the closed form.
pub fn brute_min_subset_loss(p: &ProbVector, space: LabelSpace) -> (f64, Vec<Vec<usize>>) {
    let k = space.k() as f64;
    let mut best = f64::INFINITY;
    let mut argmins: Vec<Vec<usize>> = Vec::new();
    for size in 0..=space.k() {
        for t in label_subsets(space.n(), size) {
            let mass: f64 = t.iter().map(|&y| p.prob(y)).sum();
            let value = (1.0 - mass) * (k + 1.0) / (k + 1.0 - size as f64);
            if value < best - 1e-12 {
                best = value;
                argmins = vec![t];
            } else if (value - best).abs() <= 1e-12 {
                argmins.push(t);
            }
        }
    }
    (best, argmins)
}

/// Central finite differences of a surrogate at `u`.
pub fn central_diff(
    loss: LossId,
    u: &ScoreVector,
    y: usize,
    space: LabelSpace,
    h: f64,
) -> Vec<f64> {
    let base = u.as_slice();
    (0..space.n())
        .map(|i| {
            let mut hi = base.to_vec();
            let mut lo = base.to_vec();
            hi[i] += h;
            lo[i] -= h;
            let f_hi = surrogate_loss(loss, &ScoreVector::new(hi).unwrap(), y, space).unwrap();
            let f_lo = surrogate_loss(loss, &ScoreVector::new(lo).unwrap(), y, space).unwrap();
            (f_hi - f_lo) / (2.0 * h)
        })
        .collect()
}

/// Smallest pairwise absolute gap among the values.
pub fn min_pairwise_gap(vals: &[f64]) -> f64 {
    let mut sorted = vals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Whether every kink of the chosen surrogate is at safe distance from `u`,
/// so central differences with a small step are exact.
pub fn is_differentiable_point(loss: LossId, u: &ScoreVector, y: usize, space: LabelSpace) -> bool {
    let n = space.n();
    let k = space.k();
    let margin = 0.01;
    match loss {
        LossId::Topk => false,
        LossId::L2 | LossId::L3 => {
            let mut v = u.as_slice().to_vec();
            v[y - 1] -= 1.0;
            if min_pairwise_gap(&v) <= 1e-3 {
                return false;
            }
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if loss == LossId::L2 {
                let arg = 1.0 - u.score(y) + sorted[..k].iter().sum::<f64>() / k as f64;
                arg.abs() > margin
            } else {
                sorted[..k]
                    .iter()
                    .all(|vi| (1.0 - u.score(y) + vi).abs() > margin)
            }
        }
        LossId::L4 => {
            let rest: Vec<f64> = u
                .as_slice()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != y - 1)
                .map(|(_, &x)| x)
                .collect();
            if min_pairwise_gap(&rest) <= 1e-3 {
                return false;
            }
            let mut sorted = rest.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let arg = 1.0 - u.score(y) + sorted[..k].iter().sum::<f64>() / k as f64;
            arg.abs() > margin
        }
        LossId::Lk => {
            if min_pairwise_gap(u.as_slice()) <= 1e-3 {
                return false;
            }
            let mut sorted = u.as_slice().to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut values: Vec<f64> = Vec::with_capacity(n);
            let mut prefix = 0.0;
            for m in 1..=n {
                prefix += sorted[m - 1];
                values.push(prefix / m as f64 + (1.0 - k as f64 / m as f64).max(0.0));
            }
            let mut sv = values.clone();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            sv[0] - sv[1] > 1e-3
        }
    }
}

/// All lattice points `c / steps` of the simplex over n labels.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut counts = vec![0usize; n];
    fn rec(
        counts: &mut Vec<usize>,
        coord: usize,
        remaining: usize,
        steps: usize,
        out: &mut Vec<Vec<f64>>,
    ) {
        if coord + 1 == counts.len() {
            counts[coord] = remaining;
            out.push(counts.iter().map(|&c| c as f64 / steps as f64).collect());
            return;
        }
        for c in 0..=remaining {
            counts[coord] = c;
            rec(counts, coord + 1, remaining - c, steps, out);
        }
    }
    rec(&mut counts, 0, steps, steps, &mut out);
    out
}
