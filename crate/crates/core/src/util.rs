//! Small numeric and combinatorial helpers used across modules.

/// Sum with pairwise splitting; deterministic and more accurate than a naive
/// left fold when terms vary in magnitude.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Indices `0..n` ordered by `vals` descending, ties broken by ascending index.
pub(crate) fn sort_indices_desc(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| {
        vals[b]
            .partial_cmp(&vals[a])
            .expect("scores must be finite")
            .then(a.cmp(&b))
    });
    idx
}

/// Sum of the `m` largest entries of `vals` (`m <= vals.len()`).
pub(crate) fn top_m_sum(vals: &[f64], m: usize) -> f64 {
    debug_assert!(m <= vals.len());
    let mut sorted = vals.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("scores must be finite"));
    pairwise_sum(&sorted[..m])
}

/// All size-`m` subsets of `items`, each in input order, enumerated in
/// lexicographic position order.
pub(crate) fn subsets_of_size<T: Copy>(items: &[T], m: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m);
    fn rec<T: Copy>(
        items: &[T],
        m: usize,
        start: usize,
        current: &mut Vec<T>,
        out: &mut Vec<Vec<T>>,
    ) {
        if current.len() == m {
            out.push(current.clone());
            return;
        }
        let remaining = m - current.len();
        for i in start..=items.len().saturating_sub(remaining) {
            current.push(items[i]);
            rec(items, m, i + 1, current, out);
            current.pop();
        }
    }
    if m <= items.len() {
        rec(items, m, 0, &mut current, &mut out);
    }
    out
}

/// Format a float with 12 significant digits.
///
/// Decimal notation for moderate magnitudes, scientific otherwise; exact zero
/// prints as `0`.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=14).contains(&exp) {
        format!("{:.11e}", x)
    } else {
        let decimals = (11 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    }
}

/// Derive a per-task seed from a base seed and task index (splitmix64 step).
pub(crate) fn derive_seed(base: u64, idx: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(idx.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let xs = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert!((pairwise_sum(&xs) - 1.5).abs() < 1e-15);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn sort_indices_breaks_ties_by_index() {
        assert_eq!(sort_indices_desc(&[1.0, 1.0, 0.0]), vec![0, 1, 2]);
        assert_eq!(sort_indices_desc(&[0.2, 0.5, 0.3]), vec![1, 2, 0]);
    }

    #[test]
    fn subsets_enumerate_binomially() {
        let s = subsets_of_size(&[1usize, 2, 3, 4], 2);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], vec![1, 2]);
        assert_eq!(s[5], vec![3, 4]);
        assert_eq!(subsets_of_size(&[1usize], 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn format_sig12_is_round_trippable() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(2.5), "2.50000000000");
        let x: f64 = format_sig12(0.05).parse().unwrap();
        assert!((x - 0.05).abs() < 1e-13);
        assert!(format_sig12(1.0e-7).contains('e'));
    }
}
