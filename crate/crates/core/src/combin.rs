//! Binomial coefficients and subset enumeration.

use statrs::function::factorial::ln_binomial;

/// Largest population size for which binomials are computed exactly in `u128`.
pub const EXACT_BINOMIAL_LIMIT: usize = 50;

/// Exact C(n, k); `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// ln C(n, k), or -inf when k > n.
pub fn log_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_binomial(n as u64, k as u64)
}

/// Calls `f` with every k-subset of `0..n` in lexicographic order; each
/// subset is passed sorted ascending.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // rightmost position that can still advance
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(binomial(4, 2), Some(6));
        assert_eq!(binomial(10, 0), Some(1));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(binomial(50, 25), Some(126_410_606_437_752));
    }

    #[test]
    fn log_binomial_agrees_with_exact() {
        for (n, k) in [(10, 3), (50, 25), (40, 1)] {
            let exact = binomial(n, k).unwrap() as f64;
            assert!((log_binomial(n, k) - exact.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn enumerates_all_subsets_once() {
        let mut seen = Vec::new();
        for_each_combination(5, 3, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen.first().unwrap(), &vec![0, 1, 2]);
        assert_eq!(seen.last().unwrap(), &vec![2, 3, 4]);
        let mut dedup = seen.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 10);

        let mut count = 0;
        for_each_combination(4, 0, |s| {
            assert!(s.is_empty());
            count += 1
        });
        assert_eq!(count, 1);
    }
}
