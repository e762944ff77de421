//! Deterministic low-discrepancy sampling.
//!
//! Halton sequences (radical inverse in the first `d` primes) drive all
//! quasi-random sampling: region interiors, pair sampling over products
//! of regions, and curvature scans. Samples are indexed, so parallel
//! consumers see identical points regardless of thread count.

const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in base `base`, in `[0, 1)`.
pub fn radical_inverse(mut index: u64, base: usize) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut result = 0.0;
    while index > 0 {
        result += (index % base as u64) as f64 * inv;
        index /= base as u64;
        inv /= b;
    }
    result
}

/// `dim`-dimensional Halton point for a sample index (1-based internally
/// to avoid the all-zero first point).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton dimension too large");
    (0..dim)
        .map(|d| radical_inverse(index + 1, PRIMES[d]))
        .collect()
}

/// Halton point mapped to a box `[lo_i, hi_i]`.
pub fn halton_in_box(index: u64, bounds: &[(f64, f64)]) -> Vec<f64> {
    halton(index, bounds.len())
        .into_iter()
        .zip(bounds)
        .map(|(u, (lo, hi))| lo + u * (hi - lo))
        .collect()
}

/// All `2^n` sign patterns, as `+/-1` vectors. Order is fixed
/// (lexicographic in bits) so corner enumerations are deterministic.
pub fn corner_signs(n: usize) -> Vec<Vec<f64>> {
    (0..(1usize << n))
        .map(|mask| {
            (0..n)
                .map(|i| if mask & (1 << i) != 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base2() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn halton_covers_unit_square() {
        // crude discrepancy check: every cell of a 4x4 grid is hit
        let mut hits = [[false; 4]; 4];
        for i in 0..256 {
            let p = halton(i, 2);
            let a = (p[0] * 4.0) as usize;
            let b = (p[1] * 4.0) as usize;
            hits[a.min(3)][b.min(3)] = true;
        }
        assert!(hits.iter().flatten().all(|h| *h));
    }

    #[test]
    fn corners_enumerate_all_signs() {
        let c = corner_signs(3);
        assert_eq!(c.len(), 8);
        assert!(c.iter().all(|s| s.iter().all(|v| v.abs() == 1.0)));
    }
}
