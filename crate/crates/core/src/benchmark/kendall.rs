//! Tie-aware Kendall rank correlation (tau-b and tau-c).
//!
//! Pair counts come from Knight's sort-and-merge algorithm in O(n log n).

use std::cmp::Ordering;

use crate::error::BenchmarkError;

/// Integer pair statistics for two paired samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
    /// Pairs not tied in x.
    pub untied_x: u64,
    /// Pairs not tied in y.
    pub untied_y: u64,
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite inputs")
}

fn pairs(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

/// Sum of `t(t-1)/2` over runs of equal consecutive elements.
fn tied_pairs<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += pairs(run);
            run = 1;
        }
    }
    total + pairs(run)
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(v[j], v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<(), BenchmarkError> {
    if x.len() != y.len() {
        return Err(BenchmarkError::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(BenchmarkError::DegenerateInput(
            "need at least two observations".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(BenchmarkError::InvalidArgument(
            "non-finite observation".into(),
        ));
    }
    Ok(())
}

/// Counts pair relations between `x` and `y` (which must be finite and of equal length).
pub fn pair_counts(x: &[f64], y: &[f64]) -> PairCounts {
    let n = x.len() as u64;
    let mut joint: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    joint.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));

    let tied_x = tied_pairs(&joint, |a, b| a.0 == b.0);
    let tied_xy = tied_pairs(&joint, |a, b| a.0 == b.0 && a.1 == b.1);

    let mut ys: Vec<f64> = joint.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let discordant = merge_count(&mut ys, &mut buf);
    let tied_y = tied_pairs(&ys, |a, b| a == b);

    let total = pairs(n);
    let score =
        total as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64 - 2 * discordant as i64;
    PairCounts {
        n,
        score,
        untied_x: total - tied_x,
        untied_y: total - tied_y,
    }
}

fn distinct(v: &[f64]) -> usize {
    let mut s = v.to_vec();
    s.sort_by(|a, b| cmp(*a, *b));
    s.dedup_by(|a, b| a == b);
    s.len()
}

/// Kendall's tau-b: `(C - D) / sqrt((C + D + T_x)(C + D + T_y))`.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, BenchmarkError> {
    check_inputs(x, y)?;
    let c = pair_counts(x, y);
    if c.untied_x == 0 || c.untied_y == 0 {
        return Err(BenchmarkError::DegenerateInput(
            "a sample is constant".into(),
        ));
    }
    Ok(c.score as f64 / (c.untied_x as f64 * c.untied_y as f64).sqrt())
}

/// Kendall's tau-c (Stuart): `2m(C - D) / (n^2 (m - 1))`, with `m` the
/// smaller number of distinct values across the two samples.
pub fn kendall_tau_c(x: &[f64], y: &[f64]) -> Result<f64, BenchmarkError> {
    check_inputs(x, y)?;
    let m = distinct(x).min(distinct(y));
    if m < 2 {
        return Err(BenchmarkError::DegenerateInput(
            "a sample is constant".into(),
        ));
    }
    let c = pair_counts(x, y);
    let (n, m) = (c.n as f64, m as f64);
    Ok(2.0 * m * c.score as f64 / (n * n * (m - 1.0)))
}
