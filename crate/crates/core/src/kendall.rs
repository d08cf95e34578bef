//! Kendall rank correlation (tau-b) in O(n log n) using Knight's algorithm.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Kendall's tau-b between two paired samples. Ties in either sample are
/// handled with the tau-b denominator `sqrt((n0 - t_a)(n0 - t_b))`.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Schema(format!(
            "rankings have different lengths ({} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two paired values".into(),
        ));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("rankings contain NaN".into()));
    }

    let n = a.len();
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|x, y| cmp(x.0, y.0).then(cmp(x.1, y.1)));

    let n0 = (n * (n - 1) / 2) as i64;
    let ties_a = tied_pairs(pairs.iter().map(|p| p.0));
    let ties_joint = {
        let mut count = 0i64;
        let mut run = 1i64;
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                run += 1;
            } else {
                count += run * (run - 1) / 2;
                run = 1;
            }
        }
        count + run * (run - 1) / 2
    };

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);
    let ties_b = tied_pairs(ys.iter().copied());

    let denom = (((n0 - ties_a) as f64) * ((n0 - ties_b) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the rankings is constant".into(),
        ));
    }
    let numer = n0 - ties_a - ties_b + ties_joint - 2 * swaps;
    Ok(numer as f64 / denom)
}

fn cmp(x: f64, y: f64) -> Ordering {
    x.partial_cmp(&y).unwrap_or(Ordering::Equal)
}

/// Number of tied pairs in an already sorted sequence.
fn tied_pairs(sorted: impl Iterator<Item = f64>) -> i64 {
    let mut count = 0i64;
    let mut run = 0i64;
    let mut prev: Option<f64> = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            count += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(v);
    }
    count + run * (run + 1) / 2
}

/// Merge sort that returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (lb, rb) = buf.split_at_mut(mid);
        merge_count(left, lb) + merge_count(right, rb)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..].copy_from_slice(&v[j..]);
    v.copy_from_slice(&buf[..n]);
    swaps
}
