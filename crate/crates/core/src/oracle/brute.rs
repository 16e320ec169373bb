use super::{cost_unchecked, lex_cmp};
use crate::error::{Error, Result};
use crate::norm::NormSpec;
use crate::source::{Point, PointSet};

/// Largest number of k-subsets the brute-force oracle will enumerate.
pub const BRUTE_FORCE_CAP: f64 = 1e6;

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact minimum cost over all k-subsets of `candidates`.
///
/// Subsets are visited in lexicographic index order and only a strictly
/// smaller cost replaces the incumbent. With fewer than `k` candidates the
/// whole candidate set is returned.
pub fn brute_force_opt(points: &PointSet, k: usize, spec: &NormSpec, candidates: &[Point]) -> Result<(f64, Vec<Point>)> {
    super::check_instance(points, k, spec)?;
    if candidates.is_empty() {
        return Err(Error::Empty("brute-force candidates"));
    }
    let k = k.min(candidates.len());
    let count = binomial(candidates.len(), k);
    if count > BRUTE_FORCE_CAP {
        return Err(Error::BudgetExceeded {
            count,
            cap: BRUTE_FORCE_CAP,
            hint: "use fewer candidate points or a smaller k",
        });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut chosen: Vec<Point> = Vec::with_capacity(k);
    loop {
        chosen.clear();
        chosen.extend(idx.iter().map(|&i| candidates[i].clone()));
        let c = cost_unchecked(points, &chosen, spec);
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, idx.clone()));
        }
        // Advance to the next combination in lexicographic order.
        let n = candidates.len();
        let Some(pos) = (0..k).rev().find(|&j| idx[j] < n - k + j) else { break };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let (cost, idx) = best.expect("at least one subset");
    Ok((cost, idx.into_iter().map(|i| candidates[i].clone()).collect()))
}

/// Points plus all pairwise midpoints, sorted and deduplicated.
///
/// On the line an optimal k-centers cluster center is the midpoint of the
/// cluster's extremes, so brute force over this set is exact in one dimension.
pub fn midpoint_candidates(points: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = points.to_vec();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            out.push(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect());
        }
    }
    out.sort_by(|a, b| lex_cmp(a, b));
    out.dedup();
    out
}
