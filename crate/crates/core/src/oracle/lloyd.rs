use rand::Rng;

use super::{cost_unchecked, has_duplicates, nearest, OracleOutput};
use crate::error::Result;
use crate::norm::NormSpec;
use crate::rng::SharedRandomness;
use crate::source::{Point, PointSet};

/// Center update used by the Lloyd steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LloydUpdate {
    /// Weighted mean (k-means).
    Mean,
    /// Coordinate-wise weighted median (k-medians).
    Median,
}

/// Weighted k-means++ seeding followed by Lloyd iterations.
///
/// Seeding picks the first center with probability proportional to weight
/// and the rest proportional to `w_i dist(x_i, F)^p`. A cluster's new center
/// is accepted only if it does not raise that cluster's cost, so the total
/// cost is nonincreasing. Iteration stops when the assignment repeats or
/// after `max_iters` rounds.
pub fn weighted_kpp_lloyd(
    points: &PointSet,
    k: usize,
    spec: &NormSpec,
    update: LloydUpdate,
    rng: &SharedRandomness,
    max_iters: usize,
) -> Result<OracleOutput> {
    super::check_instance(points, k, spec)?;
    let weights = points.weight_vec();
    let xs = &points.points;
    let mut centers = seed(xs, &weights, k, spec, rng);

    let mut cost = cost_unchecked(points, &centers, spec);
    let mut trace = vec![cost];
    let mut assignment: Vec<usize> = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters {
        let next: Vec<usize> = xs.iter().map(|x| nearest(x, &centers, spec).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        iterations += 1;
        for (j, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..xs.len()).filter(|&i| assignment[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            let candidate = match update {
                LloydUpdate::Mean => weighted_mean(xs, &weights, &members),
                LloydUpdate::Median => weighted_median(xs, &weights, &members),
            };
            let cluster_cost = |c: &[f64]| -> f64 {
                members.iter().map(|&i| weights[i] * spec.cost_term(spec.dist(&xs[i], c))).sum()
            };
            if cluster_cost(&candidate) <= cluster_cost(center) {
                *center = candidate;
            }
        }
        let new_cost = cost_unchecked(points, &centers, spec);
        debug_assert!(new_cost <= cost * (1.0 + 1e-12) + 1e-15, "Lloyd step raised the cost");
        cost = new_cost;
        trace.push(cost);
    }
    let duplicates = has_duplicates(&centers);
    Ok(OracleOutput { centers, cost, iterations, duplicates, cost_trace: trace })
}

fn seed(xs: &[Point], weights: &[f64], k: usize, spec: &NormSpec, rng: &SharedRandomness) -> Vec<Point> {
    let mut stream = rng.child("seeding").rng();
    let mut centers: Vec<Point> = Vec::with_capacity(k);
    centers.push(xs[pick(weights, stream.random::<f64>())].clone());
    let mut dist: Vec<f64> = xs.iter().map(|x| spec.cost_term(spec.dist(x, &centers[0]))).collect();
    while centers.len() < k {
        let score: Vec<f64> = weights.iter().zip(&dist).map(|(w, d)| w * d).collect();
        let u = stream.random::<f64>();
        let i = if score.iter().sum::<f64>() > 0.0 { pick(&score, u) } else { pick(weights, u) };
        let c = xs[i].clone();
        for (d, x) in dist.iter_mut().zip(xs) {
            *d = d.min(spec.cost_term(spec.dist(x, &c)));
        }
        centers.push(c);
    }
    centers
}

/// Index `i` with `sum_{j<i} s_j <= u * total < sum_{j<=i} s_j`, skipping zero scores.
fn pick(score: &[f64], u: f64) -> usize {
    let target = u * score.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, s) in score.iter().enumerate() {
        if *s > 0.0 {
            acc += s;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

fn weighted_mean(xs: &[Point], weights: &[f64], members: &[usize]) -> Point {
    let d = xs[members[0]].len();
    let total: f64 = members.iter().map(|&i| weights[i]).sum();
    if !(total > 0.0) {
        return xs[members[0]].clone();
    }
    let mut m = vec![0.0; d];
    for &i in members {
        for (mj, xj) in m.iter_mut().zip(&xs[i]) {
            *mj += weights[i] * xj;
        }
    }
    m.iter_mut().for_each(|v| *v /= total);
    m
}

fn weighted_median(xs: &[Point], weights: &[f64], members: &[usize]) -> Point {
    let d = xs[members[0]].len();
    let total: f64 = members.iter().map(|&i| weights[i]).sum();
    if !(total > 0.0) {
        return xs[members[0]].clone();
    }
    (0..d)
        .map(|j| {
            let mut col: Vec<(f64, f64)> = members.iter().map(|&i| (xs[i][j], weights[i])).collect();
            col.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            for (v, w) in &col {
                acc += w;
                if acc >= total / 2.0 {
                    return *v;
                }
            }
            col.last().expect("nonempty").0
        })
        .collect()
}
