use super::lex_cmp;
use crate::error::Result;
use crate::norm::NormSpec;
use crate::source::{Point, PointSet};

/// Farthest-first traversal starting at the lexicographically smallest point.
///
/// Points of weight zero are ignored. Ties go to the lowest index.
pub fn greedy_kcenters(points: &PointSet, k: usize, spec: &NormSpec) -> Result<Vec<Point>> {
    super::check_instance(points, k, spec)?;
    let xs: Vec<&Point> = (0..points.len()).filter(|&i| points.weight(i) > 0.0).map(|i| &points.points[i]).collect();
    let xs = if xs.is_empty() { points.points.iter().collect() } else { xs };
    let start = (1..xs.len()).fold(0, |best, i| if lex_cmp(xs[i], xs[best]).is_lt() { i } else { best });
    let mut centers = vec![xs[start].clone()];
    let mut dist: Vec<f64> = xs.iter().map(|x| spec.dist(x, &centers[0])).collect();
    while centers.len() < k {
        let far = (1..xs.len()).fold(0, |best, i| if dist[i] > dist[best] { i } else { best });
        let c = xs[far].clone();
        for (d, x) in dist.iter_mut().zip(&xs) {
            *d = d.min(spec.dist(x, &c));
        }
        centers.push(c);
    }
    Ok(centers)
}
