//! Black-box clustering oracles and cost evaluation.
//!
//! Oracles solve the weighted sample problem: given points with weights and
//! `k`, return `k` centers. They are deterministic in their inputs and the
//! stream they are handed, which is what lets paired executions that share a
//! coreset also share centers.

mod brute;
mod external;
mod greedy;
mod lloyd;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_opt, midpoint_candidates, BRUTE_FORCE_CAP};
pub use external::ExternalOracle;
pub use greedy::greedy_kcenters;
pub use lloyd::{weighted_kpp_lloyd, LloydUpdate};

use crate::error::{invalid, Result};
use crate::norm::{CostPower, NormSpec};
use crate::rng::SharedRandomness;
use crate::source::{Point, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    KmeansPpLloyd,
    KmediansPpLloyd,
    GreedyKcenters,
    BruteForce,
    External,
}

fn default_beta() -> f64 {
    1.0
}

fn default_iters() -> usize {
    100
}

fn default_restarts() -> usize {
    1
}

/// Which oracle to run and the quality it is assumed to have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Claimed multiplicative ratio.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Claimed additive slack (k-centers).
    #[serde(default)]
    pub additive: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    /// Independent seedings; the cheapest result wins.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalOracle>,
}

impl OracleSpec {
    pub fn new(kind: OracleKind) -> Self {
        Self {
            kind,
            beta: 1.0,
            additive: 0.0,
            max_iters: default_iters(),
            restarts: 1,
            external: None,
        }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_restarts(self, restarts: usize) -> Self {
        Self { restarts, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 1.0) {
            return Err(invalid("oracle beta must be >= 1"));
        }
        if self.kind == OracleKind::BruteForce && self.beta != 1.0 {
            return Err(invalid("the brute-force oracle has beta = 1"));
        }
        if !(self.additive >= 0.0) {
            return Err(invalid("oracle additive slack must be >= 0"));
        }
        if self.restarts == 0 {
            return Err(invalid("oracle restarts must be >= 1"));
        }
        if self.kind == OracleKind::External && self.external.is_none() {
            return Err(invalid("external oracle needs a command"));
        }
        Ok(())
    }

    /// Solve the weighted problem on `points`.
    pub fn solve(&self, points: &PointSet, k: usize, spec: &NormSpec, rng: &SharedRandomness) -> Result<OracleOutput> {
        self.validate()?;
        check_instance(points, k, spec)?;
        let centers = match self.kind {
            OracleKind::KmeansPpLloyd | OracleKind::KmediansPpLloyd => {
                let update = if self.kind == OracleKind::KmeansPpLloyd {
                    LloydUpdate::Mean
                } else {
                    LloydUpdate::Median
                };
                let mut best: Option<OracleOutput> = None;
                for r in 0..self.restarts {
                    let out = weighted_kpp_lloyd(points, k, spec, update, &rng.indexed("restart", r as u64), self.max_iters)?;
                    if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                        best = Some(out);
                    }
                }
                return Ok(best.expect("restarts >= 1"));
            }
            OracleKind::GreedyKcenters => greedy_kcenters(points, k, spec)?,
            OracleKind::BruteForce => brute_force_opt(points, k, spec, &points.points)?.1,
            OracleKind::External => {
                let ext = self.external.as_ref().expect("validated");
                ext.solve(points, k, spec, rng.seed())?
            }
        };
        let cost = clustering_cost(points, &centers, spec)?;
        let duplicates = has_duplicates(&centers);
        Ok(OracleOutput { centers, cost, iterations: 0, duplicates, cost_trace: vec![cost] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub centers: Vec<Point>,
    /// Cost on the input point set.
    pub cost: f64,
    pub iterations: usize,
    /// Some centers coincide (fewer distinct points than `k`).
    pub duplicates: bool,
    /// Cost after seeding and after each improvement step.
    pub cost_trace: Vec<f64>,
}

pub(crate) fn check_instance(points: &PointSet, k: usize, spec: &NormSpec) -> Result<()> {
    if points.is_empty() {
        return Err(invalid("oracle input is empty"));
    }
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    points.validate_dims(spec.d)
}

pub(crate) fn has_duplicates(centers: &[Point]) -> bool {
    let mut sorted: Vec<&Point> = centers.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a, b));
    sorted.windows(2).any(|w| w[0] == w[1])
}

pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Index of the nearest center (lowest index on ties) and its distance.
#[inline]
pub fn nearest(x: &[f64], centers: &[Point], spec: &NormSpec) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = spec.dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Weighted cost `sum_i w_i min_f dist(x_i, f)^p`, or `max_i min_f dist` for k-centers.
///
/// In k-centers mode points of weight zero are ignored.
pub fn clustering_cost(points: &PointSet, centers: &[Point], spec: &NormSpec) -> Result<f64> {
    if centers.is_empty() {
        return Err(invalid("cost needs at least one center"));
    }
    points.validate_dims(spec.d)?;
    if centers.iter().any(|c| c.len() != spec.d) {
        return Err(crate::Error::DimensionMismatch {
            expected: spec.d,
            got: centers.iter().map(Vec::len).find(|l| *l != spec.d).unwrap_or(0),
        });
    }
    Ok(cost_unchecked(points, centers, spec))
}

pub(crate) fn cost_unchecked(points: &PointSet, centers: &[Point], spec: &NormSpec) -> f64 {
    match spec.p {
        CostPower::Max => points
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| points.weight(*i) > 0.0)
            .map(|(_, x)| nearest(x, centers, spec).1)
            .fold(0.0, f64::max),
        CostPower::Pow(_) => points
            .points
            .iter()
            .enumerate()
            .map(|(i, x)| points.weight(i) * spec.cost_term(nearest(x, centers, spec).1))
            .sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NormFamily;

    #[test]
    fn cost_examples() {
        let l2 = NormSpec::new(NormFamily::L2, 2, 1).unwrap();
        let single = PointSet::new(vec![vec![0.0]]);
        assert_eq!(clustering_cost(&single, &[vec![0.0]], &l2).unwrap(), 0.0);
        let two = PointSet::new(vec![vec![0.0], vec![0.4]]);
        assert!((clustering_cost(&two, &[vec![0.0]], &l2).unwrap() - 0.08).abs() < 1e-15);
        let kc = NormSpec::kcenters(NormFamily::L2, 1).unwrap();
        assert!((clustering_cost(&two, &[vec![0.0]], &kc).unwrap() - 0.4).abs() < 1e-15);
        assert!(clustering_cost(&two, &[], &l2).is_err());
    }

    #[test]
    fn nearest_breaks_ties_by_index() {
        let spec = NormSpec::new(NormFamily::L2, 1, 1).unwrap();
        assert_eq!(nearest(&[0.0], &[vec![0.1], vec![-0.1]], &spec).0, 0);
    }

    #[test]
    fn spec_validation() {
        assert!(OracleSpec::new(OracleKind::BruteForce).with_beta(2.0).validate().is_err());
        assert!(OracleSpec::new(OracleKind::KmeansPpLloyd).with_beta(0.5).validate().is_err());
        assert!(OracleSpec::new(OracleKind::External).validate().is_err());
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let s = OracleSpec::new(OracleKind::KmediansPpLloyd).with_beta(3.0).with_restarts(4);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<OracleSpec>(&text).unwrap(), s);
        let minimal: OracleSpec = serde_json::from_str(r#"{"kind":"greedy_kcenters"}"#).unwrap();
        assert_eq!(minimal, OracleSpec::new(OracleKind::GreedyKcenters));
    }
}
