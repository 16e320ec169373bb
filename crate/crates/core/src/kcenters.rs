//! Replicable statistical k-centers on a fixed grid.
//!
//! Samples are bucketed into the cells of a grid of side `c`; a cell is
//! active when its empirical mass clears a threshold drawn uniformly from
//! `[0, m/N]` with shared randomness. The centers of the active cells are
//! handed to a k-centers oracle.
//!
//! The guarantees need a planted solution whose clusters all show up in a
//! sample of `n` points with probability `q`. Nothing here can check that
//! from data; the caller supplies `n` and `q`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::FixedGrid;
use crate::norm::NormSpec;
use crate::oracle::{lex_cmp, OracleOutput, OracleSpec};
use crate::rng::SharedRandomness;
use crate::source::{Point, PointSet, Sampler};

fn default_budget_scale() -> f64 {
    1e-6
}

fn default_max_samples() -> u64 {
    50_000_000
}

fn default_opt_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCentersParams {
    /// Grid side.
    pub c: f64,
    pub k: usize,
    /// Sample size at which every planted cluster is observed ...
    pub n: u64,
    /// ... with this probability.
    pub q: f64,
    /// Quality `(beta, B)` of the planted solution.
    pub beta: f64,
    #[serde(rename = "b")]
    pub big_b: f64,
    /// Upper bound on OPT used in the cell-count bound.
    #[serde(default = "default_opt_bound")]
    pub opt_bound: f64,
    pub rho: f64,
    pub delta: f64,
    #[serde(default = "default_budget_scale")]
    pub budget_scale: f64,
    /// Refuse runs needing more samples than this.
    #[serde(default = "default_max_samples")]
    pub max_samples: u64,
}

impl KCentersParams {
    pub fn new(c: f64, k: usize, n: u64, q: f64, rho: f64, delta: f64) -> Self {
        Self {
            c,
            k,
            n,
            q,
            beta: 1.0,
            big_b: 0.0,
            opt_bound: default_opt_bound(),
            rho,
            delta,
            budget_scale: default_budget_scale(),
            max_samples: default_max_samples(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(invalid("grid side c must lie in (0, 1]"));
        }
        if self.k == 0 || self.n == 0 {
            return Err(invalid("k and n must be >= 1"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(invalid("coverage probability q must lie in (0, 1]"));
        }
        if !(self.beta >= 1.0 && self.big_b >= 0.0) {
            return Err(invalid("need beta >= 1 and B >= 0"));
        }
        if !(self.opt_bound > 0.0 && self.opt_bound <= 1.0) {
            return Err(invalid("opt_bound must lie in (0, 1]"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("rho and delta must lie in (0, 1)"));
        }
        if !(self.budget_scale > 0.0) {
            return Err(invalid("budget_scale must be positive"));
        }
        Ok(())
    }

    /// `(1 + ln(5/delta)) / q`.
    pub fn lambda(&self) -> f64 {
        (1.0 + (5.0 / self.delta).ln()) / self.q
    }

    pub fn cell_bound(&self, spec: &NormSpec) -> f64 {
        cell_count_bound(self.c, self.beta, self.big_b, self.opt_bound, spec.delta(), spec.d)
    }

    /// Threshold scale `m`.
    pub fn m(&self, spec: &NormSpec) -> f64 {
        let big_m = self.cell_bound(spec);
        let (n, k) = (self.n as f64, self.k as f64);
        let l5 = (5.0 / self.delta).ln();
        let formula =
            400.0 * self.lambda() * (n * big_m * l5 + n * k * big_m * big_m * std::f64::consts::LN_2) / (self.rho * self.rho);
        (self.budget_scale * formula).ceil().max(1.0)
    }

    /// Sample count `N = lambda n m M`.
    pub fn sample_count(&self, spec: &NormSpec) -> f64 {
        (self.lambda() * self.n as f64 * self.m(spec) * self.cell_bound(spec)).ceil().max(1.0)
    }
}

/// Number of grid cells a planted cluster can meet:
/// `min(ceil(((c + 2 c Delta + 2 (beta OPT + B)) / c)^d), ceil((1/c)^d))`.
pub fn cell_count_bound(c: f64, beta: f64, big_b: f64, opt_bound: f64, delta_cube: f64, d: usize) -> f64 {
    let prop = ((c + 2.0 * c * delta_cube + 2.0 * (beta * opt_bound + big_b)) / c).powi(d as i32);
    let domain = (1.0 / c).powi(d as i32);
    prop.min(domain).ceil()
}

/// Output of [`r_active_cells`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveCells {
    /// Integer coordinates, sorted.
    pub cells: Vec<Vec<i64>>,
    pub centers: Vec<Point>,
    pub threshold: f64,
    pub samples: u64,
    pub m: f64,
}

/// Cells whose empirical mass reaches a shared random threshold in `[0, m/N]`.
pub fn r_active_cells(
    sampler: &mut dyn Sampler,
    spec: &NormSpec,
    params: &KCentersParams,
    rng: &SharedRandomness,
) -> Result<ActiveCells> {
    params.validate()?;
    let total = params.sample_count(spec);
    if total > params.max_samples as f64 {
        return Err(Error::BudgetExceeded {
            count: total,
            cap: params.max_samples as f64,
            hint: "increase c or lower budget_scale",
        });
    }
    let total = total as u64;
    sampler.ensure_available(total as usize)?;
    let grid = FixedGrid::new(params.c)?;
    let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    let mut buf = vec![0.0; spec.d];
    for _ in 0..total {
        sampler.draw_into(&mut buf)?;
        *counts.entry(grid.coords(&buf)).or_insert(0) += 1;
    }
    let m = params.m(spec);
    let threshold = rng.child("threshold").rng().random::<f64>() * m / total as f64;
    let cells: Vec<Vec<i64>> = counts
        .into_iter()
        .filter(|(_, z)| *z as f64 / total as f64 >= threshold)
        .map(|(c, _)| c)
        .collect();
    let centers = cells.iter().map(|c| grid.center_of(c)).collect();
    Ok(ActiveCells { cells, centers, threshold, samples: total, m })
}

/// Snap every point to its cell center, deduplicate, and run the oracle.
pub fn oracle_with_grid(
    oracle: &OracleSpec,
    points: &PointSet,
    k: usize,
    c: f64,
    spec: &NormSpec,
    rng: &SharedRandomness,
) -> Result<OracleOutput> {
    let grid = FixedGrid::new(c)?;
    let mut snapped: Vec<Point> = points.points.iter().map(|x| grid.snap(x)).collect();
    snapped.sort_by(|a, b| lex_cmp(a, b));
    snapped.dedup();
    oracle.solve(&PointSet::new(snapped), k, spec, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCentersResult {
    pub centers: Vec<Point>,
    pub active: ActiveCells,
}

/// Active cells, then the oracle on their centers.
pub fn r_kcenters(
    sampler: &mut dyn Sampler,
    spec: &NormSpec,
    params: &KCentersParams,
    oracle: &OracleSpec,
    rng: &SharedRandomness,
) -> Result<KCentersResult> {
    let active = r_active_cells(sampler, spec, params, &rng.child("cells"))?;
    let points = PointSet::new(active.centers.clone());
    let out = oracle_with_grid(oracle, &points, params.k, params.c, spec, &rng.child("oracle"))?;
    Ok(KCentersResult { centers: out.centers, active })
}
