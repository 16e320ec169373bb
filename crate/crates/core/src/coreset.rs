//! The replicable quad tree and the weighted coreset built on it.
//!
//! Level `i` of the tree is the dyadic grid of side `2^-i`. A cell is heavy
//! when replicable heavy hitters over the level-`i` cell distribution returns
//! it; heavy cells are refined, all other children of heavy cells are leaf
//! regions (light cells, or special cells on the last level). Every leaf
//! region is mapped to a representative point:
//!
//! - a heavy cell with no heavy children is *marked* and represents itself by
//!   its center;
//! - any other heavy cell borrows the representative of its lexicographically
//!   smallest heavy child;
//! - a leaf region takes the representative of its parent.
//!
//! Leaf regions are never materialized, so `d` may be large: the
//! representative of a point is found by walking down the heavy cells that
//! contain it. The coreset is the sorted set of marked-cell centers with
//! replicably estimated masses.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{self, CellId, Coords};
use crate::norm::NormSpec;
use crate::oracle::lex_cmp;
use crate::primitives::{
    mass_sample_count, r_heavy_hitters_filtered, r_mass_from_counts, HHParams, MassParams,
};
use crate::rng::SharedRandomness;
use crate::source::{Point, PointSet, Sampler};

const CUBE_TOL: f64 = 1e-9;

fn default_scale() -> f64 {
    1.0
}

fn default_max_cells() -> f64 {
    1e12
}

/// Parameters of a coreset build. The exponent and metric come from the
/// [`NormSpec`] passed alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetParams {
    pub eps: f64,
    pub k: usize,
    /// Replicability and confidence for the tree.
    pub rho_tree: f64,
    pub delta_tree: f64,
    /// Replicability and confidence for the mass estimate.
    pub rho_mass: f64,
    pub delta_mass: f64,
    /// Estimate of OPT.
    pub lambda: f64,
    /// Ratio of the oracle that will run on the coreset.
    pub beta: f64,
    /// Replaces the theoretical heavy-cell constant `gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Replaces the theoretical per-point mass accuracy `eps Lambda / (4N)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_eps: Option<f64>,
    #[serde(default = "default_scale")]
    pub hh_budget_scale: f64,
    /// Per-level limit on heavy-hitter estimation samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hh_max_samples: Option<u64>,
    #[serde(default = "default_scale")]
    pub mass_budget_scale: f64,
    /// Refuse builds whose cell-count constant `M` exceeds this.
    #[serde(default = "default_max_cells")]
    pub max_cells: f64,
    /// Let every level (and the mass estimate) read one shared sample pool
    /// instead of drawing fresh samples.
    #[serde(default)]
    pub reuse_samples: bool,
}

impl CoresetParams {
    /// Split `rho` and `delta` evenly between the tree and the mass estimate.
    pub fn new(eps: f64, k: usize, rho: f64, delta: f64, lambda: f64) -> Self {
        Self {
            eps,
            k,
            rho_tree: rho / 2.0,
            delta_tree: delta / 2.0,
            rho_mass: rho / 2.0,
            delta_mass: delta / 2.0,
            lambda,
            beta: 1.0,
            gamma: None,
            mass_eps: None,
            hh_budget_scale: 1.0,
            hh_max_samples: None,
            mass_budget_scale: 1.0,
            max_cells: default_max_cells(),
            reuse_samples: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(invalid("coreset eps must be positive"));
        }
        if self.k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(invalid(format!("Lambda must lie in (0, 1], got {}", self.lambda)));
        }
        if !(self.beta >= 1.0) {
            return Err(invalid("beta must be >= 1"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(invalid("gamma override must be positive"));
            }
        }
        if let Some(e) = self.mass_eps {
            if !(e > 0.0) {
                return Err(invalid("mass_eps override must be positive"));
            }
        }
        MassParams { eps: 1.0, rho: self.rho_mass, delta: self.delta_mass, budget_scale: self.mass_budget_scale }
            .validate()?;
        HHParams {
            v: 1.0,
            eps: 0.5,
            rho: self.rho_tree,
            delta: self.delta_tree,
            domain_bound: None,
            budget_scale: self.hh_budget_scale,
            max_samples: None,
        }
        .validate()
    }
}

/// Smallest `t >= 1` with `(2^{-t+1} Delta)^p <= eps Lambda / 5`.
pub fn layer_bound(p: u32, delta_cube: f64, eps: f64, lambda: f64) -> u32 {
    let target = eps * lambda / 5.0;
    let mut t = 1u32;
    while (delta_cube * (1.0 - t as f64).exp2()).powi(p as i32) > target {
        t += 1;
    }
    t
}

/// Whether level `i` is the special (last) level.
fn is_special(i: u32, p: u32, delta_cube: f64, eps: f64, lambda: f64) -> bool {
    (delta_cube * (1.0 - i as f64).exp2()).powi(p as i32) <= eps * lambda / 5.0
}

/// Heavy-hitter parameters of one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub level: u32,
    /// `gamma Lambda 2^{p i}` before capping.
    pub raw_v: f64,
    pub v: f64,
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
}

impl LevelParams {
    /// A threshold above 1 admits no cell.
    pub fn skipped(&self) -> bool {
        self.raw_v > 1.0
    }
}

/// Quantities derived from the parameters before any sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetDerived {
    pub t: u32,
    /// Accuracy used inside the cell-count constant (`eps^2/64` for `p = 2`).
    pub eps_shift: f64,
    /// `ceil(32 Delta / eps_shift)^d`.
    pub m_cells: f64,
    /// `eps / (5 t k M (2 Delta)^p)`.
    pub gamma_theory: f64,
    /// The value in use (override or theory).
    pub gamma: f64,
    pub levels: Vec<LevelParams>,
}

pub fn coreset_derived(params: &CoresetParams, spec: &NormSpec) -> Result<CoresetDerived> {
    params.validate()?;
    let p = spec.exponent()?;
    let delta_cube = spec.delta();
    let t = layer_bound(p, delta_cube, params.eps, params.lambda);
    let eps_shift = if p == 2 { params.eps * params.eps / 64.0 } else { params.eps };
    let m_cells = (32.0 * delta_cube / eps_shift).ceil().powi(spec.d as i32);
    if params.gamma.is_none() && !(m_cells <= params.max_cells) {
        return Err(Error::BudgetExceeded {
            count: m_cells,
            cap: params.max_cells,
            hint: "reduce the dimension or supply a gamma override",
        });
    }
    let gamma_theory =
        params.eps / (5.0 * t as f64 * params.k as f64 * m_cells * (2.0 * delta_cube).powi(p as i32));
    let gamma = params.gamma.unwrap_or(gamma_theory);
    let levels = (1..t)
        .map(|i| {
            let raw_v = gamma * params.lambda * ((p * i) as f64).exp2();
            let v = raw_v.min(1.0);
            LevelParams {
                level: i,
                raw_v,
                v,
                eps: v / 2.0,
                rho: params.rho_tree / t as f64,
                delta: params.delta_tree / t as f64,
            }
        })
        .collect();
    Ok(CoresetDerived { t, eps_shift, m_cells, gamma_theory, gamma, levels })
}

/// The heavy cells of every level and the representative of each.
#[derive(Debug, Clone)]
pub struct QuadTree {
    d: usize,
    /// Sorted heavy cells; level 0 holds the root.
    heavy: Vec<Vec<CellId>>,
    heavy_sets: Vec<HashSet<Coords>>,
    /// Level whose children of heavy cells are special, if the depth guard fired.
    special_level: Option<u32>,
    /// Heavy cell -> the marked cell whose center represents it.
    rep: HashMap<CellId, CellId>,
    marked: Vec<CellId>,
    pub samples_drawn: u64,
}

impl PartialEq for QuadTree {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
            && self.heavy == other.heavy
            && self.special_level == other.special_level
            && self.marked == other.marked
    }
}

impl QuadTree {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Sorted heavy cells per level, starting with the root.
    pub fn heavy(&self) -> &[Vec<CellId>] {
        &self.heavy
    }

    /// Number of levels refined below the root.
    pub fn depth(&self) -> u32 {
        self.heavy.len() as u32 - 1
    }

    pub fn special_level(&self) -> Option<u32> {
        self.special_level
    }

    /// Heavy cells with no heavy children, sorted by `(level, coords)`.
    pub fn marked(&self) -> &[CellId] {
        &self.marked
    }

    pub fn is_heavy(&self, cell: &CellId) -> bool {
        self.heavy_sets.get(cell.level as usize).is_some_and(|s| s.contains(&cell.coords))
    }

    /// Light cells of `level`: children of heavy parents that are not heavy.
    /// Enumerates `2^d` children per parent.
    pub fn light(&self, level: u32) -> Vec<CellId> {
        if level == 0 || Some(level) == self.special_level || level as usize > self.heavy.len() {
            return Vec::new();
        }
        self.children_of_level(level - 1).into_iter().filter(|c| !self.is_heavy(c)).collect()
    }

    /// Special cells: all children of the last heavy level when the depth guard fired.
    pub fn special(&self) -> Vec<CellId> {
        match self.special_level {
            Some(l) => self.children_of_level(l - 1),
            None => Vec::new(),
        }
    }

    fn children_of_level(&self, level: u32) -> Vec<CellId> {
        let mut out: Vec<CellId> =
            self.heavy[level as usize].iter().flat_map(grid::children).collect();
        out.sort();
        out
    }

    /// The leaf region (light or special cell) containing `x`.
    pub fn region(&self, x: &[f64]) -> CellId {
        let mut coords = Coords::new();
        let mut level = 1;
        loop {
            grid::locate_into(x, level, &mut coords);
            let heavy = self.heavy_sets.get(level as usize).is_some_and(|s| s.contains(&coords));
            if !heavy {
                return CellId { level, coords };
            }
            level += 1;
        }
    }

    /// The marked cell representing `x`.
    pub fn representative_cell(&self, x: &[f64]) -> &CellId {
        let mut coords = Coords::new();
        let mut level = 1;
        loop {
            grid::locate_into(x, level, &mut coords);
            let heavy = self.heavy_sets.get(level as usize).is_some_and(|s| s.contains(&coords));
            if !heavy {
                // The parent is heavy; recompute its coordinates in place.
                coords.iter_mut().for_each(|z| *z >>= 1);
                let parent = CellId { level: level - 1, coords };
                return &self.rep[&parent];
            }
            level += 1;
        }
    }

    /// `R(x)`: the representative point of `x`.
    pub fn representative(&self, x: &[f64]) -> Point {
        self.representative_cell(x).center()
    }

    /// Centers of the marked cells, sorted lexicographically.
    pub fn representatives(&self) -> Vec<Point> {
        let mut reps: Vec<Point> = self.marked.iter().map(CellId::center).collect();
        reps.sort_by(|a, b| lex_cmp(a, b));
        reps
    }
}

fn check_point(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.abs() <= 0.5 + CUBE_TOL) {
        Ok(())
    } else {
        Err(Error::OutsideCube)
    }
}

/// Samples either drawn fresh or replayed from a shared pool.
struct Feed<'a> {
    sampler: &'a mut dyn Sampler,
    reuse: bool,
    pool: Vec<f64>,
    cursor: usize,
    drawn: u64,
    d: usize,
}

impl<'a> Feed<'a> {
    fn new(sampler: &'a mut dyn Sampler, reuse: bool) -> Self {
        let d = sampler.dim();
        Self { sampler, reuse, pool: Vec::new(), cursor: 0, drawn: 0, d }
    }

    fn rewind(&mut self) {
        self.cursor = 0;
    }

    fn next(&mut self, out: &mut [f64]) -> Result<()> {
        if !self.reuse {
            self.sampler.draw_into(out)?;
            self.drawn += 1;
            return check_point(out);
        }
        let start = self.cursor * self.d;
        if start == self.pool.len() {
            self.sampler.draw_into(out)?;
            self.drawn += 1;
            check_point(out)?;
            self.pool.extend_from_slice(out);
        } else {
            out.copy_from_slice(&self.pool[start..start + self.d]);
        }
        self.cursor += 1;
        Ok(())
    }
}

/// Build the replicable quad tree from samples of the data.
pub fn build_quad_tree(
    sampler: &mut dyn Sampler,
    spec: &NormSpec,
    params: &CoresetParams,
    rng: &SharedRandomness,
) -> Result<QuadTree> {
    let mut feed = Feed::new(sampler, params.reuse_samples);
    build_tree_from(&mut feed, spec, params, rng)
}

fn build_tree_from(feed: &mut Feed<'_>, spec: &NormSpec, params: &CoresetParams, rng: &SharedRandomness) -> Result<QuadTree> {
    let d = spec.d;
    if feed.d != d {
        return Err(Error::DimensionMismatch { expected: d, got: feed.d });
    }
    let derived = coreset_derived(params, spec)?;
    let p = spec.exponent()?;
    let delta_cube = spec.delta();
    let root = CellId::root(d);
    let mut heavy: Vec<Vec<CellId>> = vec![vec![root.clone()]];
    let mut heavy_sets: Vec<HashSet<Coords>> = vec![std::iter::once(root.coords.clone()).collect()];
    let mut special_level = None;
    let before = feed.drawn;

    let mut i = 1u32;
    while !heavy[i as usize - 1].is_empty() {
        if is_special(i, p, delta_cube, params.eps, params.lambda) {
            special_level = Some(i);
            break;
        }
        let lp = derived.levels[i as usize - 1];
        let found: Vec<CellId> = if lp.skipped() {
            Vec::new()
        } else {
            let mut hh = HHParams::new(lp.v, lp.eps, lp.rho, lp.delta)?.with_budget_scale(params.hh_budget_scale)
                .with_max_samples(params.hh_max_samples);
            if (i as usize) * d < 63 {
                hh = hh.with_domain_bound(1u64 << (i as usize * d));
            }
            feed.rewind();
            let parents = &heavy_sets[i as usize - 1];
            let mut buf = vec![0.0; d];
            let draw = || -> Result<CellId> {
                feed.next(&mut buf)?;
                let mut coords = Coords::with_capacity(d);
                grid::locate_into(&buf, i, &mut coords);
                Ok(CellId { level: i, coords })
            };
            let keep = |c: &CellId| {
                let parent: Coords = c.coords.iter().map(|z| z >> 1).collect();
                parents.contains(&parent)
            };
            r_heavy_hitters_filtered(draw, &hh, &rng.indexed("level", i as u64), keep)?.heavy
        };
        heavy_sets.push(found.iter().map(|c| c.coords.clone()).collect());
        heavy.push(found);
        i += 1;
    }
    // The last pushed level is empty unless the guard fired; drop trailing empties.
    while heavy.len() > 1 && heavy.last().is_some_and(Vec::is_empty) {
        heavy.pop();
        heavy_sets.pop();
    }

    let mut rep: HashMap<CellId, CellId> = HashMap::new();
    let mut marked = BTreeSet::new();
    for level in (0..heavy.len()).rev() {
        // Smallest heavy child of each parent: the next level is sorted.
        let mut first_child: HashMap<CellId, &CellId> = HashMap::new();
        if let Some(next) = heavy.get(level + 1) {
            for c in next {
                first_child.entry(c.parent().expect("level >= 1")).or_insert(c);
            }
        }
        for cell in &heavy[level] {
            let target = match first_child.get(cell) {
                Some(child) => rep[*child].clone(),
                None => {
                    marked.insert(cell.clone());
                    cell.clone()
                }
            };
            rep.insert(cell.clone(), target);
        }
    }

    Ok(QuadTree {
        d,
        heavy,
        heavy_sets,
        special_level,
        rep,
        marked: marked.into_iter().collect(),
        samples_drawn: feed.drawn - before,
    })
}

/// Everything needed to reproduce or audit a coreset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetProvenance {
    pub params: CoresetParams,
    pub t: u32,
    pub depth: u32,
    pub gamma: f64,
    pub gamma_theory: f64,
    pub m_cells: f64,
    pub mass_eps: f64,
    pub size_bound: f64,
    pub tree_samples: u64,
    pub mass_samples: u64,
}

/// Representative points with replicably estimated probability masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCoreset {
    pub reps: Vec<Point>,
    pub weights: Vec<f64>,
    pub provenance: CoresetProvenance,
}

impl WeightedCoreset {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn point_set(&self) -> PointSet {
        PointSet { points: self.reps.clone(), weights: Some(self.weights.clone()) }
    }

    pub fn to_csv(&self) -> String {
        crate::source::write_points_csv(&self.reps, Some(&self.weights))
    }
}

/// `2 beta / gamma + t k (7 Delta)^d`.
pub fn size_bound(beta: f64, gamma: f64, t: u32, k: usize, delta_cube: f64, d: usize) -> f64 {
    2.0 * beta / gamma + t as f64 * k as f64 * (7.0 * delta_cube).powi(d as i32)
}

/// Build the tree, then estimate the mass of every representative.
pub fn build_coreset(
    sampler: &mut dyn Sampler,
    spec: &NormSpec,
    params: &CoresetParams,
    rng: &SharedRandomness,
) -> Result<(QuadTree, WeightedCoreset)> {
    let mut feed = Feed::new(sampler, params.reuse_samples);
    let tree = build_tree_from(&mut feed, spec, params, &rng.child("tree"))?;
    let derived = coreset_derived(params, spec)?;

    let reps = tree.representatives();
    let n = reps.len();
    let bound = size_bound(params.beta, derived.gamma, derived.t, params.k, spec.delta(), spec.d);
    if n as f64 > bound {
        return Err(Error::SizeBound { size: n, bound });
    }
    let index: HashMap<&CellId, usize> = {
        let mut by_center: Vec<(&CellId, Point)> = tree.marked.iter().map(|c| (c, c.center())).collect();
        by_center.sort_by(|a, b| lex_cmp(&a.1, &b.1));
        by_center.into_iter().enumerate().map(|(j, (c, _))| (c, j)).collect()
    };

    let mass_eps = params.mass_eps.unwrap_or(params.eps * params.lambda / (4.0 * n as f64));
    let mp = MassParams {
        eps: mass_eps,
        rho: params.rho_mass,
        delta: params.delta_mass,
        budget_scale: params.mass_budget_scale,
    };
    let total = mass_sample_count(n, &mp);
    let mut counts = vec![0u64; n];
    let mut buf = vec![0.0; spec.d];
    feed.rewind();
    let before = feed.drawn;
    for _ in 0..total {
        feed.next(&mut buf)?;
        counts[index[tree.representative_cell(&buf)]] += 1;
    }
    let weights = r_mass_from_counts(&counts, total, &mp, &rng.child("mass"))?;
    let provenance = CoresetProvenance {
        params: params.clone(),
        t: derived.t,
        depth: tree.depth(),
        gamma: derived.gamma,
        gamma_theory: derived.gamma_theory,
        m_cells: derived.m_cells,
        mass_eps,
        size_bound: bound,
        tree_samples: tree.samples_drawn,
        mass_samples: feed.drawn - before,
    };
    Ok((tree, WeightedCoreset { reps, weights, provenance }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{DistributionSource, PointSet, SourceSpec};
    use crate::NormFamily;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn spec(p: u32, d: usize) -> NormSpec {
        NormSpec::new(NormFamily::L2, p, d).unwrap()
    }

    fn params(lambda: f64, gamma: f64) -> CoresetParams {
        CoresetParams {
            gamma: Some(gamma),
            mass_eps: Some(0.05),
            hh_max_samples: Some(200_000),
            mass_budget_scale: 0.05,
            ..CoresetParams::new(0.5, 2, 0.3, 0.05, lambda)
        }
    }

    #[test]
    fn layer_bound_examples() {
        assert_eq!(layer_bound(1, 1.0, 0.5, 0.4), 6);
        assert_eq!(layer_bound(2, 1.0, 1.0, 0.8), 3);
    }

    #[test]
    fn layer_bound_is_minimal() {
        for p in 1..3 {
            for e in 1..10 {
                for l in 1..10 {
                    let (eps, lambda) = (e as f64 / 10.0, l as f64 / 10.0);
                    for d in [1.0, 2.0f64.sqrt(), 3.0] {
                        let t = layer_bound(p, d, eps, lambda);
                        assert!(is_special(t, p, d, eps, lambda));
                        assert!(t == 1 || !is_special(t - 1, p, d, eps, lambda));
                    }
                }
            }
        }
    }

    #[test]
    fn derived_example() {
        let mut p = CoresetParams::new(0.5, 2, 0.3, 0.05, 0.4);
        p.beta = 1.0;
        let d = coreset_derived(&p, &spec(1, 1)).unwrap();
        assert_eq!(d.t, 6);
        assert_eq!(d.m_cells, 64.0);
        assert!((d.gamma_theory - 0.5 / 7680.0).abs() < 1e-18);
        for w in d.levels.windows(2) {
            assert!((w[1].raw_v / w[0].raw_v - 2.0).abs() < 1e-12);
        }
        let big = CoresetParams { gamma: Some(0.5), ..p };
        let d = coreset_derived(&big, &spec(1, 1)).unwrap();
        assert!(d.levels.iter().all(|l| l.v <= 1.0));
        assert!(d.levels.iter().any(|l| l.skipped()));
    }

    #[test]
    fn p2_uses_squared_shift_budget() {
        let p = CoresetParams::new(0.5, 2, 0.3, 0.05, 0.4);
        let d = coreset_derived(&p, &spec(2, 1)).unwrap();
        assert_eq!(d.eps_shift, 0.25 / 64.0);
        assert_eq!(d.m_cells, 8192.0);
    }

    #[test]
    fn huge_cell_constant_is_refused() {
        let p = CoresetParams::new(0.5, 2, 0.3, 0.05, 0.4);
        assert!(matches!(coreset_derived(&p, &spec(2, 8)), Err(Error::BudgetExceeded { .. })));
    }

    fn finite(points: Vec<Point>, weights: Vec<f64>) -> DistributionSource {
        DistributionSource::finite(PointSet::weighted(points, weights).unwrap(), NormFamily::L2).unwrap()
    }

    #[test]
    fn point_mass_gives_one_chain() {
        let src = finite(vec![vec![0.0, 0.0]], vec![1.0]);
        let s = spec(1, 2);
        let p = params(0.2, 0.005);
        let root = SharedRandomness::new(1);
        let (tree, cs) = build_coreset(&mut src.sampler(&root.child("data")), &s, &p, &root).unwrap();
        let t = layer_bound(1, s.delta(), p.eps, p.lambda);
        assert_eq!(tree.special_level(), Some(t));
        assert!(tree.heavy().iter().skip(1).all(|h| h.len() == 1));
        assert_eq!(cs.reps.len(), 1);
        assert_eq!(cs.weights, vec![1.0]);
        // The chain follows the cells containing the origin, whose centers
        // approach it from the upper side; the last heavy level is t - 1.
        let c = (-(t as f64)).exp2();
        assert_eq!(cs.reps[0], vec![c, c]);
    }

    #[test]
    fn two_masses_give_two_representatives() {
        let src = finite(vec![vec![-0.25], vec![0.25]], vec![0.5, 0.5]);
        let s = spec(1, 1);
        let p = params(0.2, 0.05);
        let root = SharedRandomness::new(2);
        let (tree, cs) = build_coreset(&mut src.sampler(&root.child("data")), &s, &p, &root).unwrap();
        assert_eq!(cs.reps.len(), 2);
        assert!(cs.reps[0][0] < 0.0 && cs.reps[1][0] > 0.0);
        assert!((cs.reps[0][0] + 0.25).abs() <= (-(tree.depth() as f64)).exp2());
        for w in &cs.weights {
            assert!((w - 0.5).abs() <= 0.05);
        }
    }

    #[test]
    fn four_separated_points() {
        let pts = vec![vec![-0.3, -0.3], vec![0.3, -0.3], vec![-0.3, 0.3], vec![0.3, 0.3]];
        let src = finite(pts, vec![0.25; 4]);
        let root = SharedRandomness::new(3);
        let (_, cs) = build_coreset(&mut src.sampler(&root.child("data")), &spec(1, 2), &params(0.3, 0.05), &root)
            .unwrap();
        assert_eq!(cs.len(), 4);
        assert!(cs.weights.iter().all(|w| (w - 0.25).abs() <= 0.05));
        assert!((cs.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn representative_map_properties() {
        let src = DistributionSource::from_spec(&SourceSpec::two_moons(), NormFamily::L2).unwrap();
        let s = spec(1, 2);
        let p = params(0.1, 0.01);
        let root = SharedRandomness::new(4);
        let (tree, cs) = build_coreset(&mut src.sampler(&root.child("data")), &s, &p, &root).unwrap();
        assert!(cs.len() >= 2);
        let reps: BTreeSet<Vec<u64>> = cs.reps.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
            let r = tree.representative(&x);
            assert_eq!(tree.representative(&r), r);
            assert!(reps.contains(&r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()));
            let region = tree.region(&x);
            assert!(region.contains(&x));
            assert!(tree.is_heavy(&region.parent().unwrap()));
            let bound = (1.0 - region.level as f64).exp2() * s.delta();
            assert!(s.dist(&x, &r) <= bound + 1e-12, "shift {} > {}", s.dist(&x, &r), bound);
        }
        assert!(cs.len() as f64 <= cs.provenance.size_bound);
    }

    #[test]
    fn regions_tile_the_cube() {
        let src = finite(vec![vec![-0.2, 0.1], vec![0.3, -0.1]], vec![0.5, 0.5]);
        let root = SharedRandomness::new(5);
        let tree = build_quad_tree(&mut src.sampler(&root.child("data")), &spec(1, 2), &params(0.3, 0.05), &root)
            .unwrap();
        let mut leaves: Vec<CellId> = (1..=tree.depth() + 1).flat_map(|l| tree.light(l)).collect();
        leaves.extend(tree.special());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5_000 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
            assert_eq!(leaves.iter().filter(|c| c.contains(&x)).count(), 1);
        }
    }

    #[test]
    fn paired_trees_usually_match() {
        let src = DistributionSource::from_spec(&SourceSpec::default_mixture(), NormFamily::L2).unwrap();
        let s = spec(2, 2);
        let p = CoresetParams { hh_max_samples: Some(1_000_000), ..params(0.05, 0.02) };
        let mut same = 0;
        for t in 0..20 {
            let internal = SharedRandomness::new(6).indexed("trial", t);
            let a = build_quad_tree(&mut src.sampler(&SharedRandomness::data(6, 2 * t)), &s, &p, &internal).unwrap();
            let b = build_quad_tree(&mut src.sampler(&SharedRandomness::data(6, 2 * t + 1)), &s, &p, &internal).unwrap();
            same += usize::from(a == b);
        }
        assert!(same >= 14, "{same}/20 paired trees identical");
    }

    #[test]
    fn reuse_flag_draws_fewer_samples() {
        let src = finite(vec![vec![-0.2, 0.1], vec![0.3, -0.1]], vec![0.5, 0.5]);
        let root = SharedRandomness::new(7);
        let fresh = params(0.3, 0.05);
        let pooled = CoresetParams { reuse_samples: true, ..fresh.clone() };
        let (_, a) = build_coreset(&mut src.sampler(&root.child("d")), &spec(1, 2), &fresh, &root).unwrap();
        let (_, b) = build_coreset(&mut src.sampler(&root.child("d")), &spec(1, 2), &pooled, &root).unwrap();
        assert_eq!(a.reps, b.reps);
        assert!(b.provenance.tree_samples < a.provenance.tree_samples);
    }

    #[test]
    fn points_outside_cube_are_rejected() {
        struct Far;
        impl Sampler for Far {
            fn dim(&self) -> usize {
                1
            }
            fn draw_into(&mut self, out: &mut [f64]) -> Result<()> {
                out[0] = 0.9;
                Ok(())
            }
        }
        let r = build_quad_tree(&mut Far, &spec(1, 1), &params(0.3, 0.05), &SharedRandomness::new(0));
        assert!(matches!(r, Err(Error::OutsideCube)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn weights_form_a_distribution(
            pts in prop::collection::vec(prop::collection::vec(-0.35f64..0.35, 2), 1..6),
            seed in any::<u64>(),
        ) {
            let n = pts.len();
            let src = finite(pts, vec![1.0 / n as f64; n]);
            let root = SharedRandomness::new(seed);
            let (tree, cs) = build_coreset(&mut src.sampler(&root.child("d")), &spec(1, 2), &params(0.3, 0.05), &root).unwrap();
            prop_assert!(cs.weights.iter().all(|w| *w >= 0.0));
            prop_assert!((cs.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for level in 1..tree.heavy().len() {
                for c in &tree.heavy()[level] {
                    prop_assert!(tree.is_heavy(&c.parent().unwrap()));
                }
            }
            for m in tree.marked() {
                prop_assert!(tree.heavy().get(m.level as usize + 1).is_none_or(|next| next.iter().all(|c| c.parent().as_ref() != Some(m))));
            }
        }
    }
}
