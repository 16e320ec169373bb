//! End-to-end replicable clustering and the paired-trial harness.
//!
//! A run reads data from `SharedRandomness::data(seed, run)` and takes every
//! other random choice from `SharedRandomness::internal(seed)`, so two runs
//! with the same seed and different `run` indices form a paired execution.
//! Their [`PipelineResult::replicable_json`] strings are compared byte for
//! byte.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::coreset::{build_coreset, CoresetParams, CoresetProvenance};
use crate::dimred::{euclidean_pipeline, ClusteringFunction};
use crate::error::{invalid, Result};
use crate::kcenters::{r_kcenters, ActiveCells, KCentersParams};
use crate::norm::{NormFamily, NormSpec};
use crate::optest::{estimate_opt_relative, OptBudget, OptEstimate};
use crate::oracle::{lex_cmp, nearest, OracleKind, OracleOutput, OracleSpec, BRUTE_FORCE_CAP};
use crate::primitives::{r_sq, sq_sample_count};
use crate::rng::SharedRandomness;
use crate::source::{DistributionSource, Point, Sampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    Kmedians,
    /// Scaling, discretization and random projection before the coreset.
    Euclidean,
    KmeansCover,
    Kcenters,
    /// The oracle on a plain sample: no coreset, no rounding.
    Vanilla,
}

fn d_threshold() -> Option<f64> {
    Some(0.01)
}
fn d_mass_eps() -> Option<f64> {
    Some(0.1)
}
fn d_hh_max() -> Option<u64> {
    Some(2_000_000)
}
fn d_mass_scale() -> f64 {
    0.05
}
fn d_max_cells() -> f64 {
    1e12
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// Coreset knobs exposed to a pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetBudget {
    /// Heavy-hitter threshold at level 1; sets `gamma = v1 / (Lambda 2^p)`.
    /// `null` (with `gamma` unset) selects the theoretical constant.
    #[serde(default = "d_threshold")]
    pub base_threshold: Option<f64>,
    /// Explicit `gamma`; wins over `base_threshold`.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Per-point mass accuracy; `null` selects `eps Lambda / (4N)`.
    #[serde(default = "d_mass_eps")]
    pub mass_eps: Option<f64>,
    #[serde(default = "one")]
    pub hh_budget_scale: f64,
    #[serde(default = "d_hh_max")]
    pub hh_max_samples: Option<u64>,
    #[serde(default = "d_mass_scale")]
    pub mass_budget_scale: f64,
    #[serde(default = "yes")]
    pub reuse_samples: bool,
    #[serde(default = "d_max_cells")]
    pub max_cells: f64,
}

impl Default for CoresetBudget {
    fn default() -> Self {
        Self {
            base_threshold: d_threshold(),
            gamma: None,
            mass_eps: d_mass_eps(),
            hh_budget_scale: 1.0,
            hh_max_samples: d_hh_max(),
            mass_budget_scale: d_mass_scale(),
            reuse_samples: true,
            max_cells: d_max_cells(),
        }
    }
}

fn d_cover_scale() -> f64 {
    1e-2
}
fn d_cover_cap() -> u64 {
    20_000
}
fn d_cover_samples() -> f64 {
    5e7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverBudget {
    #[serde(default = "d_cover_scale")]
    pub sq_budget_scale: f64,
    /// Largest number of candidate center sets.
    #[serde(default = "d_cover_cap")]
    pub max_candidates: u64,
    /// Largest total number of samples over all candidates.
    #[serde(default = "d_cover_samples")]
    pub max_samples: f64,
}

impl Default for CoverBudget {
    fn default() -> Self {
        Self { sq_budget_scale: d_cover_scale(), max_candidates: d_cover_cap(), max_samples: d_cover_samples() }
    }
}

fn d_opt() -> OptBudget {
    OptBudget { max_trials: Some(600), max_samples: Some(400), min_samples: 64, ..OptBudget::default() }
}

fn opt_over_defaults<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<OptBudget, D::Error> {
    let Value::Object(patch) = Value::deserialize(de)? else {
        return Err(D::Error::custom("opt must be an object"));
    };
    let mut base = serde_json::to_value(d_opt()).expect("serializable");
    if let Value::Object(map) = &mut base {
        map.extend(patch);
    }
    serde_json::from_value(base).map_err(D::Error::custom)
}
fn d_k() -> usize {
    3
}
fn d_p() -> u32 {
    2
}
fn d_eps() -> f64 {
    0.5
}
fn d_rho() -> f64 {
    0.2
}
fn d_delta() -> f64 {
    0.05
}
fn d_eval() -> usize {
    2000
}
fn d_vanilla() -> usize {
    1000
}
fn d_final_restarts() -> usize {
    5
}

/// Everything a pipeline run depends on besides the source and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub algorithm: Algorithm,
    #[serde(default = "d_k")]
    pub k: usize,
    /// Cost exponent for `euclidean` and `vanilla`; `kmeans` uses 2, `kmedians` 1.
    #[serde(default = "d_p")]
    pub p: u32,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "default_family")]
    pub family: NormFamily,
    /// Defaults to k-means++/Lloyd (or its median variant, or greedy for k-centers).
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    /// Skip OPT estimation and use this value.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Fields left out take the pipeline defaults, caps included.
    #[serde(default = "d_opt", deserialize_with = "opt_over_defaults")]
    pub opt: OptBudget,
    #[serde(default)]
    pub coreset: CoresetBudget,
    #[serde(default)]
    pub cover: CoverBudget,
    #[serde(default)]
    pub kcenters: Option<KCentersParams>,
    /// Multiplies every sample count and sample cap.
    #[serde(default = "one")]
    pub budget_scale: f64,
    /// Held-out samples for the cost estimate; 0 disables evaluation.
    #[serde(default = "d_eval")]
    pub n_eval: usize,
    #[serde(default = "d_vanilla")]
    pub vanilla_samples: usize,
    /// Restarts of the oracle call on the coreset (at least the oracle's own).
    #[serde(default = "d_final_restarts")]
    pub final_restarts: usize,
    /// Constant in the projection dimension.
    #[serde(default = "one")]
    pub jl_constant: f64,
}

fn default_family() -> NormFamily {
    NormFamily::L2
}

impl PipelineConfig {
    pub fn new(algorithm: Algorithm, k: usize) -> Self {
        Self {
            algorithm,
            k,
            p: match algorithm {
                Algorithm::Kmedians => 1,
                _ => 2,
            },
            eps: d_eps(),
            rho: d_rho(),
            delta: d_delta(),
            family: NormFamily::L2,
            oracle: None,
            lambda: None,
            opt: d_opt(),
            coreset: CoresetBudget::default(),
            cover: CoverBudget::default(),
            kcenters: None,
            budget_scale: 1.0,
            n_eval: d_eval(),
            vanilla_samples: d_vanilla(),
            final_restarts: d_final_restarts(),
            jl_constant: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if !(self.p == 1 || self.p == 2) && self.algorithm != Algorithm::Kcenters {
            return Err(invalid("pipelines support p = 1 and p = 2"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0 && self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid("eps and rho must lie in (0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta < self.rho / 3.0) {
            return Err(invalid("need 0 < delta < rho/3"));
        }
        if !(self.budget_scale > 0.0 && self.budget_scale.is_finite()) {
            return Err(invalid("budget_scale must be positive"));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l <= 1.0) {
                return Err(invalid("lambda must lie in (0, 1]"));
            }
        }
        if self.algorithm == Algorithm::Kcenters && self.kcenters.is_none() {
            return Err(invalid("the kcenters algorithm needs a `kcenters` parameter block"));
        }
        Ok(())
    }

    /// Exponent of the objective actually optimized.
    pub fn exponent(&self) -> u32 {
        match self.algorithm {
            Algorithm::Kmeans | Algorithm::KmeansCover => 2,
            Algorithm::Kmedians => 1,
            _ => self.p,
        }
    }

    pub fn norm_spec(&self, d: usize) -> Result<NormSpec> {
        match self.algorithm {
            Algorithm::Kcenters => NormSpec::kcenters(self.family, d),
            _ => NormSpec::new(self.family, self.exponent(), d),
        }
    }

    pub fn oracle_spec(&self) -> OracleSpec {
        self.oracle.clone().unwrap_or_else(|| {
            OracleSpec::new(match self.algorithm {
                Algorithm::Kcenters => OracleKind::GreedyKcenters,
                _ if self.exponent() == 1 => OracleKind::KmediansPpLloyd,
                _ => OracleKind::KmeansPpLloyd,
            })
        })
    }

    /// OPT budget with `budget_scale` applied.
    pub fn opt_budget(&self) -> OptBudget {
        let s = self.budget_scale;
        OptBudget {
            trial_scale: self.opt.trial_scale * s,
            sample_scale: self.opt.sample_scale * s,
            min_samples: scale_usize(self.opt.min_samples, s),
            max_samples: self.opt.max_samples.map(|n| scale_usize(n, s)),
            max_trials: self.opt.max_trials.map(|n| scale_u64(n, s)),
            max_iterations: self.opt.max_iterations,
        }
    }

    /// Coreset parameters for the given `Lambda`, with `rho/3, delta/3` each
    /// for the tree and for the mass estimate.
    pub fn coreset_params(&self, lambda: f64, p: u32) -> CoresetParams {
        let b = &self.coreset;
        let s = self.budget_scale;
        let gamma = b.gamma.or_else(|| b.base_threshold.map(|v| v / (lambda * f64::from(1u32 << p))));
        CoresetParams {
            eps: self.eps / 2.0,
            k: self.k,
            rho_tree: self.rho / 3.0,
            delta_tree: self.delta / 3.0,
            rho_mass: self.rho / 3.0,
            delta_mass: self.delta / 3.0,
            lambda,
            beta: self.oracle_spec().beta,
            gamma,
            mass_eps: b.mass_eps,
            hh_budget_scale: b.hh_budget_scale * s,
            hh_max_samples: b.hh_max_samples.map(|n| scale_u64(n, s)),
            mass_budget_scale: b.mass_budget_scale * s,
            max_cells: b.max_cells,
            reuse_samples: b.reuse_samples,
        }
    }
}

fn scale_u64(n: u64, s: f64) -> u64 {
    ((n as f64 * s).ceil() as u64).max(1)
}

fn scale_usize(n: usize, s: f64) -> usize {
    ((n as f64 * s).ceil() as usize).max(1)
}

/// The coreset as recorded in a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetRecord {
    pub reps: Vec<Point>,
    pub weights: Vec<f64>,
    pub provenance: CoresetProvenance,
}

/// Held-out cost with a 95% normal half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost: f64,
    pub half_width: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub algorithm: Algorithm,
    pub master_seed: u64,
    pub run: u64,
    pub config: PipelineConfig,
    pub lambda: Option<f64>,
    pub opt: Option<OptEstimate>,
    pub coreset: Option<CoresetRecord>,
    pub active_cells: Option<ActiveCells>,
    /// Centers in the (normalized) input space; empty for `euclidean`, whose
    /// centers live in the projected space of `function`.
    pub centers: Vec<Point>,
    pub function: Option<ClusteringFunction>,
    pub evaluation: Option<Evaluation>,
}

/// Stage at which two paired results first differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Lambda,
    Tree,
    Weights,
    Oracle,
    Error,
}

impl PipelineResult {
    /// Canonical JSON: sorted keys, shortest round-trip floats.
    pub fn canonical_json(&self) -> String {
        serde_json::to_value(self).expect("serializable").to_string()
    }

    /// Canonical JSON without the run index and the held-out evaluation,
    /// which depend on the data stream by design.
    pub fn replicable_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable");
        if let Value::Object(map) = &mut v {
            map.remove("run");
            map.remove("evaluation");
        }
        v.to_string()
    }

    pub fn first_divergence(&self, other: &Self) -> Option<Stage> {
        if self.replicable_json() == other.replicable_json() {
            return None;
        }
        if self.lambda != other.lambda || self.opt != other.opt {
            return Some(Stage::Lambda);
        }
        let reps = |r: &Self| {
            (r.coreset.as_ref().map(|c| c.reps.clone()), r.active_cells.as_ref().map(|a| a.cells.clone()))
        };
        if reps(self) != reps(other) {
            return Some(Stage::Tree);
        }
        if self.coreset.as_ref().map(|c| &c.weights) != other.coreset.as_ref().map(|c| &c.weights) {
            return Some(Stage::Weights);
        }
        Some(Stage::Oracle)
    }
}

/// Run the configured algorithm once.
pub fn run_pipeline(source: &DistributionSource, config: &PipelineConfig, master_seed: u64, run: u64) -> Result<PipelineResult> {
    config.validate()?;
    let internal = SharedRandomness::internal(master_seed);
    let data = SharedRandomness::data(master_seed, run);
    let mut result = match config.algorithm {
        Algorithm::Kmeans | Algorithm::Kmedians => coreset_pipeline(source, config, &internal, &data)?,
        Algorithm::Euclidean => euclidean_pipeline(source, config, &internal, &data)?,
        Algorithm::KmeansCover => {
            let centers = r_kmeans_cover(source, config, &internal, &data)?;
            bare_result(config, centers)
        }
        Algorithm::Kcenters => {
            let params = config.kcenters.clone().expect("validated");
            let params = KCentersParams { budget_scale: params.budget_scale * config.budget_scale, ..params };
            let spec = config.norm_spec(source.dim())?;
            let mut sampler = source.sampler(&data);
            let out = r_kcenters(&mut sampler, &spec, &params, &config.oracle_spec(), &internal)?;
            let mut r = bare_result(config, out.centers);
            r.active_cells = Some(out.active);
            r
        }
        Algorithm::Vanilla => {
            let centers = vanilla(source, config, &internal, &data)?;
            bare_result(config, centers)
        }
    };
    result.master_seed = master_seed;
    result.run = run;
    if config.n_eval > 0 && !source.is_replay() {
        let eval_stream = data.child("eval");
        result.evaluation = Some(match &result.function {
            Some(f) => evaluate_function(f, source, config.n_eval, &eval_stream)?,
            None => evaluate(&result.centers, source, &config.norm_spec(source.dim())?, config.n_eval, &eval_stream)?,
        });
    }
    Ok(result)
}

fn bare_result(config: &PipelineConfig, centers: Vec<Point>) -> PipelineResult {
    PipelineResult {
        algorithm: config.algorithm,
        master_seed: 0,
        run: 0,
        config: config.clone(),
        lambda: None,
        opt: None,
        coreset: None,
        active_cells: None,
        centers,
        function: None,
        evaluation: None,
    }
}

/// `Lambda`: the configured value or the relative-error estimate at `(rho/3, delta/3)`.
pub(crate) fn lambda_stage(
    sampler: &mut dyn Sampler,
    spec: &NormSpec,
    config: &PipelineConfig,
    internal: &SharedRandomness,
) -> Result<(f64, Option<OptEstimate>)> {
    if let Some(l) = config.lambda {
        return Ok((l, None));
    }
    let est = estimate_opt_relative(
        sampler,
        &config.oracle_spec(),
        spec,
        config.k,
        config.eps,
        config.rho / 3.0,
        config.delta / 3.0,
        &config.opt_budget(),
        &internal.child("opt"),
    )?;
    Ok((est.lambda, Some(est)))
}

/// Coreset with masses, then the oracle on it.
pub(crate) fn coreset_stage(
    sampler: &mut dyn Sampler,
    spec: &NormSpec,
    config: &PipelineConfig,
    lambda: f64,
    internal: &SharedRandomness,
) -> Result<(CoresetRecord, OracleOutput)> {
    let p = spec.exponent()?;
    let params = config.coreset_params(lambda, p);
    let (_, coreset) = build_coreset(sampler, spec, &params, &internal.child("coreset"))?;
    let oracle = config.oracle_spec();
    let restarts = oracle.restarts.max(config.final_restarts);
    let out = oracle.with_restarts(restarts).solve(&coreset.point_set(), config.k, spec, &internal.child("oracle"))?;
    let record = CoresetRecord { reps: coreset.reps, weights: coreset.weights, provenance: coreset.provenance };
    Ok((record, out))
}

fn coreset_pipeline(
    source: &DistributionSource,
    config: &PipelineConfig,
    internal: &SharedRandomness,
    data: &SharedRandomness,
) -> Result<PipelineResult> {
    let spec = config.norm_spec(source.dim())?;
    let mut sampler = source.sampler(data);
    let (lambda, opt) = lambda_stage(&mut sampler, &spec, config, internal)?;
    let (coreset, out) = coreset_stage(&mut sampler, &spec, config, lambda, internal)?;
    let mut r = bare_result(config, out.centers);
    r.lambda = Some(lambda);
    r.opt = opt;
    r.coreset = Some(coreset);
    Ok(r)
}

/// Replicable k-medians: `Lambda`, coreset, masses and the oracle, each at `rho/3`.
pub fn r_kmedians(source: &DistributionSource, config: &PipelineConfig, master_seed: u64, run: u64) -> Result<PipelineResult> {
    run_pipeline(source, &PipelineConfig { algorithm: Algorithm::Kmedians, p: 1, ..config.clone() }, master_seed, run)
}

/// Replicable k-means; see [`r_kmedians`].
pub fn r_kmeans(source: &DistributionSource, config: &PipelineConfig, master_seed: u64, run: u64) -> Result<PipelineResult> {
    run_pipeline(source, &PipelineConfig { algorithm: Algorithm::Kmeans, p: 2, ..config.clone() }, master_seed, run)
}

fn vanilla(
    source: &DistributionSource,
    config: &PipelineConfig,
    internal: &SharedRandomness,
    data: &SharedRandomness,
) -> Result<Vec<Point>> {
    let spec = config.norm_spec(source.dim())?;
    let points = source.sample(config.vanilla_samples, data)?;
    Ok(config.oracle_spec().solve(&points, config.k, &spec, &internal.child("oracle"))?.centers)
}

/// Points of the lattice `(eps/3) (2/sqrt d) Z^d` pulled onto the ball,
/// deduplicated and sorted. Every point of the ball is within `eps/3`.
pub fn ball_cover(eps: f64, d: usize) -> Vec<Point> {
    let side = 2.0 * (eps / 3.0) / (d as f64).sqrt();
    let reach = (0.5 / side).ceil() as i64 + 1;
    let mut out: Vec<Point> = Vec::new();
    let mut z = vec![-reach; d];
    loop {
        let x: Point = z.iter().map(|&v| v as f64 * side).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.5 + side * (d as f64).sqrt() / 2.0 {
            let shrink = if norm > 0.5 { 0.5 / norm } else { 1.0 };
            out.push(x.iter().map(|v| v * shrink).collect());
        }
        let mut j = 0;
        while j < d {
            z[j] += 1;
            if z[j] <= reach {
                break;
            }
            z[j] = -reach;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    out.sort_by(|a, b| lex_cmp(a, b));
    out.dedup();
    out
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The cover baseline: every `k`-subset of an `eps/3`-cover of the ball is
/// scored by a replicable statistical query, and the lowest score wins
/// (lowest index on ties).
pub fn r_kmeans_cover(
    source: &DistributionSource,
    config: &PipelineConfig,
    internal: &SharedRandomness,
    data: &SharedRandomness,
) -> Result<Vec<Point>> {
    if config.family != NormFamily::L2 {
        return Err(invalid("the cover baseline is Euclidean"));
    }
    let spec = NormSpec::new(NormFamily::L2, 2, source.dim())?;
    let cover = ball_cover(config.eps, source.dim());
    let k = config.k as u64;
    let n = cover.len() as u64;
    if k > n {
        return Err(invalid("k exceeds the cover size"));
    }
    let count = binomial(n, k);
    let cap = (config.cover.max_candidates as f64).min(BRUTE_FORCE_CAP);
    if count > cap {
        return Err(crate::Error::BudgetExceeded {
            count,
            cap,
            hint: "use a coarser eps, smaller k or d",
        });
    }
    let total = count as usize;
    let (eps, rho, delta) = (config.eps / 3.0, config.rho / total as f64, config.delta / total as f64);
    let scale = config.cover.sq_budget_scale * config.budget_scale;
    let samples = sq_sample_count(eps, rho, delta, scale) as f64 * count;
    if samples > config.cover.max_samples {
        return Err(crate::Error::BudgetExceeded {
            count: samples,
            cap: config.cover.max_samples,
            hint: "the per-candidate budget grows with the candidate count; use a coarser eps or smaller k",
        });
    }
    let mut sampler = source.sampler(data);
    let mut idx: Vec<usize> = (0..config.k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut buf = vec![0.0; source.dim()];
    for j in 0..total {
        let centers: Vec<Point> = idx.iter().map(|&i| cover[i].clone()).collect();
        let score = r_sq(
            || {
                sampler.draw_into(&mut buf)?;
                Ok(spec.cost_term(nearest(&buf, &centers, &spec).1).min(1.0))
            },
            eps,
            rho,
            delta,
            scale,
            &internal.indexed("candidate", j as u64),
        )?;
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, idx.clone()));
        }
        if !next_combination(&mut idx, cover.len()) {
            break;
        }
    }
    let (_, chosen) = best.expect("at least one candidate");
    Ok(chosen.into_iter().map(|i| cover[i].clone()).collect())
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Held-out cost of a center set. For k-centers the maximum distance over
/// the sample is reported with zero half-width.
pub fn evaluate(centers: &[Point], source: &DistributionSource, spec: &NormSpec, n_eval: usize, rng: &SharedRandomness) -> Result<Evaluation> {
    if centers.is_empty() {
        return Err(invalid("evaluation needs centers"));
    }
    let points = source.sample(n_eval, rng)?;
    let terms: Vec<f64> = points.points.iter().map(|x| nearest(x, centers, spec).1).collect();
    if spec.exponent().is_err() {
        return Ok(Evaluation { cost: terms.iter().copied().fold(0.0, f64::max), half_width: 0.0, n: n_eval });
    }
    let terms: Vec<f64> = terms.into_iter().map(|d| spec.cost_term(d)).collect();
    Ok(mean_with_half_width(&terms))
}

/// Partition cost of the clustering a function induces, with per-part
/// optimal centers (means for `p = 2`, Weiszfeld medians for `p = 1`)
/// fitted on the evaluation sample.
pub fn evaluate_function(f: &ClusteringFunction, source: &DistributionSource, n_eval: usize, rng: &SharedRandomness) -> Result<Evaluation> {
    let points = source.sample(n_eval, rng)?;
    let labels: Vec<usize> = points.points.iter().map(|x| f.classify(x)).collect();
    Ok(partition_cost(&points.points, &labels, f.k(), f.p))
}

/// Partition cost of labelled points, see [`evaluate_function`].
pub fn partition_cost(points: &[Point], labels: &[usize], k: usize, p: u32) -> Evaluation {
    let d = points.first().map_or(0, Vec::len);
    let mut terms = vec![0.0; points.len()];
    for j in 0..k {
        let part: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == j).collect();
        if part.is_empty() {
            continue;
        }
        let center = if p == 2 { centroid(points, &part, d) } else { weiszfeld(points, &part, d) };
        for &i in &part {
            let dist = euclid(&points[i], &center);
            terms[i] = dist.powi(p as i32);
        }
    }
    mean_with_half_width(&terms)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn centroid(points: &[Point], part: &[usize], d: usize) -> Point {
    let mut c = vec![0.0; d];
    for &i in part {
        for (cj, xj) in c.iter_mut().zip(&points[i]) {
            *cj += xj;
        }
    }
    c.iter_mut().for_each(|v| *v /= part.len() as f64);
    c
}

fn weiszfeld(points: &[Point], part: &[usize], d: usize) -> Point {
    let mut c = centroid(points, part, d);
    for _ in 0..100 {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for &i in part {
            let w = 1.0 / euclid(&points[i], &c).max(1e-12);
            for (n, x) in num.iter_mut().zip(&points[i]) {
                *n += w * x;
            }
            den += w;
        }
        let next: Point = num.iter().map(|v| v / den).collect();
        let moved = euclid(&next, &c);
        c = next;
        if moved < 1e-12 {
            break;
        }
    }
    c
}

fn mean_with_half_width(terms: &[f64]) -> Evaluation {
    let n = terms.len();
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    Evaluation { cost: mean, half_width: 1.96 * (var / n as f64).sqrt(), n }
}

/// Wall-clock time of one stage in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub repetition: usize,
    pub budget_scale: f64,
    pub seconds: f64,
}

/// Time each stage of the configured algorithm `repetitions` times, each
/// repetition on its own data stream. Coreset algorithms report `lambda`,
/// `coreset` and `oracle`; the others report `pipeline`. Rows are grouped
/// by stage.
pub fn bench_stages(
    source: &DistributionSource,
    config: &PipelineConfig,
    master_seed: u64,
    repetitions: usize,
) -> Result<Vec<StageTiming>> {
    config.validate()?;
    let internal = SharedRandomness::internal(master_seed);
    let row = |stage: &str, repetition: usize, seconds: f64| StageTiming {
        stage: stage.to_owned(),
        repetition,
        budget_scale: config.budget_scale,
        seconds,
    };
    let mut rows = Vec::new();
    match config.algorithm {
        Algorithm::Kmeans | Algorithm::Kmedians => {
            let spec = config.norm_spec(source.dim())?;
            let (mut lam, mut core, mut orc) = (Vec::new(), Vec::new(), Vec::new());
            for r in 0..repetitions {
                let data = SharedRandomness::data(master_seed, r as u64);
                let mut sampler = source.sampler(&data);
                let start = Instant::now();
                let (lambda, _) = lambda_stage(&mut sampler, &spec, config, &internal)?;
                lam.push(row("lambda", r, start.elapsed().as_secs_f64()));
                let start = Instant::now();
                let params = config.coreset_params(lambda, spec.exponent()?);
                let (_, coreset) = build_coreset(&mut sampler, &spec, &params, &internal.child("coreset"))?;
                core.push(row("coreset", r, start.elapsed().as_secs_f64()));
                let start = Instant::now();
                let oracle = config.oracle_spec();
                let restarts = oracle.restarts.max(config.final_restarts);
                oracle.with_restarts(restarts).solve(&coreset.point_set(), config.k, &spec, &internal.child("oracle"))?;
                orc.push(row("oracle", r, start.elapsed().as_secs_f64()));
            }
            rows.extend(lam);
            rows.extend(core);
            rows.extend(orc);
        }
        _ => {
            let config = PipelineConfig { n_eval: 0, ..config.clone() };
            for r in 0..repetitions {
                let start = Instant::now();
                run_pipeline(source, &config, master_seed, r as u64)?;
                rows.push(row("pipeline", r, start.elapsed().as_secs_f64()));
            }
        }
    }
    Ok(rows)
}

/// Wilson 95% interval for `successes / trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let (n, z) = (trials as f64, 1.96);
    let phat = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (phat + z * z / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub matched: bool,
    pub stage: Option<Stage>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub trials: usize,
    pub matches: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub divergence: BTreeMap<Stage, usize>,
    pub mean_seconds: f64,
    pub max_seconds: f64,
    pub records: Vec<TrialRecord>,
}

/// Master seed of paired trial `t`.
pub fn trial_seed(master_seed: u64, t: u64) -> u64 {
    SharedRandomness::new(master_seed).indexed("trial", t).seed()
}

/// Run `trials` paired executions. Two runs that fail with the same error
/// count as identical outputs.
pub fn paired_trials(source: &DistributionSource, config: &PipelineConfig, master_seed: u64, trials: usize) -> Result<PairedReport> {
    config.validate()?;
    let config = PipelineConfig { n_eval: 0, ..config.clone() };
    let mut records = Vec::with_capacity(trials);
    let mut divergence = BTreeMap::new();
    for t in 0..trials as u64 {
        let seed = trial_seed(master_seed, t);
        let start = Instant::now();
        let a = run_pipeline(source, &config, seed, 0);
        let b = run_pipeline(source, &config, seed, 1);
        let seconds = start.elapsed().as_secs_f64();
        let stage = match (&a, &b) {
            (Ok(a), Ok(b)) => a.first_divergence(b),
            (Err(x), Err(y)) if x.to_string() == y.to_string() => None,
            _ => Some(Stage::Error),
        };
        if let Some(s) = stage {
            *divergence.entry(s).or_insert(0) += 1;
        }
        log::info!("paired trial {t}: {}", stage.map_or("match".to_owned(), |s| format!("diverged at {s:?}")));
        records.push(TrialRecord { trial: t, seed, matched: stage.is_none(), stage, seconds });
    }
    let matches = records.iter().filter(|r| r.matched).count();
    let (ci_low, ci_high) = wilson_interval(matches, trials);
    let secs: Vec<f64> = records.iter().map(|r| r.seconds).collect();
    Ok(PairedReport {
        trials,
        matches,
        rate: matches as f64 / trials.max(1) as f64,
        ci_low,
        ci_high,
        divergence,
        mean_seconds: secs.iter().sum::<f64>() / trials.max(1) as f64,
        max_seconds: secs.iter().copied().fold(0.0, f64::max),
        records,
    })
}
