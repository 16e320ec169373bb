//! Euclidean dimension reduction.
//!
//! Points are scaled by `1/sqrt(d)`, snapped to a fine grid of side
//! `eps Lambda / (4 p sqrt(d))` and projected by a scaled random orthonormal
//! frame. The coreset pipeline runs in the projected space, and the result is
//! a [`ClusteringFunction`] that labels any input point by repeating the same
//! three maps and picking the nearest low-dimensional center.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::FixedGrid;
use crate::norm::{NormFamily, NormSpec};
use crate::pipelines::{coreset_stage, lambda_stage, PipelineConfig, PipelineResult};
use crate::rng::SharedRandomness;
use crate::source::{DistributionSource, MappedSampler, Point};

/// Version of the [`ClusteringFunction`] JSON layout.
pub const FUNCTION_VERSION: u32 = 1;

/// `ceil(C p^4 / eps^2 ln(k / (eps delta)))`, at least 1.
pub fn target_dim(p: u32, eps: f64, k: usize, delta: f64, constant: f64) -> usize {
    let m = constant * f64::from(p).powi(4) / (eps * eps) * (k as f64 / (eps * delta)).ln();
    (m.ceil() as usize).max(1)
}

/// A linear map `R^d -> R^m` stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JLMap {
    pub d: usize,
    pub m: usize,
    pub matrix: Vec<Vec<f64>>,
    /// Stream the frame was drawn from; `None` for the identity.
    pub stream: Option<SharedRandomness>,
}

impl JLMap {
    pub fn identity(d: usize) -> Self {
        let matrix = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self { d, m: d, matrix, stream: None }
    }

    pub fn is_identity(&self) -> bool {
        self.stream.is_none()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.matrix) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Point {
        let mut out = vec![0.0; self.m];
        self.apply_into(x, &mut out);
        out
    }
}

/// `sqrt(d/m)` times an orthonormal `m`-frame drawn from a Gaussian matrix.
///
/// Rows are orthonormalized by two passes of modified Gram-Schmidt. For
/// `m > d` no reduction is possible and the identity is returned.
pub fn make_jl(d: usize, m: usize, rng: &SharedRandomness) -> Result<JLMap> {
    if d == 0 || m == 0 {
        return Err(invalid("projection dimensions must be >= 1"));
    }
    if m > d {
        log::info!("target dimension {m} exceeds {d}; using the identity");
        return Ok(JLMap::identity(d));
    }
    let mut stream = rng.rng();
    let mut rows: Vec<Vec<f64>> =
        (0..m).map(|_| (0..d).map(|_| StandardNormal.sample(&mut stream)).collect()).collect();
    for _ in 0..2 {
        for i in 0..m {
            for j in 0..i {
                let (head, tail) = rows.split_at_mut(i);
                let dot: f64 = tail[0].iter().zip(&head[j]).map(|(a, b)| a * b).sum();
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= dot * b;
                }
            }
            let norm = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 1e-12) {
                return Err(invalid("degenerate Gaussian frame"));
            }
            rows[i].iter_mut().for_each(|v| *v /= norm);
        }
    }
    let scale = (d as f64 / m as f64).sqrt();
    for row in &mut rows {
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(JLMap { d, m, matrix: rows, stream: Some(rng.clone()) })
}

/// Labels points by scale, snap, project and nearest center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringFunction {
    pub version: u32,
    pub d: usize,
    pub p: u32,
    /// `1/sqrt(d)`.
    pub scale: f64,
    pub grid_side: f64,
    pub jl: JLMap,
    /// Centers in the projected space; label `j` is `centers[j]`.
    pub centers: Vec<Point>,
}

impl ClusteringFunction {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// The low-dimensional image of `x`.
    pub fn embed(&self, x: &[f64]) -> Point {
        let scaled: Point = x.iter().map(|v| v * self.scale).collect();
        let snapped = FixedGrid { side: self.grid_side }.snap(&scaled);
        self.jl.apply(&snapped)
    }

    /// Index of the nearest center to the image of `x`; lowest index on ties.
    pub fn classify(&self, x: &[f64]) -> usize {
        let y = self.embed(x);
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.centers.iter().enumerate() {
            let dist: f64 = c.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best.1 {
                best = (j, dist);
            }
        }
        best.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Euclidean `(k, p)`-clustering through dimension reduction.
///
/// `Lambda` is estimated on the scaled data (or taken from the config, in
/// scaled units); the projection is the identity when the target dimension
/// is at least `d`.
pub fn euclidean_pipeline(
    source: &DistributionSource,
    config: &PipelineConfig,
    internal: &SharedRandomness,
    data: &SharedRandomness,
) -> Result<PipelineResult> {
    if config.family != NormFamily::L2 {
        return Err(invalid("the Euclidean pipeline needs the L2 family"));
    }
    let d = source.dim();
    let p = config.p;
    let scale = 1.0 / (d as f64).sqrt();
    let spec_d = NormSpec::new(NormFamily::L2, p, d)?;
    let mut base = source.sampler(data);

    let (lambda, opt) = {
        let mut scaled = MappedSampler::new(&mut base, d, move |x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = v * scale;
            }
        });
        lambda_stage(&mut scaled, &spec_d, config, internal)?
    };

    let grid_side = config.eps * lambda / (4.0 * f64::from(p) * (d as f64).sqrt());
    let grid = FixedGrid::new(grid_side)?;
    let m = target_dim(p, config.eps, config.k, config.delta, config.jl_constant);
    let jl = if m >= d { JLMap::identity(d) } else { make_jl(d, m, &internal.child("jl"))? };
    let m = jl.m;
    let spec_m = NormSpec::new(NormFamily::L2, p, m)?;

    let (coreset, out) = {
        let jl = &jl;
        let mut scratch = vec![0.0; d];
        let cell = std::cell::RefCell::new(&mut scratch);
        let mut projected = MappedSampler::new(&mut base, m, |x: &[f64], out: &mut [f64]| {
            let mut buf = cell.borrow_mut();
            for (b, v) in buf.iter_mut().zip(x) {
                *b = v * scale;
            }
            let snapped = grid.snap(&buf[..]);
            jl.apply_into(&snapped, out);
        });
        coreset_stage(&mut projected, &spec_m, config, lambda, internal)?
    };

    let function =
        ClusteringFunction { version: FUNCTION_VERSION, d, p, scale, grid_side, jl, centers: out.centers };
    if function.centers.iter().any(|c| c.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: function.centers[0].len() });
    }
    Ok(PipelineResult {
        algorithm: config.algorithm,
        master_seed: 0,
        run: 0,
        config: config.clone(),
        lambda: Some(lambda),
        opt,
        coreset: Some(coreset),
        active_cells: None,
        centers: Vec::new(),
        function: Some(function),
        evaluation: None,
    })
}
