//! Point sets, distribution sources and samplers.
//!
//! Every source emits points inside the unit-diameter ball of its norm, so
//! every coordinate lies in `[-1/2, 1/2]`. Generated sources apply a fixed
//! normalization and reject draws that leave the ball; file sources are
//! translated to the center of their bounding box and scaled by its diameter.
//!
//! Generator defaults (moon shape, noise level, mixture layout) are choices
//! made for this crate; they only need to produce multi-modal planar data.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::norm::NormFamily;
use crate::rng::{SharedRandomness, Stream};

pub type Point = Vec<f64>;

const WEIGHT_TOL: f64 = 1e-9;
const BALL_TOL: f64 = 1e-12;
const MAX_REJECTIONS: usize = 100_000;

/// A finite point set with optional probability weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub weights: Option<Vec<f64>>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points, weights: None }
    }

    pub fn weighted(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        check_probability_vector(&weights)?;
        Ok(Self { points, weights: Some(weights) })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    /// Weight of point `i`; uniform when no weights are attached.
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.points.len() as f64,
        }
    }

    pub fn weight_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub(crate) fn validate_dims(&self, d: usize) -> Result<()> {
        if let Some(p) = self.points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        if let Some(w) = &self.weights {
            if w.len() != self.points.len() {
                return Err(invalid("weight count differs from point count"));
            }
        }
        Ok(())
    }

    /// Check dimensions and the unit-diameter ball invariant.
    pub fn validate(&self, family: NormFamily, d: usize) -> Result<()> {
        for (index, p) in self.points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            let norm = family_norm(family, p);
            if !(norm <= 0.5 + BALL_TOL) {
                return Err(Error::OutsideBall { index, norm });
            }
        }
        if let Some(w) = &self.weights {
            check_probability_vector(w)?;
        }
        Ok(())
    }
}

pub(crate) fn check_probability_vector(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(invalid(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

fn family_norm(family: NormFamily, x: &[f64]) -> f64 {
    let abs = x.iter().map(|a| a.abs());
    match family {
        NormFamily::L1 => abs.sum(),
        NormFamily::L2 => abs.map(|t| t * t).sum::<f64>().sqrt(),
        NormFamily::Linf => abs.fold(0.0, f64::max),
    }
}

/// Affine map from raw coordinates into the unit-diameter ball:
/// `normalized = (raw - translation) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub translation: Vec<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn identity(d: usize) -> Self {
        Self { translation: vec![0.0; d], scale: 1.0 }
    }

    pub fn apply(&self, raw: &[f64]) -> Point {
        raw.iter().zip(&self.translation).map(|(x, t)| (x - t) * self.scale).collect()
    }

    pub fn invert(&self, normalized: &[f64]) -> Point {
        normalized.iter().zip(&self.translation).map(|(x, t)| x / self.scale + t).collect()
    }
}

fn default_moon_noise() -> f64 {
    0.06
}

fn default_true() -> bool {
    true
}

/// On-disk description of a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Two interleaving half circles with isotropic Gaussian noise (after normalization).
    TwoMoons {
        #[serde(default = "default_moon_noise")]
        noise: f64,
    },
    /// Isotropic Gaussian components truncated to the ball by rejection.
    TruncGaussMixture {
        means: Vec<Point>,
        stds: Vec<f64>,
        weights: Vec<f64>,
    },
    /// A finite distribution given explicitly; points must already lie in the ball.
    FiniteWeighted { points: Vec<Point>, weights: Vec<f64> },
    /// Points from a CSV file with header `x0,...,x{d-1}[,w]`.
    ///
    /// With `replay` set, rows are emitted in file order and the source is
    /// exhausted after the last row; otherwise rows are resampled by weight.
    FileCsv {
        path: PathBuf,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default)]
        replay: bool,
    },
}

impl SourceSpec {
    /// The three-component mixture used for the planar demos.
    pub fn default_mixture() -> Self {
        SourceSpec::TruncGaussMixture {
            means: vec![vec![-0.2, -0.12], vec![0.2, -0.12], vec![0.0, 0.2]],
            stds: vec![0.07, 0.07, 0.07],
            weights: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        }
    }

    pub fn two_moons() -> Self {
        SourceSpec::TwoMoons { noise: default_moon_noise() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    TwoMoons { noise: f64 },
    Mixture { means: Vec<Point>, stds: Vec<f64>, cumulative: Vec<f64> },
    Finite { points: Vec<Point>, weights: Vec<f64>, cumulative: Vec<f64> },
    Replay { points: Vec<Point> },
}

/// A resolved source: files loaded, parameters validated, normalization fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSource {
    kind: Kind,
    dim: usize,
    family: NormFamily,
    normalization: Normalization,
}

// Raw two-moons shape: x in [-1, 2], y in [-1/2, 1]; centered at (1/2, 1/4)
// its farthest point has norm sqrt(1.5^2 + 0.25^2).
const MOON_CENTER: [f64; 2] = [0.5, 0.25];
const MOON_RADIUS: f64 = 1.520_690_632_574_555;
const MOON_TARGET_RADIUS: f64 = 0.4;

impl DistributionSource {
    /// Resolve a spec under the norm `family` (which defines the ball).
    pub fn from_spec(spec: &SourceSpec, family: NormFamily) -> Result<Self> {
        match spec {
            SourceSpec::TwoMoons { noise } => {
                if !(*noise >= 0.0) {
                    return Err(invalid("moon noise must be >= 0"));
                }
                Ok(Self {
                    kind: Kind::TwoMoons { noise: *noise },
                    dim: 2,
                    family,
                    normalization: Normalization {
                        translation: MOON_CENTER.to_vec(),
                        scale: MOON_TARGET_RADIUS / MOON_RADIUS,
                    },
                })
            }
            SourceSpec::TruncGaussMixture { means, stds, weights } => {
                let dim = means.first().map(Vec::len).ok_or(Error::Empty("mixture means"))?;
                if means.len() != stds.len() || means.len() != weights.len() {
                    return Err(invalid("mixture means, stds and weights differ in length"));
                }
                if means.iter().any(|m| m.len() != dim) {
                    return Err(invalid("mixture means differ in dimension"));
                }
                if stds.iter().any(|s| !(*s > 0.0)) {
                    return Err(invalid("mixture stds must be positive"));
                }
                check_probability_vector(weights)?;
                PointSet::new(means.clone()).validate(family, dim)?;
                Ok(Self {
                    kind: Kind::Mixture {
                        means: means.clone(),
                        stds: stds.clone(),
                        cumulative: cumulative(weights),
                    },
                    dim,
                    family,
                    normalization: Normalization::identity(dim),
                })
            }
            SourceSpec::FiniteWeighted { points, weights } => {
                Self::finite(PointSet::weighted(points.clone(), weights.clone())?, family)
            }
            SourceSpec::FileCsv { path, normalize, replay } => {
                let (points, weights) = read_points_csv(path)?;
                let dim = points.first().map(Vec::len).ok_or(Error::Empty("csv file"))?;
                let normalization = if *normalize {
                    bounding_box_normalization(&points, family)
                } else {
                    Normalization::identity(dim)
                };
                let points: Vec<Point> = points.iter().map(|p| normalization.apply(p)).collect();
                PointSet::new(points.clone()).validate(family, dim)?;
                let kind = if *replay {
                    Kind::Replay { points }
                } else {
                    let weights = match weights {
                        Some(w) => {
                            let total: f64 = w.iter().sum();
                            if !(total > 0.0) {
                                return Err(invalid("csv weights sum to zero"));
                            }
                            w.iter().map(|x| x / total).collect()
                        }
                        None => vec![1.0 / points.len() as f64; points.len()],
                    };
                    check_probability_vector(&weights)?;
                    Kind::Finite { cumulative: cumulative(&weights), points, weights }
                };
                Ok(Self { kind, dim, family, normalization })
            }
        }
    }

    /// A finite weighted distribution over points already inside the ball.
    pub fn finite(set: PointSet, family: NormFamily) -> Result<Self> {
        let dim = set.dim().ok_or(Error::Empty("finite source"))?;
        set.validate(family, dim)?;
        let weights = set.weight_vec();
        Ok(Self {
            kind: Kind::Finite { cumulative: cumulative(&weights), points: set.points, weights },
            dim,
            family,
            normalization: Normalization::identity(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> NormFamily {
        self.family
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// Support and weights of a finite source.
    pub fn support(&self) -> Option<PointSet> {
        match &self.kind {
            Kind::Finite { points, weights, .. } => {
                Some(PointSet { points: points.clone(), weights: Some(weights.clone()) })
            }
            _ => None,
        }
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.kind, Kind::Replay { .. })
    }

    /// A sampler reading this source through the given data stream.
    pub fn sampler(&self, stream: &SharedRandomness) -> SourceSampler<'_> {
        SourceSampler { source: self, rng: stream.rng(), cursor: 0 }
    }

    /// `n` i.i.d. draws; deterministic in the stream.
    pub fn sample(&self, n: usize, stream: &SharedRandomness) -> Result<PointSet> {
        if n == 0 {
            return Err(invalid("sample size must be >= 1"));
        }
        Ok(PointSet::new(self.sampler(stream).draw_n(n)?))
    }

    fn inside(&self, x: &[f64]) -> bool {
        family_norm(self.family, x) <= 0.5
    }

    fn draw_generated(&self, rng: &mut Stream, out: &mut [f64]) -> Result<()> {
        for _ in 0..MAX_REJECTIONS {
            match &self.kind {
                Kind::TwoMoons { noise } => {
                    let t = rng.random::<f64>() * std::f64::consts::PI;
                    let (s, c) = t.sin_cos();
                    let (x, y) = if rng.random::<bool>() { (c, s) } else { (1.0 - c, 0.5 - s) };
                    let scale = self.normalization.scale;
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    out[0] = (x - MOON_CENTER[0]) * scale + noise * nx;
                    out[1] = (y - MOON_CENTER[1]) * scale + noise * ny;
                }
                Kind::Mixture { means, stds, cumulative } => {
                    let j = pick(cumulative, rng.random::<f64>());
                    for (o, m) in out.iter_mut().zip(&means[j]) {
                        let z: f64 = rng.sample(StandardNormal);
                        *o = m + stds[j] * z;
                    }
                }
                Kind::Finite { points, cumulative, .. } => {
                    let j = pick(cumulative, rng.random::<f64>());
                    out.copy_from_slice(&points[j]);
                    return Ok(());
                }
                Kind::Replay { .. } => unreachable!("replay sources are read sequentially"),
            }
            if self.inside(out) {
                return Ok(());
            }
        }
        Err(invalid("rejection sampling failed: source mass lies outside the ball"))
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("nonempty");
    let j = cumulative.partition_point(|c| *c <= u * total);
    // Skip zero-weight entries sitting at the end.
    let mut j = j.min(cumulative.len() - 1);
    while j > 0 && cumulative[j] == cumulative[j - 1] && cumulative[j - 1] > u * total {
        j -= 1;
    }
    j
}

fn bounding_box_normalization(points: &[Point], family: NormFamily) -> Normalization {
    let d = points[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let extent: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
    let diameter = family_norm(family, &extent);
    let scale = if diameter > 0.0 { 1.0 / diameter } else { 1.0 };
    Normalization { translation: center, scale }
}

/// Read a point CSV with header `x0,...,x{d-1}` and an optional trailing `w`.
pub fn read_points_csv(path: &Path) -> Result<(Vec<Point>, Option<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    parse_points_csv(&text)
}

pub fn parse_points_csv(text: &str) -> Result<(Vec<Point>, Option<Vec<f64>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines.next().ok_or(Error::Empty("csv file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_weight = cols.last() == Some(&"w");
    let d = if has_weight { cols.len() - 1 } else { cols.len() };
    if d == 0 || cols[..d].iter().enumerate().any(|(j, c)| *c != format!("x{j}")) {
        return Err(Error::Malformed {
            line: hline + 1,
            message: format!("expected header x0,...,x{}[,w], got {header:?}", d.max(1) - 1),
        });
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Malformed {
                line: i + 1,
                message: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let vals = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed { line: i + 1, message: e.to_string() })?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed { line: i + 1, message: "non-finite value".into() });
        }
        if has_weight {
            weights.push(vals[d]);
        }
        points.push(vals[..d].to_vec());
    }
    if points.is_empty() {
        return Err(Error::Empty("csv file has no rows"));
    }
    Ok((points, has_weight.then_some(weights)))
}

/// Write points (and weights, if given) in the CSV point format.
pub fn write_points_csv(points: &[Point], weights: Option<&[f64]>) -> String {
    let d = points.first().map(Vec::len).unwrap_or(0);
    let mut out: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if weights.is_some() {
        out.push("w".into());
    }
    let mut text = out.join(",");
    text.push('\n');
    for (i, p) in points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        if let Some(w) = weights {
            row.push(format!("{:?}", w[i]));
        }
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

/// Sequential access to i.i.d. samples.
pub trait Sampler {
    fn dim(&self) -> usize;

    /// Write the next sample into `out` (length [`Sampler::dim`]).
    fn draw_into(&mut self, out: &mut [f64]) -> Result<()>;

    /// Samples left, for finite replay streams.
    fn remaining(&self) -> Option<usize> {
        None
    }

    fn draw(&mut self) -> Result<Point> {
        let mut p = vec![0.0; self.dim()];
        self.draw_into(&mut p)?;
        Ok(p)
    }

    fn draw_n(&mut self, n: usize) -> Result<Vec<Point>> {
        self.ensure_available(n)?;
        (0..n).map(|_| self.draw()).collect()
    }

    /// Fail early when a finite stream cannot supply `required` more samples.
    fn ensure_available(&self, required: usize) -> Result<()> {
        match self.remaining() {
            Some(available) if available < required => {
                Err(Error::SamplerExhausted { required, available })
            }
            _ => Ok(()),
        }
    }
}

impl<S: Sampler + ?Sized> Sampler for &mut S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn draw_into(&mut self, out: &mut [f64]) -> Result<()> {
        (**self).draw_into(out)
    }
    fn remaining(&self) -> Option<usize> {
        (**self).remaining()
    }
}

pub struct SourceSampler<'a> {
    source: &'a DistributionSource,
    rng: Stream,
    cursor: usize,
}

impl Sampler for SourceSampler<'_> {
    fn dim(&self) -> usize {
        self.source.dim
    }

    fn draw_into(&mut self, out: &mut [f64]) -> Result<()> {
        if let Kind::Replay { points } = &self.source.kind {
            let p = points.get(self.cursor).ok_or(Error::SamplerExhausted {
                required: self.cursor + 1,
                available: points.len(),
            })?;
            out.copy_from_slice(p);
            self.cursor += 1;
            return Ok(());
        }
        self.source.draw_generated(&mut self.rng, out)
    }

    fn remaining(&self) -> Option<usize> {
        match &self.source.kind {
            Kind::Replay { points } => Some(points.len() - self.cursor),
            _ => None,
        }
    }
}

/// A sampler that pushes every draw of `inner` through a fixed map.
pub struct MappedSampler<'s, F> {
    inner: &'s mut dyn Sampler,
    dim: usize,
    map: F,
    buf: Vec<f64>,
}

impl<'s, F: Fn(&[f64], &mut [f64])> MappedSampler<'s, F> {
    pub fn new(inner: &'s mut dyn Sampler, dim: usize, map: F) -> Self {
        let buf = vec![0.0; inner.dim()];
        Self { inner, dim, map, buf }
    }
}

impl<F: Fn(&[f64], &mut [f64])> Sampler for MappedSampler<'_, F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw_into(&mut self, out: &mut [f64]) -> Result<()> {
        self.inner.draw_into(&mut self.buf)?;
        (self.map)(&self.buf, out);
        Ok(())
    }

    fn remaining(&self) -> Option<usize> {
        self.inner.remaining()
    }
}
