//! Norms, the cost exponent, and the diameter constant of the unit cube.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The metric family. Every family is sign-invariant and normalized, so the
/// unit ball sits inside `[-1, 1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormFamily {
    L1,
    L2,
    Linf,
}

/// Exponent applied to distances in the cost. `Max` is the k-centers
/// objective (the limit `p -> infinity`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostPower {
    Pow(u32),
    Max,
}

impl CostPower {
    pub fn finite(self) -> Option<u32> {
        match self {
            CostPower::Pow(p) => Some(p),
            CostPower::Max => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormSpec {
    pub family: NormFamily,
    pub p: CostPower,
    pub d: usize,
}

impl NormSpec {
    pub fn new(family: NormFamily, p: u32, d: usize) -> Result<Self> {
        if p == 0 {
            return Err(invalid("cost exponent p must be >= 1"));
        }
        if d == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        Ok(Self { family, p: CostPower::Pow(p), d })
    }

    pub fn kcenters(family: NormFamily, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        Ok(Self { family, p: CostPower::Max, d })
    }

    pub fn with_dim(self, d: usize) -> Self {
        Self { d, ..self }
    }

    /// The finite exponent, or an error in k-centers mode.
    pub fn exponent(&self) -> Result<u32> {
        self.p
            .finite()
            .ok_or_else(|| invalid("operation requires a finite cost exponent"))
    }

    /// The norm of the difference `x - y`, checked.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        for v in [x, y] {
            if v.len() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: v.len() });
            }
        }
        Ok(self.dist(x, y))
    }

    /// Unchecked distance for hot loops.
    #[inline]
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let diffs = x.iter().zip(y).map(|(a, b)| (a - b).abs());
        match self.family {
            NormFamily::L1 => diffs.sum(),
            NormFamily::L2 => diffs.map(|t| t * t).sum::<f64>().sqrt(),
            NormFamily::Linf => diffs.fold(0.0, f64::max),
        }
    }

    #[inline]
    pub fn norm(&self, x: &[f64]) -> f64 {
        let abs = x.iter().map(|a| a.abs());
        match self.family {
            NormFamily::L1 => abs.sum(),
            NormFamily::L2 => abs.map(|t| t * t).sum::<f64>().sqrt(),
            NormFamily::Linf => abs.fold(0.0, f64::max),
        }
    }

    /// `dist^p`, or `dist` itself in k-centers mode.
    #[inline]
    pub fn cost_term(&self, dist: f64) -> f64 {
        match self.p {
            CostPower::Pow(1) => dist,
            CostPower::Pow(2) => dist * dist,
            CostPower::Pow(p) => dist.powi(p as i32),
            CostPower::Max => dist,
        }
    }

    /// Diameter of the unit cube `[0, 1)^d` under this norm.
    pub fn delta(&self) -> f64 {
        delta(self.family, self.d)
    }
}

pub fn delta(family: NormFamily, d: usize) -> f64 {
    match family {
        NormFamily::L1 => d as f64,
        NormFamily::L2 => (d as f64).sqrt(),
        NormFamily::Linf => 1.0,
    }
}
