//! Hierarchical dyadic grids and fixed-side grids over `[-1/2, 1/2]^d`.
//!
//! Cells are virtual: a [`CellId`] is a level plus integer coordinates and
//! nothing is stored for cells that are never visited. Ordering on `CellId`
//! is by level, then coordinates lexicographically.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};

pub type Coords = SmallVec<[u32; 4]>;

/// Deepest supported level; coordinates must fit `u32`.
pub const MAX_LEVEL: u32 = 31;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub level: u32,
    pub coords: Coords,
}

impl CellId {
    pub fn root(d: usize) -> Self {
        Self { level: 0, coords: SmallVec::from_elem(0, d) }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn side(&self) -> f64 {
        side(self.level)
    }

    pub fn center(&self) -> Vec<f64> {
        cell_center(self)
    }

    pub fn parent(&self) -> Option<CellId> {
        (self.level > 0).then(|| CellId {
            level: self.level - 1,
            coords: self.coords.iter().map(|z| z >> 1).collect(),
        })
    }

    /// Whether `x` lies in this cell (half-open, with the closed upper face
    /// of the cube clamped in as in [`locate`]).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && in_cube(x)
            && locate_unchecked(x, self.level).coords == self.coords
    }
}

#[inline]
pub fn side(level: u32) -> f64 {
    (-(level as f64)).exp2()
}

fn in_cube(x: &[f64]) -> bool {
    x.iter().all(|v| (-0.5..=0.5).contains(v))
}

/// The level-`level` cell containing `x`.
pub fn locate(x: &[f64], level: u32) -> Result<CellId> {
    if level > MAX_LEVEL {
        return Err(invalid(format!("grid level {level} exceeds {MAX_LEVEL}")));
    }
    if !in_cube(x) {
        return Err(Error::OutsideCube);
    }
    Ok(locate_unchecked(x, level))
}

pub(crate) fn locate_unchecked(x: &[f64], level: u32) -> CellId {
    let mut coords = Coords::with_capacity(x.len());
    locate_into(x, level, &mut coords);
    CellId { level, coords }
}

/// Write the level-`level` coordinates of `x` into `out`.
#[inline]
pub(crate) fn locate_into(x: &[f64], level: u32, out: &mut Coords) {
    let n = (1u64 << level) as f64;
    let last = (1u64 << level) - 1;
    out.clear();
    out.extend(x.iter().map(|v| {
        let z = ((v + 0.5) * n).floor();
        if z <= 0.0 {
            0
        } else {
            (z as u64).min(last) as u32
        }
    }));
}

pub fn cell_center(cell: &CellId) -> Vec<f64> {
    let s = cell.side();
    cell.coords.iter().map(|&z| -0.5 + (z as f64 + 0.5) * s).collect()
}

/// The `2^d` children of `cell` in lexicographic coordinate order.
pub fn children(cell: &CellId) -> Vec<CellId> {
    let d = cell.dim();
    assert!(d < 32, "children() enumerates 2^d cells");
    (0u64..1 << d)
        .map(|mask| CellId {
            level: cell.level + 1,
            coords: cell
                .coords
                .iter()
                .enumerate()
                .map(|(j, z)| 2 * z + ((mask >> (d - 1 - j)) & 1) as u32)
                .collect(),
        })
        .collect()
}

/// A grid of side `side` anchored at `(-1/2, ..., -1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedGrid {
    pub side: f64,
}

impl FixedGrid {
    pub fn new(side: f64) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(invalid("grid side must be positive"));
        }
        Ok(Self { side })
    }

    /// Cells per axis that meet the cube.
    pub fn cells_per_axis(&self) -> u64 {
        (1.0 / self.side).ceil().max(1.0) as u64
    }

    pub fn coords(&self, x: &[f64]) -> Vec<i64> {
        let last = self.cells_per_axis() as i64 - 1;
        x.iter()
            .map(|v| (((v + 0.5) / self.side).floor() as i64).clamp(0, last))
            .collect()
    }

    pub fn center_of(&self, coords: &[i64]) -> Vec<f64> {
        coords.iter().map(|&z| -0.5 + z as f64 * self.side + 0.5 * self.side).collect()
    }

    /// Integer coordinates and center of the cell containing `x`.
    pub fn locate(&self, x: &[f64]) -> (Vec<i64>, Vec<f64>) {
        let z = self.coords(x);
        let c = self.center_of(&z);
        (z, c)
    }

    pub fn snap(&self, x: &[f64]) -> Vec<f64> {
        self.locate(x).1
    }

    pub fn snap_into(&self, x: &[f64], out: &mut [f64]) {
        let last = self.cells_per_axis() as f64 - 1.0;
        for (o, v) in out.iter_mut().zip(x) {
            let z = ((v + 0.5) / self.side).floor().clamp(0.0, last);
            *o = -0.5 + z * self.side + 0.5 * self.side;
        }
    }
}
