use serde::{Deserialize, Serialize};

use super::{check_scale, check_unit_open, r_round, scaled_count, RoundingParams};
use crate::error::{invalid, Result};
use crate::rng::SharedRandomness;

/// Parameters of replicable mass estimation over a fixed, ordered label set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassParams {
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
    pub budget_scale: f64,
}

impl MassParams {
    pub fn new(eps: f64, rho: f64, delta: f64) -> Result<Self> {
        let p = Self { eps, rho, delta, budget_scale: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_budget_scale(self, budget_scale: f64) -> Self {
        Self { budget_scale, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid("mass accuracy eps must be positive"));
        }
        check_unit_open("rho", self.rho)?;
        if !(self.delta > 0.0 && self.delta < self.rho / 3.0) {
            return Err(invalid("mass estimation needs 0 < delta < rho/3"));
        }
        check_scale(self.budget_scale)
    }

    fn rounding(&self) -> RoundingParams {
        RoundingParams { eps: self.eps / 2.0, rho: self.rho, delta: self.delta }
    }
}

/// `8 (ln(1/delta) + N ln 2) / ((eps/2)^2 (rho - 2 delta)^2)`, scaled.
pub fn mass_sample_count(n_labels: usize, params: &MassParams) -> u64 {
    let half = params.eps / 2.0;
    let gap = params.rho - 2.0 * params.delta;
    let formula = 8.0 * ((1.0 / params.delta).ln() + n_labels as f64 * std::f64::consts::LN_2)
        / (half * half * gap * gap);
    scaled_count(formula, params.budget_scale)
}

/// Estimate the masses of labels `0..n_labels`; `draw` returns a label index.
pub fn r_mass_estimate<F>(mut draw: F, n_labels: usize, params: &MassParams, rng: &SharedRandomness) -> Result<Vec<f64>>
where
    F: FnMut() -> Result<usize>,
{
    params.validate()?;
    if n_labels == 0 {
        return Err(invalid("mass estimation needs at least one label"));
    }
    let n = mass_sample_count(n_labels, params);
    let mut counts = vec![0u64; n_labels];
    for _ in 0..n {
        let j = draw()?;
        counts
            .get_mut(j)
            .map(|c| *c += 1)
            .ok_or_else(|| invalid(format!("label {j} outside 0..{n_labels}")))?;
    }
    r_mass_from_counts(&counts, n, params, rng)
}

/// Round empirical frequencies `counts / total` and project onto the simplex.
pub fn r_mass_from_counts(counts: &[u64], total: u64, params: &MassParams, rng: &SharedRandomness) -> Result<Vec<f64>> {
    params.validate()?;
    if counts.is_empty() || total == 0 {
        return Err(invalid("mass estimation needs at least one label and one sample"));
    }
    let freq: Vec<f64> = counts.iter().map(|c| *c as f64 / total as f64).collect();
    let rounded = r_round(&freq, &params.rounding(), &rng.child("round"))?;
    Ok(project_to_simplex(&rounded))
}

/// Euclidean projection onto the probability simplex.
///
/// When no coordinate is clipped this is the uniform shift `x - (sum x - 1)/N`.
/// Any floating-point residual is moved onto the largest coordinate so the
/// result is exactly nonnegative and sums to one up to rounding of that add.
pub fn project_to_simplex(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = (sorted[0] - 1.0) / 1.0;
    for (i, s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    let mut out: Vec<f64> = x.iter().map(|v| (v - theta).max(0.0)).collect();
    let residual = 1.0 - out.iter().sum::<f64>();
    let top = (0..n).fold(0, |best, i| if out[i] > out[best] { i } else { best });
    out[top] += residual;
    out
}
