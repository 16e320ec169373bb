use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_scale, check_unit_open, scaled_count};
use crate::error::{invalid, Result};
use crate::rng::SharedRandomness;

/// Parameters of replicable heavy hitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HHParams {
    pub v: f64,
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
    /// Known size of the label space, if finite.
    pub domain_bound: Option<u64>,
    /// Multiplies the estimation-phase sample count.
    pub budget_scale: f64,
    /// Upper limit on the estimation-phase sample count, applied after scaling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<u64>,
}

impl HHParams {
    pub fn new(v: f64, eps: f64, rho: f64, delta: f64) -> Result<Self> {
        let p = Self { v, eps, rho, delta, domain_bound: None, budget_scale: 1.0, max_samples: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_budget_scale(self, budget_scale: f64) -> Self {
        Self { budget_scale, ..self }
    }

    pub fn with_max_samples(self, max_samples: Option<u64>) -> Self {
        Self { max_samples, ..self }
    }

    pub fn with_domain_bound(self, bound: u64) -> Self {
        Self { domain_bound: Some(bound), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v <= 1.0) {
            return Err(invalid(format!("heavy-hitter target v must lie in (0, 1], got {}", self.v)));
        }
        if !(self.eps > 0.0 && self.eps < self.v) {
            return Err(invalid("heavy hitters need 0 < eps < v"));
        }
        check_unit_open("rho", self.rho)?;
        if !(self.delta > 0.0 && self.delta < self.rho / 3.0) {
            return Err(invalid("heavy hitters need 0 < delta < rho/3"));
        }
        check_scale(self.budget_scale)
    }

    fn gap(&self) -> f64 {
        self.v - self.eps
    }

    /// Candidate-phase sample count `ln(2/(delta (v-eps))) / (v-eps)`.
    pub fn candidate_count(&self) -> u64 {
        let g = self.gap();
        scaled_count((2.0 / (self.delta * g)).ln() / g, 1.0)
    }

    /// Whether the whole label space serves as the candidate set.
    pub fn uses_full_domain(&self) -> bool {
        matches!(self.domain_bound, Some(b) if (b as f64) < (2.0 / (self.delta * self.gap())).ln() / self.gap())
    }

    /// Estimation-phase sample count for `candidates` candidate labels.
    pub fn estimation_count(&self, candidates: usize) -> u64 {
        let formula = 648.0 * (2.0 / self.delta).ln()
            + 648.0 * (candidates as f64 + 1.0) * std::f64::consts::LN_2;
        let n = scaled_count(formula / (self.rho * self.rho * self.eps * self.eps), self.budget_scale);
        self.max_samples.map_or(n, |cap| n.min(cap.max(1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HHOutcome<L> {
    /// Sorted heavy labels.
    pub heavy: Vec<L>,
    /// Size of the candidate set used in the budget.
    pub candidates: usize,
    pub samples: u64,
    pub threshold: f64,
}

/// Labels whose mass clears a randomly placed threshold in `[v - 2eps/3, v - eps/3]`.
pub fn r_heavy_hitters<L, F>(draw: F, params: &HHParams, rng: &SharedRandomness) -> Result<Vec<L>>
where
    L: Ord + Hash + Clone,
    F: FnMut() -> Result<L>,
{
    Ok(r_heavy_hitters_filtered(draw, params, rng, |_| true)?.heavy)
}

/// Heavy hitters restricted to labels accepted by `keep`.
///
/// The output equals the unrestricted output intersected with `keep`; the
/// filter only saves the bookkeeping for labels that can never be returned.
pub fn r_heavy_hitters_filtered<L, F, K>(
    mut draw: F,
    params: &HHParams,
    rng: &SharedRandomness,
    keep: K,
) -> Result<HHOutcome<L>>
where
    L: Ord + Hash + Clone,
    F: FnMut() -> Result<L>,
    K: Fn(&L) -> bool,
{
    params.validate()?;
    let full = params.uses_full_domain();
    let mut counts: HashMap<L, u64> = HashMap::new();
    let mut samples = 0;
    let candidates = if full {
        params.domain_bound.expect("full domain has a bound") as usize
    } else {
        let n = params.candidate_count();
        let mut seen: HashMap<L, ()> = HashMap::new();
        for _ in 0..n {
            seen.insert(draw()?, ());
        }
        samples += n;
        let total = seen.len();
        counts.extend(seen.into_keys().filter(|l| keep(l)).map(|l| (l, 0)));
        total
    };

    let n = params.estimation_count(candidates);
    for _ in 0..n {
        let label = draw()?;
        if full {
            if keep(&label) {
                *counts.entry(label).or_insert(0) += 1;
            }
        } else if let Some(c) = counts.get_mut(&label) {
            *c += 1;
        }
        // Everything else falls on the overflow label and is never output.
    }
    samples += n;

    let threshold = params.v - params.eps * (2.0 + rng.child("threshold").rng().random::<f64>()) / 3.0;
    let mut heavy: Vec<L> = counts
        .into_iter()
        .filter(|(_, c)| *c as f64 / n as f64 >= threshold)
        .map(|(l, _)| l)
        .collect();
    heavy.sort();
    Ok(HHOutcome { heavy, candidates, samples, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(masses: &[f64], stream: &SharedRandomness) -> impl FnMut() -> Result<u32> {
        let masses = masses.to_vec();
        let mut rng = stream.rng();
        move || {
            let mut u: f64 = rng.random();
            for (i, m) in masses.iter().enumerate() {
                if u < *m {
                    return Ok(i as u32);
                }
                u -= m;
            }
            Ok(masses.len() as u32 - 1)
        }
    }

    #[test]
    fn point_mass_is_heavy() {
        let p = HHParams::new(0.5, 0.1, 0.3, 0.05).unwrap().with_budget_scale(0.01);
        let out = r_heavy_hitters(|| Ok('a'), &p, &SharedRandomness::new(1)).unwrap();
        assert_eq!(out, vec!['a']);
    }

    #[test]
    fn light_labels_are_excluded() {
        let p = HHParams::new(0.45, 0.1, 0.3, 0.05).unwrap().with_budget_scale(0.02);
        let root = SharedRandomness::new(2);
        let mut good = 0;
        let trials = 200;
        for t in 0..trials {
            let draw = labelled(&[0.5, 0.3, 0.2], &root.indexed("data", t));
            let out = r_heavy_hitters(draw, &p, &root.indexed("internal", t)).unwrap();
            if out == vec![0] {
                good += 1;
            }
        }
        assert!(good as f64 >= (1.0 - p.delta) * trials as f64 - 3.0 * (0.05f64 * 0.95 * 200.0).sqrt());
    }

    #[test]
    fn paired_runs_agree() {
        let p = HHParams::new(0.4, 0.1, 0.3, 0.05).unwrap().with_budget_scale(0.02);
        let root = SharedRandomness::new(3);
        let trials = 200;
        let mut same = 0;
        for t in 0..trials {
            let internal = root.indexed("internal", t);
            let a = r_heavy_hitters(labelled(&[0.5, 0.5 - 1e-6, 1e-6], &root.indexed("a", t)), &p, &internal).unwrap();
            let b = r_heavy_hitters(labelled(&[0.5, 0.5 - 1e-6, 1e-6], &root.indexed("b", t)), &p, &internal).unwrap();
            same += usize::from(a == b);
        }
        assert!(same as f64 >= (1.0 - p.rho) * trials as f64);
    }

    #[test]
    fn small_domain_skips_candidate_phase() {
        let p = HHParams::new(0.3, 0.1, 0.3, 0.05).unwrap().with_domain_bound(3).with_budget_scale(0.01);
        assert!(p.uses_full_domain());
        let root = SharedRandomness::new(5);
        let out = r_heavy_hitters_filtered(labelled(&[0.6, 0.4], &root.child("d")), &p, &root, |_| true).unwrap();
        assert_eq!(out.candidates, 3);
        assert_eq!(out.samples, p.estimation_count(3));
        assert_eq!(out.heavy, vec![0, 1]);
    }

    #[test]
    fn filter_only_removes_labels() {
        let p = HHParams::new(0.3, 0.1, 0.3, 0.05).unwrap().with_budget_scale(0.01);
        let root = SharedRandomness::new(6);
        let all = r_heavy_hitters_filtered(labelled(&[0.6, 0.4], &root.child("d")), &p, &root, |_| true).unwrap();
        let some = r_heavy_hitters_filtered(labelled(&[0.6, 0.4], &root.child("d")), &p, &root, |l| *l == 1).unwrap();
        assert_eq!(all.heavy, vec![0, 1]);
        assert_eq!(some.heavy, vec![1]);
        assert_eq!(all.threshold, some.threshold);
    }

    #[test]
    fn budgets_shrink_as_parameters_grow() {
        // The candidate phase depends on v - eps and grows with eps; only the
        // estimation phase is monotone in eps.
        for i in 1..20 {
            let lo = HHParams::new(0.5, i as f64 / 100.0, 0.9, 0.1).unwrap();
            let hi = HHParams::new(0.5, (i + 1) as f64 / 100.0, 0.9, 0.1).unwrap();
            assert!(hi.estimation_count(10) <= lo.estimation_count(10));
        }
        for i in 1..20 {
            let r = 0.3 + i as f64 / 40.0;
            let lo = HHParams::new(0.5, 0.1, r, 0.05).unwrap();
            let hi = HHParams::new(0.5, 0.1, (r + 0.02).min(0.99), 0.05).unwrap();
            assert!(hi.estimation_count(5) <= lo.estimation_count(5));
            let d_lo = HHParams::new(0.5, 0.1, 0.9, 0.01 * i as f64).unwrap();
            let d_hi = HHParams::new(0.5, 0.1, 0.9, 0.01 * i as f64 + 0.005).unwrap();
            assert!(d_hi.estimation_count(5) <= d_lo.estimation_count(5));
            assert!(d_hi.candidate_count() <= d_lo.candidate_count());
        }
    }
}
