//! Replicable estimation of the optimal clustering cost.
//!
//! The additive estimator averages the oracle's normalized cost over many
//! independent sample problems and rounds the average. The relative
//! estimator halves the additive error (and the replicability and
//! confidence budgets) until the error is a small fraction of the estimate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::norm::{CostPower, NormSpec};
use crate::oracle::OracleSpec;
use crate::primitives::{check_unit_open, r_round, sq_sample_count, RoundingParams};
use crate::rng::SharedRandomness;
use crate::source::{PointSet, Sampler};

fn default_sample_scale() -> f64 {
    1e-4
}

fn default_trial_scale() -> f64 {
    1.0
}

fn default_min_samples() -> usize {
    64
}

fn default_max_iterations() -> usize {
    40
}

/// Sample budget of the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptBudget {
    /// Multiplies the trial count.
    #[serde(default = "default_trial_scale")]
    pub trial_scale: f64,
    /// Multiplies the per-trial sample size `k^2 d^2 / e^4 ln(n p / delta)`.
    #[serde(default = "default_sample_scale")]
    pub sample_scale: f64,
    #[serde(default = "default_min_samples")]
    pub min_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_trials: Option<u64>,
    /// Halving steps allowed before giving up.
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Default for OptBudget {
    fn default() -> Self {
        Self {
            trial_scale: default_trial_scale(),
            sample_scale: default_sample_scale(),
            min_samples: default_min_samples(),
            max_samples: None,
            max_trials: None,
            max_iterations: default_max_iterations(),
        }
    }
}

impl OptBudget {
    fn validate(&self) -> Result<()> {
        if !(self.trial_scale > 0.0 && self.sample_scale > 0.0) {
            return Err(invalid("OPT budget scales must be positive"));
        }
        if self.min_samples == 0 || self.max_samples == Some(0) || self.max_trials == Some(0) {
            return Err(invalid("OPT budget caps must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be >= 1"));
        }
        Ok(())
    }

    /// Number of independent sample problems for additive error `eps`.
    pub fn trials(&self, eps: f64, rho: f64, delta: f64) -> u64 {
        let n = sq_sample_count(eps / 2.0, rho, delta, self.trial_scale);
        self.max_trials.map_or(n, |cap| n.min(cap))
    }

    /// Size of each sample problem.
    pub fn samples_per_trial(&self, k: usize, d: usize, p: u32, eps: f64, delta: f64, trials: u64) -> usize {
        let half = eps / 2.0;
        let kd = (k * d) as f64;
        let formula = kd * kd / half.powi(4) * (trials as f64 * p as f64 / delta).ln().max(1.0);
        let n = (formula * self.sample_scale).ceil();
        let n = if n >= usize::MAX as f64 { usize::MAX } else { n as usize };
        let n = n.max(self.min_samples);
        self.max_samples.map_or(n, |cap| n.min(cap))
    }
}

/// Outcome of one additive estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveEstimate {
    pub lambda: f64,
    /// Average normalized oracle cost before rounding.
    pub mean: f64,
    pub trials: u64,
    pub samples_per_trial: usize,
}

/// One step of the halving loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptIteration {
    pub iteration: usize,
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
    pub lambda: f64,
    pub trials: u64,
    pub samples_per_trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptEstimate {
    pub lambda: f64,
    /// Relative error targeted by the stop rule.
    pub eps: f64,
    pub beta: f64,
    pub iterations: usize,
    pub samples: u64,
    pub trace: Vec<OptIteration>,
}

fn exponent(spec: &NormSpec) -> Result<u32> {
    match spec.p {
        CostPower::Pow(p) => Ok(p),
        CostPower::Max => Err(invalid("OPT estimation is defined for (k, p)-clustering, not k-centers")),
    }
}

/// Estimate OPT within additive error `eps`, `rho`-replicably.
///
/// The oracle's cost is divided by its ratio `beta`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_opt_additive(
    sampler: &mut dyn Sampler,
    oracle: &OracleSpec,
    spec: &NormSpec,
    k: usize,
    eps: f64,
    rho: f64,
    delta: f64,
    budget: &OptBudget,
    rng: &SharedRandomness,
) -> Result<AdditiveEstimate> {
    let p = exponent(spec)?;
    check_unit_open("eps", eps)?;
    check_unit_open("rho", rho)?;
    if !(delta > 0.0 && delta < rho / 3.0) {
        return Err(invalid("OPT estimation needs 0 < delta < rho/3"));
    }
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    budget.validate()?;
    let trials = budget.trials(eps, rho, delta);
    let n = budget.samples_per_trial(k, spec.d, p, eps, delta, trials);
    sampler.ensure_available(n.saturating_mul(trials as usize))?;

    let trial_rng = rng.child("trials");
    let mut sum = 0.0;
    for t in 0..trials {
        let points = PointSet::new(sampler.draw_n(n)?);
        let out = oracle.solve(&points, k, spec, &trial_rng.indexed("trial", t))?;
        sum += out.cost / oracle.beta;
    }
    let mean = sum / trials as f64;
    let round = RoundingParams { eps: eps / 2.0, rho, delta };
    let rounded = r_round(&[mean.max(0.0)], &round, &rng.child("round"))?[0];
    Ok(AdditiveEstimate { lambda: rounded.clamp(0.0, 1.0), mean, trials, samples_per_trial: n })
}

/// Estimate OPT within relative error `eps` by the halving loop.
///
/// Iteration `i` runs the additive estimator at `(2^-i, 2^-i rho, 2^-i delta)`
/// and stops once `2^-i <= eps Lambda_i / 2`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_opt_relative(
    sampler: &mut dyn Sampler,
    oracle: &OracleSpec,
    spec: &NormSpec,
    k: usize,
    eps: f64,
    rho: f64,
    delta: f64,
    budget: &OptBudget,
    rng: &SharedRandomness,
) -> Result<OptEstimate> {
    check_unit_open("eps", eps)?;
    budget.validate()?;
    let mut trace = Vec::new();
    let mut samples = 0u64;
    for i in 1..=budget.max_iterations {
        let scale = 0.5f64.powi(i as i32);
        let (eps_i, rho_i, delta_i) = (scale, scale * rho, scale * delta);
        let est = estimate_opt_additive(
            sampler,
            oracle,
            spec,
            k,
            eps_i,
            rho_i,
            delta_i,
            budget,
            &rng.indexed("iteration", i as u64),
        )?;
        samples += est.trials * est.samples_per_trial as u64;
        trace.push(OptIteration {
            iteration: i,
            eps: eps_i,
            rho: rho_i,
            delta: delta_i,
            lambda: est.lambda,
            trials: est.trials,
            samples_per_trial: est.samples_per_trial,
        });
        log::debug!("OPT iteration {i}: eps {eps_i}, Lambda {}", est.lambda);
        if eps_i <= eps * est.lambda / 2.0 {
            return Ok(OptEstimate { lambda: est.lambda, eps, beta: oracle.beta, iterations: i, samples, trace });
        }
    }
    Err(Error::OptIndistinguishable { iterations: budget.max_iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleKind;
    use crate::source::DistributionSource;
    use crate::NormFamily;

    fn two_point(gap: f64) -> DistributionSource {
        let set = PointSet::weighted(vec![vec![-gap / 2.0], vec![gap / 2.0]], vec![0.5, 0.5]).unwrap();
        DistributionSource::finite(set, NormFamily::L2).unwrap()
    }

    fn budget() -> OptBudget {
        OptBudget { max_trials: Some(200), max_samples: Some(200), ..OptBudget::default() }
    }

    fn l1() -> NormSpec {
        NormSpec::new(NormFamily::L2, 1, 1).unwrap()
    }

    fn medians() -> OracleSpec {
        OracleSpec::new(OracleKind::KmediansPpLloyd)
    }

    #[test]
    fn point_mass_is_near_zero() {
        let src = DistributionSource::finite(PointSet::new(vec![vec![0.1]]), NormFamily::L2).unwrap();
        let root = SharedRandomness::new(1);
        for t in 0..10 {
            let mut s = src.sampler(&root.indexed("data", t));
            let est = estimate_opt_additive(&mut s, &medians(), &l1(), 2, 0.1, 0.3, 0.05, &budget(), &root.indexed("i", t))
                .unwrap();
            assert_eq!(est.mean, 0.0);
            assert!(est.lambda <= 0.1);
        }
    }

    #[test]
    fn two_point_additive() {
        let src = two_point(0.4);
        let root = SharedRandomness::new(2);
        let (eps, delta) = (0.05, 0.05);
        let mut good = 0;
        for t in 0..50 {
            let mut s = src.sampler(&root.indexed("data", t));
            let est =
                estimate_opt_additive(&mut s, &medians(), &l1(), 1, eps, 0.3, delta, &budget(), &root.indexed("i", t))
                    .unwrap();
            good += usize::from((est.lambda - 0.2).abs() <= eps);
        }
        assert!(good >= 50 - 5, "{good}/50 within eps");
    }

    #[test]
    fn additive_paired_runs_agree() {
        let src = two_point(0.4);
        let root = SharedRandomness::new(3);
        let mut same = 0;
        for t in 0..100 {
            let internal = root.indexed("internal", t);
            let run = |label: &str| {
                let mut s = src.sampler(&root.indexed(label, t));
                estimate_opt_additive(&mut s, &medians(), &l1(), 1, 0.1, 0.3, 0.05, &budget(), &internal)
                    .unwrap()
                    .lambda
            };
            same += usize::from(run("a") == run("b"));
        }
        assert!(same >= 70 - 14, "{same}/100");
    }

    #[test]
    fn relative_stops_by_formula_bound() {
        let src = two_point(0.4);
        let root = SharedRandomness::new(4);
        // i = ceil(log2(beta / (eps OPT)) + 2) with beta = 1, eps = 0.5, OPT = 0.2.
        let bound = ((1.0f64 / (0.5 * 0.2)).log2() + 2.0).ceil() as usize;
        assert_eq!(bound, 6);
        for t in 0..10 {
            let mut s = src.sampler(&root.indexed("data", t));
            let est = estimate_opt_relative(&mut s, &medians(), &l1(), 1, 0.5, 0.3, 0.05, &budget(), &root.indexed("i", t))
                .unwrap();
            assert!(est.iterations <= bound, "{} iterations", est.iterations);
            assert!(est.lambda / 0.2 >= 1.0 / 1.5 && est.lambda / 0.2 <= 1.5, "Lambda {}", est.lambda);
        }
    }

    #[test]
    fn halving_schedule() {
        let src = two_point(0.4);
        let mut s = src.sampler(&SharedRandomness::new(5).child("data"));
        let est = estimate_opt_relative(&mut s, &medians(), &l1(), 1, 0.2, 0.3, 0.05, &budget(), &SharedRandomness::new(5))
            .unwrap();
        assert!(est.trace.len() >= 2);
        for w in est.trace.windows(2) {
            assert_eq!(w[1].eps, w[0].eps / 2.0);
            assert_eq!(w[1].rho, w[0].rho / 2.0);
            assert_eq!(w[1].delta, w[0].delta / 2.0);
        }
        assert_eq!(est.trace[0].eps, 0.5);
        assert_eq!(est.trace[0].rho, 0.15);
    }

    #[test]
    fn point_mass_hits_iteration_cap() {
        let src = DistributionSource::finite(PointSet::new(vec![vec![0.0]]), NormFamily::L2).unwrap();
        let mut s = src.sampler(&SharedRandomness::new(6).child("data"));
        let b = OptBudget { max_iterations: 12, max_trials: Some(20), max_samples: Some(20), ..OptBudget::default() };
        let err = estimate_opt_relative(&mut s, &medians(), &l1(), 1, 0.5, 0.3, 0.05, &b, &SharedRandomness::new(6))
            .unwrap_err();
        assert!(matches!(err, Error::OptIndistinguishable { iterations: 12 }));
    }

    /// Exact 2-means cost of equally weighted points by enumerating partitions.
    fn two_means_opt(pts: &[Vec<f64>]) -> f64 {
        let n = pts.len();
        let w = 1.0 / n as f64;
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << (n - 1)) {
            let mut cost = 0.0;
            for side in [true, false] {
                let part: Vec<&Vec<f64>> =
                    (0..n).filter(|i| (mask >> i & 1 == 1) == side).map(|i| &pts[i]).collect();
                if part.is_empty() {
                    continue;
                }
                let c: Vec<f64> =
                    (0..2).map(|j| part.iter().map(|x| x[j]).sum::<f64>() / part.len() as f64).collect();
                cost += part.iter().map(|x| w * ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))).sum::<f64>();
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn brackets_exact_opt() {
        use rand::Rng;
        let root = SharedRandomness::new(7);
        let spec = NormSpec::new(NormFamily::L2, 2, 2).unwrap();
        let (eps, delta) = (0.5, 0.05);
        let oracle = OracleSpec::new(OracleKind::KmeansPpLloyd).with_restarts(3);
        let mut good = 0;
        for t in 0..20 {
            let mut g = root.indexed("instance", t).rng();
            let pts: Vec<Vec<f64>> =
                (0..6).map(|_| vec![g.random_range(-0.3..0.3), g.random_range(-0.3..0.3)]).collect();
            let opt = two_means_opt(&pts);
            let set = PointSet::weighted(pts, vec![1.0 / 6.0; 6]).unwrap();
            let src = DistributionSource::finite(set, NormFamily::L2).unwrap();
            let mut s = src.sampler(&root.indexed("data", t));
            let est =
                estimate_opt_relative(&mut s, &oracle, &spec, 2, eps, 0.3, delta, &budget(), &root.indexed("i", t))
                    .unwrap();
            let r = est.lambda / opt;
            good += usize::from(r >= 1.0 / (1.0 + eps) && r <= 1.0 + eps);
        }
        assert!(good >= 17, "{good}/20");
    }

    #[test]
    fn k_centers_is_rejected() {
        let src = two_point(0.4);
        let mut s = src.sampler(&SharedRandomness::new(8));
        let kc = NormSpec::kcenters(NormFamily::L2, 1).unwrap();
        assert!(estimate_opt_additive(&mut s, &medians(), &kc, 1, 0.1, 0.3, 0.05, &budget(), &SharedRandomness::new(8))
            .is_err());
    }
}
