use super::{check_scale, r_round, scaled_count, RoundingParams};
use crate::error::{invalid, Error, Result};
use crate::rng::SharedRandomness;

/// Samples for a mean accurate to the rounding's `eps'` with confidence `delta`.
pub fn sq_sample_count(eps: f64, rho: f64, delta: f64, budget_scale: f64) -> u64 {
    let eps_prime = RoundingParams { eps, rho, delta }.eps_prime();
    scaled_count((2.0 / delta).ln() / (2.0 * eps_prime * eps_prime), budget_scale)
}

/// Replicable estimate of `E[q(x)]` for a statistic with range `[0, 1]`.
///
/// `query` evaluates the statistic on one fresh sample.
pub fn r_sq<F>(mut query: F, eps: f64, rho: f64, delta: f64, budget_scale: f64, rng: &SharedRandomness) -> Result<f64>
where
    F: FnMut() -> Result<f64>,
{
    let params = RoundingParams::new(eps, rho, delta)?;
    if !(delta < rho / 3.0) {
        return Err(invalid("statistical query needs delta < rho/3"));
    }
    check_scale(budget_scale)?;
    let n = sq_sample_count(eps, rho, delta, budget_scale);
    let mut sum = 0.0;
    for _ in 0..n {
        let v = query()?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::QueryOutOfRange(v));
        }
        sum += v;
    }
    let out = r_round(&[sum / n as f64], &params, &rng.child("round"))?;
    Ok(out[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_query() {
        let s = SharedRandomness::new(1);
        for t in 0..50 {
            let v = r_sq(|| Ok(0.5), 0.05, 0.3, 0.05, 1e-2, &s.indexed("t", t)).unwrap();
            assert!((v - 0.5).abs() <= 0.05);
        }
    }

    #[test]
    fn bernoulli_mean() {
        let root = SharedRandomness::new(2);
        let mut good = 0;
        for t in 0..100 {
            let mut data = root.indexed("data", t).rng();
            let v = r_sq(
                || Ok(if data.random::<f64>() < 0.3 { 1.0 } else { 0.0 }),
                0.05,
                0.3,
                0.05,
                1.0,
                &root.indexed("internal", t),
            )
            .unwrap();
            good += usize::from((0.25..=0.35).contains(&v));
        }
        assert!(good >= 95 - 7, "{good}/100");
    }

    #[test]
    fn paired_runs_agree() {
        let root = SharedRandomness::new(3);
        let mut same = 0;
        for t in 0..100 {
            let internal = root.indexed("internal", t);
            let run = |label: &str| {
                let mut data = root.indexed(label, t).rng();
                r_sq(|| Ok(if data.random::<f64>() < 0.3 { 1.0 } else { 0.0 }), 0.05, 0.3, 0.05, 1.0, &internal)
                    .unwrap()
            };
            same += usize::from(run("a") == run("b"));
        }
        assert!(same >= 70 - 14, "{same}/100");
    }

    #[test]
    fn out_of_range_statistic_is_rejected() {
        let err = r_sq(|| Ok(1.5), 0.1, 0.3, 0.05, 1e-3, &SharedRandomness::new(0)).unwrap_err();
        assert!(matches!(err, Error::QueryOutOfRange(_)));
    }

    #[test]
    fn budget_is_monotone() {
        let n = sq_sample_count(0.05, 0.3, 0.05, 1.0);
        assert!(sq_sample_count(0.1, 0.3, 0.05, 1.0) <= n);
        assert!(sq_sample_count(0.05, 0.5, 0.05, 1.0) <= n);
        // Not monotone in delta: eps' shrinks as delta grows.
        assert!(sq_sample_count(0.05, 0.3, 0.09, 1.0) > n);
    }
}
