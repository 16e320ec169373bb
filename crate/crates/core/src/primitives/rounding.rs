use rand::Rng;
use serde::{Deserialize, Serialize};

use super::check_unit_open;
use crate::error::{invalid, Result};
use crate::rng::SharedRandomness;

/// Parameters of replicable rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundingParams {
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
}

impl RoundingParams {
    pub fn new(eps: f64, rho: f64, delta: f64) -> Result<Self> {
        let p = Self { eps, rho, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid("rounding eps must be positive"));
        }
        check_unit_open("rho", self.rho)?;
        if !(self.delta > 0.0 && self.delta < self.rho / 2.0) {
            return Err(invalid("rounding needs 0 < delta < rho/2"));
        }
        Ok(())
    }

    /// Interval width.
    pub fn alpha(&self) -> f64 {
        2.0 * self.eps / (self.rho + 1.0 - 2.0 * self.delta)
    }

    /// The l1 accuracy the caller must provide for the guarantee to hold.
    pub fn eps_prime(&self) -> f64 {
        self.eps * (self.rho - 2.0 * self.delta) / (self.rho + 1.0 - 2.0 * self.delta)
    }
}

/// Round each value to the midpoint of its randomly offset interval.
///
/// One offset per coordinate is drawn in index order from `rng`.
pub fn r_round(values: &[f64], params: &RoundingParams, rng: &SharedRandomness) -> Result<Vec<f64>> {
    params.validate()?;
    let alpha = params.alpha();
    let mut stream = rng.rng();
    let offsets: Vec<f64> = (0..values.len()).map(|_| stream.random::<f64>() * alpha).collect();
    Ok(round_with_offsets(values, alpha, &offsets))
}

pub fn round_with_offsets(values: &[f64], alpha: f64, offsets: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(offsets)
        .map(|(g, off)| off + (((g - off) / alpha).floor() + 0.5) * alpha)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn interval_example() {
        let out = round_with_offsets(&[0.37], 0.2, &[0.05]);
        assert!((out[0] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn midpoints_are_fixed() {
        let mid = 0.05 + 1.5 * 0.2;
        assert_eq!(round_with_offsets(&[mid], 0.2, &[0.05]), vec![mid]);
    }

    #[test]
    fn derived_quantities() {
        let p = RoundingParams::new(0.1, 0.3, 0.05).unwrap();
        assert!((p.alpha() - 0.2 / 1.2).abs() < 1e-15);
        assert!((p.eps_prime() - 0.1 * 0.2 / 1.2).abs() < 1e-15);
        assert!(p.eps_prime() < p.eps);
        assert!(RoundingParams::new(0.1, 0.3, 0.2).is_err());
    }

    #[test]
    fn nearby_values_split_rarely() {
        let alpha = 0.2;
        let root = SharedRandomness::new(9);
        let trials = 10_000;
        let mut split = 0;
        for t in 0..trials {
            let mut s = root.indexed("offset", t).rng();
            let off = [s.random::<f64>() * alpha];
            if round_with_offsets(&[0.370], alpha, &off) != round_with_offsets(&[0.372], alpha, &off) {
                split += 1;
            }
        }
        // Crossing probability is 0.002/alpha = 0.01; sd at 10^4 trials is 0.001.
        let rate = split as f64 / trials as f64;
        assert!(rate <= 2.0 * 0.002 / alpha, "split rate {rate}");
    }

    #[test]
    fn offsets_follow_index_order() {
        let p = RoundingParams::new(0.1, 0.3, 0.05).unwrap();
        let s = SharedRandomness::new(4).child("round");
        let a = r_round(&[0.1, 0.2, 0.3], &p, &s).unwrap();
        let b = r_round(&[0.1, 0.2], &p, &s).unwrap();
        assert_eq!(&a[..2], &b[..]);
    }

    proptest! {
        #[test]
        fn shift_is_at_most_half_alpha(g in -10.0f64..10.0, off in 0.0f64..1.0, alpha in 0.01f64..1.0) {
            let off = off * alpha;
            let out = round_with_offsets(&[g], alpha, &[off])[0];
            prop_assert!((out - g).abs() <= alpha / 2.0 + 1e-12);
        }
    }
}
