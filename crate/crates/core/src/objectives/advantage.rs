use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Group-relative advantages `(R_i − μ_G) / σ_G` with the population
/// standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSet<S> {
    pub rewards: Vec<S>,
    pub mean: S,
    pub std: S,
    /// `None` when the group is degenerate (`σ_G = 0`).
    pub advantages: Option<Vec<S>>,
    pub degenerate: bool,
}

pub fn compute_advantages<S: Scalar>(rewards: &[S]) -> Result<AdvantageSet<S>> {
    if rewards.len() < 2 {
        return Err(Error::Contract(format!(
            "advantages need a group of at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward".into()));
    }
    let g = S::lit(rewards.len() as f64);
    let mean = rewards.iter().copied().sum::<S>() / g;
    let var = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<S>() / g;
    let std = var.sqrt();
    let degenerate = std == S::zero();
    let advantages = (!degenerate).then(|| rewards.iter().map(|&r| (r - mean) / std).collect());
    Ok(AdvantageSet {
        rewards: rewards.to_vec(),
        mean,
        std,
        advantages,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_rewards_are_their_own_advantages() {
        let set = compute_advantages(&[1.0f64, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(set.advantages.unwrap(), vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(set.mean, 0.0);
        assert_eq!(set.std, 1.0);
    }

    #[test]
    fn one_correct_in_four() {
        // mu = -1/2, sigma = sqrt(3)/2 by hand.
        let set = compute_advantages(&[1.0f64, -1.0, -1.0, -1.0]).unwrap();
        let s3 = 3f64.sqrt();
        let expected = [s3, -1.0 / s3, -1.0 / s3, -1.0 / s3];
        for (a, e) in set.advantages.unwrap().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!((set.mean + 0.5).abs() < 1e-15);
        assert!((set.std - s3 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let set = compute_advantages(&[1.0f64; 4]).unwrap();
        assert!(set.degenerate);
        assert!(set.advantages.is_none());
        assert!(compute_advantages(&[1.0f64]).is_err());
        assert!(compute_advantages(&[1.0f64, f64::NAN]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let set = compute_advantages(&[1.0f32, -1.0, -1.0, -1.0]).unwrap();
        let adv = set.advantages.unwrap();
        assert!((adv[0] - 3f32.sqrt()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn normalised_when_not_degenerate(rewards in prop::collection::vec(-1.0f64..1.0, 2..32)) {
            let set = compute_advantages(&rewards).unwrap();
            prop_assume!(!set.degenerate && set.std > 1e-6);
            let adv = set.advantages.unwrap();
            let n = adv.len() as f64;
            let mean = adv.iter().sum::<f64>() / n;
            let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
    }
}
