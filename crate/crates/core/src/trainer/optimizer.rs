use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::scalar::{l2_norm, Scalar};

/// AdamW hyperparameters. Defaults follow the large-model recipe except the
/// learning rate, which is sized for the linear policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.95,
            epsilon: 1e-15,
            weight_decay: 0.1,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon >= 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid AdamW settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub first_moment: Vec<S>,
    pub second_moment: Vec<S>,
    pub step_count: u64,
    pub config: AdamWConfig,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(num_params: usize, config: AdamWConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            first_moment: vec![S::zero(); num_params],
            second_moment: vec![S::zero(); num_params],
            step_count: 0,
            config,
        })
    }
}

/// One AdamW step that *ascends* along `ascent`.
///
/// Decoupled decay is applied first (`θ ← θ(1 − lr·wd)`), then the
/// bias-corrected moment step `θ ← θ + lr · m̂ / (√v̂ + ε)`.
pub fn apply_adamw_step<S: Scalar>(
    state: &mut OptimizerState<S>,
    params: &mut PolicyParams<S>,
    ascent: &[S],
) -> Result<()> {
    let n = params.weights().len();
    if ascent.len() != n || state.first_moment.len() != n {
        return Err(Error::Contract(format!(
            "optimizer shape mismatch: params {n}, gradient {}, moments {}",
            ascent.len(),
            state.first_moment.len()
        )));
    }
    if ascent.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient passed to optimizer".into()));
    }
    let cfg = state.config;
    let lr = S::lit(cfg.learning_rate);
    let b1 = S::lit(cfg.beta1);
    let b2 = S::lit(cfg.beta2);
    let eps = S::lit(cfg.epsilon);
    let decay = S::one() - lr * S::lit(cfg.weight_decay);
    let t = state.step_count + 1;
    let bc1 = S::one() - b1.powi(t as i32);
    let bc2 = S::one() - b2.powi(t as i32);

    let weights = params.weights_mut();
    for i in 0..n {
        let g = ascent[i];
        let m = b1 * state.first_moment[i] + (S::one() - b1) * g;
        let v = b2 * state.second_moment[i] + (S::one() - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        weights[i] = weights[i] * decay + lr * m_hat / (v_hat.sqrt() + eps);
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("parameters after optimizer step".into()));
    }
    state.step_count = t;
    Ok(())
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`. Returns
/// the norms before and after.
pub fn clip_grad_norm<S: Scalar>(grad: &mut [S], max_norm: S) -> (S, S) {
    let pre = l2_norm(grad);
    if pre > max_norm && pre > S::zero() {
        let scale = max_norm / pre;
        for g in grad.iter_mut() {
            *g = *g * scale;
        }
    }
    (pre, l2_norm(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::FeatureMap;

    fn params(weights: Vec<f64>) -> PolicyParams<f64> {
        // V = 2, k = 1 concat: 3 features x 2 tokens = 6 weights.
        PolicyParams::from_weights(2, 1, FeatureMap::OneHotConcat, weights).unwrap()
    }

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut p = params(vec![0.3, -0.2, 1.0, 0.0, 2.0, -1.0]);
        let before = p.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut st = OptimizerState::new(6, cfg).unwrap();
        for _ in 0..5 {
            apply_adamw_step(&mut st, &mut p, &[0.0; 6]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count, 5);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let g = [0.5, -2.0, 1e-3, 0.0, 3.0, -0.25];
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = params(vec![0.0; 6]);
        let mut st = OptimizerState::new(6, cfg).unwrap();
        apply_adamw_step(&mut st, &mut p, &g).unwrap();
        for (w, gi) in p.weights().iter().zip(g) {
            // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε).
            let m_hat = (1.0 - 0.9) * gi / (1.0 - 0.9);
            let v_hat = (1.0 - 0.95) * gi * gi / (1.0 - 0.95);
            let expected = 0.1 * m_hat / (v_hat.sqrt() + 1e-15);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
            if gi != 0.0 {
                assert!((w - 0.1 * gi.signum()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decay_alone_shrinks_geometrically() {
        let cfg = AdamWConfig {
            learning_rate: 0.01,
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let init = vec![1.0, -2.0, 0.5, 4.0, 0.0, -0.1];
        let mut p = params(init.clone());
        let mut st = OptimizerState::new(6, cfg).unwrap();
        for _ in 0..3 {
            apply_adamw_step(&mut st, &mut p, &[0.0; 6]).unwrap();
        }
        let factor = (1.0f64 - 0.01 * 0.1).powi(3);
        for (w, w0) in p.weights().iter().zip(&init) {
            assert!((w - w0 * factor).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_and_mismatched_inputs() {
        let mut p = params(vec![0.0; 6]);
        let mut st = OptimizerState::new(6, AdamWConfig::default()).unwrap();
        assert!(apply_adamw_step(&mut st, &mut p, &[f64::NAN; 6]).is_err());
        assert!(apply_adamw_step(&mut st, &mut p, &[0.0; 5]).is_err());
        assert_eq!(st.step_count, 0);
        assert!(OptimizerState::<f64>::new(
            6,
            AdamWConfig {
                beta1: 1.0,
                ..AdamWConfig::default()
            }
        )
        .is_err());
    }

    #[test]
    fn clipping_scales_to_the_bound() {
        let mut g = vec![3.0f64, 4.0];
        let (pre, post) = clip_grad_norm(&mut g, 1.0);
        assert_eq!(pre, 5.0);
        assert!((post - 1.0).abs() < 1e-15);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.2];
        let (pre, post) = clip_grad_norm(&mut small, 1.0);
        assert_eq!(pre, post);
        assert_eq!(small, vec![0.1, 0.2]);
    }
}
