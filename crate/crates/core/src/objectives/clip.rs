use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Algorithm {
    Reinforce,
    Grpo,
    Dapo,
    Cispo,
    Dispo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Reinforce,
        Algorithm::Grpo,
        Algorithm::Dapo,
        Algorithm::Cispo,
        Algorithm::Dispo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Reinforce => "REINFORCE",
            Algorithm::Grpo => "GRPO",
            Algorithm::Dapo => "DAPO",
            Algorithm::Cispo => "CISPO",
            Algorithm::Dispo => "DISPO",
        }
    }

    /// GRPO and DAPO use the min-surrogate, which zeroes gradients outside
    /// the trust region instead of clipping the weight.
    pub fn is_min_surrogate(self) -> bool {
        matches!(self, Algorithm::Grpo | Algorithm::Dapo)
    }

    pub fn default_normalization(self) -> Normalization {
        match self {
            Algorithm::Reinforce | Algorithm::Grpo => Normalization::PerResponse,
            Algorithm::Dapo | Algorithm::Cispo | Algorithm::Dispo => Normalization::PerToken,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Algorithm::ALL.into_iter().find(|a| a.name() == up).ok_or_else(|| {
            Error::Config(format!(
                "unknown algorithm {s:?}; expected one of REINFORCE, GRPO, DAPO, CISPO, DISPO"
            ))
        })
    }
}

/// Length normalisation of the per-token terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `1 / (N · |o_i|)`: mean over responses of the per-response token mean.
    PerResponse,
    /// `1 / Σ|o_i|`: one shared token-level denominator for the batch.
    PerToken,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "per_response" => Ok(Normalization::PerResponse),
            "per_token" => Ok(Normalization::PerToken),
            _ => Err(Error::Config(format!(
                "unknown normalization {s:?}; expected per_response or per_token"
            ))),
        }
    }
}

/// Every clipping knob in one place.
///
/// Non-DISPO algorithms read `eps_low`/`eps_high`; DISPO reads the four
/// sign-decoupled fields. `correct_only` drops every token of responses the
/// verifier rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig<S> {
    pub algorithm: Algorithm,
    pub eps_low: S,
    pub eps_high: S,
    pub eps_plus_low: S,
    pub eps_plus_high: S,
    pub eps_minus_low: S,
    pub eps_minus_high: S,
    /// Overrides the algorithm's default normalisation when set.
    pub normalization: Option<Normalization>,
    pub correct_only: bool,
}

impl<S: Scalar> ClipConfig<S> {
    fn base(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            eps_low: S::zero(),
            eps_high: S::zero(),
            eps_plus_low: S::zero(),
            eps_plus_high: S::zero(),
            eps_minus_low: S::zero(),
            eps_minus_high: S::zero(),
            normalization: None,
            correct_only: false,
        }
    }

    pub fn reinforce() -> Self {
        Self::base(Algorithm::Reinforce)
    }

    /// Same configuration at another precision.
    pub fn cast<T: Scalar>(&self) -> ClipConfig<T> {
        ClipConfig {
            algorithm: self.algorithm,
            eps_low: T::lit(self.eps_low.as_f64()),
            eps_high: T::lit(self.eps_high.as_f64()),
            eps_plus_low: T::lit(self.eps_plus_low.as_f64()),
            eps_plus_high: T::lit(self.eps_plus_high.as_f64()),
            eps_minus_low: T::lit(self.eps_minus_low.as_f64()),
            eps_minus_high: T::lit(self.eps_minus_high.as_f64()),
            normalization: self.normalization,
            correct_only: self.correct_only,
        }
    }

    pub fn grpo(eps: S) -> Self {
        Self {
            eps_low: eps,
            eps_high: eps,
            ..Self::base(Algorithm::Grpo)
        }
    }

    pub fn dapo(eps_low: S, eps_high: S) -> Self {
        Self {
            eps_low,
            eps_high,
            ..Self::base(Algorithm::Dapo)
        }
    }

    pub fn cispo(eps_low: S, eps_high: S) -> Self {
        Self {
            eps_low,
            eps_high,
            ..Self::base(Algorithm::Cispo)
        }
    }

    pub fn dispo(plus_low: S, plus_high: S, minus_low: S, minus_high: S) -> Self {
        Self {
            eps_plus_low: plus_low,
            eps_plus_high: plus_high,
            eps_minus_low: minus_low,
            eps_minus_high: minus_high,
            ..Self::base(Algorithm::Dispo)
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = Some(normalization);
        self
    }

    pub fn with_correct_only(mut self, correct_only: bool) -> Self {
        self.correct_only = correct_only;
        self
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
            .unwrap_or_else(|| self.algorithm.default_normalization())
    }

    /// Clip window `[1 − low, 1 + high]` that applies to a token with the
    /// given advantage sign. REINFORCE has no window.
    pub fn window(&self, positive_advantage: bool) -> Option<(S, S)> {
        let one = S::one();
        match self.algorithm {
            Algorithm::Reinforce => None,
            Algorithm::Dispo if positive_advantage => Some((one - self.eps_plus_low, one + self.eps_plus_high)),
            Algorithm::Dispo => Some((one - self.eps_minus_low, one + self.eps_minus_high)),
            _ => Some((one - self.eps_low, one + self.eps_high)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: S| -> Result<()> {
            if !v.is_finite() || v < S::zero() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
            Ok(())
        };
        let lower = |name: &str, v: S| -> Result<()> {
            check(name, v)?;
            if v > S::one() {
                return Err(Error::Config(format!(
                    "{name} must be <= 1 so the clip floor stays non-negative, got {v}"
                )));
            }
            Ok(())
        };
        match self.algorithm {
            Algorithm::Reinforce => Ok(()),
            Algorithm::Grpo => {
                lower("eps_low", self.eps_low)?;
                check("eps_high", self.eps_high)?;
                if self.eps_low != self.eps_high {
                    return Err(Error::Config(format!(
                        "GRPO uses a symmetric window, got eps_low={} eps_high={}",
                        self.eps_low, self.eps_high
                    )));
                }
                Ok(())
            }
            Algorithm::Dapo | Algorithm::Cispo => {
                lower("eps_low", self.eps_low)?;
                check("eps_high", self.eps_high)
            }
            Algorithm::Dispo => {
                lower("eps_plus_low", self.eps_plus_low)?;
                check("eps_plus_high", self.eps_plus_high)?;
                lower("eps_minus_low", self.eps_minus_low)?;
                check("eps_minus_high", self.eps_minus_high)
            }
        }
    }
}

/// `clip(r; low, high) = min(max(r, low), high)`.
pub fn clip_ratio<S: Scalar>(r: S, low: S, high: S) -> Result<S> {
    if low > high {
        return Err(Error::Config(format!(
            "clip bounds out of order: low {low} > high {high}"
        )));
    }
    Ok(r.max(low).min(high))
}

/// Sign-decoupled importance weight.
pub fn decoupled_ratio<S: Scalar>(r: S, advantage: S, cfg: &ClipConfig<S>) -> Result<S> {
    if cfg.algorithm != Algorithm::Dispo {
        return Err(Error::Contract(format!(
            "decoupled ratio requested for {}",
            cfg.algorithm
        )));
    }
    if advantage == S::zero() {
        return Err(Error::Contract("decoupled ratio needs a non-zero advantage".into()));
    }
    let (low, high) = cfg.window(advantage > S::zero()).expect("DISPO always has a window");
    clip_ratio(r, low, high)
}

/// Scalar `m` such that the token's gradient is `m · Â · ∇log π`, and
/// whether the min-surrogate zeroed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Multiplier<S> {
    pub value: S,
    pub gated: bool,
}

pub fn effective_multiplier<S: Scalar>(r: S, advantage: S, cfg: &ClipConfig<S>) -> Result<Multiplier<S>> {
    if advantage == S::zero() {
        return Err(Error::Contract(
            "effective multiplier needs a non-zero advantage".into(),
        ));
    }
    if !(r > S::zero() && r.is_finite()) {
        return Err(Error::NonFinite(format!(
            "importance ratio {r} is not positive and finite"
        )));
    }
    let open = |value| Multiplier { value, gated: false };
    match cfg.algorithm {
        Algorithm::Reinforce => Ok(open(r)),
        Algorithm::Cispo => {
            let (low, high) = cfg.window(true).expect("CISPO has a window");
            Ok(open(clip_ratio(r, low, high)?))
        }
        Algorithm::Dispo => Ok(open(decoupled_ratio(r, advantage, cfg)?)),
        Algorithm::Grpo | Algorithm::Dapo => {
            let (low, high) = cfg.window(true).expect("min-surrogate has a window");
            let outside = if advantage > S::zero() { r > high } else { r < low };
            Ok(if outside {
                Multiplier {
                    value: S::zero(),
                    gated: true,
                }
            } else {
                open(r)
            })
        }
    }
}

/// Quadrant of (advantage sign, ratio vs 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "R1_AMP_POS")]
    AmplifiedPositive,
    #[serde(rename = "R2_SUP_POS")]
    SuppressedPositive,
    #[serde(rename = "R3_AMP_NEG")]
    AmplifiedNegative,
    #[serde(rename = "R4_SUP_NEG")]
    SuppressedNegative,
    #[serde(rename = "NEUTRAL")]
    Neutral,
}

impl Regime {
    /// Position in `[R1, R2, R3, R4]`, or `None` for neutral tokens.
    pub fn index(self) -> Option<usize> {
        match self {
            Regime::AmplifiedPositive => Some(0),
            Regime::SuppressedPositive => Some(1),
            Regime::AmplifiedNegative => Some(2),
            Regime::SuppressedNegative => Some(3),
            Regime::Neutral => None,
        }
    }
}

/// Exactly `r == 1` is neutral, and so is a zero advantage (such a token
/// carries no gradient).
pub fn classify_regime<S: Scalar>(r: S, advantage: S) -> Regime {
    let one = S::one();
    if r == one || advantage == S::zero() {
        Regime::Neutral
    } else if advantage > S::zero() {
        if r > one {
            Regime::AmplifiedPositive
        } else {
            Regime::SuppressedPositive
        }
    } else if r > one {
        Regime::AmplifiedNegative
    } else {
        Regime::SuppressedNegative
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn headline_dispo() -> ClipConfig<f64> {
        ClipConfig::dispo(0.2, 10.0, 1.0, 100.0)
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_ratio(1.5, 0.8, 1.28).unwrap(), 1.28);
        assert_eq!(clip_ratio(1.0, 0.8, 1.28).unwrap(), 1.0);
        assert_eq!(clip_ratio(0.5, 0.8, 11.0).unwrap(), 0.8);
        assert!(matches!(clip_ratio(1.0, 2.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn decoupled_examples() {
        let cfg = headline_dispo();
        assert_eq!(decoupled_ratio(12.0, 1.0, &cfg).unwrap(), 11.0);
        assert_eq!(decoupled_ratio(0.5, -1.0, &cfg).unwrap(), 0.5);
        let pinned = ClipConfig::dispo(0.0, 0.0, 1.0, 100.0);
        for r in [0.01, 0.5, 1.0, 3.0, 1e3] {
            assert_eq!(decoupled_ratio(r, 0.7, &pinned).unwrap(), 1.0);
        }
        assert!(decoupled_ratio(1.0, 0.0, &cfg).is_err());
        assert!(decoupled_ratio(1.0, 1.0, &ClipConfig::cispo(1.0, 100.0)).is_err());
    }

    #[test]
    fn multiplier_examples() {
        let dapo = ClipConfig::dapo(0.2, 0.28);
        assert_eq!(
            effective_multiplier(1.5, 1.0, &dapo).unwrap(),
            Multiplier {
                value: 0.0,
                gated: true
            }
        );
        assert_eq!(
            effective_multiplier(1.5, -1.0, &dapo).unwrap(),
            Multiplier {
                value: 1.5,
                gated: false
            }
        );
        let cispo = ClipConfig::cispo(1.0, 100.0);
        for adv in [1.0, -1.0] {
            assert_eq!(
                effective_multiplier(0.5, adv, &cispo).unwrap(),
                Multiplier {
                    value: 0.5,
                    gated: false
                }
            );
        }
        let reinforce = ClipConfig::reinforce();
        assert_eq!(effective_multiplier(7.0, -1.0, &reinforce).unwrap().value, 7.0);
        assert!(effective_multiplier(1.0, 0.0, &reinforce).is_err());
        assert!(effective_multiplier(0.0, 1.0, &reinforce).is_err());
    }

    #[test]
    fn regime_examples() {
        assert_eq!(classify_regime(1.3, 1.0), Regime::AmplifiedPositive);
        assert_eq!(classify_regime(0.7, 1.0), Regime::SuppressedPositive);
        assert_eq!(classify_regime(1.3, -1.0), Regime::AmplifiedNegative);
        assert_eq!(classify_regime(0.7, -1.0), Regime::SuppressedNegative);
        assert_eq!(classify_regime(1.0, 1.0), Regime::Neutral);
        assert_eq!(classify_regime(1.3, 0.0), Regime::Neutral);
        assert_eq!(
            serde_json::to_string(&Regime::SuppressedNegative).unwrap(),
            "\"R4_SUP_NEG\""
        );
    }

    #[test]
    fn validation() {
        assert!(headline_dispo().validate().is_ok());
        assert!(ClipConfig::dispo(1.1, 0.0, 0.0, 0.0).validate().is_err());
        assert!(ClipConfig::dispo(0.0, 0.0, 1.5, 0.0).validate().is_err());
        assert!(ClipConfig::dapo(-0.1, 0.2).validate().is_err());
        assert!(ClipConfig::cispo(1.0, 100.0).validate().is_ok());
        assert!(ClipConfig::grpo(0.2).validate().is_ok());
        let mut lopsided = ClipConfig::grpo(0.2);
        lopsided.eps_high = 0.3;
        assert!(lopsided.validate().is_err());
        assert!(ClipConfig::dapo(0.2, f64::NAN).validate().is_err());
    }

    #[test]
    fn normalization_defaults_and_override() {
        assert_eq!(ClipConfig::<f64>::grpo(0.2).normalization(), Normalization::PerResponse);
        assert_eq!(
            ClipConfig::<f64>::reinforce().normalization(),
            Normalization::PerResponse
        );
        assert_eq!(headline_dispo().normalization(), Normalization::PerToken);
        assert_eq!(
            ClipConfig::dapo(0.2, 0.2)
                .with_normalization(Normalization::PerResponse)
                .normalization(),
            Normalization::PerResponse
        );
    }

    #[test]
    fn multiplier_monotone_in_decoupled_eps() {
        let grid: Vec<f64> = (1..400).map(|i| i as f64 * 0.01).collect();
        let highs = [0.0, 0.1, 0.28, 1.0, 10.0];
        let lows = [0.0, 0.2, 0.5, 1.0];
        for &r in grid.iter().filter(|&&r| r > 1.0) {
            let ms: Vec<f64> = highs
                .iter()
                .map(|&h| decoupled_ratio(r, 1.0, &ClipConfig::dispo(0.2, h, 1.0, 100.0)).unwrap())
                .collect();
            assert!(ms.windows(2).all(|w| w[0] <= w[1]));
        }
        for &r in grid.iter().filter(|&&r| r < 1.0) {
            let ms: Vec<f64> = lows
                .iter()
                .map(|&l| decoupled_ratio(r, -1.0, &ClipConfig::dispo(0.2, 10.0, l, 100.0)).unwrap())
                .collect();
            assert!(ms.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn dispo_multiplier_stays_in_branch_window() {
        let cfgs = [
            headline_dispo(),
            ClipConfig::dispo(0.0, 0.28, 0.5, 0.0),
            ClipConfig::dispo(1.0, 0.0, 0.0, 3.0),
        ];
        for cfg in cfgs {
            for i in 1..600 {
                let r = i as f64 * 0.05;
                for adv in [1.0, -2.0] {
                    let (pl, ph) = if adv > 0.0 {
                        (cfg.eps_plus_low, cfg.eps_plus_high)
                    } else {
                        (cfg.eps_minus_low, cfg.eps_minus_high)
                    };
                    let m = effective_multiplier(r, adv, &cfg).unwrap().value;
                    assert!(m >= (1.0 - pl).max(0.0) && m <= 1.0 + ph);
                }
            }
        }
    }
}
