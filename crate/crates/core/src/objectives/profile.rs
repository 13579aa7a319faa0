use std::fmt;

use serde::{Deserialize, Serialize};

use super::clip::{effective_multiplier, Algorithm, ClipConfig, Multiplier};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageSign {
    Positive,
    Negative,
}

impl AdvantageSign {
    pub fn unit<S: Scalar>(self) -> S {
        match self {
            AdvantageSign::Positive => S::one(),
            AdvantageSign::Negative => -S::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AdvantageSign::Positive => "positive",
            AdvantageSign::Negative => "negative",
        }
    }
}

impl fmt::Display for AdvantageSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Effective multiplier at each point of a strictly increasing, positive
/// ratio grid.
pub fn profile_gradient_weight<S: Scalar>(
    cfg: &ClipConfig<S>,
    sign: AdvantageSign,
    r_grid: &[S],
) -> Result<Vec<Multiplier<S>>> {
    cfg.validate()?;
    if r_grid
        .iter()
        .any(|&r| r.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::Contract("ratio grid must be strictly positive".into()));
    }
    if r_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("ratio grid must be strictly increasing".into()));
    }
    let adv = sign.unit::<S>();
    r_grid.iter().map(|&r| effective_multiplier(r, adv, cfg)).collect()
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::Config(format!(
            "ratio grid needs 0 < lo < hi and at least 2 points, got [{lo}, {hi}] x {n}"
        )));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

/// One row of `profiles.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub algorithm: Algorithm,
    pub advantage_sign: AdvantageSign,
    pub r: f64,
    pub multiplier: f64,
    pub gated: bool,
}

pub const PROFILES_CSV_HEADER: &str = "algorithm,advantage_sign,r,multiplier,gated";

/// Profiles every configuration against both advantage signs.
pub fn profile_rows(configs: &[ClipConfig<f64>], r_grid: &[f64]) -> Result<Vec<ProfileRow>> {
    let mut rows = Vec::with_capacity(configs.len() * 2 * r_grid.len());
    for cfg in configs {
        for sign in [AdvantageSign::Positive, AdvantageSign::Negative] {
            let profile = profile_gradient_weight(cfg, sign, r_grid)?;
            rows.extend(r_grid.iter().zip(profile).map(|(&r, m)| ProfileRow {
                algorithm: cfg.algorithm,
                advantage_sign: sign,
                r,
                multiplier: m.value,
                gated: m.gated,
            }));
        }
    }
    Ok(rows)
}

/// CSV text with shortest round-trip float formatting.
pub fn profiles_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from(PROFILES_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{:?},{:?},{}\n",
            row.algorithm, row.advantage_sign, row.r, row.multiplier, row.gated
        ));
    }
    out
}
