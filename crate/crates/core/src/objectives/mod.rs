//! Advantages, importance-weight clipping, per-token multipliers and
//! gradient assembly for REINFORCE, GRPO, DAPO, CISPO and DISPO.

mod advantage;
mod clip;
mod gradient;
mod profile;

pub use advantage::{compute_advantages, AdvantageSet};
pub use clip::{
    classify_regime, clip_ratio, decoupled_ratio, effective_multiplier, Algorithm, ClipConfig, Multiplier,
    Normalization, Regime,
};
pub use gradient::{accumulate_gradient, normalizers, GradientOutput, TokenUpdateRecord};
pub use profile::{
    linear_grid, profile_gradient_weight, profile_rows, profiles_csv, AdvantageSign, ProfileRow, PROFILES_CSV_HEADER,
};
