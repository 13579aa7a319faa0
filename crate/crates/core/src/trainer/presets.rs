//! Named clipping configurations: the algorithm baselines and the
//! regime-ablation grid.

use crate::error::{Error, Result};
use crate::objectives::{Algorithm, ClipConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub clip: ClipConfig<f64>,
}

const fn dispo(pl: f64, ph: f64, ml: f64, mh: f64, correct_only: bool) -> ClipConfig<f64> {
    ClipConfig {
        algorithm: Algorithm::Dispo,
        eps_low: 0.0,
        eps_high: 0.0,
        eps_plus_low: pl,
        eps_plus_high: ph,
        eps_minus_low: ml,
        eps_minus_high: mh,
        normalization: None,
        correct_only,
    }
}

const fn windowed(algorithm: Algorithm, low: f64, high: f64) -> ClipConfig<f64> {
    ClipConfig {
        algorithm,
        eps_low: low,
        eps_high: high,
        eps_plus_low: 0.0,
        eps_plus_high: 0.0,
        eps_minus_low: 0.0,
        eps_minus_high: 0.0,
        normalization: None,
        correct_only: false,
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "reinforce",
        description: "off-policy REINFORCE, unclipped importance weight",
        clip: windowed(Algorithm::Reinforce, 0.0, 0.0),
    },
    Preset {
        name: "grpo",
        description: "GRPO min-surrogate, symmetric eps = 0.2",
        clip: windowed(Algorithm::Grpo, 0.2, 0.2),
    },
    Preset {
        name: "dapo",
        description: "DAPO min-surrogate, eps_low = 0.2, eps_high = 0.28",
        clip: windowed(Algorithm::Dapo, 0.2, 0.28),
    },
    Preset {
        name: "cispo",
        description: "CISPO clipped weight, eps_low = 1, eps_high = 100",
        clip: windowed(Algorithm::Cispo, 1.0, 100.0),
    },
    Preset {
        name: "dispo-paper",
        description: "DISPO with eps+ = (0.2, 10), eps- = (1, 100)",
        clip: dispo(0.2, 10.0, 1.0, 100.0, false),
    },
    Preset {
        name: "online-sft",
        description: "correct responses only, every weight pinned to 1",
        clip: dispo(0.0, 0.0, 0.0, 0.0, true),
    },
    Preset {
        name: "plus-regime1-0.28",
        description: "online SFT plus amplified positive updates, eps+_high = 0.28",
        clip: dispo(0.0, 0.28, 0.0, 0.0, true),
    },
    Preset {
        name: "plus-regime1-10",
        description: "online SFT plus amplified positive updates, eps+_high = 10",
        clip: dispo(0.0, 10.0, 0.0, 0.0, true),
    },
    Preset {
        name: "plus-regime2-0.2",
        description: "online SFT plus suppressed positive updates, eps+_low = 0.2",
        clip: dispo(0.2, 0.0, 0.0, 0.0, true),
    },
    Preset {
        name: "plus-regime2-1",
        description: "online SFT plus suppressed positive updates, eps+_low = 1",
        clip: dispo(1.0, 0.0, 0.0, 0.0, true),
    },
    Preset {
        name: "dispo-full",
        description: "all four regimes enabled (same windows as dispo-paper)",
        clip: dispo(0.2, 10.0, 1.0, 100.0, false),
    },
    Preset {
        name: "dispo-minus-regime3",
        description: "full DISPO without amplified negative updates, eps-_high = 0",
        clip: dispo(0.2, 10.0, 1.0, 0.0, false),
    },
    Preset {
        name: "dispo-minus-regime4",
        description: "full DISPO without suppressed negative updates, eps-_low = 0",
        clip: dispo(0.2, 10.0, 0.0, 100.0, false),
    },
];

/// Rows of the regime-ablation table, in table order.
pub const ABLATION_GRID: &[&str] = &[
    "online-sft",
    "plus-regime1-0.28",
    "plus-regime1-10",
    "plus-regime2-0.2",
    "plus-regime2-1",
    "dispo-full",
    "dispo-minus-regime3",
    "dispo-minus-regime4",
];

/// The three-way algorithm comparison.
pub const COMPARISON_GRID: &[&str] = &["dapo", "cispo", "dispo-paper"];

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let valid: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::Config(format!("unknown preset {name:?}; valid presets: {}", valid.join(", ")))
    })
}

/// Clip configuration an algorithm gets when no preset or explicit epsilon
/// is given.
pub fn algorithm_default(algorithm: Algorithm) -> ClipConfig<f64> {
    let name = match algorithm {
        Algorithm::Reinforce => "reinforce",
        Algorithm::Grpo => "grpo",
        Algorithm::Dapo => "dapo",
        Algorithm::Cispo => "cispo",
        Algorithm::Dispo => "dispo-paper",
    };
    preset(name).expect("built-in preset").clip
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_presets_match_their_clipping_parameters() {
        let p = preset("dispo-paper").unwrap().clip;
        assert_eq!(
            (p.eps_plus_low, p.eps_plus_high, p.eps_minus_low, p.eps_minus_high),
            (0.2, 10.0, 1.0, 100.0)
        );
        let sft = preset("online-sft").unwrap().clip;
        assert_eq!((sft.eps_plus_low, sft.eps_plus_high), (0.0, 0.0));
        assert!(sft.correct_only);
        let m3 = preset("dispo-minus-regime3").unwrap().clip;
        assert_eq!((m3.eps_minus_low, m3.eps_minus_high), (1.0, 0.0));
        let m4 = preset("dispo-minus-regime4").unwrap().clip;
        assert_eq!((m4.eps_minus_low, m4.eps_minus_high), (0.0, 100.0));
    }

    #[test]
    fn every_preset_validates() {
        for p in PRESETS {
            p.clip.validate().unwrap();
        }
        for name in ABLATION_GRID.iter().chain(COMPARISON_GRID) {
            preset(name).unwrap();
        }
    }

    #[test]
    fn unknown_preset_lists_valid_names() {
        let msg = preset("dispo-magic").unwrap_err().to_string();
        assert!(msg.contains("online-sft") && msg.contains("dispo-paper"));
    }
}
