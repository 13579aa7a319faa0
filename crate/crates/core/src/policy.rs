//! Linear-softmax autoregressive policy over windowed one-hot context
//! features, with analytic log-probability gradients and frozen snapshots.
//!
//! Feature layout (all features are 0/1 indicators):
//!
//! * index `0`: bias, always active;
//! * `1 + slot * V + token`: the token `slot` positions back from the end of
//!   the context (slot 0 is the most recent token), for `slot < k`;
//! * [`FeatureMap::OneHotPairs`] adds one indicator per (slot pair, token
//!   pair) conjunction after the unigram block.
//!
//! Weights are stored feature-major: `weights[feature * V + token]`.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{logsumexp, Scalar};
use crate::task::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureMap {
    /// Bias plus one-hot encodings of the last `k` tokens.
    OneHotConcat,
    /// `OneHotConcat` plus pairwise slot/token conjunctions, which lets the
    /// linear policy represent answers that depend jointly on two operands.
    OneHotPairs,
}

impl FeatureMap {
    fn code(self) -> u8 {
        match self {
            FeatureMap::OneHotConcat => 0,
            FeatureMap::OneHotPairs => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureMap::OneHotConcat),
            1 => Some(FeatureMap::OneHotPairs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMap::OneHotConcat => "ONE_HOT_CONCAT",
            FeatureMap::OneHotPairs => "ONE_HOT_PAIRS",
        }
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "ONE_HOT_CONCAT" => Ok(FeatureMap::OneHotConcat),
            "ONE_HOT_PAIRS" => Ok(FeatureMap::OneHotPairs),
            _ => Err(Error::Config(format!(
                "unknown feature map {s:?}; expected ONE_HOT_CONCAT or ONE_HOT_PAIRS"
            ))),
        }
    }
}

/// Parameter initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    Gaussian { std: f64 },
}

impl FromStr for Init {
    type Err = Error;

    /// Accepts `zeros` or `gaussian:<std>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("zeros") {
            return Ok(Init::Zeros);
        }
        if let Some(std) = s.strip_prefix("gaussian:") {
            let std: f64 = std
                .parse()
                .map_err(|_| Error::Config(format!("bad gaussian std in init {s:?}")))?;
            if !(std.is_finite() && std >= 0.0) {
                return Err(Error::Config(format!("gaussian std must be >= 0, got {std}")));
            }
            return Ok(Init::Gaussian { std });
        }
        Err(Error::Config(format!(
            "unknown init {s:?}; expected `zeros` or `gaussian:<std>`"
        )))
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Zeros => f.write_str("zeros"),
            Init::Gaussian { std } => write!(f, "gaussian:{std}"),
        }
    }
}

/// Next-token distribution at one context.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution<S> {
    pub logits: Vec<S>,
    pub log_probs: Vec<S>,
    pub entropy: S,
}

impl<S: Scalar> TokenDistribution<S> {
    pub(crate) fn from_logits(logits: Vec<S>) -> Result<Self> {
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("policy produced non-finite logits".into()));
        }
        let lse = logsumexp(&logits);
        let log_probs: Vec<S> = logits.iter().map(|&x| x - lse).collect();
        let entropy = log_probs
            .iter()
            .map(|&lp| {
                let p = lp.exp();
                if p > S::zero() {
                    -p * lp
                } else {
                    S::zero()
                }
            })
            .sum::<S>()
            .max(S::zero());
        Ok(Self {
            logits,
            log_probs,
            entropy,
        })
    }

    pub fn prob(&self, token: TokenId) -> S {
        self.log_probs[token].exp()
    }

    /// Inverse-CDF draw at temperature 1.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (t, lp) in self.log_probs.iter().enumerate() {
            let p = lp.exp().as_f64();
            if p > 0.0 {
                last_positive = t;
            }
            acc += p;
            if u < acc {
                return t;
            }
        }
        last_positive
    }
}

/// Live parameters of the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<S> {
    vocab_size: usize,
    context_window: usize,
    feature_map: FeatureMap,
    weights: Vec<S>,
}

impl<S: Scalar> PolicyParams<S> {
    pub fn zeros(vocab_size: usize, context_window: usize, feature_map: FeatureMap) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Config(format!(
                "policy needs at least 2 tokens, got {vocab_size}"
            )));
        }
        if context_window == 0 {
            return Err(Error::Config("context window must be positive".into()));
        }
        let n = num_features(vocab_size, context_window, feature_map) * vocab_size;
        Ok(Self {
            vocab_size,
            context_window,
            feature_map,
            weights: vec![S::zero(); n],
        })
    }

    pub fn init<R: Rng + ?Sized>(
        vocab_size: usize,
        context_window: usize,
        feature_map: FeatureMap,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(vocab_size, context_window, feature_map)?;
        if let Init::Gaussian { std } = init {
            let normal = Normal::new(0.0, std).map_err(|e| Error::Config(format!("gaussian init: {e}")))?;
            for w in &mut params.weights {
                *w = S::lit(normal.sample(rng));
            }
        }
        Ok(params)
    }

    /// Wraps an explicit weight vector, checking its length and finiteness.
    pub fn from_weights(
        vocab_size: usize,
        context_window: usize,
        feature_map: FeatureMap,
        weights: Vec<S>,
    ) -> Result<Self> {
        let mut params = Self::zeros(vocab_size, context_window, feature_map)?;
        if weights.len() != params.weights.len() {
            return Err(Error::Config(format!(
                "expected {} weights for V={vocab_size}, k={context_window}, {feature_map}; got {}",
                params.weights.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights must be finite".into()));
        }
        params.weights = weights;
        Ok(params)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_window(&self) -> usize {
        self.context_window
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    pub fn num_features(&self) -> usize {
        num_features(self.vocab_size, self.context_window, self.feature_map)
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Mutable weight access. Only the optimizer should write here.
    pub fn weights_mut(&mut self) -> &mut [S] {
        &mut self.weights
    }

    pub fn weight(&self, feature: usize, token: TokenId) -> S {
        self.weights[feature * self.vocab_size + token]
    }

    /// Indices of the active features for the context's trailing window.
    /// Context tokens outside `0..V` are ignored.
    pub fn active_features(&self, context: &[TokenId]) -> Vec<usize> {
        let v = self.vocab_size;
        let k = self.context_window;
        let slots: Vec<Option<TokenId>> = (0..k)
            .map(|slot| {
                context
                    .len()
                    .checked_sub(slot + 1)
                    .map(|i| context[i])
                    .filter(|&t| t < v)
            })
            .collect();
        let mut active = vec![0];
        for (slot, tok) in slots.iter().enumerate() {
            if let Some(t) = tok {
                active.push(1 + slot * v + t);
            }
        }
        if self.feature_map == FeatureMap::OneHotPairs {
            let base = 1 + k * v;
            let mut pair = 0;
            for i in 0..k {
                for j in (i + 1)..k {
                    if let (Some(a), Some(b)) = (slots[i], slots[j]) {
                        active.push(base + pair * v * v + a * v + b);
                    }
                    pair += 1;
                }
            }
        }
        active
    }

    pub fn logits(&self, context: &[TokenId]) -> Vec<S> {
        self.logits_for(&self.active_features(context))
    }

    pub(crate) fn logits_for(&self, active: &[usize]) -> Vec<S> {
        let v = self.vocab_size;
        let mut logits = vec![S::zero(); v];
        for &f in active {
            let row = &self.weights[f * v..(f + 1) * v];
            for (l, &w) in logits.iter_mut().zip(row) {
                *l = *l + w;
            }
        }
        logits
    }

    pub fn distribution(&self, context: &[TokenId]) -> Result<TokenDistribution<S>> {
        TokenDistribution::from_logits(self.logits(context))
    }

    fn check_token(&self, token: TokenId) -> Result<()> {
        if token >= self.vocab_size {
            return Err(Error::Contract(format!(
                "token id {token} out of range for vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }

    /// `log π(token | context)`.
    pub fn log_prob(&self, context: &[TokenId], token: TokenId) -> Result<S> {
        self.check_token(token)?;
        Ok(self.distribution(context)?.log_probs[token])
    }

    pub fn sample_token<R: Rng + ?Sized>(&self, context: &[TokenId], rng: &mut R) -> Result<TokenId> {
        Ok(self.distribution(context)?.sample(rng))
    }

    pub fn token_entropy(&self, context: &[TokenId]) -> Result<S> {
        Ok(self.distribution(context)?.entropy)
    }

    /// Dense gradient of `log π(token | context)` with respect to the
    /// weights: `feature ⊗ (one_hot(token) − p)`.
    pub fn grad_log_prob(&self, context: &[TokenId], token: TokenId) -> Result<Vec<S>> {
        self.check_token(token)?;
        let active = self.active_features(context);
        let dist = TokenDistribution::from_logits(self.logits_for(&active))?;
        let mut grad = vec![S::zero(); self.weights.len()];
        add_scaled_grad_log_prob(&mut grad, self.vocab_size, &active, &dist, token, S::one());
        Ok(grad)
    }

    /// Frozen deep copy for use as the rollout-time reference policy.
    pub fn snapshot(&self) -> PolicySnapshot<S> {
        PolicySnapshot(Arc::new(self.clone()))
    }

    /// Versioned little-endian checkpoint encoding.
    ///
    /// Layout: magic `DSPOCKPT`, `u32` version, `u8` scalar width, `u8`
    /// feature-map code, two zero bytes, `u32` V, `u32` k, `u64` weight
    /// count, then the weights.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.weights.len() * S::BYTES);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(S::BYTES as u8);
        out.push(self.feature_map.code());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.context_window as u32).to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for &w in &self.weights {
            w.write_le(&mut out);
        }
        out
    }

    /// Decodes a checkpoint written with either scalar width.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 32 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing checkpoint magic"));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let width = bytes[12] as usize;
        let feature_map = FeatureMap::from_code(bytes[13]).ok_or_else(|| bad("unknown feature map code"))?;
        let vocab_size = u32_at(16) as usize;
        let context_window = u32_at(20) as usize;
        let count = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
        let body = &bytes[32..];
        if !(width == 4 || width == 8) || body.len() != count * width {
            return Err(bad("checkpoint body length does not match header"));
        }
        let weights = body
            .chunks_exact(width)
            .map(|c| {
                if width == 8 {
                    S::lit(f64::read_le(c))
                } else {
                    S::lit(f64::from(f32::read_le(c)))
                }
            })
            .collect();
        Self::from_weights(vocab_size, context_window, feature_map, weights)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DSPOCKPT";
const CHECKPOINT_VERSION: u32 = 1;

pub fn num_features(vocab_size: usize, context_window: usize, feature_map: FeatureMap) -> usize {
    let unigram = 1 + context_window * vocab_size;
    match feature_map {
        FeatureMap::OneHotConcat => unigram,
        FeatureMap::OneHotPairs => {
            let pairs = context_window * context_window.saturating_sub(1) / 2;
            unigram + pairs * vocab_size * vocab_size
        }
    }
}

/// Adds `scale * ∇ log π(token)` into a dense gradient buffer, touching only
/// the rows of active features.
pub(crate) fn add_scaled_grad_log_prob<S: Scalar>(
    grad: &mut [S],
    vocab_size: usize,
    active: &[usize],
    dist: &TokenDistribution<S>,
    token: TokenId,
    scale: S,
) {
    let coeffs: Vec<S> = (0..vocab_size)
        .map(|c| {
            let indicator = if c == token { S::one() } else { S::zero() };
            scale * (indicator - dist.prob(c))
        })
        .collect();
    for &f in active {
        let row = &mut grad[f * vocab_size..(f + 1) * vocab_size];
        for (g, &c) in row.iter_mut().zip(&coeffs) {
            *g = *g + c;
        }
    }
}

/// Immutable reference policy captured at rollout time.
#[derive(Debug, Clone)]
pub struct PolicySnapshot<S>(Arc<PolicyParams<S>>);

impl<S> Deref for PolicySnapshot<S> {
    type Target = PolicyParams<S>;

    fn deref(&self) -> &PolicyParams<S> {
        &self.0
    }
}

impl<S: Scalar> PolicySnapshot<S> {
    /// Copies the frozen parameters into a fresh live parameter set.
    pub fn to_params(&self) -> PolicyParams<S> {
        (*self.0).clone()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_params(v: usize, k: usize, fm: FeatureMap, seed: u64) -> PolicyParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyParams::init(v, k, fm, Init::Gaussian { std: 0.7 }, &mut rng).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_log_prob() {
        let p = PolicyParams::<f64>::zeros(15, 8, FeatureMap::OneHotConcat).unwrap();
        for t in 0..15 {
            let lp = p.log_prob(&[1, 2, 3], t).unwrap();
            assert!((lp - (1.0 / 15.0f64).ln()).abs() < 1e-15);
        }
        assert!((p.token_entropy(&[]).unwrap() - 15f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn large_margin_gives_near_zero_log_prob() {
        let mut p = PolicyParams::<f64>::zeros(15, 2, FeatureMap::OneHotConcat).unwrap();
        // Feature for "token 4 in slot 0" favours token 9 by 20 nats.
        let f = 1 + 4;
        p.weights_mut()[f * 15 + 9] = 20.0;
        let lp = p.log_prob(&[3, 4], 9).unwrap();
        let expected = -(1.0 + 14.0 * (-20.0f64).exp()).ln();
        assert!((lp - expected).abs() < 1e-15);
        assert!(lp.abs() < 1e-7);
        assert!(p.token_entropy(&[3, 4]).unwrap() < 1e-3);
    }

    #[test]
    fn probabilities_normalise() {
        for seed in 0..20 {
            let p = random_params(6, 3, FeatureMap::OneHotPairs, seed);
            let ctx = [seed as usize % 6, 2, 5, 1];
            let total: f64 = (0..6).map(|t| p.log_prob(&ctx, t).unwrap().exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_entropy_is_log_two() {
        let mut p = PolicyParams::<f64>::zeros(5, 1, FeatureMap::OneHotConcat).unwrap();
        for t in 2..5 {
            p.weights_mut()[t] = -1e3;
        }
        assert!((p.token_entropy(&[]).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_token_is_rejected() {
        let p = PolicyParams::<f64>::zeros(4, 1, FeatureMap::OneHotConcat).unwrap();
        assert!(matches!(p.log_prob(&[], 4), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_logits_surface_as_errors() {
        let mut p = PolicyParams::<f64>::zeros(4, 1, FeatureMap::OneHotConcat).unwrap();
        p.weights_mut()[0] = f64::INFINITY;
        assert!(matches!(p.log_prob(&[], 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gradient_at_uniform_has_closed_form() {
        let v = 5;
        let p = PolicyParams::<f64>::zeros(v, 2, FeatureMap::OneHotConcat).unwrap();
        let ctx = [3];
        let g = p.grad_log_prob(&ctx, 1).unwrap();
        let active = p.active_features(&ctx);
        assert_eq!(active, vec![0, 1 + 3]);
        for f in 0..p.num_features() {
            for c in 0..v {
                let expected = if active.contains(&f) {
                    if c == 1 {
                        1.0 - 1.0 / v as f64
                    } else {
                        -1.0 / v as f64
                    }
                } else {
                    0.0
                };
                assert!((g[f * v + c] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let p = random_params(7, 3, FeatureMap::OneHotPairs, 11);
        let g = p.grad_log_prob(&[1, 6, 0, 2], 3).unwrap();
        for row in g.chunks(7) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn pair_features_index_distinct_conjunctions() {
        let p = PolicyParams::<f64>::zeros(4, 3, FeatureMap::OneHotPairs).unwrap();
        assert_eq!(p.num_features(), 1 + 12 + 3 * 16);
        let a = p.active_features(&[1, 2, 3]);
        let b = p.active_features(&[2, 1, 3]);
        assert_eq!(a.len(), 1 + 3 + 3);
        assert_ne!(a, b);
        assert!(a.iter().all(|&f| f < p.num_features()));
        // Short contexts only activate the slots that exist.
        assert_eq!(p.active_features(&[2]).len(), 2);
    }

    #[test]
    fn sampling_is_reproducible_and_respects_point_masses() {
        let p = random_params(6, 2, FeatureMap::OneHotConcat, 3);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|i| p.sample_token(&[i % 6], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));

        let mut det = PolicyParams::<f64>::zeros(6, 1, FeatureMap::OneHotConcat).unwrap();
        for t in 0..6 {
            det.weights_mut()[t] = if t == 4 { 0.0 } else { -1e4 };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| det.sample_token(&[], &mut rng).unwrap() == 4));
    }

    #[test]
    fn snapshot_is_isolated_from_live_updates() {
        let mut live = random_params(5, 2, FeatureMap::OneHotConcat, 8);
        let snap = live.snapshot();
        let again = live.snapshot();
        let ctx = [2, 4];
        assert_eq!(
            snap.log_prob(&ctx, 1).unwrap().to_bits(),
            again.log_prob(&ctx, 1).unwrap().to_bits()
        );
        assert_eq!(live.log_prob(&ctx, 1).unwrap(), snap.log_prob(&ctx, 1).unwrap());
        let g = live.grad_log_prob(&ctx, 1).unwrap();
        for (w, d) in live.weights_mut().iter_mut().zip(&g) {
            *w += 0.5 * d;
        }
        let ratio = (live.log_prob(&ctx, 1).unwrap() - snap.log_prob(&ctx, 1).unwrap()).exp();
        assert!(ratio > 1.0);
        assert_eq!(snap.to_params(), again.to_params());
    }

    #[test]
    fn checkpoint_round_trip_and_width_conversion() {
        let p = random_params(6, 2, FeatureMap::OneHotPairs, 5);
        let bytes = p.to_checkpoint_bytes();
        assert_eq!(PolicyParams::<f64>::from_checkpoint_bytes(&bytes).unwrap(), p);
        let narrow = PolicyParams::<f32>::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(narrow.weights().len(), p.weights().len());
        let back = PolicyParams::<f64>::from_checkpoint_bytes(&narrow.to_checkpoint_bytes()).unwrap();
        assert!(back
            .weights()
            .iter()
            .zip(p.weights())
            .all(|(a, b)| (a - b).abs() < 1e-6));
        assert!(PolicyParams::<f64>::from_checkpoint_bytes(&bytes[..40]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(PolicyParams::<f64>::from_checkpoint_bytes(&wrong).is_err());
    }

    #[test]
    fn init_parsing() {
        assert_eq!("zeros".parse::<Init>().unwrap(), Init::Zeros);
        assert_eq!("gaussian:0.01".parse::<Init>().unwrap(), Init::Gaussian { std: 0.01 });
        assert!("gaussian:-1".parse::<Init>().is_err());
        assert!("xavier".parse::<Init>().is_err());
    }
}
