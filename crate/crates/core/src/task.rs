//! Token alphabet, synthetic verifiable tasks, the binary verifier and
//! length-based reward shaping.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

const BASE_SYMBOLS: &str = "0123456789+*=AE";
const EXTRA_SYMBOLS: &str = "abcdefghijklmnopqrstuvwxyzBCDFGHIJKLMNOPQRSTUVWXYZ!?#$%&@^~|<>";

/// Ordered token alphabet. Ids are positions in `symbols`.
///
/// The first fifteen symbols are fixed (`0`–`9`, `+`, `*`, `=`, the answer
/// delimiter `A` and end-of-sequence `E`); optional filler symbols widen the
/// alphabet up to [`Vocab::MAX_SIZE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<char>,
}

impl Vocab {
    pub const PLUS: TokenId = 10;
    pub const TIMES: TokenId = 11;
    pub const EQUALS: TokenId = 12;
    pub const ANSWER: TokenId = 13;
    pub const EOS: TokenId = 14;
    pub const MIN_SIZE: usize = 14;
    pub const MAX_SIZE: usize = 64;

    pub fn standard() -> Self {
        Self {
            symbols: BASE_SYMBOLS.chars().collect(),
        }
    }

    /// Standard alphabet plus `extra` filler symbols that never appear in
    /// questions or answers.
    pub fn with_extra_symbols(extra: usize) -> Result<Self> {
        let base = BASE_SYMBOLS.chars().count();
        if base + extra > Self::MAX_SIZE {
            return Err(Error::Config(format!(
                "vocabulary of {} symbols exceeds the maximum of {}",
                base + extra,
                Self::MAX_SIZE
            )));
        }
        let symbols = BASE_SYMBOLS.chars().chain(EXTRA_SYMBOLS.chars().take(extra)).collect();
        Ok(Self { symbols })
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol(&self, id: TokenId) -> Option<char> {
        self.symbols.get(id).copied()
    }

    pub fn id_of(&self, symbol: char) -> Option<TokenId> {
        self.symbols.iter().position(|&s| s == symbol)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.chars()
            .map(|c| {
                self.id_of(c)
                    .ok_or_else(|| Error::Contract(format!("symbol {c:?} not in vocabulary")))
            })
            .collect()
    }

    /// Renders ids as symbols; out-of-range ids render as `?`.
    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens.iter().map(|&t| self.symbol(t).unwrap_or('?')).collect()
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    AddMod,
    MulMod,
    Copy,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::AddMod, TaskKind::MulMod, TaskKind::Copy];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::AddMod => "ADD_MOD",
            TaskKind::MulMod => "MUL_MOD",
            TaskKind::Copy => "COPY",
        }
    }

    fn arity(self) -> usize {
        match self {
            TaskKind::AddMod | TaskKind::MulMod => 2,
            TaskKind::Copy => 1,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        TaskKind::ALL.into_iter().find(|k| k.name() == norm).ok_or_else(|| {
            Error::Config(format!(
                "unsupported task kind {s:?}; expected one of ADD_MOD, MUL_MOD, COPY"
            ))
        })
    }
}

/// One question/answer pair. Questions are rendered operands followed by
/// `=`, e.g. `7+5=` or `3*4=`; copy tasks render a single operand (`42=`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    pub operands: Vec<u32>,
    pub modulus: u32,
    pub question: Vec<TokenId>,
    pub ground_truth: Vec<TokenId>,
}

/// Largest modulus whose answers fit in two decimal digits.
pub const MAX_MODULUS: u32 = 100;

fn validate_modulus(modulus: u32) -> Result<()> {
    if !(2..=MAX_MODULUS).contains(&modulus) {
        return Err(Error::Config(format!(
            "modulus must lie in [2, {MAX_MODULUS}], got {modulus}"
        )));
    }
    Ok(())
}

fn digits(value: u32) -> Vec<TokenId> {
    value.to_string().bytes().map(|b| (b - b'0') as TokenId).collect()
}

impl Task {
    /// Builds a task from explicit operands. Operands must lie in
    /// `[0, modulus)`.
    pub fn from_operands(kind: TaskKind, operands: &[u32], modulus: u32) -> Result<Self> {
        validate_modulus(modulus)?;
        if operands.len() != kind.arity() {
            return Err(Error::Config(format!(
                "{kind} takes {} operand(s), got {}",
                kind.arity(),
                operands.len()
            )));
        }
        if let Some(&bad) = operands.iter().find(|&&x| x >= modulus) {
            return Err(Error::Config(format!(
                "operand {bad} out of range for modulus {modulus}"
            )));
        }
        let (question, answer) = match kind {
            TaskKind::AddMod | TaskKind::MulMod => {
                let (a, b) = (operands[0], operands[1]);
                let (op, value) = if kind == TaskKind::AddMod {
                    (Vocab::PLUS, (a + b) % modulus)
                } else {
                    (Vocab::TIMES, (a * b) % modulus)
                };
                let mut q = digits(a);
                q.push(op);
                q.extend(digits(b));
                q.push(Vocab::EQUALS);
                (q, value)
            }
            TaskKind::Copy => {
                let mut q = digits(operands[0]);
                q.push(Vocab::EQUALS);
                (q, operands[0])
            }
        };
        Ok(Self {
            kind,
            operands: operands.to_vec(),
            modulus,
            question,
            ground_truth: digits(answer),
        })
    }

    /// The canonical accepted response: `A`, the answer digits, `E`.
    pub fn reference_response(&self) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.ground_truth.len() + 2);
        out.push(Vocab::ANSWER);
        out.extend_from_slice(&self.ground_truth);
        out.push(Vocab::EOS);
        out
    }
}

/// Draws a task deterministically from `rng_seed`; operands are uniform on
/// `[0, modulus)`.
pub fn generate_task(rng_seed: u64, kind: TaskKind, modulus: u32) -> Result<Task> {
    validate_modulus(modulus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let operands: Vec<u32> = (0..kind.arity()).map(|_| rng.gen_range(0..modulus)).collect();
    Task::from_operands(kind, &operands, modulus)
}

/// Infinite deterministic stream of tasks, each drawn from a fresh seed.
#[derive(Debug, Clone)]
pub struct TaskStream {
    kind: TaskKind,
    modulus: u32,
    rng: ChaCha8Rng,
    issued: u64,
}

impl TaskStream {
    pub fn new(seed: u64, kind: TaskKind, modulus: u32) -> Result<Self> {
        validate_modulus(modulus)?;
        Ok(Self {
            kind,
            modulus,
            rng: ChaCha8Rng::seed_from_u64(seed),
            issued: 0,
        })
    }

    /// Next `(task_id, task)` pair.
    pub fn next_task(&mut self) -> (u64, Task) {
        let seed = self.rng.gen::<u64>();
        let id = self.issued;
        self.issued += 1;
        let task = generate_task(seed, self.kind, self.modulus).expect("modulus validated at stream construction");
        (id, task)
    }

    pub fn take_tasks(&mut self, n: usize) -> Vec<Task> {
        (0..n).map(|_| self.next_task().1).collect()
    }
}

/// Binary verifier: `+1` iff the response ends with `E` and the tokens
/// between the last `A` and that `E` equal the ground truth exactly.
///
/// A response with no `E`, an `E` that is not the final token, or no `A`
/// before the final `E` scores `-1`.
pub fn verify(response: &[TokenId], task: &Task) -> i8 {
    let Some((&last, body)) = response.split_last() else {
        return -1;
    };
    if last != Vocab::EOS || body.contains(&Vocab::EOS) {
        return -1;
    }
    match body.iter().rposition(|&t| t == Vocab::ANSWER) {
        Some(pos) if body[pos + 1..] == task.ground_truth[..] => 1,
        _ => -1,
    }
}

/// Verified and length-shaped reward of one response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOutcome {
    pub base_reward: i8,
    pub length_penalty: f64,
    pub shaped_reward: f64,
    pub truncated: bool,
    pub repetition_truncated: bool,
}

impl RewardOutcome {
    pub fn is_correct(&self) -> bool {
        self.base_reward > 0
    }
}

/// Soft and hard response-length limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthLimits {
    pub soft_limit: usize,
    pub hard_limit: usize,
}

impl LengthLimits {
    pub fn new(soft_limit: usize, hard_limit: usize) -> Result<Self> {
        if soft_limit == 0 || soft_limit >= hard_limit {
            return Err(Error::Config(format!(
                "length limits need 0 < soft_limit < hard_limit, got {soft_limit} and {hard_limit}"
            )));
        }
        Ok(Self { soft_limit, hard_limit })
    }

    /// Overlong penalty: zero up to the soft limit, then a linear ramp to
    /// `-1` at the hard limit.
    pub fn penalty(&self, response_length: usize) -> f64 {
        if response_length <= self.soft_limit {
            0.0
        } else {
            let over = (response_length - self.soft_limit) as f64;
            let span = (self.hard_limit - self.soft_limit) as f64;
            -(over / span)
        }
    }
}

/// Applies the overlong penalty to a verifier reward.
///
/// The truncation flags are left `false`; the sampler sets them when it cuts
/// a response short.
pub fn shape_reward(
    base_reward: i8,
    response_length: usize,
    soft_limit: usize,
    hard_limit: usize,
) -> Result<RewardOutcome> {
    let limits = LengthLimits::new(soft_limit, hard_limit)?;
    if base_reward != 1 && base_reward != -1 {
        return Err(Error::Contract(format!(
            "base reward must be +1 or -1, got {base_reward}"
        )));
    }
    if response_length > hard_limit {
        return Err(Error::Contract(format!(
            "response length {response_length} exceeds hard limit {hard_limit}"
        )));
    }
    let length_penalty = limits.penalty(response_length);
    let shaped_reward = (f64::from(base_reward) + length_penalty).clamp(-1.0, 1.0);
    Ok(RewardOutcome {
        base_reward,
        length_penalty,
        shaped_reward,
        truncated: false,
        repetition_truncated: false,
    })
}

/// One line of the task-set manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub task_kind: TaskKind,
    pub operands: Vec<u32>,
    pub modulus: u32,
    pub question: String,
    pub ground_truth: String,
}

impl ManifestRecord {
    pub fn from_task(task: &Task, vocab: &Vocab) -> Self {
        Self {
            task_kind: task.kind,
            operands: task.operands.clone(),
            modulus: task.modulus,
            question: vocab.decode(&task.question),
            ground_truth: vocab.decode(&task.ground_truth),
        }
    }
}

/// Renders tasks as line-delimited JSON.
pub fn write_manifest(tasks: &[Task], vocab: &Vocab) -> String {
    let mut out = String::new();
    for task in tasks {
        let record = ManifestRecord::from_task(task, vocab);
        out.push_str(&serde_json::to_string(&record).expect("manifest record serializes"));
        out.push('\n');
    }
    out
}

/// Parses a manifest, rebuilding each task from its operands and checking
/// the stored strings against the rendering.
pub fn read_manifest(text: &str, vocab: &Vocab) -> Result<Vec<Task>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| {
            let record: ManifestRecord =
                serde_json::from_str(line).map_err(|e| Error::Config(format!("manifest line {}: {e}", n + 1)))?;
            let task = Task::from_operands(record.task_kind, &record.operands, record.modulus)?;
            let rebuilt = ManifestRecord::from_task(&task, vocab);
            if rebuilt != record {
                return Err(Error::Config(format!(
                    "manifest line {}: stored question/answer disagree with operands",
                    n + 1
                )));
            }
            Ok(task)
        })
        .collect()
}
