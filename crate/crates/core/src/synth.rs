//! Synthesis of the controlled symbol prefix.
//!
//! The initial pattern of the excursion set is filled left to right:
//!
//! * level-0 cells (rest cells and size-`T_0` excursion components) become
//!   *sign blocks* — words of length `T_0` whose exact shifted average sits
//!   in the one-sided band `ω·[α_0/2, α_0]`;
//! * excursion cells of level `n ≥ 1` become *sojourn blocks* — words of
//!   length `T_n` carrying a universal word of order `m_n`, padded with
//!   sign blocks until the block's own average sits in `ω·[α_n/2, α_n]`;
//! * every aligned concatenation of `κ_n` level-`(n-1)` spans is steered by
//!   a hysteresis rule: while the running average is at most `5α_n/6` the
//!   next span aims up, otherwise down (mirrored when the target sign is
//!   negative). With exact averages and per-span bands `±[α_{n-1}/2,
//!   α_{n-1}]`, the running average settles into the target band well
//!   before the `κ_n` spans run out, which is exactly what the factor
//!   feasibility bound provisions for.
//!
//! A potential of depth `k` reads `k-1` symbols past every block edge, so
//! each block also fixes the first `k-1` symbols of its successor; block
//! averages are therefore exact at the moment the block closes, before any
//! later choice is made. This also makes synthesis prefix-stable: the
//! settled output of a depth-`n` run is byte-identical to the first `T_n`
//! symbols (plus `k-1` committed ones) of a depth-`n+1` run.

use std::collections::HashMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::{CellKind, Pattern};
use crate::rational::Frac;
use crate::scale::{ControlParams, Scale};
use crate::sft::{average_range, universal_word, Potential, Sft, Word};
use crate::tail::SparseTail;
use crate::weights::{RollingRank, ShiftedWeights};

/// Steering direction of a block: which side of zero its band sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// How a block was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BlockKind {
    Sign,
    Sojourn { order: usize },
}

/// One synthesized block, keyed by its span `[start, start+len)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRecord {
    pub start: u64,
    pub len: u64,
    pub level: usize,
    pub kind: BlockKind,
    pub omega: Sign,
    /// Exact weighted sum of the block's windows (over the ledger's common
    /// denominator).
    pub(crate) sum: i128,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("target {target} is not strictly inside the achievable range ({lo}, {hi})")]
    TargetOutOfRange { target: Frac, lo: Frac, hi: Frac },
    #[error("no block at {start} (level {level}, sign {omega}) reaches its band; nearest achievable average {nearest}")]
    BandUnreachable { start: u64, level: usize, omega: Sign, nearest: Frac },
    #[error("level-{level} block length {available} cannot hold a universal core needing {required}")]
    CoreTooLong { level: usize, required: u64, available: u64 },
    #[error("factor κ_{level} = {actual} is below the feasibility bound {required}")]
    InfeasibleFactor { level: usize, required: u64, actual: u64 },
    #[error("potential depth {depth} exceeds base block length {base} + 1")]
    PotentialDepthTooLarge { depth: usize, base: u64 },
    #[error("density order {order} at level {level} is too large to index")]
    DensityOrderTooLarge { level: usize, order: usize },
    #[error("control params cover depth {params} but the tail has depth {tail}")]
    DepthMismatch { params: usize, tail: usize },
    #[error("exact arithmetic guard: {0}")]
    Arithmetic(String),
    #[error("no legal symbol can follow position {position}")]
    IllegalContext { position: u64 },
}

/// A synthesized sign block: the block word, the `k-1` symbols it commits
/// to its successor, and its exact shifted average.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignBlock {
    pub word: Word,
    pub commitment: Word,
    pub average: BigRational,
}

/// A synthesized sojourn block, same layout as [`SignBlock`].
pub type SojournBlock = SignBlock;

/// The synthesized prefix plus one record per pattern cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisLedger {
    prefix: Word,
    records: Vec<BlockRecord>,
    scale: Scale,
    depth: usize,
    target: BigRational,
    potential_depth: usize,
    context_len: usize,
    denom: i128,
}

impl SynthesisLedger {
    /// The full output: `T_depth` settled symbols plus trailing context.
    pub fn prefix(&self) -> &Word {
        &self.prefix
    }

    /// Number of settled symbols, `T_depth`.
    pub fn settled_len(&self) -> u64 {
        self.scale.level(self.depth)
    }

    /// Trailing context symbols beyond the settled prefix. At least `k-1`;
    /// extended to `max(k, max_n m_n) - 1` so order-`m` window statistics
    /// over the full settled range are defined.
    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn records(&self) -> &[BlockRecord] {
        &self.records
    }

    pub fn scale(&self) -> &Scale {
        &self.scale
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn target(&self) -> &BigRational {
        &self.target
    }

    /// Exact shifted average of one record.
    pub fn record_average(&self, record: &BlockRecord) -> BigRational {
        BigRational::new(
            BigInt::from(record.sum),
            BigInt::from(self.denom) * BigInt::from(record.len),
        )
    }

    /// `(start, len, exact shifted average)` per record.
    pub fn record_entries(&self) -> impl Iterator<Item = (u64, u64, BigRational)> + '_ {
        self.records.iter().map(|r| (r.start, r.len, self.record_average(r)))
    }

    /// Exact shifted average over the settled prefix.
    pub fn final_shifted_average(&self) -> BigRational {
        let sum: i128 = self.records.iter().map(|r| r.sum).sum();
        BigRational::new(
            BigInt::from(sum),
            BigInt::from(self.denom) * BigInt::from(self.settled_len()),
        )
    }

    /// Exact unshifted Birkhoff average over the settled prefix.
    pub fn final_average(&self) -> BigRational {
        self.final_shifted_average() + &self.target
    }

    pub fn to_doc(&self) -> LedgerDoc {
        LedgerDoc {
            scale: self.scale.clone(),
            depth: self.depth,
            target: Frac(self.target.clone()),
            potential_depth: self.potential_depth,
            context_len: self.context_len,
            records: self
                .records
                .iter()
                .map(|r| RecordDoc {
                    mark: r.start + r.len,
                    level: r.level,
                    kind: r.kind,
                    omega: r.omega,
                    average: Frac(self.record_average(r)),
                })
                .collect(),
        }
    }
}

/// Ledger document: one entry per marked point, carrying the exact average
/// over the span ending there. The raw symbols travel separately, one byte
/// per symbol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerDoc {
    pub scale: Scale,
    pub depth: usize,
    pub target: Frac,
    pub potential_depth: usize,
    pub context_len: usize,
    pub records: Vec<RecordDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordDoc {
    /// Marked point: right endpoint of the span.
    pub mark: u64,
    pub level: usize,
    #[serde(flatten)]
    pub kind: BlockKind,
    pub omega: Sign,
    pub average: Frac,
}

impl LedgerDoc {
    /// `(start, len, expected average)` per record, reconstructing spans
    /// from consecutive marks.
    pub fn record_entries(&self) -> impl Iterator<Item = (u64, u64, BigRational)> + '_ {
        let mut prev = 0u64;
        self.records.iter().map(move |r| {
            let start = prev;
            prev = r.mark;
            (start, r.mark - start, r.average.0.clone())
        })
    }
}

/// Hysteresis sign choice: steering positive, aim up while the running
/// average is at most `5·α_{level+1}/6` (ties aim up), otherwise aim down;
/// mirrored when steering negative.
pub fn choose_sign(
    history_average: &BigRational,
    history_len: u64,
    level: usize,
    params: &ControlParams,
    steering: Sign,
) -> Sign {
    assert!(history_len >= 1, "sign choice needs a nonempty history");
    let threshold = params.alpha(level + 1) * BigRational::new(BigInt::from(5), BigInt::from(6));
    match steering {
        Sign::Plus => {
            if *history_average <= threshold {
                Sign::Plus
            } else {
                Sign::Minus
            }
        }
        Sign::Minus => {
            if *history_average >= -threshold {
                Sign::Minus
            } else {
                Sign::Plus
            }
        }
    }
}

/// Band `ω·[α/2, α]` as a closed interval.
fn band(alpha: &BigRational, omega: Sign) -> (BigRational, BigRational) {
    let half = alpha / BigRational::from(BigInt::from(2));
    match omega {
        Sign::Plus => (half, alpha.clone()),
        Sign::Minus => (-alpha.clone(), -half),
    }
}

struct Chosen {
    symbols: Vec<u8>,
    sum: i128,
}

/// Per-level derived constants for the emitter.
struct LevelBands {
    /// `5·α_n/6` hysteresis threshold.
    threshold: BigRational,
    plus: (BigRational, BigRational),
    minus: (BigRational, BigRational),
}

/// Left-to-right block emitter. Maintains the invariant that at every
/// block boundary `b` the output holds exactly `b + k - 1` symbols: the
/// committed lookahead a depth-`k` potential needs to close the previous
/// block's windows.
struct Emitter<'a> {
    sft: &'a Sft,
    params: &'a ControlParams,
    weights: &'a ShiftedWeights,
    levels: Vec<u64>,
    k: usize,
    t0: u64,
    origin_prev: Option<u8>,
    bands: Vec<LevelBands>,
    out: Vec<u8>,
    roll: RollingRank,
    cum: i128,
    records: Vec<BlockRecord>,
    memo: HashMap<(Vec<u8>, Option<u8>, Sign), std::rc::Rc<Chosen>>,
    universal: HashMap<usize, Word>,
    wmin: i128,
    wmax: i128,
}

impl<'a> Emitter<'a> {
    fn new(
        sft: &'a Sft,
        params: &'a ControlParams,
        weights: &'a ShiftedWeights,
        levels: Vec<u64>,
        origin_prev: Option<u8>,
    ) -> Emitter<'a> {
        let k = weights.depth;
        let bands = params
            .alphas()
            .iter()
            .map(|a| LevelBands {
                threshold: a * BigRational::new(BigInt::from(5), BigInt::from(6)),
                plus: band(a, Sign::Plus),
                minus: band(a, Sign::Minus),
            })
            .collect();
        let mut wmin = i128::MAX;
        let mut wmax = i128::MIN;
        for w in sft.legal_words(k) {
            let v = weights.weight(crate::sft::rank_of(&w, sft.alphabet_size()));
            wmin = wmin.min(v);
            wmax = wmax.max(v);
        }
        Emitter {
            sft,
            params,
            weights,
            t0: levels[0],
            levels,
            k,
            origin_prev,
            bands,
            out: Vec::new(),
            roll: RollingRank::new(sft.alphabet_size(), k),
            cum: 0,
            records: Vec::new(),
            memo: HashMap::new(),
            universal: HashMap::new(),
            wmin,
            wmax,
        }
    }

    /// Settled position: windows strictly below it are complete.
    fn settled(&self) -> u64 {
        (self.out.len().saturating_sub(self.k - 1)) as u64
    }

    fn append(&mut self, s: u8) {
        debug_assert!(
            self.out
                .last()
                .copied()
                .or(self.origin_prev)
                .map_or(true, |p| self.sft.is_transition_legal(p, s)),
            "illegal append at {}",
            self.out.len()
        );
        self.out.push(s);
        if let Some(rank) = self.roll.push(s) {
            self.cum += self.weights.weight(rank);
        }
    }

    fn universal(&mut self, m: usize) -> Word {
        if let Some(w) = self.universal.get(&m) {
            return w.clone();
        }
        let w = universal_word(self.sft, m);
        self.universal.insert(m, w.clone());
        w
    }

    fn band_of(&self, level: usize, omega: Sign) -> &(BigRational, BigRational) {
        match omega {
            Sign::Plus => &self.bands[level].plus,
            Sign::Minus => &self.bands[level].minus,
        }
    }

    /// Integer form of [`choose_sign`] against the level's band.
    fn steer(&self, sum: i128, len: u64, level: usize, steering: Sign) -> Sign {
        if len == 0 {
            return steering;
        }
        let threshold = &self.bands[level].threshold;
        match steering {
            Sign::Plus => {
                if self.weights.cmp_average(sum, len, threshold) != std::cmp::Ordering::Greater {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            }
            Sign::Minus => {
                let neg = -threshold.clone();
                if self.weights.cmp_average(sum, len, &neg) != std::cmp::Ordering::Less {
                    Sign::Minus
                } else {
                    Sign::Plus
                }
            }
        }
    }

    fn check_band(
        &self,
        sum: i128,
        len: u64,
        level: usize,
        omega: Sign,
        start: u64,
    ) -> Result<(), SynthError> {
        let (lo, hi) = self.band_of(level, omega);
        if self.weights.average_in(sum, len, lo, hi) {
            Ok(())
        } else {
            Err(SynthError::BandUnreachable {
                start,
                level,
                omega,
                nearest: Frac(self.weights.average(sum, len)),
            })
        }
    }

    /// Context for the block opening at the current settled position: the
    /// already-emitted committed symbols (or the predecessor symbol when
    /// the potential has depth 1).
    fn current_context(&self) -> (Vec<u8>, Option<u8>) {
        if self.out.is_empty() {
            (Vec::new(), self.origin_prev)
        } else if self.k == 1 {
            (vec![*self.out.last().unwrap()], None)
        } else {
            (self.out[self.out.len() - (self.k - 1)..].to_vec(), None)
        }
    }

    /// Emit one sign block at the current settled position; returns its
    /// exact weighted sum.
    fn emit_sign_block(&mut self, omega: Sign, record: bool) -> Result<i128, SynthError> {
        let b = self.settled();
        debug_assert!(
            self.out.is_empty() || self.out.len() as u64 == b + (self.k as u64 - 1),
            "block boundary invariant broken"
        );
        let (ctx, prev) = self.current_context();
        let key = (ctx.clone(), prev, omega);
        let chosen = match self.memo.get(&key) {
            Some(c) => c.clone(),
            None => {
                let committed = if self.k >= 2 { ctx.as_slice() } else { &[] };
                let prev_sym = if self.k == 1 { ctx.first().copied().or(prev) } else { prev };
                let c = std::rc::Rc::new(self.sign_search(prev_sym, committed, omega, b)?);
                self.memo.insert(key, c.clone());
                c
            }
        };
        let cum0 = self.cum;
        for i in 0..chosen.symbols.len() {
            self.append(chosen.symbols[i]);
        }
        debug_assert_eq!(self.cum - cum0, chosen.sum);
        if record {
            self.records.push(BlockRecord {
                start: b,
                len: self.t0,
                level: 0,
                kind: BlockKind::Sign,
                omega,
                sum: chosen.sum,
            });
        }
        Ok(chosen.sum)
    }

    /// Search for a block word whose exact average lies in the level-0
    /// band: lexicographic depth-first search with exact interval pruning.
    /// Exhaustive when the candidate space is small; otherwise the symbol
    /// order prefers the band side and the node budget is quadratic in the
    /// block length.
    fn sign_search(
        &self,
        prev: Option<u8>,
        committed: &[u8],
        omega: Sign,
        position: u64,
    ) -> Result<Chosen, SynthError> {
        let windows = self.t0;
        let chosen_len = (self.t0 as usize + self.k - 1) - committed.len();
        let (lo, hi) = self.band_of(0, omega);
        let scale_q = BigInt::from(self.weights.denom) * BigInt::from(windows);
        let sum_lo = ceil_i128(&(lo * BigRational::from(scale_q.clone())))
            .ok_or_else(|| SynthError::Arithmetic("band bound exceeds i128".into()))?;
        let sum_hi = floor_i128(&(hi * BigRational::from(scale_q)))
            .ok_or_else(|| SynthError::Arithmetic("band bound exceeds i128".into()))?;

        let alphabet = self.sft.alphabet_size();
        let exhaustive = (alphabet as f64).powi(chosen_len as i32) <= (1u64 << 20) as f64;
        let budget = if exhaustive { u64::MAX } else { (self.t0 * self.t0).max(1024) };

        let mut search = SignSearch {
            sft: self.sft,
            weights: self.weights,
            k: self.k,
            windows,
            chosen_len,
            sum_lo,
            sum_hi,
            wmin: self.wmin,
            wmax: self.wmax,
            exhaustive,
            budget,
            prefer_up: omega == Sign::Plus,
            best: None,
            nearest: None,
        };
        let mut prefix: Vec<u8> = committed.to_vec();
        search.dfs(prev, &mut prefix, 0, 0);
        match search.best {
            Some((symbols, sum)) => Ok(Chosen { symbols, sum }),
            None => {
                let nearest = search
                    .nearest
                    .map(|(s, _)| self.weights.average(s, windows))
                    .unwrap_or_else(BigRational::zero);
                Err(SynthError::BandUnreachable {
                    start: position,
                    level: 0,
                    omega,
                    nearest: Frac(nearest),
                })
            }
        }
    }

    /// Deterministic filler symbol steering toward the band side.
    fn bridge_symbol(&self, omega: Sign) -> Result<u8, SynthError> {
        let prev = self.out.last().copied().or(self.origin_prev);
        let mut best: Option<(i128, u8)> = None;
        for s in 0..self.sft.alphabet_size() as u8 {
            if prev.map_or(true, |p| self.sft.is_transition_legal(p, s)) {
                let w = match self.roll.peek(s) {
                    Some(rank) => self.weights.weight(rank),
                    None => 0,
                };
                let score = match omega {
                    Sign::Plus => -w,
                    Sign::Minus => w,
                };
                if best.map_or(true, |(bs, _)| score < bs) {
                    best = Some((score, s));
                }
            }
        }
        best.map(|(_, s)| s)
            .ok_or(SynthError::IllegalContext { position: self.out.len() as u64 })
    }

    /// Emit one sojourn block of the given level at the current settled
    /// position: connector, universal core, bridge filler to the next
    /// `T_0` boundary, then steered sign-block padding.
    fn emit_sojourn_block(&mut self, level: usize, omega: Sign) -> Result<i128, SynthError> {
        let b = self.settled();
        let t_n = self.levels[level];
        let m = self.params.density_order(level);
        let core = self.universal(m);
        let cum0 = self.cum;

        let required = 2 * core.len() as u64 + 2 * self.sft.mixing_power() as u64 + self.t0;
        if t_n < required {
            return Err(SynthError::CoreTooLong { level, required, available: t_n });
        }

        let prev = self.out.last().copied().or(self.origin_prev);
        let mut appended = 0u64;
        if let Some(p) = prev {
            if !self.sft.is_transition_legal(p, core[0]) {
                let conn = self.sft.connector(p, core[0]).to_vec();
                for &c in &conn {
                    self.append(c);
                }
                appended += conn.len() as u64;
            }
        }
        for i in 0..core.len() {
            self.append(core[i]);
        }
        appended += core.len() as u64;

        let bridge = (t_n - appended) % self.t0;
        for _ in 0..bridge {
            let s = self.bridge_symbol(omega)?;
            self.append(s);
        }
        appended += bridge;

        let pad_blocks = (t_n - appended) / self.t0;
        debug_assert!(pad_blocks >= 1);
        for _ in 0..pad_blocks {
            let len_so_far = self.settled() - b;
            let w = self.steer(self.cum - cum0, len_so_far, level, omega);
            self.emit_sign_block(w, false)?;
        }

        let sum = self.cum - cum0;
        debug_assert_eq!(self.settled() - b, t_n);
        self.check_band(sum, t_n, level, omega, b)?;
        self.records.push(BlockRecord {
            start: b,
            len: t_n,
            level,
            kind: BlockKind::Sojourn { order: m },
            omega,
            sum,
        });
        Ok(sum)
    }

    /// Append deterministic legal symbols until the output holds `len`
    /// symbols (trailing context beyond the settled prefix).
    fn extend_to(&mut self, len: usize) -> Result<(), SynthError> {
        while self.out.len() < len {
            let prev = self.out.last().copied().or(self.origin_prev);
            let s = (0..self.sft.alphabet_size() as u8)
                .find(|&s| prev.map_or(true, |p| self.sft.is_transition_legal(p, s)))
                .ok_or(SynthError::IllegalContext { position: self.out.len() as u64 })?;
            self.append(s);
        }
        Ok(())
    }
}

/// Exact-pruned lexicographic DFS for sign blocks.
struct SignSearch<'a> {
    sft: &'a Sft,
    weights: &'a ShiftedWeights,
    k: usize,
    windows: u64,
    chosen_len: usize,
    sum_lo: i128,
    sum_hi: i128,
    wmin: i128,
    wmax: i128,
    exhaustive: bool,
    budget: u64,
    prefer_up: bool,
    best: Option<(Vec<u8>, i128)>,
    nearest: Option<(i128, i128)>,
}

impl SignSearch<'_> {
    /// `prefix` holds committed symbols plus the chosen ones so far; `done`
    /// counts complete windows and `sum` their exact weighted total.
    fn dfs(&mut self, origin_prev: Option<u8>, prefix: &mut Vec<u8>, done: u64, sum: i128) {
        if self.best.is_some() || self.budget == 0 {
            return;
        }
        if done == self.windows {
            if sum >= self.sum_lo && sum <= self.sum_hi {
                let chosen = prefix[prefix.len() - self.chosen_len..].to_vec();
                self.best = Some((chosen, sum));
            } else {
                let dist =
                    if sum < self.sum_lo { self.sum_lo - sum } else { sum - self.sum_hi };
                if self.nearest.map_or(true, |(_, d)| dist < d) {
                    self.nearest = Some((sum, dist));
                }
            }
            return;
        }
        let remaining = self.windows - done;
        // Exact reachability pruning: the remaining windows can add at most
        // remaining·wmax and at least remaining·wmin.
        if sum + remaining as i128 * self.wmax < self.sum_lo
            || sum + remaining as i128 * self.wmin > self.sum_hi
        {
            if self.nearest.is_none() {
                // Keep a pessimistic nearest candidate so failure reports
                // something meaningful even when everything prunes.
                let reach = if sum + remaining as i128 * self.wmax < self.sum_lo {
                    sum + remaining as i128 * self.wmax
                } else {
                    sum + remaining as i128 * self.wmin
                };
                let dist = if reach < self.sum_lo {
                    self.sum_lo - reach
                } else {
                    reach - self.sum_hi
                };
                self.nearest = Some((reach, dist));
            }
            return;
        }
        if !self.exhaustive {
            self.budget = self.budget.saturating_sub(1);
        }

        let prev = prefix.last().copied().or(origin_prev);
        let alphabet = self.sft.alphabet_size() as u8;
        let mut order: Vec<u8> = (0..alphabet)
            .filter(|&s| prev.map_or(true, |p| self.sft.is_transition_legal(p, s)))
            .collect();
        if !self.exhaustive {
            // Bounded mode: try band-side symbols first.
            order.sort_by_key(|&s| {
                let w = self.window_weight(prefix, s);
                if self.prefer_up {
                    (-w, s)
                } else {
                    (w, s)
                }
            });
        }
        for s in order {
            prefix.push(s);
            let (ndone, nsum) = if prefix.len() >= self.k {
                let w = self.window_weight_at(prefix, prefix.len() - self.k);
                (done + 1, sum + w)
            } else {
                (done, sum)
            };
            self.dfs(origin_prev, prefix, ndone, nsum);
            prefix.pop();
            if self.best.is_some() {
                return;
            }
        }
    }

    fn window_weight(&self, prefix: &[u8], next: u8) -> i128 {
        if prefix.len() + 1 < self.k {
            return 0;
        }
        let mut rank = 0usize;
        for &s in &prefix[prefix.len() + 1 - self.k..] {
            rank = rank * self.sft.alphabet_size() + s as usize;
        }
        rank = rank * self.sft.alphabet_size() + next as usize;
        self.weights.weight(rank)
    }

    fn window_weight_at(&self, prefix: &[u8], at: usize) -> i128 {
        let rank = crate::sft::rank_of(&prefix[at..at + self.k], self.sft.alphabet_size());
        self.weights.weight(rank)
    }
}

fn ceil_i128(r: &BigRational) -> Option<i128> {
    use num::ToPrimitive;
    r.ceil().to_integer().to_i128()
}

fn floor_i128(r: &BigRational) -> Option<i128> {
    use num::ToPrimitive;
    r.floor().to_integer().to_i128()
}

/// Whether level `n` carries a universal core: level 0 components are sign
/// blocks (a `T_0` block cannot hold a core), higher components must be
/// long enough for connector + core + padding.
pub fn carries_density(sft: &Sft, scale: &Scale, params: &ControlParams, level: usize) -> bool {
    if level == 0 || level > scale.depth() {
        return false;
    }
    let m = params.density_order(level);
    let core = universal_word(sft, m).len() as u64;
    scale.level(level) >= 2 * core + 2 * sft.mixing_power() as u64 + scale.level(0)
}

/// Feasibility bound on `κ_{level}` (1-based), the same formula
/// [`minimal_factors`](crate::scale::minimal_factors) uses.
pub fn factor_bound(
    sft: &Sft,
    scale: &Scale,
    params: &ControlParams,
    shifted_range: &BigRational,
    level: usize,
) -> u64 {
    use num::ToPrimitive;
    let n = level - 1;
    let eight = BigRational::from(BigInt::from(8));
    let steer = eight * shifted_range.clone().max(params.alpha(n).clone()) / params.alpha(n + 1);
    let steer = steer.ceil().to_integer().to_u64().unwrap_or(u64::MAX);
    let sojourn_len = if carries_density(sft, scale, params, n) {
        universal_word(sft, params.density_order(n)).len() as u64
    } else {
        0
    };
    steer.saturating_add((2 * sojourn_len).div_ceil(scale.level(n))).saturating_add(2)
}

/// Build one sign block outside a synthesis run: a legal word of length
/// `T_0` (`scale.base()`), attachable after `entry`, whose exact shifted
/// average lies in `ω·[α_0/2, α_0]`, together with the `k-1` committed
/// successor symbols.
pub fn sign_block(
    sft: &Sft,
    potential: &Potential,
    scale: &Scale,
    params: &ControlParams,
    omega: Sign,
    entry: Option<u8>,
) -> Result<SignBlock, SynthError> {
    let weights = ShiftedWeights::new(sft, potential, params.target(), scale.base() + 2)
        .map_err(SynthError::Arithmetic)?;
    let mut em = Emitter::new(sft, params, &weights, scale.levels().to_vec(), entry);
    let sum = em.emit_sign_block(omega, false)?;
    let t0 = scale.base() as usize;
    Ok(SignBlock {
        word: Word(em.out[..t0].to_vec()),
        commitment: Word(em.out[t0..].to_vec()),
        average: weights.average(sum, scale.base()),
    })
}

/// Build one sojourn block outside a synthesis run: a legal word of length
/// `T_level` containing the order-`m_level` universal word, with exact
/// shifted average in `ω·[α_level/2, α_level]`.
pub fn sojourn_block(
    sft: &Sft,
    potential: &Potential,
    scale: &Scale,
    params: &ControlParams,
    level: usize,
    omega: Sign,
    entry: Option<u8>,
) -> Result<SojournBlock, SynthError> {
    let order = params.density_order(level);
    check_density_order(sft, order, level)?;
    let t_n = scale.level(level);
    let weights = ShiftedWeights::new(sft, potential, params.target(), t_n + 2)
        .map_err(SynthError::Arithmetic)?;
    let mut em = Emitter::new(sft, params, &weights, scale.levels().to_vec(), entry);
    let sum = em.emit_sojourn_block(level, omega)?;
    let len = t_n as usize;
    Ok(SignBlock {
        word: Word(em.out[..len].to_vec()),
        commitment: Word(em.out[len..].to_vec()),
        average: weights.average(sum, t_n),
    })
}

fn check_density_order(sft: &Sft, order: usize, level: usize) -> Result<(), SynthError> {
    let ok = (sft.alphabet_size() as u64)
        .checked_pow(order as u32)
        .is_some_and(|s| s <= 1 << 24);
    if ok {
        Ok(())
    } else {
        Err(SynthError::DensityOrderTooLarge { level, order })
    }
}

/// Synthesize the controlled prefix realizing the tail's initial pattern.
///
/// Validates the configuration first: the target strictly inside the
/// achievable range, the potential depth against `T_0`, every factor
/// against its feasibility bound, sojourn room per level, and band
/// reachability from every context. The run itself is deterministic.
pub fn synthesize(
    sft: &Sft,
    potential: &Potential,
    scale: &Scale,
    tail: &SparseTail,
    params: &ControlParams,
) -> Result<SynthesisLedger, SynthError> {
    assert_eq!(scale, tail.scale(), "scale and tail disagree");
    let depth = tail.depth();
    if params.depth() != depth {
        return Err(SynthError::DepthMismatch { params: params.depth(), tail: depth });
    }
    let k = potential.depth();
    let t0 = scale.base();
    if (k as u64) > t0 + 1 {
        return Err(SynthError::PotentialDepthTooLarge { depth: k, base: t0 });
    }
    for n in 0..=depth {
        check_density_order(sft, params.density_order(n), n)?;
    }

    let (lo, hi) = average_range(sft, potential);
    let target = params.target();
    if !(lo < *target && *target < hi) {
        return Err(SynthError::TargetOutOfRange {
            target: Frac(target.clone()),
            lo: Frac(lo),
            hi: Frac(hi),
        });
    }

    let horizon = scale.level(depth);
    let max_order = params.density_orders().iter().copied().max().unwrap_or(1);
    let context_len = (k - 1).max(max_order.saturating_sub(1));
    let weights =
        ShiftedWeights::new(sft, potential, target, horizon + context_len as u64 + k as u64)
            .map_err(SynthError::Arithmetic)?;

    // Factor feasibility and sojourn room.
    let shifted_range =
        BigRational::new(BigInt::from(weights.max_abs), BigInt::from(weights.denom));
    for level in 1..=depth {
        let required = factor_bound(sft, scale, params, &shifted_range, level);
        let actual = scale.factor(level);
        if actual < required {
            return Err(SynthError::InfeasibleFactor { level, required, actual });
        }
    }
    for level in 1..depth {
        let m = params.density_order(level);
        let core = universal_word(sft, m).len() as u64;
        let required = 2 * core + 2 * sft.mixing_power() as u64 + t0;
        if scale.level(level) < required {
            return Err(SynthError::CoreTooLong { level, required, available: scale.level(level) });
        }
    }

    let mut em = Emitter::new(sft, params, &weights, scale.levels().to_vec(), None);

    // Probe band reachability from every context the run can produce, so a
    // hopeless configuration fails before emitting anything.
    for omega in [Sign::Plus, Sign::Minus] {
        em.sign_search(None, &[], omega, 0)?;
        if k == 1 {
            for s in 0..sft.alphabet_size() as u8 {
                em.sign_search(Some(s), &[], omega, 0)?;
            }
        } else {
            for ctx in sft.legal_words(k - 1) {
                em.sign_search(None, &ctx, omega, 0)?;
            }
        }
    }

    let pattern = Pattern::initial(tail, depth);
    emit_span(&mut em, &pattern, 0, depth, Sign::Plus)?;
    debug_assert_eq!(em.settled(), horizon);
    em.extend_to(horizon as usize + context_len)?;

    Ok(SynthesisLedger {
        prefix: Word(em.out),
        records: em.records,
        scale: scale.clone(),
        depth,
        target: target.clone(),
        potential_depth: k,
        context_len,
        denom: weights.denom,
    })
}

/// Fill the aligned span `[start, start + T_level)` of the pattern,
/// steering toward `ω·[α_level/2, α_level]`; returns the exact weighted
/// sum of the span.
fn emit_span(
    em: &mut Emitter<'_>,
    pattern: &Pattern,
    start: u64,
    level: usize,
    omega: Sign,
) -> Result<i128, SynthError> {
    debug_assert_eq!(em.settled(), start);
    let cell = pattern.cell_at(start).expect("span inside the pattern base");
    if level == 0 {
        debug_assert_eq!(cell.offset, start);
        return em.emit_sign_block(omega, true);
    }
    if cell.offset == start && cell.level == level && cell.kind == CellKind::Walk {
        return em.emit_sojourn_block(level, omega);
    }
    let sub_len = em.levels[level - 1];
    let kappa = em.levels[level] / sub_len;
    let mut sum = 0i128;
    let mut len = 0u64;
    for j in 0..kappa {
        let w = if len == 0 { omega } else { em.steer(sum, len, level, omega) };
        sum += emit_span(em, pattern, start + j * sub_len, level - 1, w)?;
        len += sub_len;
    }
    em.check_band(sum, em.levels[level], level, omega, start)?;
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn full_shift_setup(
        alpha0: (i64, i64),
        target: (i64, i64),
        orders: Vec<usize>,
    ) -> (Sft, Potential, ControlParams) {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let params = ControlParams::geometric(
            ratio(alpha0.0, alpha0.1),
            ratio(6, 25),
            orders,
            ratio(target.0, target.1),
        )
        .unwrap();
        (sft, phi, params)
    }

    #[test]
    fn choose_sign_hysteresis() {
        let (_, _, params) = full_shift_setup((1, 1), (0, 1), vec![1, 1]);
        // alpha_1 = 6/25; threshold 5/6 * 6/25 = 1/5.
        assert_eq!(choose_sign(&ratio(1, 10), 5, 0, &params, Sign::Plus), Sign::Plus);
        assert_eq!(choose_sign(&ratio(1, 4), 5, 0, &params, Sign::Plus), Sign::Minus);
        assert_eq!(choose_sign(&ratio(1, 5), 5, 0, &params, Sign::Plus), Sign::Plus);
        // Mirrored.
        assert_eq!(choose_sign(&ratio(-1, 10), 5, 0, &params, Sign::Minus), Sign::Minus);
        assert_eq!(choose_sign(&ratio(-1, 4), 5, 0, &params, Sign::Minus), Sign::Plus);
    }

    #[test]
    fn sign_block_full_shift() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let scale = Scale::new(3, &[42]).unwrap();
        let params = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![1, 1],
            ratio(0, 1),
        )
        .unwrap();
        let plus = sign_block(&sft, &phi, &scale, &params, Sign::Plus, None).unwrap();
        assert_eq!(plus.word.symbols(), &[0, 0, 0]);
        assert_eq!(plus.average, ratio(1, 1));
        let minus = sign_block(&sft, &phi, &scale, &params, Sign::Minus, None).unwrap();
        assert_eq!(minus.word.symbols(), &[1, 1, 1]);
        assert_eq!(minus.average, ratio(-1, 1));
    }

    #[test]
    fn sign_block_golden_mean() {
        let sft = Sft::golden_mean();
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-2, 1)]).unwrap();
        let scale = Scale::new(3, &[69]).unwrap();
        let params = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![1, 1],
            ratio(0, 1),
        )
        .unwrap();
        let b = sign_block(&sft, &phi, &scale, &params, Sign::Minus, Some(0)).unwrap();
        assert_eq!(b.word.symbols(), &[1, 0, 1]);
        assert_eq!(b.average, ratio(-1, 1));
        // After a 1 the word 101 is not attachable and T_0 = 3 only
        // reaches averages {1, 0}: the negative band is unreachable.
        let err = sign_block(&sft, &phi, &scale, &params, Sign::Minus, Some(1)).unwrap_err();
        assert!(matches!(err, SynthError::BandUnreachable { .. }), "{err}");
    }

    #[test]
    fn sojourn_block_carries_core_and_band() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let scale = Scale::new(3, &[44]).unwrap();
        let params = ControlParams::geometric(ratio(2, 1), ratio(6, 25), vec![1, 2], ratio(0, 1))
            .unwrap();
        let b = sojourn_block(&sft, &phi, &scale, &params, 1, Sign::Plus, Some(1)).unwrap();
        assert_eq!(b.word.len() as u64, scale.level(1));
        assert!(crate::sft::missing_words(&sft, 2, &b.word).is_empty());
        let (lo, hi) = band(params.alpha(1), Sign::Plus);
        assert!(b.average >= lo && b.average <= hi, "average {}", b.average);
    }

    #[test]
    fn zero_potential_band_unreachable() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(0, 1), ratio(0, 1)]).unwrap();
        let scale = Scale::new(3, &[42]).unwrap();
        let params = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![1, 1],
            ratio(0, 1),
        )
        .unwrap();
        let err = sign_block(&sft, &phi, &scale, &params, Sign::Plus, None).unwrap_err();
        match err {
            SynthError::BandUnreachable { nearest, .. } => {
                assert_eq!(nearest.0, ratio(0, 1));
            }
            other => panic!("expected BandUnreachable, got {other}"),
        }
    }

    #[test]
    fn synthesize_rejects_target_outside_range() {
        let (sft, phi, _) = full_shift_setup((2, 1), (0, 1), vec![1, 2]);
        let params =
            ControlParams::geometric(ratio(2, 1), ratio(6, 25), vec![1, 2], ratio(2, 1)).unwrap();
        let scale = Scale::new(3, &[36]).unwrap();
        let tail = SparseTail::build(&scale, 1).unwrap();
        let err = synthesize(&sft, &phi, &scale, &tail, &params).unwrap_err();
        assert!(matches!(err, SynthError::TargetOutOfRange { .. }), "{err}");
    }

    #[test]
    fn synthesize_rejects_small_factor() {
        let (sft, phi, params) = full_shift_setup((2, 1), (0, 1), vec![1, 2]);
        let scale = Scale::new(3, &[5]).unwrap();
        let tail = SparseTail::build(&scale, 1).unwrap();
        let err = synthesize(&sft, &phi, &scale, &tail, &params).unwrap_err();
        assert!(matches!(err, SynthError::InfeasibleFactor { level: 1, .. }), "{err}");
    }

    #[test]
    fn synthesize_depth1_bands_hold() {
        let (sft, phi, params) = full_shift_setup((2, 1), (0, 1), vec![1, 2]);
        let scale = Scale::new(3, &[36]).unwrap();
        let tail = SparseTail::build(&scale, 1).unwrap();
        let ledger = synthesize(&sft, &phi, &scale, &tail, &params).unwrap();
        assert_eq!(ledger.prefix().len() as u64, scale.level(1) + 1);
        let avg = ledger.final_shifted_average();
        let (lo, hi) = band(params.alpha(1), Sign::Plus);
        assert!(avg >= lo && avg <= hi, "final average {avg}");
        // One record per cell of the initial pattern.
        let pattern = Pattern::initial(&tail, 1);
        assert_eq!(ledger.records().len(), pattern.cells().len());
    }

    #[test]
    fn synthesize_is_deterministic() {
        let (sft, phi, params) = full_shift_setup((2, 1), (0, 1), vec![1, 2, 2]);
        let scale = Scale::new(3, &[36, 73]).unwrap();
        let tail = SparseTail::build(&scale, 2).unwrap();
        let a = synthesize(&sft, &phi, &scale, &tail, &params).unwrap();
        let b = synthesize(&sft, &phi, &scale, &tail, &params).unwrap();
        assert_eq!(a.prefix(), b.prefix());
        assert_eq!(a.records(), b.records());
    }

    #[test]
    fn synthesize_prefix_stable() {
        let (sft, phi, params) = full_shift_setup((2, 1), (0, 1), vec![1, 2, 2]);
        let scale = Scale::new(3, &[36, 73]).unwrap();
        let deep_tail = SparseTail::build(&scale, 2).unwrap();
        let deep = synthesize(&sft, &phi, &scale, &deep_tail, &params).unwrap();

        let shallow_scale = scale.truncate(1);
        let shallow_tail = SparseTail::build(&shallow_scale, 1).unwrap();
        let shallow_params = params.truncate(1);
        let shallow =
            synthesize(&sft, &phi, &shallow_scale, &shallow_tail, &shallow_params).unwrap();

        let keep = shallow_scale.level(1) as usize; // settled + k-1 = settled for k=1
        assert_eq!(&deep.prefix()[..keep], &shallow.prefix()[..keep]);
    }

    #[test]
    fn records_match_recomputed_sums() {
        let (sft, phi, params) = full_shift_setup((2, 1), (0, 1), vec![1, 2]);
        let scale = Scale::new(3, &[36]).unwrap();
        let tail = SparseTail::build(&scale, 1).unwrap();
        let ledger = synthesize(&sft, &phi, &scale, &tail, &params).unwrap();
        for (start, len, avg) in ledger.record_entries() {
            let word = Word(ledger.prefix()[start as usize..(start + len) as usize].to_vec());
            let cont = Word(ledger.prefix()[(start + len) as usize..].to_vec());
            let sum = crate::sft::birkhoff_sum(&sft, &phi, &word, &cont).unwrap();
            let shifted = sum / BigRational::from(BigInt::from(len)) - params.target();
            assert_eq!(shifted, avg, "record at {start}+{len}");
        }
    }
}
