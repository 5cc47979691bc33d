//! Independent verification of a symbol prefix against the control
//! criterion, plus empirical measures and the finite window claims.
//!
//! Everything here re-derives its numbers from the raw symbols with exact
//! arithmetic; nothing trusts the synthesizer. The only synthesis artifact
//! that can enter is the block ledger, and then only to be *audited*: every
//! recorded average is recomputed from the prefix and compared exactly.
//!
//! Scans are single passes with rolling windows; violation lists are sorted
//! by coordinate, so a partitioned scan merging its lists associatively
//! would produce the same report.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Frac;
use crate::scale::ControlParams;
use crate::sft::{missing_words, rank_of, Potential, Sft};
use crate::synth::carries_density;
use crate::tail::SparseTail;
use crate::weights::{RollingRank, ShiftedWeights};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyzeError {
    #[error("prefix too short: need {needed} symbols, got {got}")]
    PrefixTooShort { needed: u64, got: u64 },
    #[error("window {t} too small: need more than {min}")]
    WindowTooSmall { t: u64, min: u64 },
    #[error("measure order {order} is below the potential depth {depth}")]
    OrderTooSmall { order: usize, depth: usize },
    #[error("level {level} out of range for depth {depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("control params cover depth {params} but the tail has depth {tail}")]
    DepthMismatch { params: usize, tail: usize },
    #[error("exact arithmetic guard: {0}")]
    Arithmetic(String),
}

/// An aligned block whose exact shifted average escapes `[-α_n, α_n]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AverageViolation {
    pub start: u64,
    pub level: usize,
    pub average: Frac,
}

/// An excursion component missing a demanded word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityViolation {
    pub component_start: u64,
    pub level: usize,
    pub missing_word: Vec<u8>,
}

/// A ledger record whose stored average disagrees with the prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordViolation {
    pub start: u64,
    pub len: u64,
    pub recorded: Frac,
    pub actual: Frac,
}

/// Result of one finite window claim scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub name: String,
    pub window: u64,
    pub starts_checked: u64,
    pub starts_excluded: u64,
    /// Window start indices violating the claim.
    pub counterexamples: Vec<u64>,
}

impl ClaimReport {
    pub fn is_clean(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub depth: usize,
    pub horizon: u64,
    pub intervals_checked: u64,
    pub components_checked: u64,
    /// Levels whose components were checked for word density.
    pub density_levels: Vec<usize>,
    /// Levels whose components are exempt (no room for a universal core).
    pub density_exempt_levels: Vec<usize>,
    /// Largest |shifted average| seen per level, over checked blocks.
    pub max_abs_average_by_level: Vec<Frac>,
    /// Exact Birkhoff average of the potential over the settled prefix.
    pub final_average: Frac,
    /// The same, shifted by the target.
    pub final_shifted_average: Frac,
}

/// Clause-by-clause verification result. Empty lists mean the prefix
/// satisfies every checked clause of the criterion at this depth; the
/// claims and record audit are filled by their own entry points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlReport {
    pub average_violations: Vec<AverageViolation>,
    pub density_violations: Vec<DensityViolation>,
    pub record_violations: Vec<RecordViolation>,
    pub claims: Vec<ClaimReport>,
    pub summary: ReportSummary,
}

impl ControlReport {
    pub fn is_clean(&self) -> bool {
        self.average_violations.is_empty()
            && self.density_violations.is_empty()
            && self.record_violations.is_empty()
            && self.claims.iter().all(|c| c.is_clean())
    }
}

/// Exact weighted sums at `T_0` boundaries: enough to reconstruct the sum
/// of any aligned block at any level in O(1).
struct BoundarySums {
    t0: u64,
    sums: Vec<i128>,
}

impl BoundarySums {
    fn build_with(
        prefix: &[u8],
        horizon: u64,
        t0: u64,
        weights: &ShiftedWeights,
    ) -> BoundarySums {
        let k = weights.depth;
        let slots = (horizon / t0) as usize;
        let mut sums = Vec::with_capacity(slots + 1);
        sums.push(0i128);
        let mut cum = 0i128;
        let mut roll = RollingRank::new(weights.alphabet, k);
        for (i, &s) in prefix.iter().take((horizon + k as u64 - 1) as usize).enumerate() {
            if let Some(rank) = roll.push(s) {
                cum += weights.weight(rank);
                let window_index = (i + 1 - k) as u64;
                if (window_index + 1) % t0 == 0 {
                    sums.push(cum);
                }
            }
        }
        debug_assert_eq!(sums.len(), slots + 1);
        BoundarySums { t0, sums }
    }

    /// Sum of windows in `[a, b)` for `T_0`-aligned bounds.
    fn sum(&self, a: u64, b: u64) -> i128 {
        debug_assert!(a % self.t0 == 0 && b % self.t0 == 0);
        self.sums[(b / self.t0) as usize] - self.sums[(a / self.t0) as usize]
    }
}

/// Membership sweep over sorted disjoint intervals, for nondecreasing
/// queries.
struct IntervalSweep {
    intervals: Vec<(u64, u64)>,
    idx: usize,
}

impl IntervalSweep {
    /// Components of every level in `levels`, merged and sorted.
    fn components(tail: &SparseTail, min_level: usize) -> IntervalSweep {
        let mut intervals = Vec::new();
        for level in min_level..tail.depth() {
            let len = tail.scale().level(level);
            for &s in tail.starts(level) {
                intervals.push((s, s + len - 1));
            }
        }
        intervals.sort_unstable();
        IntervalSweep { intervals, idx: 0 }
    }

    /// Whether `x` lies in some interval; callers must query with
    /// nondecreasing `x`.
    fn contains(&mut self, x: u64) -> bool {
        while self.idx < self.intervals.len() && self.intervals[self.idx].1 < x {
            self.idx += 1;
        }
        self.idx < self.intervals.len()
            && self.intervals[self.idx].0 <= x
            && x <= self.intervals[self.idx].1
    }
}

fn checked_weights(
    sft: &Sft,
    potential: &Potential,
    params: &ControlParams,
    horizon: u64,
) -> Result<ShiftedWeights, AnalyzeError> {
    ShiftedWeights::new(sft, potential, params.target(), horizon + potential.depth() as u64)
        .map_err(AnalyzeError::Arithmetic)
}

/// Verify the control criterion clause by clause on a prefix.
///
/// Averages: every aligned `T_n`-block not inside a component of level
/// `> n` must have exact shifted average in `[-α_n, α_n]`; this covers the
/// good blocks, the components themselves, and (at `n = D`) the whole
/// settled prefix. Density: every component at a core-carrying level must
/// contain every legal word of its demanded length.
pub fn verify_control(
    sft: &Sft,
    potential: &Potential,
    prefix: &[u8],
    tail: &SparseTail,
    params: &ControlParams,
) -> Result<ControlReport, AnalyzeError> {
    let depth = tail.depth();
    if params.depth() != depth {
        return Err(AnalyzeError::DepthMismatch { params: params.depth(), tail: depth });
    }
    let scale = tail.scale();
    let horizon = tail.horizon();
    let k = potential.depth() as u64;
    let needed = horizon + k - 1;
    if (prefix.len() as u64) < needed {
        return Err(AnalyzeError::PrefixTooShort { needed, got: prefix.len() as u64 });
    }
    let weights = checked_weights(sft, potential, params, horizon)?;
    let sums = BoundarySums::build_with(prefix, horizon, scale.level(0), &weights);

    let mut average_violations = Vec::new();
    let mut intervals_checked = 0u64;
    let mut max_by_level: Vec<Option<(i128, u64)>> = vec![None; depth + 1];
    for n in 0..=depth {
        let t_n = scale.level(n);
        let alpha = params.alpha(n);
        let neg_alpha = -alpha.clone();
        // Exempt exactly the blocks strictly inside a higher component.
        let mut higher = IntervalSweep::components(tail, n + 1);
        for block in 0..horizon / t_n {
            let start = block * t_n;
            if higher.contains(start) {
                continue;
            }
            intervals_checked += 1;
            let sum = sums.sum(start, start + t_n);
            if !weights.average_in(sum, t_n, &neg_alpha, alpha) {
                average_violations.push(AverageViolation {
                    start,
                    level: n,
                    average: Frac(weights.average(sum, t_n)),
                });
            }
            let entry = max_by_level[n].get_or_insert((0, t_n));
            if sum.abs() > entry.0 {
                entry.0 = sum.abs();
            }
        }
    }

    let mut density_violations = Vec::new();
    let mut components_checked = 0u64;
    let mut density_levels = Vec::new();
    let mut density_exempt_levels = Vec::new();
    for level in 0..depth {
        if !carries_density(sft, scale, params, level) {
            density_exempt_levels.push(level);
            continue;
        }
        density_levels.push(level);
        let m = params.density_order(level);
        let len = scale.level(level) as usize;
        for &start in tail.starts(level) {
            components_checked += 1;
            let factor = &prefix[start as usize..start as usize + len];
            for missing in missing_words(sft, m, factor) {
                density_violations.push(DensityViolation {
                    component_start: start,
                    level,
                    missing_word: missing,
                });
            }
        }
    }

    let final_sum = sums.sum(0, horizon);
    let final_shifted = weights.average(final_sum, horizon);
    let summary = ReportSummary {
        depth,
        horizon,
        intervals_checked,
        components_checked,
        density_levels,
        density_exempt_levels,
        max_abs_average_by_level: max_by_level
            .into_iter()
            .map(|e| {
                Frac(e.map_or_else(BigRational::zero, |(s, len)| weights.average(s, len).abs()))
            })
            .collect(),
        final_average: Frac(&final_shifted + params.target()),
        final_shifted_average: Frac(final_shifted),
    };

    Ok(ControlReport {
        average_violations,
        density_violations,
        record_violations: Vec::new(),
        claims: Vec::new(),
        summary,
    })
}

/// Audit ledger records against the prefix: recompute every span's exact
/// shifted average and compare. Any single-symbol change inside a span
/// that moves the potential shows up here.
pub fn verify_records(
    sft: &Sft,
    potential: &Potential,
    params: &ControlParams,
    prefix: &[u8],
    records: impl IntoIterator<Item = (u64, u64, BigRational)>,
) -> Result<Vec<RecordViolation>, AnalyzeError> {
    let k = potential.depth();
    let mut end_max = 0u64;
    let entries: Vec<(u64, u64, BigRational)> = records.into_iter().collect();
    for (start, len, _) in &entries {
        end_max = end_max.max(start + len);
    }
    let needed = end_max + k as u64 - 1;
    if (prefix.len() as u64) < needed {
        return Err(AnalyzeError::PrefixTooShort { needed, got: prefix.len() as u64 });
    }
    let weights = checked_weights(sft, potential, params, end_max)?;

    // One pass accumulating window sums, snapshotting at span boundaries.
    let mut cuts: Vec<u64> = entries.iter().flat_map(|&(s, l, _)| [s, s + l]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut cut_sums: Vec<i128> = Vec::with_capacity(cuts.len());
    let mut next = 0usize;
    while next < cuts.len() && cuts[next] == 0 {
        cut_sums.push(0);
        next += 1;
    }
    let mut cum = 0i128;
    let mut roll = RollingRank::new(weights.alphabet, k);
    for (i, &s) in prefix.iter().take(needed as usize).enumerate() {
        if let Some(rank) = roll.push(s) {
            cum += weights.weight(rank);
            let done = (i + 2 - k) as u64; // windows strictly below `done` are summed
            while next < cuts.len() && cuts[next] == done {
                cut_sums.push(cum);
                next += 1;
            }
        }
    }
    debug_assert_eq!(cut_sums.len(), cuts.len());
    let sum_at = |x: u64| cut_sums[cuts.binary_search(&x).expect("boundary snapshotted")];

    let mut violations = Vec::new();
    for (start, len, recorded) in entries {
        let sum = sum_at(start + len) - sum_at(start);
        let actual = weights.average(sum, len);
        if actual != recorded {
            violations.push(RecordViolation {
                start,
                len,
                recorded: Frac(recorded),
                actual: Frac(actual),
            });
        }
    }
    violations.sort_by_key(|v| v.start);
    Ok(violations)
}

/// Exact sliding-window word frequencies: windows starting at `0..length`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalMeasure {
    length: u64,
    order: usize,
    counts: BTreeMap<Vec<u8>, u64>,
}

impl EmpiricalMeasure {
    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn counts(&self) -> &BTreeMap<Vec<u8>, u64> {
        &self.counts
    }

    pub fn frequency(&self, word: &[u8]) -> BigRational {
        let count = self.counts.get(word).copied().unwrap_or(0);
        BigRational::new(BigInt::from(count), BigInt::from(self.length))
    }

    pub fn frequencies(&self) -> impl Iterator<Item = (&[u8], BigRational)> + '_ {
        self.counts.iter().map(|(w, &c)| {
            (w.as_slice(), BigRational::new(BigInt::from(c), BigInt::from(self.length)))
        })
    }

    /// Number of distinct words observed.
    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// Fraction of legal words of this order that occur.
    pub fn coverage(&self, sft: &Sft) -> BigRational {
        let legal = sft.legal_word_count(self.order);
        let present = self.counts.keys().filter(|w| sft.is_legal(w)).count() as u64;
        BigRational::new(BigInt::from(present), BigInt::from(legal))
    }

    /// Exact total mass; 1 by construction.
    pub fn total_mass(&self) -> BigRational {
        let total: u64 = self.counts.values().sum();
        BigRational::new(BigInt::from(total), BigInt::from(self.length))
    }
}

/// Sliding-window frequencies of `order`-words over windows starting at
/// `0..length`.
pub fn empirical_measure(
    prefix: &[u8],
    length: u64,
    order: usize,
) -> Result<EmpiricalMeasure, AnalyzeError> {
    if order == 0 {
        return Err(AnalyzeError::OrderTooSmall { order, depth: 1 });
    }
    let needed = length + order as u64 - 1;
    if (prefix.len() as u64) < needed {
        return Err(AnalyzeError::PrefixTooShort { needed, got: prefix.len() as u64 });
    }
    let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for i in 0..length as usize {
        *counts.entry(prefix[i..i + order].to_vec()).or_insert(0) += 1;
    }
    Ok(EmpiricalMeasure { length, order, counts })
}

/// Exact integral of the potential against an empirical measure: equals
/// the Birkhoff average over the same window.
pub fn integrate_potential(
    measure: &EmpiricalMeasure,
    potential: &Potential,
) -> Result<BigRational, AnalyzeError> {
    let k = potential.depth();
    if measure.order() < k {
        return Err(AnalyzeError::OrderTooSmall { order: measure.order(), depth: k });
    }
    let mut sum = BigRational::zero();
    for (word, &count) in measure.counts() {
        sum += potential.value(&word[..k]) * BigRational::from(BigInt::from(count));
    }
    Ok(sum / BigRational::from(BigInt::from(measure.length())))
}

/// Density claim: outside the exclusion set around deep components, every
/// window `[i, i+t]` contains every legal word of length `m_k`.
///
/// The exclusion set is `R_{m_t,∞} ∪ (R_{m_t,∞} - T_{k+1})` where `m_t` is
/// the smallest level with `T_{m_t} + 2·T_{k+1} > t`.
pub fn verify_density_claim(
    sft: &Sft,
    prefix: &[u8],
    tail: &SparseTail,
    params: &ControlParams,
    k: usize,
    t: u64,
) -> Result<ClaimReport, AnalyzeError> {
    let depth = tail.depth();
    if k + 1 > depth {
        return Err(AnalyzeError::LevelOutOfRange { level: k + 1, depth });
    }
    let scale = tail.scale();
    let horizon = tail.horizon();
    let t_k1 = scale.level(k + 1);
    if t <= t_k1 {
        return Err(AnalyzeError::WindowTooSmall { t, min: t_k1 });
    }
    if t >= horizon {
        return Err(AnalyzeError::WindowTooSmall { t, min: horizon });
    }
    if (prefix.len() as u64) < horizon {
        return Err(AnalyzeError::PrefixTooShort { needed: horizon, got: prefix.len() as u64 });
    }

    let m_t = (k + 1..=depth)
        .find(|&m| scale.level(m) + 2 * t_k1 > t)
        .expect("t < horizon = T_depth guarantees a level");
    let m = params.density_order(k);
    let alphabet = sft.alphabet_size();
    let legal_total = sft.legal_word_count(m);
    let legal_mask: Vec<bool> = {
        let size = (alphabet as u64).pow(m as u32) as usize;
        let mut mask = vec![false; size];
        for w in sft.legal_words(m) {
            mask[rank_of(&w, alphabet)] = true;
        }
        mask
    };

    // Sliding counts of m-word occurrences in [i, i+t].
    let word_starts_per_window = (t + 1) as usize - (m - 1);
    let size = legal_mask.len();
    let mut counts = vec![0u64; size];
    let mut distinct_legal = 0u64;
    let add = |counts: &mut Vec<u64>, distinct: &mut u64, rank: usize| {
        if legal_mask[rank] {
            if counts[rank] == 0 {
                *distinct += 1;
            }
            counts[rank] += 1;
        }
    };
    let remove = |counts: &mut Vec<u64>, distinct: &mut u64, rank: usize| {
        if legal_mask[rank] {
            counts[rank] -= 1;
            if counts[rank] == 0 {
                *distinct -= 1;
            }
        }
    };
    for j in 0..word_starts_per_window {
        let rank = rank_of(&prefix[j..j + m], alphabet);
        add(&mut counts, &mut distinct_legal, rank);
    }

    let mut excl_direct = IntervalSweep::components(tail, m_t);
    let mut excl_shifted = IntervalSweep::components(tail, m_t);
    let mut counterexamples = Vec::new();
    let mut starts_checked = 0u64;
    let mut starts_excluded = 0u64;
    let last_start = horizon - 1 - t;
    for i in 0..=last_start {
        let excluded = excl_direct.contains(i)
            || (i + t_k1 < horizon && excl_shifted.contains(i + t_k1));
        if excluded {
            starts_excluded += 1;
        } else {
            starts_checked += 1;
            if distinct_legal < legal_total {
                counterexamples.push(i);
            }
        }
        // Slide: drop word at i, add word at i + word_starts_per_window.
        if i < last_start {
            let out_rank = rank_of(&prefix[i as usize..i as usize + m], alphabet);
            remove(&mut counts, &mut distinct_legal, out_rank);
            let in_start = i as usize + word_starts_per_window;
            let in_rank = rank_of(&prefix[in_start..in_start + m], alphabet);
            add(&mut counts, &mut distinct_legal, in_rank);
        }
    }

    Ok(ClaimReport {
        name: format!("density[k={k}, t={t}, m_t={m_t}]"),
        window: t,
        starts_checked,
        starts_excluded,
        counterexamples,
    })
}

/// The window bound `t_m = 2·T_m/C + 1` with `C = α_k / (2·(max|φ| + α_k))`.
pub fn average_claim_window(
    scale: &crate::scale::Scale,
    params: &ControlParams,
    potential: &Potential,
    k: usize,
    m: usize,
) -> BigRational {
    let alpha = params.alpha(k);
    let c = alpha / ((potential.max_abs() + alpha) * BigRational::from(BigInt::from(2)));
    BigRational::from(BigInt::from(scale.level(m))) * BigRational::from(BigInt::from(2)) / c
        + BigRational::one()
}

/// Average claim: any window `[i, i+t)` whose exact shifted average
/// escapes `[-2α_k, 2α_k]` must have `i` or `i+t` inside a component of
/// level at least `m`.
pub fn verify_average_claim(
    sft: &Sft,
    potential: &Potential,
    prefix: &[u8],
    tail: &SparseTail,
    params: &ControlParams,
    k: usize,
    m: usize,
    t: u64,
) -> Result<ClaimReport, AnalyzeError> {
    let depth = tail.depth();
    if k > depth || m > depth {
        return Err(AnalyzeError::LevelOutOfRange { level: k.max(m), depth });
    }
    let scale = tail.scale();
    let horizon = tail.horizon();
    let kd = potential.depth();
    let needed = horizon + kd as u64 - 1;
    if (prefix.len() as u64) < needed {
        return Err(AnalyzeError::PrefixTooShort { needed, got: prefix.len() as u64 });
    }
    let t_min = average_claim_window(scale, params, potential, k, m);
    if BigRational::from(BigInt::from(t)) < t_min || t > horizon {
        use num::ToPrimitive;
        let min = t_min.ceil().to_integer().to_u64().unwrap_or(u64::MAX);
        return Err(AnalyzeError::WindowTooSmall { t, min });
    }

    let weights = checked_weights(sft, potential, params, horizon)?;
    let two_alpha = params.alpha(k) * BigRational::from(BigInt::from(2));
    let neg_two_alpha = -two_alpha.clone();

    // Rolling window sum: seed with the first window, then slide by one
    // potential-window at each end.
    let mut head = RollingRank::new(weights.alphabet, kd);
    let mut window_sum = 0i128;
    for i in 0..(t as usize + kd - 1) {
        if let Some(rank) = head.push(prefix[i]) {
            window_sum += weights.weight(rank);
        }
    }

    let mut excl_start = IntervalSweep::components(tail, m);
    let mut excl_end = IntervalSweep::components(tail, m);
    let mut counterexamples = Vec::new();
    let mut starts_checked = 0u64;
    let mut starts_excluded = 0u64;
    let last_start = horizon - t;
    for i in 0..=last_start {
        let exceeds = weights.cmp_average(window_sum, t, &two_alpha) == std::cmp::Ordering::Greater
            || weights.cmp_average(window_sum, t, &neg_two_alpha) == std::cmp::Ordering::Less;
        if exceeds {
            let covered = excl_start.contains(i)
                || (i + t < horizon && excl_end.contains(i + t));
            if covered {
                starts_excluded += 1;
            } else {
                counterexamples.push(i);
            }
        } else {
            starts_checked += 1;
        }
        if i < last_start {
            // Slide the window: drop the potential window at i, add the
            // one at i + t.
            let out_rank = rank_of(&prefix[i as usize..i as usize + kd], weights.alphabet);
            window_sum -= weights.weight(out_rank);
            let in_pos = (i + t) as usize;
            let in_rank = rank_of(&prefix[in_pos..in_pos + kd], weights.alphabet);
            window_sum += weights.weight(in_rank);
        }
    }

    Ok(ClaimReport {
        name: format!("average[k={k}, m={m}, t={t}]"),
        window: t,
        starts_checked,
        starts_excluded,
        counterexamples,
    })
}

/// One CSV row per scale level: window length, exact Birkhoff average,
/// and coverage of the demanded top-order words.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub checkpoint: u64,
    pub average: Frac,
    pub coverage: Frac,
}

/// Exact average and word coverage of the initial window at every level.
pub fn checkpoint_series(
    sft: &Sft,
    potential: &Potential,
    prefix: &[u8],
    tail: &SparseTail,
    params: &ControlParams,
) -> Result<Vec<CheckpointRow>, AnalyzeError> {
    let scale = tail.scale();
    let depth = tail.depth();
    let horizon = tail.horizon();
    let k = potential.depth();
    let m = params.density_order(depth);
    let needed = horizon + (k as u64 - 1).max(m as u64 - 1);
    if (prefix.len() as u64) < needed {
        return Err(AnalyzeError::PrefixTooShort { needed, got: prefix.len() as u64 });
    }
    let weights = checked_weights(sft, potential, params, horizon)?;
    let legal_total = sft.legal_word_count(m);
    let alphabet = sft.alphabet_size();
    let size = (alphabet as u64).pow(m as u32) as usize;
    let mut seen = vec![false; size];
    let mut distinct_legal = 0u64;
    let legal_mask: Vec<bool> = {
        let mut mask = vec![false; size];
        for w in sft.legal_words(m) {
            mask[rank_of(&w, alphabet)] = true;
        }
        mask
    };

    // Two independent scans (the potential windows and the order-m words
    // advance at different offsets), each paused at every level boundary.
    let mut rows = Vec::with_capacity(depth + 1);
    let mut cum = 0i128;
    let mut roll = RollingRank::new(alphabet, k);
    let mut word_roll = RollingRank::new(alphabet, m);
    let mut windows_done = 0u64;
    let mut words_done = 0u64;
    let mut pos_w = 0usize;
    let mut pos_m = 0usize;
    for level in 0..=depth {
        let target = scale.level(level);
        while windows_done < target {
            if let Some(rank) = roll.push(prefix[pos_w]) {
                cum += weights.weight(rank);
                windows_done += 1;
            }
            pos_w += 1;
        }
        while words_done < target {
            if let Some(rank) = word_roll.push(prefix[pos_m]) {
                if legal_mask[rank] && !seen[rank] {
                    seen[rank] = true;
                    distinct_legal += 1;
                }
                words_done += 1;
            }
            pos_m += 1;
        }
        rows.push(CheckpointRow {
            checkpoint: target,
            average: Frac(weights.average(cum, target) + params.target()),
            coverage: Frac(BigRational::new(
                BigInt::from(distinct_legal),
                BigInt::from(legal_total),
            )),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use crate::scale::Scale;

    fn measure_of(sym: &[u8], l: u64, m: usize) -> EmpiricalMeasure {
        empirical_measure(sym, l, m).unwrap()
    }

    #[test]
    fn empirical_measure_alternating() {
        let m = measure_of(&[0, 1, 0, 1, 0], 4, 1);
        assert_eq!(m.frequency(&[0]), ratio(1, 2));
        assert_eq!(m.frequency(&[1]), ratio(1, 2));
        assert_eq!(m.total_mass(), ratio(1, 1));
    }

    #[test]
    fn empirical_measure_constant_pairs() {
        let m = measure_of(&[0, 0, 0, 0], 3, 2);
        assert_eq!(m.frequency(&[0, 0]), ratio(1, 1));
        assert_eq!(m.support_size(), 1);
    }

    #[test]
    fn empirical_measure_needs_window_room() {
        let err = empirical_measure(&[0, 0, 0], 3, 2).unwrap_err();
        assert!(matches!(err, AnalyzeError::PrefixTooShort { needed: 4, got: 3 }));
    }

    #[test]
    fn integrate_matches_birkhoff_average() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let m = measure_of(&[0, 1, 1, 1, 0], 4, 1);
        assert_eq!(integrate_potential(&m, &phi).unwrap(), ratio(-1, 2));

        // Same window statistics collected at order 2 give the same value.
        let m2 = measure_of(&[0, 1, 1, 1, 0, 0], 4, 2);
        assert_eq!(integrate_potential(&m2, &phi).unwrap(), ratio(-1, 2));
    }

    #[test]
    fn integrate_rejects_small_order() {
        let sft = Sft::full_shift(2);
        let mut values = BTreeMap::new();
        for w in sft.legal_words(2) {
            values.insert(w, ratio(1, 1));
        }
        let phi = Potential::new(&sft, 2, &values).unwrap();
        let m = measure_of(&[0, 1, 0, 1], 3, 1);
        assert!(matches!(
            integrate_potential(&m, &phi),
            Err(AnalyzeError::OrderTooSmall { order: 1, depth: 2 })
        ));
    }

    #[test]
    fn constant_prefix_violates_averages() {
        let scale = Scale::new(3, &[36]).unwrap();
        let tail = SparseTail::build(&scale, 1).unwrap();
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let params =
            ControlParams::geometric(ratio(1, 2), ratio(6, 25), vec![1, 1], ratio(0, 1)).unwrap();
        let prefix = vec![0u8; scale.level(1) as usize + 1];
        let report = verify_control(&sft, &phi, &prefix, &tail, &params).unwrap();
        // Every level-0 block has average 1 > alpha_0 = 1/2.
        assert!(!report.is_clean());
        assert!(report.average_violations.iter().any(|v| v.level == 0));
    }

    #[test]
    fn record_audit_detects_mismatch() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let params =
            ControlParams::geometric(ratio(1, 1), ratio(6, 25), vec![1], ratio(0, 1)).unwrap();
        let prefix = vec![0u8, 0, 0, 1, 1, 1];
        let records = vec![
            (0u64, 3u64, ratio(1, 1)),
            (3u64, 3u64, ratio(-1, 1)),
        ];
        let clean = verify_records(&sft, &phi, &params, &prefix, records.clone()).unwrap();
        assert!(clean.is_empty());

        let mut flipped = prefix.clone();
        flipped[1] = 1;
        let bad = verify_records(&sft, &phi, &params, &flipped, records).unwrap();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].start, 0);
        assert_eq!(bad[0].actual.0, ratio(1, 3));
    }

    #[test]
    fn density_claim_all_zeros_fails_everywhere_allowed() {
        let scale = Scale::new(3, &[3, 6]).unwrap();
        let tail = SparseTail::build(&scale, 2).unwrap();
        let params =
            ControlParams::geometric(ratio(1, 1), ratio(6, 25), vec![1, 1, 1], ratio(0, 1))
                .unwrap();
        let sft = Sft::full_shift(2);
        let prefix = vec![0u8; 54];
        let t = scale.level(1) + 1; // 10 > T_1 = 9
        let report = verify_density_claim(&sft, &prefix, &tail, &params, 0, t).unwrap();
        assert_eq!(report.counterexamples.len() as u64, report.starts_checked);
        assert!(report.starts_checked > 0);
    }

    #[test]
    fn density_claim_window_too_small() {
        let scale = Scale::new(3, &[3, 6]).unwrap();
        let tail = SparseTail::build(&scale, 2).unwrap();
        let params =
            ControlParams::geometric(ratio(1, 1), ratio(6, 25), vec![1, 1, 1], ratio(0, 1))
                .unwrap();
        let sft = Sft::full_shift(2);
        let prefix = vec![0u8; 54];
        let err = verify_density_claim(&sft, &prefix, &tail, &params, 0, 9).unwrap_err();
        assert!(matches!(err, AnalyzeError::WindowTooSmall { t: 9, min: 9 }));
    }

    #[test]
    fn average_claim_zero_potential_vacuous() {
        let scale = Scale::new(3, &[3, 6]).unwrap();
        let tail = SparseTail::build(&scale, 2).unwrap();
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(0, 1), ratio(0, 1)]).unwrap();
        let params =
            ControlParams::geometric(ratio(1, 1), ratio(6, 25), vec![1, 1, 1], ratio(0, 1))
                .unwrap();
        let prefix = vec![0u8; 54];
        let t_min = average_claim_window(&scale, &params, &phi, 1, 1);
        use num::ToPrimitive;
        let t = t_min.ceil().to_integer().to_u64().unwrap();
        let report =
            verify_average_claim(&sft, &phi, &prefix, &tail, &params, 1, 1, t).unwrap();
        assert!(report.is_clean());
    }

    #[test]
    fn claim_window_formula() {
        // C = alpha_k / (2 (maxAbs + alpha_k)); t_m = 2 T_m / C + 1.
        let scale = Scale::new(3, &[3, 6]).unwrap();
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let params = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5), ratio(1, 25)],
            vec![ratio(3, 8), ratio(3, 40)],
            vec![1, 1, 1],
            ratio(0, 1),
        )
        .unwrap();
        // k=1: C = (1/5) / (2 * 6/5) = 1/12; t_1 = 2*9*12 + 1 = 217.
        assert_eq!(average_claim_window(&scale, &params, &phi, 1, 1), ratio(217, 1));
    }
}
