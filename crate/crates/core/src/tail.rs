//! The hierarchical sparse excursion set `R∞` and its queries.
//!
//! `R∞` is a union of aligned components: each component occupies a whole
//! block `[k·T_n, (k+1)·T_n - 1]` for its level `n`. The canonical
//! construction walks levels top-down: the top block gets one level-`(D-1)`
//! component starting at its middle third, and every lower-level block not
//! already swallowed by a higher component gets one component at the same
//! relative offset. The result is sparse (`ε_n = 2/κ_n` per level), centered
//! (components sit in middle thirds), and avoids 0.
//!
//! Components are stored as sorted start lists per level, so membership and
//! classification are binary searches and memory is proportional to the
//! number of components, not to `T_D`.

use num::bigint::BigInt;
use num::rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Frac;
use crate::scale::Scale;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TailError {
    #[error("index {0} outside [0, {1})")]
    OutOfRange(u64, u64),
    #[error("depth {0} exceeds scale depth {1}")]
    DepthTooLarge(usize, usize),
    #[error("component start {0} at level {1} does not fit in [0, {2})")]
    ComponentOutOfRange(u64, usize, u64),
    #[error("component starts at level {0} are not strictly sorted")]
    StartsNotSorted(usize),
}

/// Classification of an aligned block against the excursion set.
///
/// An aligned `T_n`-block is `Bad` when it lies inside a component of size
/// `≥ T_n` and `Good` when it misses every such component; for aligned
/// queries these two cases are exhaustive. `MixedBelow` is never produced
/// for aligned blocks and marks a non-aligned interval that meets only
/// lower-level components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalClass {
    Good(usize),
    Bad(usize),
    MixedBelow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailViolationKind {
    /// Component start not aligned to its level's block length.
    Misaligned,
    /// Two components overlap or touch (maximality of components fails).
    OverlapOrAdjacent,
    /// 0 lies inside a component.
    ContainsZero,
    /// A level-(n-1) component escapes the middle third of its block.
    OffCenter,
    /// A block subject to the centering rule holds no lower component.
    MissingComponent,
    /// A block's lower-level mass reaches the `ε_n` budget.
    TooDense,
}

/// One violation, located by level and block start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailViolation {
    pub kind: TailViolationKind,
    pub level: usize,
    pub block_start: u64,
    pub detail: String,
}

/// Result of the exhaustive axiom check.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TailReport {
    pub violations: Vec<TailViolation>,
    pub blocks_checked: u64,
}

impl TailReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TailDoc {
    scale: Scale,
    depth: usize,
    starts_by_level: Vec<Vec<u64>>,
}

/// The excursion set over `[0, T_depth)`: sorted component starts per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TailDoc", into = "TailDoc")]
pub struct SparseTail {
    scale: Scale,
    depth: usize,
    starts_by_level: Vec<Vec<u64>>,
}

impl SparseTail {
    /// Canonical construction at the given depth.
    ///
    /// Level lists are filled top-down. `R_{depth-1}` is the single block
    /// at the third point of `[0, T_depth)`; then for each level `j` from
    /// `depth-2` down to 0, every `T_{j+1}`-block whose start is not
    /// covered by a higher component receives one level-`j` component at
    /// the same relative position. The third point `T_{j+1}/3` is itself
    /// `T_j`-aligned exactly when `3 | κ_{j+1}`; otherwise the component
    /// starts at the first aligned offset after it, which still sits in
    /// the middle third for every factor except 4.
    pub fn build(scale: &Scale, depth: usize) -> Result<SparseTail, TailError> {
        if depth > scale.depth() {
            return Err(TailError::DepthTooLarge(depth, scale.depth()));
        }
        let mut starts_by_level: Vec<Vec<u64>> = vec![Vec::new(); depth];
        if depth > 0 {
            let t_top = scale.level(depth);
            let top_offs = (t_top / 3).div_ceil(scale.level(depth - 1)) * scale.level(depth - 1);
            starts_by_level[depth - 1].push(top_offs);
            for j in (0..depth.saturating_sub(1)).rev() {
                let t_block = scale.level(j + 1);
                let offs = (t_block / 3).div_ceil(scale.level(j)) * scale.level(j);
                let blocks = t_top / t_block;
                let mut starts = Vec::with_capacity(blocks as usize);
                for k in 0..blocks {
                    let start = k * t_block;
                    let covered = starts_by_level[j + 1..]
                        .iter()
                        .enumerate()
                        .any(|(d, ss)| {
                            let t_comp = scale.level(j + 1 + d);
                            match ss.binary_search(&start) {
                                Ok(_) => true,
                                Err(pos) => pos > 0 && ss[pos - 1] + t_comp > start,
                            }
                        });
                    if !covered {
                        starts.push(start + offs);
                    }
                }
                starts_by_level[j] = starts;
            }
        }
        Ok(SparseTail { scale: scale.clone(), depth, starts_by_level })
    }

    /// Assemble from raw per-level start lists (hand-built tails are
    /// accepted here and judged by [`SparseTail::validate`]). Starts must be
    /// strictly sorted and fit inside `[0, T_depth)`.
    pub fn from_parts(
        scale: Scale,
        depth: usize,
        starts_by_level: Vec<Vec<u64>>,
    ) -> Result<SparseTail, TailError> {
        if depth > scale.depth() || starts_by_level.len() != depth {
            return Err(TailError::DepthTooLarge(depth, scale.depth()));
        }
        let t_top = scale.level(depth);
        for (n, starts) in starts_by_level.iter().enumerate() {
            let t_n = scale.level(n);
            for w in starts.windows(2) {
                if w[1] <= w[0] {
                    return Err(TailError::StartsNotSorted(n));
                }
            }
            for &s in starts {
                if s.checked_add(t_n).map_or(true, |e| e > t_top) {
                    return Err(TailError::ComponentOutOfRange(s, n, t_top));
                }
            }
        }
        Ok(SparseTail { scale, depth, starts_by_level })
    }

    pub fn scale(&self) -> &Scale {
        &self.scale
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Domain upper bound `T_depth`.
    pub fn horizon(&self) -> u64 {
        self.scale.level(self.depth)
    }

    /// Component starts at one level.
    pub fn starts(&self, level: usize) -> &[u64] {
        &self.starts_by_level[level]
    }

    /// The unique component containing `i`, as `(start, end_inclusive, level)`.
    pub fn component_at(&self, i: u64) -> Result<Option<(u64, u64, usize)>, TailError> {
        let horizon = self.horizon();
        if i >= horizon {
            return Err(TailError::OutOfRange(i, horizon));
        }
        for (n, starts) in self.starts_by_level.iter().enumerate() {
            let t_n = self.scale.level(n);
            let pos = starts.partition_point(|&s| s <= i);
            if pos > 0 {
                let s = starts[pos - 1];
                if i < s + t_n {
                    return Ok(Some((s, s + t_n - 1, n)));
                }
            }
        }
        Ok(None)
    }

    /// Classify the aligned block `[k·T_n, (k+1)·T_n - 1]`.
    pub fn classify(&self, k: u64, n: usize) -> Result<IntervalClass, TailError> {
        let t_n = self.scale.level(n);
        let start = k.checked_mul(t_n).ok_or(TailError::OutOfRange(u64::MAX, self.horizon()))?;
        if start + t_n > self.horizon() {
            return Err(TailError::OutOfRange(start, self.horizon()));
        }
        // An aligned block meets a component of level >= n iff its start
        // lies inside one, and then it is contained in it.
        match self.component_at(start)? {
            Some((_, _, level)) if level >= n => Ok(IntervalClass::Bad(n)),
            _ => Ok(IntervalClass::Good(n)),
        }
    }

    /// Number of points of `R_level` inside `[0, hi]` (inclusive).
    fn mass_up_to(&self, level: usize, hi: u64) -> u64 {
        let t_n = self.scale.level(level);
        let starts = &self.starts_by_level[level];
        let pos = starts.partition_point(|&s| s <= hi);
        let mut mass = (pos as u64).saturating_mul(t_n);
        if pos > 0 {
            let last = starts[pos - 1];
            let end = last + t_n - 1;
            if end > hi {
                mass -= end - hi;
            }
        }
        mass
    }

    /// Points of `R_level` inside `[lo, hi]` (inclusive).
    fn mass_in(&self, level: usize, lo: u64, hi: u64) -> u64 {
        let below = if lo == 0 { 0 } else { self.mass_up_to(level, lo - 1) };
        self.mass_up_to(level, hi) - below
    }

    /// Exact occupation proportion of `R_m` in `[0, n]`, i.e.
    /// `#(R_m ∩ [0, n]) / n`.
    pub fn density_profile(&self, m: usize, n: u64) -> Result<BigRational, TailError> {
        if m >= self.depth {
            return Err(TailError::OutOfRange(m as u64, self.depth as u64));
        }
        if n == 0 || n >= self.horizon() {
            return Err(TailError::OutOfRange(n, self.horizon()));
        }
        let mass = self.mass_up_to(m, n);
        Ok(BigRational::new(BigInt::from(mass), BigInt::from(n)))
    }

    /// Exhaustive check of the excursion-set axioms over `[0, T_depth)`:
    /// component shape and disjointness, exclusion of 0, centering, and
    /// per-block sparseness. Every violation is reported with coordinates.
    pub fn validate(&self) -> TailReport {
        let mut report = TailReport::default();
        let horizon = self.horizon();

        // Shape: alignment per level.
        for (n, starts) in self.starts_by_level.iter().enumerate() {
            let t_n = self.scale.level(n);
            for &s in starts {
                if s % t_n != 0 {
                    report.violations.push(TailViolation {
                        kind: TailViolationKind::Misaligned,
                        level: n,
                        block_start: s,
                        detail: format!("start {s} is not a multiple of {t_n}"),
                    });
                }
            }
        }

        // Maximality: components pairwise disjoint and non-adjacent.
        let mut all: Vec<(u64, u64, usize)> = Vec::new();
        for (n, starts) in self.starts_by_level.iter().enumerate() {
            let t_n = self.scale.level(n);
            for &s in starts {
                all.push((s, s + t_n - 1, n));
            }
        }
        all.sort_unstable();
        for w in all.windows(2) {
            let (_, end_a, _) = w[0];
            let (start_b, _, level_b) = w[1];
            if start_b <= end_a + 1 {
                report.violations.push(TailViolation {
                    kind: TailViolationKind::OverlapOrAdjacent,
                    level: level_b,
                    block_start: start_b,
                    detail: format!("component [{start_b}, ..] touches one ending at {end_a}"),
                });
            }
        }

        // 0 stays outside.
        if let Ok(Some((s, _, n))) = self.component_at(0) {
            report.violations.push(TailViolation {
                kind: TailViolationKind::ContainsZero,
                level: n,
                block_start: s,
                detail: "component contains 0".into(),
            });
        }

        // Centering and sparseness for every aligned block at every level
        // n >= 1 that is not inside a component.
        for n in 1..=self.depth {
            let t_n = self.scale.level(n);
            let third = t_n / 3;
            let eps_num = 2u64; // ε_n = 2/κ_n, so mass < ε_n·T_n  ⟺  mass·κ_n < 2·T_n
            let kappa = self.scale.factor(n);
            for k in 0..horizon / t_n {
                let start = k * t_n;
                report.blocks_checked += 1;
                let inside_component = matches!(
                    self.component_at(start),
                    Ok(Some((_, _, level))) if level >= n
                );
                if inside_component {
                    continue;
                }
                let end = start + t_n - 1;
                let mid_lo = start + third;
                let mid_hi = start + 2 * third - 1;
                let starts = &self.starts_by_level[n - 1];
                let t_prev = self.scale.level(n - 1);
                let lo_pos = starts.partition_point(|&s| s < start);
                let hi_pos = starts.partition_point(|&s| s <= end);
                let count = hi_pos - lo_pos;
                for &s in &starts[lo_pos..hi_pos] {
                    if s < mid_lo || s + t_prev - 1 > mid_hi {
                        report.violations.push(TailViolation {
                            kind: TailViolationKind::OffCenter,
                            level: n,
                            block_start: start,
                            detail: format!(
                                "level-{} component at {s} escapes middle third [{mid_lo}, {mid_hi}]",
                                n - 1
                            ),
                        });
                    }
                }
                if count == 0 {
                    report.violations.push(TailViolation {
                        kind: TailViolationKind::MissingComponent,
                        level: n,
                        block_start: start,
                        detail: format!("no level-{} component in the block", n - 1),
                    });
                }
                let mass = self.mass_in(n - 1, start, end);
                if mass * kappa >= eps_num * t_n {
                    report.violations.push(TailViolation {
                        kind: TailViolationKind::TooDense,
                        level: n,
                        block_start: start,
                        detail: format!("level-{} mass {mass} reaches budget 2·T_n/κ_n", n - 1),
                    });
                }
            }
        }

        report.violations.sort_by_key(|v| (v.level, v.block_start));
        report
    }
}

impl TryFrom<TailDoc> for SparseTail {
    type Error = TailError;

    fn try_from(doc: TailDoc) -> Result<Self, Self::Error> {
        SparseTail::from_parts(doc.scale, doc.depth, doc.starts_by_level)
    }
}

impl From<SparseTail> for TailDoc {
    fn from(t: SparseTail) -> Self {
        TailDoc { scale: t.scale, depth: t.depth, starts_by_level: t.starts_by_level }
    }
}

/// Exact proportion bound `ϱ(m, n) < 3·ε_{m+1}`: helper used by callers
/// that want the comparison itself to stay in rationals.
pub fn proportion_bound(scale: &Scale, m: usize) -> BigRational {
    BigRational::from(BigInt::from(3)) * scale.epsilon(m + 1)
}

/// Convenience: density profile as a displayable fraction.
pub fn density_profile_frac(tail: &SparseTail, m: usize, n: u64) -> Result<Frac, TailError> {
    tail.density_profile(m, n).map(Frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_scale() -> Scale {
        Scale::new(3, &[3, 6, 18]).unwrap()
    }

    #[test]
    fn depth1_components() {
        let tail = SparseTail::build(&demo_scale(), 1).unwrap();
        assert_eq!(tail.starts(0), &[3]);
    }

    #[test]
    fn depth2_components() {
        let tail = SparseTail::build(&demo_scale(), 2).unwrap();
        assert_eq!(tail.starts(1), &[18]);
        assert_eq!(tail.starts(0), &[3, 12, 30, 39, 48]);
    }

    #[test]
    fn zero_never_covered() {
        for depth in 0..=3 {
            let tail = SparseTail::build(&demo_scale(), depth).unwrap();
            if depth > 0 {
                assert_eq!(tail.component_at(0).unwrap(), None);
            }
        }
    }

    #[test]
    fn component_lookup() {
        let tail = SparseTail::build(&demo_scale(), 2).unwrap();
        assert_eq!(tail.component_at(4).unwrap(), Some((3, 5, 0)));
        assert_eq!(tail.component_at(20).unwrap(), Some((18, 26, 1)));
        assert_eq!(tail.component_at(9).unwrap(), None);
        assert!(matches!(tail.component_at(54), Err(TailError::OutOfRange(54, 54))));
    }

    #[test]
    fn classify_blocks() {
        let tail = SparseTail::build(&demo_scale(), 2).unwrap();
        assert_eq!(tail.classify(0, 1).unwrap(), IntervalClass::Good(1));
        assert_eq!(tail.classify(2, 1).unwrap(), IntervalClass::Bad(1));
        assert_eq!(tail.classify(0, 2).unwrap(), IntervalClass::Good(2));
    }

    #[test]
    fn density_profile_values() {
        let tail = SparseTail::build(&demo_scale(), 2).unwrap();
        assert_eq!(tail.density_profile(0, 9).unwrap(), crate::rational::ratio(1, 3));
        assert_eq!(tail.density_profile(1, 9).unwrap(), crate::rational::ratio(0, 1));
        // n = 54 needs the depth-3 horizon; the component lists below T_2
        // agree with the depth-2 tail by restriction consistency.
        let deep = SparseTail::build(&demo_scale(), 3).unwrap();
        assert_eq!(deep.density_profile(1, 54).unwrap(), crate::rational::ratio(1, 6));
    }

    #[test]
    fn canonical_tail_validates() {
        for depth in 0..=3 {
            let tail = SparseTail::build(&demo_scale(), depth).unwrap();
            let report = tail.validate();
            assert!(report.is_clean(), "depth {depth}: {:?}", report.violations);
        }
    }

    #[test]
    fn off_center_component_reported() {
        let scale = demo_scale();
        // Level-0 component at offset 1 of its T_1 = 9 block (middle third
        // of [0, 8] is [3, 5]).
        let tail = SparseTail::from_parts(scale, 1, vec![vec![1]]).unwrap();
        let report = tail.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == TailViolationKind::OffCenter && v.block_start == 0));
    }

    #[test]
    fn zero_component_reported() {
        let scale = demo_scale();
        let tail = SparseTail::from_parts(scale, 1, vec![vec![0]]).unwrap();
        let report = tail.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == TailViolationKind::ContainsZero));
    }

    #[test]
    fn restriction_consistency() {
        let scale = demo_scale();
        let deep = SparseTail::build(&scale, 3).unwrap();
        for depth in 0..3 {
            let shallow = SparseTail::build(&scale, depth).unwrap();
            let horizon = shallow.horizon();
            for n in 0..depth {
                let restricted: Vec<u64> = deep
                    .starts(n)
                    .iter()
                    .copied()
                    .filter(|&s| s + scale.level(n) <= horizon)
                    .collect();
                assert_eq!(restricted, shallow.starts(n), "level {n} at depth {depth}");
            }
        }
    }

    #[test]
    fn initial_block_always_good() {
        let tail = SparseTail::build(&demo_scale(), 3).unwrap();
        for n in 0..=3 {
            assert_eq!(tail.classify(0, n).unwrap(), IntervalClass::Good(n));
        }
    }
}
