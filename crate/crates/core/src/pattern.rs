//! Rest/walk partitions of aligned blocks and their marked points.
//!
//! A pattern partitions a base block `[ℓ·T_n, (ℓ+1)·T_n - 1]` into aligned
//! cells; cells of level ≥ 1 are always walk cells, level-0 cells are rest
//! or walk. The excursion set induces a canonical pattern on every good
//! block: its components become walk cells and the rest is tiled by level-0
//! rest cells.
//!
//! An aligned sub-block is *admissible* when it is not strictly contained
//! in a cell; equivalently (cells being aligned) when it starts at a cell
//! start and fits in the base. Marked points are the cell starts plus the
//! right endpoint of the base — the skeleton downstream block records hang
//! off.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tail::{IntervalClass, SparseTail, TailError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error("block {k} at level {n} is not good")]
    NotGoodInterval { k: u64, n: usize },
    #[error("interval of length T_{level} at {start} is not admissible")]
    NotAdmissible { start: u64, level: usize },
    #[error("cells do not tile the base exactly (offset {0})")]
    BadPartition(u64),
    #[error("cell at {0} has level {1} > base level {2}")]
    CellLevelTooHigh(u64, usize, usize),
    #[error("cell at {0} of level {1} is misaligned")]
    CellMisaligned(u64, usize),
    #[error("rest cell at {0} has level {1} > 0")]
    RestAboveLevelZero(u64, usize),
    #[error(transparent)]
    Tail(#[from] TailError),
}

/// Cell kind: `Rest` for level-0 control cells, `Walk` for excursion cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    #[serde(rename = "r")]
    Rest,
    #[serde(rename = "w")]
    Walk,
}

/// One partition cell: an aligned block of its level, with a kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    /// Absolute start offset.
    pub offset: u64,
    pub level: usize,
    pub kind: CellKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PatternDoc {
    levels: Vec<u64>,
    base_start: u64,
    level: usize,
    cells: Vec<Cell>,
}

/// A partition of an aligned base block into cells, self-contained (the
/// block lengths it needs travel with it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternDoc", into = "PatternDoc")]
pub struct Pattern {
    /// Block lengths `T_0..` of the originating scale (at least up to the
    /// pattern's level).
    levels: Vec<u64>,
    base_start: u64,
    level: usize,
    /// Cells sorted by offset, tiling the base exactly.
    cells: Vec<Cell>,
}

impl Pattern {
    /// Validate and build a pattern from parts.
    pub fn new(
        levels: Vec<u64>,
        base_start: u64,
        level: usize,
        cells: Vec<Cell>,
    ) -> Result<Pattern, PatternError> {
        assert!(level < levels.len(), "levels must cover the base level");
        let base_len = levels[level];
        let mut cursor = base_start;
        for cell in &cells {
            if cell.level > level {
                return Err(PatternError::CellLevelTooHigh(cell.offset, cell.level, level));
            }
            if cell.offset != cursor {
                return Err(PatternError::BadPartition(cell.offset));
            }
            let len = levels[cell.level];
            if cell.offset % len != 0 {
                return Err(PatternError::CellMisaligned(cell.offset, cell.level));
            }
            if cell.kind == CellKind::Rest && cell.level != 0 {
                return Err(PatternError::RestAboveLevelZero(cell.offset, cell.level));
            }
            cursor += len;
        }
        if cursor != base_start + base_len {
            return Err(PatternError::BadPartition(cursor));
        }
        Ok(Pattern { levels, base_start, level, cells })
    }

    /// Pattern induced by the excursion set on the good block
    /// `[k·T_n, (k+1)·T_n - 1]`: components become walk cells, the
    /// complement is tiled by level-0 rest cells.
    pub fn induced(tail: &SparseTail, n: usize, k: u64) -> Result<Pattern, PatternError> {
        match tail.classify(k, n)? {
            IntervalClass::Good(_) => {}
            _ => return Err(PatternError::NotGoodInterval { k, n }),
        }
        let scale = tail.scale();
        let t0 = scale.level(0);
        let t_n = scale.level(n);
        let base_start = k * t_n;
        let base_end = base_start + t_n;

        let mut walks: Vec<(u64, usize)> = Vec::new();
        for lvl in 0..n.min(tail.depth()) {
            let starts = tail.starts(lvl);
            let lo = starts.partition_point(|&s| s < base_start);
            let hi = starts.partition_point(|&s| s < base_end);
            for &s in &starts[lo..hi] {
                walks.push((s, lvl));
            }
        }
        walks.sort_unstable();

        let mut cells = Vec::new();
        let mut cursor = base_start;
        for (s, lvl) in walks {
            while cursor < s {
                cells.push(Cell { offset: cursor, level: 0, kind: CellKind::Rest });
                cursor += t0;
            }
            cells.push(Cell { offset: s, level: lvl, kind: CellKind::Walk });
            cursor = s + scale.level(lvl);
        }
        while cursor < base_end {
            cells.push(Cell { offset: cursor, level: 0, kind: CellKind::Rest });
            cursor += t0;
        }
        Pattern::new(scale.levels().to_vec(), base_start, n, cells)
    }

    /// The pattern induced on the initial block `[0, T_n - 1]`, which is
    /// always good.
    pub fn initial(tail: &SparseTail, n: usize) -> Pattern {
        Pattern::induced(tail, n, 0).expect("the initial block is always good")
    }

    pub fn base_start(&self) -> u64 {
        self.base_start
    }

    pub fn base_len(&self) -> u64 {
        self.levels[self.level]
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn block_lengths(&self) -> &[u64] {
        &self.levels
    }

    /// The cell containing offset `i`, by binary search.
    pub fn cell_at(&self, i: u64) -> Option<&Cell> {
        if i < self.base_start || i >= self.base_start + self.base_len() {
            return None;
        }
        let pos = self.cells.partition_point(|c| c.offset <= i);
        let cell = &self.cells[pos - 1];
        debug_assert!(i < cell.offset + self.levels[cell.level]);
        Some(cell)
    }

    /// Whether `[start, start + T_level - 1]` is admissible: aligned,
    /// inside the base, and not strictly contained in a cell.
    pub fn is_admissible(&self, start: u64, level: usize) -> bool {
        if level > self.level || level >= self.levels.len() {
            return false;
        }
        let len = self.levels[level];
        if start % len != 0 {
            return false;
        }
        if start < self.base_start || start + len > self.base_start + self.base_len() {
            return false;
        }
        match self.cell_at(start) {
            // Strictly contained iff the covering cell is longer than the
            // queried interval or the interval starts mid-cell.
            Some(cell) => cell.offset == start && self.levels[cell.level] <= len,
            None => false,
        }
    }

    /// Marked points: all cell starts plus the base's right endpoint.
    pub fn marked_points(&self) -> MarkedPointSet {
        let mut points: Vec<u64> = self.cells.iter().map(|c| c.offset).collect();
        points.push(self.base_start + self.base_len());
        MarkedPointSet {
            points,
            base_start: self.base_start,
            base_len: self.base_len(),
        }
    }

    /// The initial sub-pattern of length `T_level`, when admissible.
    pub fn restrict_to_initial(&self, level: usize) -> Result<Pattern, PatternError> {
        if !self.is_admissible(self.base_start, level) {
            return Err(PatternError::NotAdmissible { start: self.base_start, level });
        }
        let end = self.base_start + self.levels[level];
        let cells: Vec<Cell> =
            self.cells.iter().take_while(|c| c.offset < end).copied().collect();
        Pattern::new(self.levels.clone(), self.base_start, level, cells)
    }

    /// Either a single walk cell, or exactly `κ_n` aligned sub-blocks of
    /// the next level down. This is the shape the synthesizer recurses on.
    pub fn is_single_walk(&self) -> bool {
        self.cells.len() == 1
            && self.cells[0].kind == CellKind::Walk
            && self.cells[0].level == self.level
    }
}

impl TryFrom<PatternDoc> for Pattern {
    type Error = PatternError;

    fn try_from(doc: PatternDoc) -> Result<Self, Self::Error> {
        Pattern::new(doc.levels, doc.base_start, doc.level, doc.cells)
    }
}

impl From<Pattern> for PatternDoc {
    fn from(p: Pattern) -> Self {
        PatternDoc { levels: p.levels, base_start: p.base_start, level: p.level, cells: p.cells }
    }
}

/// Cell starts plus right endpoint of a pattern's base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedPointSet {
    points: Vec<u64>,
    base_start: u64,
    base_len: u64,
}

impl MarkedPointSet {
    pub fn points(&self) -> &[u64] {
        &self.points
    }

    pub fn right_endpoint(&self) -> u64 {
        self.base_start + self.base_len
    }

    /// Consecutive marked-point pairs, i.e. the cells as half-open spans.
    pub fn spans(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scale::Scale;

    fn demo_tail(depth: usize) -> SparseTail {
        let scale = Scale::new(3, &[3, 6]).unwrap();
        SparseTail::build(&scale, depth).unwrap()
    }

    #[test]
    fn induced_level1() {
        let tail = demo_tail(2);
        let p = Pattern::induced(&tail, 1, 0).unwrap();
        assert_eq!(
            p.cells(),
            &[
                Cell { offset: 0, level: 0, kind: CellKind::Rest },
                Cell { offset: 3, level: 0, kind: CellKind::Walk },
                Cell { offset: 6, level: 0, kind: CellKind::Rest },
            ]
        );
    }

    #[test]
    fn induced_level2() {
        let tail = demo_tail(2);
        let p = Pattern::induced(&tail, 2, 0).unwrap();
        let walks: Vec<(u64, usize)> = p
            .cells()
            .iter()
            .filter(|c| c.kind == CellKind::Walk)
            .map(|c| (c.offset, c.level))
            .collect();
        assert_eq!(walks, vec![(3, 0), (12, 0), (18, 1), (30, 0), (39, 0), (48, 0)]);
        // Everything else is level-0 rest tiling.
        assert!(p
            .cells()
            .iter()
            .filter(|c| c.kind == CellKind::Rest)
            .all(|c| c.level == 0));
    }

    #[test]
    fn induced_rejects_bad_block() {
        let tail = demo_tail(2);
        let err = Pattern::induced(&tail, 1, 2).unwrap_err();
        assert_eq!(err, PatternError::NotGoodInterval { k: 2, n: 1 });
    }

    #[test]
    fn initial_level0_is_single_rest() {
        let tail = demo_tail(2);
        let p = Pattern::initial(&tail, 0);
        assert_eq!(p.cells(), &[Cell { offset: 0, level: 0, kind: CellKind::Rest }]);
    }

    #[test]
    fn marked_points_level1() {
        let tail = demo_tail(2);
        let p = Pattern::initial(&tail, 1);
        assert_eq!(p.marked_points().points(), &[0, 3, 6, 9]);
    }

    #[test]
    fn marked_points_level2() {
        let tail = demo_tail(2);
        let p = Pattern::initial(&tail, 2);
        let expected: Vec<u64> = (0..18)
            .map(|i| 3 * i)
            .filter(|&j| j != 21 && j != 24)
            .chain(std::iter::once(54))
            .collect();
        assert_eq!(p.marked_points().points(), &expected[..]);
    }

    #[test]
    fn marked_points_of_trivial_walk() {
        let p = Pattern::new(
            vec![3, 9],
            9,
            1,
            vec![Cell { offset: 9, level: 1, kind: CellKind::Walk }],
        )
        .unwrap();
        assert_eq!(p.marked_points().points(), &[9, 18]);
        assert!(p.is_single_walk());
    }

    #[test]
    fn marked_points_match_admissibility_definition() {
        // Brute-force the definition: j is marked iff some aligned
        // admissible interval starts at j, plus the right endpoint.
        let tail = demo_tail(2);
        let p = Pattern::initial(&tail, 2);
        let mut expected = Vec::new();
        for j in 0..54 {
            if (0..=2).any(|lvl| p.is_admissible(j, lvl)) {
                expected.push(j);
            }
        }
        expected.push(54);
        assert_eq!(p.marked_points().points(), &expected[..]);
    }

    #[test]
    fn restriction_gives_initial_subpattern() {
        let tail = demo_tail(2);
        let p2 = Pattern::initial(&tail, 2);
        let p1 = Pattern::initial(&tail, 1);
        assert_eq!(p2.restrict_to_initial(1).unwrap(), p1);
        assert_eq!(p2.restrict_to_initial(2).unwrap(), p2);
    }

    #[test]
    fn restriction_rejects_inadmissible() {
        // Base is a single level-1 walk cell; its initial T_0 block is
        // strictly inside it.
        let p = Pattern::new(
            vec![3, 9],
            0,
            1,
            vec![Cell { offset: 0, level: 1, kind: CellKind::Walk }],
        )
        .unwrap();
        assert_eq!(
            p.restrict_to_initial(0),
            Err(PatternError::NotAdmissible { start: 0, level: 0 })
        );
    }

    #[test]
    fn admissible_intervals_start_at_cell_starts() {
        let tail = demo_tail(2);
        let p = Pattern::initial(&tail, 2);
        // Inside the level-1 walk cell [18, 26] nothing is admissible
        // except the cell itself.
        assert!(p.is_admissible(18, 1));
        assert!(!p.is_admissible(18, 0));
        assert!(!p.is_admissible(21, 0));
        // Aligned spans of several cells are admissible.
        assert!(p.is_admissible(0, 1));
        assert!(p.is_admissible(0, 2));
        assert!(p.is_admissible(27, 1));
    }
}
