//! Construction and verification of orbit prefixes in mixing subshifts of
//! finite type whose Birkhoff averages are controlled at every block scale
//! while the orbit performs dense excursions on a hierarchical sparse set of
//! time intervals.
//!
//! The pipeline has three stages:
//!
//! 1. **Schedule** ([`scale`], [`tail`], [`pattern`]): pick a tower of block
//!    lengths `T_0 | T_1 | ... | T_D`, carve out the sparse excursion set
//!    `R∞` (one centered sub-block per block), and read off the induced
//!    rest/walk partition of the initial `T_D` window.
//! 2. **Synthesize** ([`sft`], [`synth`]): fill the partition with symbol
//!    blocks. Rest cells get sign blocks whose exact shifted average sits in
//!    a one-sided band; walk cells get sojourn blocks built around a
//!    universal word so every legal word of the demanded length occurs.
//!    A hysteresis scheduler picks block signs so every aligned interval's
//!    exact average lands in its two-sided band.
//! 3. **Verify** ([`analyze`]): re-derive everything from the raw symbols
//!    with exact rational arithmetic: interval averages, excursion density,
//!    empirical measures, and the finite window claims about long segments.
//!
//! All quantities on the verification path are exact rationals; there is no
//! floating point anywhere and identical inputs produce byte-identical
//! outputs.

pub mod analyze;
pub mod pattern;
pub mod rational;
pub mod scale;
pub mod sft;
pub mod synth;
pub mod tail;

pub(crate) mod weights;

pub use analyze::{
    average_claim_window, checkpoint_series, empirical_measure, integrate_potential,
    verify_average_claim, verify_control, verify_density_claim, verify_records, AnalyzeError,
    AverageViolation, CheckpointRow, ClaimReport, ControlReport, DensityViolation,
    EmpiricalMeasure, RecordViolation, ReportSummary,
};
pub use pattern::{Cell, CellKind, MarkedPointSet, Pattern, PatternError};
pub use rational::{parse_fraction, Frac};
pub use scale::{
    controlling_sequence, minimal_factors, ControlParams, ControllingSequence, ParamsError, Scale,
    ScaleError,
};
pub use sft::{
    average_range, birkhoff_sum, missing_words, universal_word, Potential, PotentialError, Sft,
    SftError, Word,
};
pub use synth::{
    carries_density, choose_sign, factor_bound, sign_block, sojourn_block, synthesize, BlockKind,
    BlockRecord, LedgerDoc, RecordDoc, Sign, SignBlock, SynthError, SynthesisLedger,
};
pub use tail::{IntervalClass, SparseTail, TailError, TailReport, TailViolation};
