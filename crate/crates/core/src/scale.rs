//! Block-length towers and the rational control schedules attached to them.
//!
//! A scale is a chain `T_n = κ_n · T_{n-1}` of block lengths with `T_0` a
//! multiple of 3 and every factor `κ_n ≥ 3`; the divisibility chain is what
//! lets aligned blocks nest exactly. The per-level error budget is
//! `ε_n = 2/κ_n`, and the control schedule carries the average bands `α_n`,
//! the auxiliary bands `β_n`, the demanded word lengths `m_n`, and the target
//! average `t` — all exact rationals.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Frac;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScaleError {
    #[error("base length {0} is not a multiple of 3")]
    NotMultipleOf3(u64),
    #[error("factor κ_{index} = {value} is smaller than 3")]
    FactorTooSmall { index: usize, value: u64 },
    #[error("factor ratio κ_{}/κ_{} is not greater than 1", index + 1, index)]
    RatioNotIncreasing { index: usize },
    #[error("no factor sequence under the cap {cap} satisfies the feasibility bound at level {level}")]
    Infeasible { level: usize, cap: u64 },
    #[error("block length overflow at level {0}")]
    Overflow(usize),
}

/// Serialized form: base length and factors; the levels are re-derived on
/// load so the invariants cannot be bypassed.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScaleDoc {
    t0: u64,
    factors: Vec<u64>,
}

/// A finite tower of block lengths `T_0, ..., T_D` with `T_n = κ_n T_{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScaleDoc", into = "ScaleDoc")]
pub struct Scale {
    t0: u64,
    factors: Vec<u64>,
    levels: Vec<u64>,
}

impl Scale {
    /// Validate `(t0, κ_1..κ_D)` and derive the levels.
    ///
    /// `t0` must be a positive multiple of 3, every factor at least 3, and
    /// consecutive factors strictly increasing (the finite-depth stand-in
    /// for factor ratios growing without bound).
    pub fn new(t0: u64, factors: &[u64]) -> Result<Self, ScaleError> {
        if t0 == 0 || t0 % 3 != 0 {
            return Err(ScaleError::NotMultipleOf3(t0));
        }
        for (i, &k) in factors.iter().enumerate() {
            if k < 3 {
                return Err(ScaleError::FactorTooSmall { index: i + 1, value: k });
            }
        }
        for (i, w) in factors.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(ScaleError::RatioNotIncreasing { index: i + 1 });
            }
        }
        let mut levels = Vec::with_capacity(factors.len() + 1);
        levels.push(t0);
        for (i, &k) in factors.iter().enumerate() {
            let prev = levels[i];
            let next = prev.checked_mul(k).ok_or(ScaleError::Overflow(i + 1))?;
            levels.push(next);
        }
        Ok(Scale { t0, factors: factors.to_vec(), levels })
    }

    /// Maximum level `D`.
    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    /// Block length `T_n`.
    pub fn level(&self, n: usize) -> u64 {
        self.levels[n]
    }

    /// All block lengths `T_0..=T_D`.
    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    /// Factor `κ_n` for `1 ≤ n ≤ D`.
    pub fn factor(&self, n: usize) -> u64 {
        self.factors[n - 1]
    }

    pub fn factors(&self) -> &[u64] {
        &self.factors
    }

    pub fn base(&self) -> u64 {
        self.t0
    }

    /// The scale truncated to depth `d` (same base, first `d` factors).
    pub fn truncate(&self, d: usize) -> Scale {
        assert!(d <= self.depth());
        Scale {
            t0: self.t0,
            factors: self.factors[..d].to_vec(),
            levels: self.levels[..=d].to_vec(),
        }
    }

    /// Per-level error budget `ε_n = 2/κ_n`.
    pub fn epsilon(&self, n: usize) -> BigRational {
        BigRational::new(BigInt::from(2), BigInt::from(self.factor(n)))
    }
}

impl TryFrom<ScaleDoc> for Scale {
    type Error = ScaleError;

    fn try_from(doc: ScaleDoc) -> Result<Self, Self::Error> {
        Scale::new(doc.t0, &doc.factors)
    }
}

impl From<Scale> for ScaleDoc {
    fn from(s: Scale) -> Self {
        ScaleDoc { t0: s.t0, factors: s.factors }
    }
}

/// The summable error sequence `ε_n = 2/κ_n` of a scale, with its exact
/// partial sum and the partial product of `(1 - ε_n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllingSequence {
    pub eps: Vec<BigRational>,
    pub partial_sum: BigRational,
    pub partial_product: BigRational,
}

/// Exact `ε_n`, `Σ ε_n`, and `Π (1 - ε_n)` for a scale.
pub fn controlling_sequence(scale: &Scale) -> ControllingSequence {
    let eps: Vec<BigRational> = (1..=scale.depth()).map(|n| scale.epsilon(n)).collect();
    let partial_sum = eps.iter().fold(BigRational::zero(), |a, e| a + e);
    let one = BigRational::one();
    let partial_product = eps.iter().fold(BigRational::one(), |a, e| a * (&one - e));
    ControllingSequence { eps, partial_sum, partial_product }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamsError {
    #[error("need {0} alpha values for depth {1}")]
    AlphaLength(usize, usize),
    #[error("alpha_{0} must be positive")]
    AlphaNotPositive(usize),
    #[error("band chain alpha(n+1) < alpha(n)/4 < beta(n) < alpha(n)/2 violated at level n = {0}")]
    BandChain(usize),
    #[error("density order m_{0} must be at least 1")]
    DensityOrderZero(usize),
    #[error("density orders must be nondecreasing (m_{0} decreases)")]
    DensityNotMonotone(usize),
}

/// The control schedule: average bands `α_0..α_D`, auxiliary bands
/// `β_0..β_{D-1}`, demanded word lengths `m_0..m_D`, and the target `t`.
///
/// Validated chain: `α_{n+1} < α_n/4 < β_n < α_n/2` for every `n < D`, and
/// `m_n` nondecreasing. The word length `m_n` stands for the resolution
/// `δ_n = 2^{-m_n}` in the shift metric: a segment is `δ_n`-dense exactly
/// when every legal `m_n`-word occurs in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlParams {
    alpha: Vec<BigRational>,
    beta: Vec<BigRational>,
    density_orders: Vec<usize>,
    target: BigRational,
}

impl ControlParams {
    pub fn new(
        alpha: Vec<BigRational>,
        beta: Vec<BigRational>,
        density_orders: Vec<usize>,
        target: BigRational,
    ) -> Result<Self, ParamsError> {
        let depth = alpha.len().saturating_sub(1);
        if alpha.is_empty() {
            return Err(ParamsError::AlphaLength(1, depth));
        }
        if beta.len() != depth || density_orders.len() != depth + 1 {
            return Err(ParamsError::AlphaLength(depth + 1, depth));
        }
        for (n, a) in alpha.iter().enumerate() {
            if !a.is_positive() {
                return Err(ParamsError::AlphaNotPositive(n));
            }
        }
        let four = BigRational::from(BigInt::from(4));
        let two = BigRational::from(BigInt::from(2));
        for n in 0..depth {
            let quarter = &alpha[n] / &four;
            let half = &alpha[n] / &two;
            if !(alpha[n + 1] < quarter && quarter < beta[n] && beta[n] < half) {
                return Err(ParamsError::BandChain(n));
            }
        }
        for (n, &m) in density_orders.iter().enumerate() {
            if m == 0 {
                return Err(ParamsError::DensityOrderZero(n));
            }
            if n > 0 && m < density_orders[n - 1] {
                return Err(ParamsError::DensityNotMonotone(n));
            }
        }
        Ok(ControlParams { alpha, beta, density_orders, target })
    }

    /// Canonical geometric schedule: `α_{n+1} = α_0 · decay^{n+1}` and
    /// `β_n = 3α_n/8`, which sits strictly inside `(α_n/4, α_n/2)`.
    pub fn geometric(
        alpha0: BigRational,
        decay: BigRational,
        density_orders: Vec<usize>,
        target: BigRational,
    ) -> Result<Self, ParamsError> {
        let depth = density_orders.len().saturating_sub(1);
        if !decay.is_positive() || decay >= BigRational::new(BigInt::one(), BigInt::from(4)) {
            return Err(ParamsError::BandChain(0));
        }
        let mut alpha = Vec::with_capacity(depth + 1);
        alpha.push(alpha0);
        for n in 0..depth {
            let next = &alpha[n] * &decay;
            alpha.push(next);
        }
        let three_eighths = BigRational::new(BigInt::from(3), BigInt::from(8));
        let beta = alpha[..depth].iter().map(|a| a * &three_eighths).collect();
        ControlParams::new(alpha, beta, density_orders, target)
    }

    pub fn depth(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, n: usize) -> &BigRational {
        &self.alpha[n]
    }

    pub fn alphas(&self) -> &[BigRational] {
        &self.alpha
    }

    pub fn beta(&self, n: usize) -> &BigRational {
        &self.beta[n]
    }

    /// Demanded word length `m_n` at level `n`.
    pub fn density_order(&self, n: usize) -> usize {
        self.density_orders[n]
    }

    pub fn density_orders(&self) -> &[usize] {
        &self.density_orders
    }

    pub fn target(&self) -> &BigRational {
        &self.target
    }

    /// Schedule truncated to depth `d`.
    pub fn truncate(&self, d: usize) -> ControlParams {
        assert!(d <= self.depth());
        ControlParams {
            alpha: self.alpha[..=d].to_vec(),
            beta: self.beta[..d].to_vec(),
            density_orders: self.density_orders[..=d].to_vec(),
            target: self.target.clone(),
        }
    }

    pub fn alpha_fracs(&self) -> Vec<Frac> {
        self.alpha.iter().cloned().map(Frac).collect()
    }
}

/// ceil(r) for a nonnegative rational, as u64.
fn ceil_u64(r: &BigRational) -> Option<u64> {
    debug_assert!(!r.is_negative());
    r.ceil().to_integer().to_u64()
}

/// Smallest factor sequence able to carry the sign scheduler.
///
/// Level by level the bound is
/// `κ_{n+1} ≥ ceil(8·max(phi_range, α_n)/α_{n+1}) + ceil(2·s_n/T_n) + 2`,
/// where `phi_range` bounds the shifted potential on the alphabet context
/// and `s_n` is the length of the level-`n` universal word (0 when level
/// `n` carries no core). The 8/α term gives the hysteresis room to settle,
/// the s/T term absorbs one sojourn sub-block, and the +2 covers the first
/// and last block of a run. On top of the bound each factor is clamped to
/// at least 3 and to strict increase. Errors with `Infeasible` only when a
/// required factor would exceed `cap`.
pub fn minimal_factors(
    t0: u64,
    params: &ControlParams,
    phi_range: &BigRational,
    sojourn_lengths: &[u64],
    cap: u64,
) -> Result<Vec<u64>, ScaleError> {
    assert!(!phi_range.is_negative());
    let depth = params.depth();
    assert!(sojourn_lengths.len() >= depth, "need a sojourn length per level below the top");
    let mut factors = Vec::with_capacity(depth);
    let mut t_n = t0;
    let eight = BigRational::from(BigInt::from(8));
    for n in 0..depth {
        let steer = &eight * phi_range.clone().max(params.alpha(n).clone()) / params.alpha(n + 1);
        let steer = ceil_u64(&steer).ok_or(ScaleError::Overflow(n + 1))?;
        let sojourn = (2 * sojourn_lengths[n]).div_ceil(t_n);
        let mut k = steer.checked_add(sojourn).and_then(|v| v.checked_add(2)).ok_or(ScaleError::Overflow(n + 1))?;
        k = k.max(3);
        if let Some(&prev) = factors.last() {
            k = k.max(prev + 1);
        }
        if k > cap {
            return Err(ScaleError::Infeasible { level: n + 1, cap });
        }
        t_n = t_n.checked_mul(k).ok_or(ScaleError::Overflow(n + 1))?;
        factors.push(k);
    }
    Ok(factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn derives_levels() {
        let s = Scale::new(3, &[3, 6, 18]).unwrap();
        assert_eq!(s.levels(), &[3, 9, 54, 972]);
        assert_eq!(s.depth(), 3);
        assert_eq!(s.factor(1), 3);
        assert_eq!(s.factor(3), 18);
    }

    #[test]
    fn rejects_base_not_multiple_of_3() {
        assert_eq!(Scale::new(4, &[3, 6]), Err(ScaleError::NotMultipleOf3(4)));
    }

    #[test]
    fn rejects_small_factor() {
        assert_eq!(
            Scale::new(3, &[2, 6]),
            Err(ScaleError::FactorTooSmall { index: 1, value: 2 })
        );
    }

    #[test]
    fn rejects_flat_ratio() {
        assert_eq!(Scale::new(3, &[5, 5]), Err(ScaleError::RatioNotIncreasing { index: 1 }));
        assert_eq!(Scale::new(3, &[6, 5]), Err(ScaleError::RatioNotIncreasing { index: 1 }));
    }

    #[test]
    fn divisibility_chain() {
        let s = Scale::new(6, &[3, 7, 11]).unwrap();
        for n in 0..=s.depth() {
            for m in 0..=n {
                assert_eq!(s.level(n) % s.level(m), 0);
            }
        }
    }

    #[test]
    fn controlling_sequence_values() {
        let s = Scale::new(3, &[3, 6, 18]).unwrap();
        let c = controlling_sequence(&s);
        assert_eq!(c.eps, vec![ratio(2, 3), ratio(1, 3), ratio(1, 9)]);
        assert_eq!(c.partial_product, ratio(16, 81));
        assert!(c.partial_product.is_positive());
    }

    #[test]
    fn controlling_sequence_partial_sum() {
        let s = Scale::new(3, &[4, 8]).unwrap();
        let c = controlling_sequence(&s);
        assert_eq!(c.eps, vec![ratio(1, 2), ratio(1, 4)]);
        assert_eq!(c.partial_sum, ratio(3, 4));
    }

    #[test]
    fn params_validate_band_chain() {
        // alpha_1 = 1/4 is not strictly below alpha_0/4.
        let bad = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 4)],
            vec![ratio(3, 8)],
            vec![1, 1],
            ratio(0, 1),
        );
        assert_eq!(bad, Err(ParamsError::BandChain(0)));

        let good = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![1, 2],
            ratio(0, 1),
        );
        assert!(good.is_ok());
    }

    #[test]
    fn params_validate_density_orders() {
        let bad = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![2, 1],
            ratio(0, 1),
        );
        assert_eq!(bad, Err(ParamsError::DensityNotMonotone(1)));
    }

    #[test]
    fn minimal_factor_for_steering() {
        // alpha = (1, 1/5), phi range 1, no sojourn: 8*1/(1/5) + 2 = 42.
        let p = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![1, 1],
            ratio(0, 1),
        )
        .unwrap();
        let f = minimal_factors(3, &p, &ratio(1, 1), &[0], 1 << 20).unwrap();
        assert_eq!(f, vec![42]);
    }

    #[test]
    fn zero_potential_is_always_feasible() {
        let p = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![1, 1],
            ratio(0, 1),
        )
        .unwrap();
        let f = minimal_factors(3, &p, &ratio(0, 1), &[0], 1 << 20).unwrap();
        assert!(Scale::new(3, &f).is_ok());
    }

    #[test]
    fn minimal_factors_strictly_increase() {
        let p = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5), ratio(1, 25)],
            vec![ratio(3, 8), ratio(3, 40)],
            vec![1, 1, 1],
            ratio(0, 1),
        )
        .unwrap();
        let f = minimal_factors(3, &p, &ratio(1, 1), &[0, 0], 1 << 20).unwrap();
        assert!(f[1] > f[0]);
        assert!(Scale::new(3, &f).is_ok());
    }

    #[test]
    fn infeasible_under_cap() {
        let p = ControlParams::new(
            vec![ratio(1, 1), ratio(1, 5)],
            vec![ratio(3, 8)],
            vec![1, 1],
            ratio(0, 1),
        )
        .unwrap();
        let e = minimal_factors(3, &p, &ratio(1, 1), &[0], 10).unwrap_err();
        assert_eq!(e, ScaleError::Infeasible { level: 1, cap: 10 });
    }
}
