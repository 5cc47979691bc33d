//! Exact integer view of a shifted potential.
//!
//! All hot loops work with `w(i) = Q·(φ(window_i) - t)` where `Q` is the
//! common denominator of the potential table and the target. Sums of these
//! weights are exact in `i128`; dividing by `Q·len` recovers the exact
//! rational average. Construction fails if any magnitude could overflow the
//! comparisons downstream, so the fast path never needs checked arithmetic.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::integer::lcm;
use num::ToPrimitive;

use crate::sft::{Potential, Sft};

/// Scaled window weights over a common denominator.
#[derive(Debug, Clone)]
pub(crate) struct ShiftedWeights {
    /// Common denominator `Q > 0`.
    pub denom: i128,
    /// Weight per k-word rank; entries of illegal ranks are 0 and unread.
    table: Vec<i128>,
    pub depth: usize,
    pub alphabet: usize,
    /// Largest |weight|.
    pub max_abs: i128,
}

impl ShiftedWeights {
    /// Build the table for `φ - target`. `horizon` is the largest window
    /// count any caller will sum over; it bounds the overflow check.
    pub fn new(
        sft: &Sft,
        potential: &Potential,
        target: &BigRational,
        horizon: u64,
    ) -> Result<ShiftedWeights, String> {
        let alphabet = sft.alphabet_size();
        let k = potential.depth();
        let size = (alphabet as u64).pow(k as u32) as usize;
        let mut denom = target.denom().clone();
        for w in sft.legal_words(k) {
            denom = lcm(denom, potential.value(&w).denom().clone());
        }
        let denom_i = denom.to_i128().ok_or("common denominator exceeds i128")?;
        let mut table = vec![0i128; size];
        let mut max_abs: i128 = 0;
        for w in sft.legal_words(k) {
            let scaled = (potential.value(&w) - target) * BigRational::from(denom.clone());
            debug_assert!(scaled.denom() == &BigInt::from(1));
            let v = scaled.numer().to_i128().ok_or("scaled weight exceeds i128")?;
            table[crate::sft::rank_of(&w, alphabet)] = v;
            max_abs = max_abs.max(v.abs());
        }
        // Downstream comparisons multiply a sum bounded by horizon·max_abs
        // with small band numerators/denominators; keep generous headroom.
        let bound = (horizon as i128)
            .checked_mul(max_abs.max(1))
            .and_then(|s| s.checked_mul(denom_i.max(1)));
        match bound {
            Some(b) if b < (1i128 << 96) => {}
            _ => return Err("potential scale too large for exact i128 fast path".into()),
        }
        Ok(ShiftedWeights { denom: denom_i, table, depth: k, alphabet, max_abs })
    }

    #[inline]
    pub fn weight(&self, rank: usize) -> i128 {
        self.table[rank]
    }

    /// Exact average of a summed span as a rational.
    pub fn average(&self, sum: i128, len: u64) -> BigRational {
        BigRational::new(BigInt::from(sum), BigInt::from(self.denom) * BigInt::from(len))
    }

    /// Compare `sum/(Q·len)` against a rational bound: returns the ordering
    /// of the span average relative to `bound`.
    pub fn cmp_average(&self, sum: i128, len: u64, bound: &BigRational) -> std::cmp::Ordering {
        // sum/(Q·len) vs p/q  ⟺  sum·q vs p·Q·len, all exact in i128 given
        // the construction-time headroom check (band numerators are small).
        let p = bound.numer().to_i128();
        let q = bound.denom().to_i128();
        match (p, q) {
            (Some(p), Some(q)) => {
                let lhs = sum.checked_mul(q);
                let rhs = p.checked_mul(self.denom).and_then(|v| v.checked_mul(len as i128));
                if let (Some(lhs), Some(rhs)) = (lhs, rhs) {
                    return lhs.cmp(&rhs);
                }
                self.cmp_average_big(sum, len, bound)
            }
            _ => self.cmp_average_big(sum, len, bound),
        }
    }

    fn cmp_average_big(&self, sum: i128, len: u64, bound: &BigRational) -> std::cmp::Ordering {
        let lhs = BigInt::from(sum) * bound.denom();
        let rhs = bound.numer() * BigInt::from(self.denom) * BigInt::from(len);
        lhs.cmp(&rhs)
    }

    /// Whether the span average lies in the closed interval `[lo, hi]`.
    pub fn average_in(&self, sum: i128, len: u64, lo: &BigRational, hi: &BigRational) -> bool {
        self.cmp_average(sum, len, lo) != std::cmp::Ordering::Less
            && self.cmp_average(sum, len, hi) != std::cmp::Ordering::Greater
    }
}

/// Rolling window rank over the last `k` symbols.
#[derive(Debug, Clone)]
pub(crate) struct RollingRank {
    alphabet: usize,
    modulus: usize,
    rank: usize,
    seen: usize,
    depth: usize,
}

impl RollingRank {
    pub fn new(alphabet: usize, depth: usize) -> RollingRank {
        let modulus = alphabet.pow((depth - 1) as u32);
        RollingRank { alphabet, modulus, rank: 0, seen: 0, depth }
    }

    /// Push one symbol; returns the rank of the completed window ending at
    /// this symbol once `depth` symbols have been seen.
    #[inline]
    pub fn push(&mut self, symbol: u8) -> Option<usize> {
        self.rank = (self.rank % self.modulus) * self.alphabet + symbol as usize;
        self.seen += 1;
        (self.seen >= self.depth).then_some(self.rank)
    }

    /// Rank of the window that pushing `symbol` would complete, if any.
    #[inline]
    pub fn peek(&self, symbol: u8) -> Option<usize> {
        let rank = (self.rank % self.modulus) * self.alphabet + symbol as usize;
        (self.seen + 1 >= self.depth).then_some(rank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn weights_and_averages() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let w = ShiftedWeights::new(&sft, &phi, &ratio(1, 4), 1000).unwrap();
        assert_eq!(w.denom, 4);
        assert_eq!(w.weight(0), 3); // 1 - 1/4, scaled by 4
        assert_eq!(w.weight(1), -5); // -1 - 1/4, scaled by 4
        assert_eq!(w.average(3 - 5, 2), ratio(-1, 4));
        assert!(w.average_in(3, 1, &ratio(1, 2), &ratio(1, 1)));
        assert!(!w.average_in(3, 1, &ratio(7, 8), &ratio(1, 1)));
    }

    #[test]
    fn rolling_rank_windows() {
        let mut r = RollingRank::new(2, 2);
        assert_eq!(r.push(1), None);
        assert_eq!(r.push(0), Some(0b10));
        assert_eq!(r.push(1), Some(0b01));
        assert_eq!(r.push(1), Some(0b11));
    }
}
