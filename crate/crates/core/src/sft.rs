//! Mixing subshifts of finite type, locally constant potentials, exact
//! Birkhoff sums, the exact achievable-average range, and universal words.
//!
//! Words are byte sequences over an alphabet of at most 255 symbols; a word
//! of length `ℓ` names the cylinder of all points agreeing on coordinates
//! `0..ℓ-1`. Potentials are locally constant of depth `k`: a rational value
//! per legal `k`-word, which makes every Birkhoff sum over a concrete word
//! an exact rational.
//!
//! The achievable range of Birkhoff averages equals the (min, max) mean
//! cycle weight on the order-`k` de Bruijn graph; both ends are computed
//! exactly with Karp's algorithm over big integers.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SftError {
    #[error("alphabet must have between 2 and 255 symbols, got {0}")]
    BadAlphabet(usize),
    #[error("transition matrix must be {0}x{0}")]
    BadMatrix(usize),
    #[error("no power of the transition matrix up to {0} is positive; the subshift is not mixing")]
    NotMixing(usize),
    #[error("word contains an illegal transition at position {0}")]
    IllegalWord(usize),
    #[error("continuation is shorter than depth-1 ({0} < {1})")]
    ContinuationTooShort(usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PotentialError {
    #[error("potential depth must be at least 1")]
    DepthZero,
    #[error("value table misses the legal word {0:?}")]
    MissingWord(Vec<u8>),
    #[error("value table has an entry for the illegal word {0:?}")]
    IllegalEntry(Vec<u8>),
    #[error("symbol {0} is outside the alphabet")]
    BadSymbol(u8),
    #[error("alphabet^depth = {0}^{1} is too large to index")]
    TooManyWords(usize, usize),
}

/// A finite word over the alphabet. Legality is relative to an [`Sft`] and
/// is enforced at the operation boundaries that need it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }
}

impl std::ops::Deref for Word {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for Word {
    fn from(v: Vec<u8>) -> Self {
        Word(v)
    }
}

impl From<&[u8]> for Word {
    fn from(v: &[u8]) -> Self {
        Word(v.to_vec())
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.0 {
            if s < 10 {
                write!(f, "{s}")?;
            } else {
                write!(f, "[{s}]")?;
            }
        }
        Ok(())
    }
}

/// A mixing subshift of finite type: transition matrix, its mixing power,
/// and a table of shortest connector words per ordered symbol pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sft {
    alphabet: usize,
    transition: Vec<Vec<bool>>,
    mixing_power: usize,
    connectors: Vec<Vec<Vec<u8>>>,
}

impl Sft {
    /// Validate the matrix, find the mixing power (smallest `p ≤ A²` with
    /// all entries of the p-th boolean power positive), and tabulate a
    /// shortest connector `w` with `a·w·b` legal for every pair `(a, b)`.
    pub fn new(alphabet: usize, transition: Vec<Vec<bool>>) -> Result<Sft, SftError> {
        if !(2..=255).contains(&alphabet) {
            return Err(SftError::BadAlphabet(alphabet));
        }
        if transition.len() != alphabet || transition.iter().any(|r| r.len() != alphabet) {
            return Err(SftError::BadMatrix(alphabet));
        }
        let bound = alphabet * alphabet;
        let mut power = transition.clone();
        let mut mixing_power = None;
        for p in 1..=bound {
            if power.iter().all(|row| row.iter().all(|&x| x)) {
                mixing_power = Some(p);
                break;
            }
            power = bool_mat_mul(&power, &transition);
        }
        let mixing_power = mixing_power.ok_or(SftError::NotMixing(bound))?;

        // BFS per source symbol over the transition digraph; the connector
        // is the path interior.
        let mut connectors = vec![vec![Vec::new(); alphabet]; alphabet];
        for a in 0..alphabet {
            let mut prev: Vec<Option<u8>> = vec![None; alphabet];
            let mut seen = vec![false; alphabet];
            let mut queue = std::collections::VecDeque::new();
            for b in 0..alphabet {
                if transition[a][b] && !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
            while let Some(u) = queue.pop_front() {
                for v in 0..alphabet {
                    if transition[u][v] && !seen[v] {
                        seen[v] = true;
                        prev[v] = Some(u as u8);
                        queue.push_back(v);
                    }
                }
            }
            for b in 0..alphabet {
                debug_assert!(seen[b], "mixing implies reachability");
                let mut path = Vec::new();
                let mut cur = b;
                while let Some(p) = prev[cur] {
                    path.push(p);
                    cur = p as usize;
                }
                path.reverse();
                connectors[a][b] = path;
            }
        }
        Ok(Sft { alphabet, transition, mixing_power, connectors })
    }

    /// The full shift on `alphabet` symbols.
    pub fn full_shift(alphabet: usize) -> Sft {
        Sft::new(alphabet, vec![vec![true; alphabet]; alphabet]).expect("full shift is mixing")
    }

    /// The golden-mean shift: binary, with the word `11` forbidden.
    pub fn golden_mean() -> Sft {
        Sft::new(2, vec![vec![true, true], vec![true, false]]).expect("golden mean is mixing")
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn mixing_power(&self) -> usize {
        self.mixing_power
    }

    pub fn is_transition_legal(&self, a: u8, b: u8) -> bool {
        self.transition[a as usize][b as usize]
    }

    /// Shortest `w` with `a·w·b` legal.
    pub fn connector(&self, a: u8, b: u8) -> &[u8] {
        &self.connectors[a as usize][b as usize]
    }

    pub fn is_legal(&self, word: &[u8]) -> bool {
        word.iter().all(|&s| (s as usize) < self.alphabet)
            && word.windows(2).all(|w| self.is_transition_legal(w[0], w[1]))
    }

    /// First illegal adjacency, if any.
    pub fn first_illegal(&self, word: &[u8]) -> Option<usize> {
        for (i, &s) in word.iter().enumerate() {
            if s as usize >= self.alphabet {
                return Some(i);
            }
        }
        word.windows(2).position(|w| !self.is_transition_legal(w[0], w[1])).map(|i| i + 1)
    }

    /// All legal words of the given length, in lexicographic order.
    pub fn legal_words(&self, len: usize) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(len);
        self.collect_words(len, &mut cur, &mut out);
        out
    }

    fn collect_words(&self, len: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for s in 0..self.alphabet as u8 {
            if cur.last().map_or(true, |&p| self.is_transition_legal(p, s)) {
                cur.push(s);
                self.collect_words(len, cur, out);
                cur.pop();
            }
        }
    }

    /// Count of legal words of the given length.
    pub fn legal_word_count(&self, len: usize) -> u64 {
        if len == 0 {
            return 1;
        }
        let mut counts = vec![1u64; self.alphabet];
        for _ in 1..len {
            let mut next = vec![0u64; self.alphabet];
            for a in 0..self.alphabet {
                for b in 0..self.alphabet {
                    if self.transition[a][b] {
                        next[a] += counts[b];
                    }
                }
            }
            counts = next;
        }
        counts.iter().sum()
    }
}

fn bool_mat_mul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] {
                for j in 0..n {
                    if b[k][j] {
                        out[i][j] = true;
                    }
                }
            }
        }
    }
    out
}

/// A locally constant potential: one exact rational per legal `k`-word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Potential {
    depth: usize,
    alphabet: usize,
    /// Dense table indexed by the radix rank of the k-word; entries for
    /// illegal words are zero and never read.
    table: Vec<BigRational>,
    max_abs: BigRational,
}

impl Potential {
    pub fn new(
        sft: &Sft,
        depth: usize,
        values: &BTreeMap<Vec<u8>, BigRational>,
    ) -> Result<Potential, PotentialError> {
        if depth == 0 {
            return Err(PotentialError::DepthZero);
        }
        let alphabet = sft.alphabet_size();
        let size = (alphabet as u64)
            .checked_pow(depth as u32)
            .filter(|&s| s <= 1 << 24)
            .ok_or(PotentialError::TooManyWords(alphabet, depth))? as usize;
        let mut table = vec![BigRational::zero(); size];
        let mut max_abs = BigRational::zero();
        let legal = sft.legal_words(depth);
        for w in &legal {
            let v = values.get(w).ok_or_else(|| PotentialError::MissingWord(w.clone()))?;
            let rank = rank_of(w, alphabet);
            table[rank] = v.clone();
            if v.abs() > max_abs {
                max_abs = v.abs();
            }
        }
        for w in values.keys() {
            if w.iter().any(|&s| s as usize >= alphabet) {
                return Err(PotentialError::BadSymbol(*w.iter().find(|&&s| s as usize >= alphabet).unwrap()));
            }
            if w.len() != depth || !sft.is_legal(w) {
                return Err(PotentialError::IllegalEntry(w.clone()));
            }
        }
        Ok(Potential { depth, alphabet, table, max_abs })
    }

    /// Depth-1 potential from per-symbol values.
    pub fn on_symbols(sft: &Sft, values: &[BigRational]) -> Result<Potential, PotentialError> {
        let map: BTreeMap<Vec<u8>, BigRational> =
            values.iter().enumerate().map(|(i, v)| (vec![i as u8], v.clone())).collect();
        Potential::new(sft, 1, &map)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn max_abs(&self) -> &BigRational {
        &self.max_abs
    }

    /// Value on a legal `k`-word.
    pub fn value(&self, word: &[u8]) -> &BigRational {
        debug_assert_eq!(word.len(), self.depth);
        &self.table[rank_of(word, self.alphabet)]
    }
}

pub(crate) fn rank_of(word: &[u8], alphabet: usize) -> usize {
    word.iter().fold(0usize, |acc, &s| acc * alphabet + s as usize)
}

/// Exact Birkhoff sum of the potential over `word`, with the last `k-1`
/// windows reading into `continuation`.
pub fn birkhoff_sum(
    sft: &Sft,
    potential: &Potential,
    word: &Word,
    continuation: &Word,
) -> Result<BigRational, SftError> {
    let k = potential.depth();
    if continuation.len() + 1 < k {
        return Err(SftError::ContinuationTooShort(continuation.len(), k - 1));
    }
    let mut joined = Vec::with_capacity(word.len() + k - 1);
    joined.extend_from_slice(word);
    joined.extend_from_slice(&continuation[..k - 1]);
    if let Some(i) = sft.first_illegal(&joined) {
        return Err(SftError::IllegalWord(i));
    }
    let mut sum = BigRational::zero();
    for i in 0..word.len() {
        sum += potential.value(&joined[i..i + k]);
    }
    Ok(sum)
}

/// Exact closed range of Birkhoff averages over invariant measures
/// (equivalently over periodic orbits): the (min, max) mean cycle weight on
/// the order-`k` de Bruijn graph, via Karp's algorithm run on exact
/// integers over a common denominator.
pub fn average_range(sft: &Sft, potential: &Potential) -> (BigRational, BigRational) {
    let graph = DeBruijnGraph::new(sft, potential.depth());
    let weights: Vec<BigRational> =
        graph.edges.iter().map(|e| potential.value(&e.window[..potential.depth()]).clone()).collect();
    let lo = graph.min_mean_cycle(&weights);
    let neg: Vec<BigRational> = weights.iter().map(|w| -w).collect();
    let hi = -graph.min_mean_cycle(&neg);
    (lo, hi)
}

struct DbEdge {
    from: usize,
    to: usize,
    /// The legal word of length max(k, 2) this edge spells.
    window: Vec<u8>,
}

/// De Bruijn graph on legal `(m-1)`-words with `m = max(k, 2)`; edges are
/// legal `m`-words. Mixing makes it strongly connected.
struct DeBruijnGraph {
    nodes: Vec<Vec<u8>>,
    edges: Vec<DbEdge>,
    out_edges: Vec<Vec<usize>>,
}

impl DeBruijnGraph {
    fn new(sft: &Sft, depth: usize) -> DeBruijnGraph {
        let m = depth.max(2);
        let nodes = sft.legal_words(m - 1);
        let index: BTreeMap<&[u8], usize> =
            nodes.iter().enumerate().map(|(i, w)| (w.as_slice(), i)).collect();
        let mut edges = Vec::new();
        let mut out_edges = vec![Vec::new(); nodes.len()];
        for window in sft.legal_words(m) {
            let from = index[&window[..m - 1]];
            let to = index[&window[1..]];
            out_edges[from].push(edges.len());
            edges.push(DbEdge { from, to, window });
        }
        DeBruijnGraph { nodes, edges, out_edges }
    }

    /// Karp: λ* = min_v max_k (d_n(v) - d_k(v)) / (n - k), with exact
    /// arithmetic over the common denominator of the edge weights.
    fn min_mean_cycle(&self, weights: &[BigRational]) -> BigRational {
        let n = self.nodes.len();
        let denom = weights
            .iter()
            .fold(BigInt::from(1), |acc, w| num::integer::lcm(acc, w.denom().clone()));
        let scaled: Vec<BigInt> =
            weights.iter().map(|w| w.numer() * (&denom / w.denom())).collect();

        // dist[k][v]: min weight of a k-edge walk from the source to v.
        let mut dist: Vec<Vec<Option<BigInt>>> = vec![vec![None; n]; n + 1];
        dist[0][0] = Some(BigInt::zero());
        for k in 1..=n {
            for (e, edge) in self.edges.iter().enumerate() {
                if let Some(d) = dist[k - 1][edge.from].clone() {
                    let cand = d + &scaled[e];
                    let slot = &mut dist[k][edge.to];
                    if slot.as_ref().map_or(true, |cur| cand < *cur) {
                        *slot = Some(cand);
                    }
                }
            }
        }

        let mut best: Option<BigRational> = None;
        for v in 0..n {
            let Some(dn) = dist[n][v].clone() else { continue };
            let mut worst: Option<BigRational> = None;
            for k in 0..n {
                let Some(dk) = dist[k][v].clone() else { continue };
                let mean = BigRational::new(&dn - dk, BigInt::from((n - k) as u64));
                if worst.as_ref().map_or(true, |w| mean > *w) {
                    worst = Some(mean);
                }
            }
            if let Some(w) = worst {
                if best.as_ref().map_or(true, |b| w < *b) {
                    best = Some(w);
                }
            }
        }
        best.expect("a mixing subshift always has cycles") / BigRational::from(denom)
    }
}

/// A legal word containing every legal `m`-word as a factor.
///
/// For `m ≥ 2`: Eulerian closure on the order-`m` de Bruijn multigraph.
/// Unbalanced nodes are patched with duplicate edges along shortest legal
/// routes, then a Hierholzer circuit spells the word. For `m = 1` the word
/// chains all symbols through connectors. Deterministic: identical inputs
/// give identical words.
pub fn universal_word(sft: &Sft, m: usize) -> Word {
    assert!(m >= 1, "order must be at least 1");
    if m == 1 {
        let mut out = vec![0u8];
        for s in 1..sft.alphabet_size() as u8 {
            let last = *out.last().unwrap();
            out.extend_from_slice(sft.connector(last, s));
            out.push(s);
        }
        return Word(out);
    }

    let graph = DeBruijnGraph::new(sft, m);
    let n = graph.nodes.len();
    // Multigraph adjacency: per node, the target list (original edges plus
    // balancing duplicates), consumed in order for determinism.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_deg = vec![0i64; n];
    for e in &graph.edges {
        adj[e.from].push(e.to);
        in_deg[e.to] += 1;
    }

    // Balance: route surplus in-degree to surplus out-degree along legal
    // node paths, duplicating edges along the way.
    let route = node_routes(&graph);
    loop {
        let Some(src) = (0..n).find(|&v| in_deg[v] > adj[v].len() as i64) else { break };
        let dst = (0..n)
            .find(|&v| (adj[v].len() as i64) > in_deg[v])
            .expect("degree surpluses come in pairs");
        let mut cur = src;
        for &next in &route[src][dst] {
            adj[cur].push(next);
            in_deg[next] += 1;
            cur = next;
        }
    }
    for targets in &mut adj {
        targets.sort_unstable();
    }

    // Hierholzer from the lexicographically smallest node.
    let mut next_edge = vec![0usize; n];
    let mut stack = vec![0usize];
    let mut circuit: Vec<usize> = Vec::new();
    while let Some(&v) = stack.last() {
        if next_edge[v] < adj[v].len() {
            let to = adj[v][next_edge[v]];
            next_edge[v] += 1;
            stack.push(to);
        } else {
            circuit.push(v);
            stack.pop();
        }
    }
    circuit.reverse();

    let mut out: Vec<u8> = graph.nodes[circuit[0]].clone();
    for &v in &circuit[1..] {
        out.push(*graph.nodes[v].last().unwrap());
    }
    Word(out)
}

/// Shortest node-to-node symbol routes in the de Bruijn graph: the list of
/// successor nodes to walk from `u` to `v`.
fn node_routes(graph: &DeBruijnGraph) -> Vec<Vec<Vec<usize>>> {
    let n = graph.nodes.len();
    let mut routes = vec![vec![Vec::new(); n]; n];
    for src in 0..n {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[src] = true;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &e in &graph.out_edges[u] {
                let v = graph.edges[e].to;
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = Some((u, e));
                    queue.push_back(v);
                }
            }
        }
        for dst in 0..n {
            if dst == src {
                continue;
            }
            debug_assert!(seen[dst], "mixing implies strong connectivity");
            let mut path = Vec::new();
            let mut cur = dst;
            while cur != src {
                path.push(cur);
                cur = prev[cur].unwrap().0;
            }
            path.reverse();
            routes[src][dst] = path;
        }
    }
    routes
}

/// Every legal `m`-word missing from `factor`, in lexicographic order.
/// Used by verifiers and tests as the density oracle.
pub fn missing_words(sft: &Sft, m: usize, factor: &[u8]) -> Vec<Vec<u8>> {
    let alphabet = sft.alphabet_size();
    let size = (alphabet as u64)
        .checked_pow(m as u32)
        .filter(|&s| s <= 1 << 28)
        .expect("density order too large to index") as usize;
    let mut present = vec![false; size];
    if factor.len() >= m {
        for w in factor.windows(m) {
            present[rank_of(w, alphabet)] = true;
        }
    }
    sft.legal_words(m).into_iter().filter(|w| !present[rank_of(w, alphabet)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn full_shift_mixing_power() {
        let sft = Sft::full_shift(2);
        assert_eq!(sft.mixing_power(), 1);
        for a in 0..2 {
            for b in 0..2 {
                assert!(sft.connector(a, b).is_empty());
            }
        }
    }

    #[test]
    fn golden_mean_connectors() {
        let sft = Sft::golden_mean();
        assert_eq!(sft.mixing_power(), 2);
        assert_eq!(sft.connector(1, 1), &[0]);
        assert!(sft.connector(0, 1).is_empty());
    }

    #[test]
    fn period_two_matrix_not_mixing() {
        let err = Sft::new(2, vec![vec![false, true], vec![true, false]]).unwrap_err();
        assert_eq!(err, SftError::NotMixing(4));
    }

    #[test]
    fn connector_table_legal() {
        for sft in [Sft::full_shift(3), Sft::golden_mean()] {
            let a_count = sft.alphabet_size() as u8;
            for a in 0..a_count {
                for b in 0..a_count {
                    let mut w = vec![a];
                    w.extend_from_slice(sft.connector(a, b));
                    w.push(b);
                    assert!(sft.is_legal(&w), "{a}->{b}: {w:?}");
                    assert!(sft.connector(a, b).len() <= sft.mixing_power());
                }
            }
        }
    }

    #[test]
    fn birkhoff_sum_depth1() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        let cont = Word(vec![]);
        assert_eq!(
            birkhoff_sum(&sft, &phi, &Word(vec![0, 0, 0]), &cont).unwrap(),
            ratio(3, 1)
        );
        assert_eq!(
            birkhoff_sum(&sft, &phi, &Word(vec![0, 1, 0, 1]), &cont).unwrap(),
            ratio(0, 1)
        );
    }

    #[test]
    fn birkhoff_sum_depth2_windows() {
        let sft = Sft::full_shift(2);
        let mut values = BTreeMap::new();
        for w in sft.legal_words(2) {
            values.insert(w.clone(), if w == [0, 0] { ratio(1, 1) } else { ratio(0, 1) });
        }
        let phi = Potential::new(&sft, 2, &values).unwrap();
        let sum =
            birkhoff_sum(&sft, &phi, &Word(vec![0, 0, 0]), &Word(vec![0])).unwrap();
        assert_eq!(sum, ratio(3, 1));
    }

    #[test]
    fn birkhoff_sum_rejects_illegal() {
        let sft = Sft::golden_mean();
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-2, 1)]).unwrap();
        let err = birkhoff_sum(&sft, &phi, &Word(vec![1, 1]), &Word(vec![])).unwrap_err();
        assert!(matches!(err, SftError::IllegalWord(_)));
    }

    #[test]
    fn birkhoff_sum_additive_over_splits() {
        let sft = Sft::golden_mean();
        let phi = Potential::on_symbols(&sft, &[ratio(1, 3), ratio(-2, 5)]).unwrap();
        let word = Word(vec![0, 1, 0, 0, 1, 0, 1, 0]);
        let cont = Word(vec![0]);
        for cut in 1..word.len() {
            let left = Word(word[..cut].to_vec());
            let right = Word(word[cut..].to_vec());
            let mut right_cont = right.0.clone();
            right_cont.extend_from_slice(&cont);
            let total = birkhoff_sum(&sft, &phi, &word, &cont).unwrap();
            let a = birkhoff_sum(&sft, &phi, &left, &Word(right_cont)).unwrap();
            let b = birkhoff_sum(&sft, &phi, &right, &cont).unwrap();
            assert_eq!(total, a + b);
        }
    }

    #[test]
    fn average_range_full_shift() {
        let sft = Sft::full_shift(2);
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-1, 1)]).unwrap();
        assert_eq!(average_range(&sft, &phi), (ratio(-1, 1), ratio(1, 1)));
    }

    #[test]
    fn average_range_golden_mean() {
        let sft = Sft::golden_mean();
        let phi = Potential::on_symbols(&sft, &[ratio(1, 1), ratio(-2, 1)]).unwrap();
        assert_eq!(average_range(&sft, &phi), (ratio(-1, 2), ratio(1, 1)));
    }

    #[test]
    fn average_range_constant() {
        let sft = Sft::golden_mean();
        let phi = Potential::on_symbols(&sft, &[ratio(7, 3), ratio(7, 3)]).unwrap();
        assert_eq!(average_range(&sft, &phi), (ratio(7, 3), ratio(7, 3)));
    }

    #[test]
    fn universal_word_full_shift() {
        let sft = Sft::full_shift(2);
        for m in 1..=4 {
            let w = universal_word(&sft, m);
            assert!(sft.is_legal(&w));
            assert!(missing_words(&sft, m, &w).is_empty(), "m={m}, w={w}");
            let bound =
                (2u64.pow(m as u32)) * (1 + sft.mixing_power() as u64) + m as u64;
            assert!((w.len() as u64) <= bound);
        }
    }

    #[test]
    fn universal_word_golden_mean() {
        let sft = Sft::golden_mean();
        for m in 1..=5 {
            let w = universal_word(&sft, m);
            assert!(sft.is_legal(&w), "m={m}, w={w}");
            assert!(missing_words(&sft, m, &w).is_empty(), "m={m}, w={w}");
        }
    }

    #[test]
    fn universal_word_m1_visits_all_symbols() {
        let sft = Sft::full_shift(2);
        let w = universal_word(&sft, 1);
        assert_eq!(w.symbols(), &[0, 1]);
    }

    #[test]
    fn cyclic_words_stay_in_range() {
        // Every legal cyclic word's average lies inside the exact range.
        for (sft, phi) in [
            (Sft::full_shift(2), vec![ratio(1, 1), ratio(-1, 1)]),
            (Sft::golden_mean(), vec![ratio(1, 1), ratio(-2, 1)]),
        ] {
            let phi = Potential::on_symbols(&sft, &phi).unwrap();
            let (lo, hi) = average_range(&sft, &phi);
            for len in 1..=8usize {
                for w in sft.legal_words(len) {
                    if !sft.is_transition_legal(w[len - 1], w[0]) {
                        continue;
                    }
                    let avg = w
                        .iter()
                        .map(|&s| phi.value(&[s]).clone())
                        .fold(BigRational::zero(), |a, v| a + v)
                        / BigRational::from(BigInt::from(len as u64));
                    assert!(lo <= avg && avg <= hi, "len {len} word {w:?}");
                }
            }
        }
    }
}
