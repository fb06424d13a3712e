//! Cooperative-game primitives: coalitions of layers, the payoff oracle
//! contract and exact Shapley values.
//!
//! A coalition is the set of layers kept at high precision; every layer
//! outside it is demoted. Payoffs are losses (lower is better), so a layer's
//! marginal contribution is measured as the loss increase caused by removing
//! it from the coalition: `v(S \ {i}) - v(S)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest layer count a [`Coalition`] can represent.
pub const MAX_LAYERS: usize = 64;

/// Enumeration guard for [`exact_shapley`].
pub const EXACT_SHAPLEY_MAX_LAYERS: usize = 20;

/// Enumeration guard for [`full_permutation_shapley`].
pub const FULL_PERMUTATION_MAX_LAYERS: usize = 8;

/// Set of layer indices held at high precision, stored as a fixed-width bit set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    bits: u64,
    layer_count: usize,
}

impl Coalition {
    fn mask(layer_count: usize) -> u64 {
        if layer_count == MAX_LAYERS {
            u64::MAX
        } else {
            (1u64 << layer_count) - 1
        }
    }

    fn check_count(layer_count: usize) {
        assert!(
            (1..=MAX_LAYERS).contains(&layer_count),
            "layer count {layer_count} outside 1..={MAX_LAYERS}"
        );
    }

    pub fn empty(layer_count: usize) -> Self {
        Self::check_count(layer_count);
        Self {
            bits: 0,
            layer_count,
        }
    }

    pub fn full(layer_count: usize) -> Self {
        Self::check_count(layer_count);
        Self {
            bits: Self::mask(layer_count),
            layer_count,
        }
    }

    /// Builds a coalition from raw bits; bit `i` set means layer `i` is a member.
    pub fn from_bits(bits: u64, layer_count: usize) -> Result<Self> {
        if !(1..=MAX_LAYERS).contains(&layer_count) {
            return Err(Error::InvalidParameter(format!(
                "layer count {layer_count} outside 1..={MAX_LAYERS}"
            )));
        }
        if bits & !Self::mask(layer_count) != 0 {
            return Err(Error::InvalidParameter(format!(
                "bits {bits:#x} reference layers beyond {layer_count}"
            )));
        }
        Ok(Self { bits, layer_count })
    }

    pub fn from_members(members: &[usize], layer_count: usize) -> Result<Self> {
        let mut c = Self::from_bits(0, layer_count)?;
        for &m in members {
            if m >= layer_count {
                return Err(Error::InvalidParameter(format!(
                    "member {m} out of range for {layer_count} layers"
                )));
            }
            if c.contains(m) {
                return Err(Error::InvalidParameter(format!("duplicate member {m}")));
            }
            c.insert(m);
        }
        Ok(c)
    }

    /// Coalition of layers whose demotion flag is zero (`q[i] == 0` means promoted).
    pub fn from_demotion_flags(q: &[bool]) -> Result<Self> {
        let members: Vec<usize> = (0..q.len()).filter(|&i| !q[i]).collect();
        Self::from_members(&members, q.len())
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn layer_count(&self) -> usize {
        self.layer_count
    }

    pub fn contains(&self, layer: usize) -> bool {
        layer < self.layer_count && self.bits >> layer & 1 == 1
    }

    pub fn insert(&mut self, layer: usize) {
        assert!(layer < self.layer_count);
        self.bits |= 1 << layer;
    }

    pub fn remove(&mut self, layer: usize) {
        assert!(layer < self.layer_count);
        self.bits &= !(1 << layer);
    }

    pub fn with(mut self, layer: usize) -> Self {
        self.insert(layer);
        self
    }

    pub fn without(mut self, layer: usize) -> Self {
        self.remove(layer);
        self
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_full(&self) -> bool {
        self.bits == Self::mask(self.layer_count)
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: !self.bits & Self::mask(self.layer_count),
            layer_count: self.layer_count,
        }
    }

    /// Member indices in ascending order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.layer_count).filter(move |&i| self.contains(i))
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()?;
        write!(f, "/{}", self.layer_count)
    }
}

/// Payoff oracle `v(S)`.
///
/// Implementations must be deterministic (bit-identical output for identical
/// coalitions) and total over all coalitions of `layer_count()` layers.
/// Evaluations may run concurrently.
pub trait ValueOracle: Sync {
    fn layer_count(&self) -> usize;

    fn evaluate(&self, coalition: &Coalition) -> Result<f64>;

    /// Short identifier of the oracle instance, recorded in persisted artifacts.
    fn fingerprint(&self) -> String {
        String::from("anonymous")
    }
}

impl<O: ValueOracle + ?Sized> ValueOracle for &O {
    fn layer_count(&self) -> usize {
        (**self).layer_count()
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<f64> {
        (**self).evaluate(coalition)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F> {
    layer_count: usize,
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(&Coalition) -> f64 + Sync,
{
    pub fn new(layer_count: usize, f: F) -> Self {
        Self { layer_count, f }
    }
}

impl<F> ValueOracle for FnOracle<F>
where
    F: Fn(&Coalition) -> f64 + Sync,
{
    fn layer_count(&self) -> usize {
        self.layer_count
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<f64> {
        check_coalition(self.layer_count, coalition)?;
        Ok((self.f)(coalition))
    }
}

pub(crate) fn check_coalition(layer_count: usize, coalition: &Coalition) -> Result<()> {
    if coalition.layer_count() != layer_count {
        return Err(Error::DimensionMismatch(format!(
            "coalition over {} layers, oracle has {}",
            coalition.layer_count(),
            layer_count
        )));
    }
    Ok(())
}

/// Memoizing wrapper; results are cached per coalition for the wrapper's lifetime.
pub struct CachedOracle<O> {
    inner: O,
    cache: Mutex<HashMap<Coalition, f64>>,
}

impl<O: ValueOracle> CachedOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Number of distinct coalitions evaluated so far.
    pub fn distinct_evaluations(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: ValueOracle> ValueOracle for CachedOracle<O> {
    fn layer_count(&self) -> usize {
        self.inner.layer_count()
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<f64> {
        if let Some(v) = self.cache.lock().unwrap().get(coalition) {
            return Ok(*v);
        }
        // Evaluate outside the lock; a racing duplicate computes the same value.
        let v = self.inner.evaluate(coalition)?;
        self.cache.lock().unwrap().insert(*coalition, v);
        Ok(v)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactShapleyResult {
    pub phi: Vec<f64>,
    pub v_full: f64,
    pub v_empty: f64,
}

impl ExactShapleyResult {
    /// `v(∅) - v(T)`, the total the Shapley values must sum to.
    pub fn total_gain(&self) -> f64 {
        self.v_empty - self.v_full
    }
}

/// Evaluates the oracle on every coalition, indexed by the coalition's bits.
fn payoff_table<O: ValueOracle + ?Sized>(oracle: &O) -> Result<Vec<f64>> {
    let l = oracle.layer_count();
    (0..1u64 << l)
        .into_par_iter()
        .map(|bits| oracle.evaluate(&Coalition::from_bits(bits, l)?))
        .collect()
}

fn check_layer_limit(operation: &'static str, got: usize, limit: usize) -> Result<()> {
    if got == 0 {
        return Err(Error::InvalidParameter(format!(
            "{operation} requires at least one layer"
        )));
    }
    if got > limit {
        return Err(Error::LayerCountTooLarge {
            operation,
            got,
            limit,
        });
    }
    Ok(())
}

/// Exact Shapley values by subset enumeration.
///
/// `phi[i] = Σ_{S ⊆ T∖{i}} |S|!(L−|S|−1)!/L! · (v(S) − v(S ∪ {i}))`.
pub fn exact_shapley<O: ValueOracle + ?Sized>(oracle: &O) -> Result<ExactShapleyResult> {
    let l = oracle.layer_count();
    check_layer_limit("exact_shapley", l, EXACT_SHAPLEY_MAX_LAYERS)?;
    let table = payoff_table(oracle)?;

    // weight[s] = s!(L-s-1)!/L! = 1 / (L * C(L-1, s))
    let mut weight = vec![0.0; l];
    let mut binom = 1.0f64;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (l as f64 * binom);
        binom = binom * (l - 1 - s) as f64 / (s + 1) as f64;
    }

    let phi = (0..l)
        .into_par_iter()
        .map(|i| {
            let bit = 1u64 << i;
            (0..1u64 << l)
                .filter(|s| s & bit == 0)
                .map(|s| weight[s.count_ones() as usize] * (table[s as usize] - table[(s | bit) as usize]))
                .sum::<f64>()
        })
        .collect();

    Ok(ExactShapleyResult {
        phi,
        v_full: table[(1usize << l) - 1],
        v_empty: table[0],
    })
}

/// Advances `perm` to the next permutation in lexicographic order; returns
/// `false` (leaving `perm` sorted ascending) after the last one.
pub(crate) fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        perm.reverse();
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Exact Shapley values as the average demotion marginal over all `L!` orderings.
pub fn full_permutation_shapley<O: ValueOracle + ?Sized>(
    oracle: &O,
) -> Result<ExactShapleyResult> {
    let l = oracle.layer_count();
    check_layer_limit("full_permutation_shapley", l, FULL_PERMUTATION_MAX_LAYERS)?;
    let table = payoff_table(oracle)?;
    let full = (1usize << l) - 1;

    let mut sums = vec![0.0; l];
    let mut count = 0u64;
    let mut order: Vec<usize> = (0..l).collect();
    loop {
        let mut state = full;
        for &layer in &order {
            let next = state & !(1 << layer);
            sums[layer] += table[next] - table[state];
            state = next;
        }
        count += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }

    Ok(ExactShapleyResult {
        phi: sums.into_iter().map(|s| s / count as f64).collect(),
        v_full: table[full],
        v_empty: table[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_oracle(l: usize, table: Vec<f64>) -> impl ValueOracle {
        FnOracle::new(l, move |c: &Coalition| table[c.bits() as usize])
    }

    #[test]
    fn coalition_basics() {
        let c = Coalition::from_members(&[0, 3], 5).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.contains(3) && !c.contains(1));
        assert_eq!(c.complement().members().collect::<Vec<_>>(), vec![1, 2, 4]);
        assert!(Coalition::full(5).is_full());
        assert!(Coalition::empty(5).is_empty());
        assert_eq!(Coalition::full(64).len(), 64);
        assert!(Coalition::from_members(&[5], 5).is_err());
        assert!(Coalition::from_members(&[1, 1], 5).is_err());
        assert!(Coalition::from_bits(0b100, 2).is_err());
    }

    #[test]
    fn single_player_game() {
        let o = FnOracle::new(1, |c: &Coalition| if c.is_full() { 1.0 } else { 3.0 });
        let r = exact_shapley(&o).unwrap();
        assert_eq!(r.phi, vec![2.0]);
    }

    #[test]
    fn symmetric_two_player_game() {
        let o = table_oracle(2, vec![4.0, 2.0, 2.0, 0.0]);
        assert_eq!(exact_shapley(&o).unwrap().phi, vec![2.0, 2.0]);
        assert_eq!(full_permutation_shapley(&o).unwrap().phi, vec![2.0, 2.0]);
    }

    #[test]
    fn additive_game_recovers_weights() {
        let w = [1.0, 2.0, 3.0];
        let o = FnOracle::new(3, move |c: &Coalition| {
            c.complement().members().map(|i| w[i]).sum()
        });
        let r = full_permutation_shapley(&o).unwrap();
        for (p, e) in r.phi.iter().zip(w) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_guards() {
        let o = FnOracle::new(21, |_: &Coalition| 0.0);
        assert!(matches!(
            exact_shapley(&o),
            Err(Error::LayerCountTooLarge { limit: 20, .. })
        ));
        let o = FnOracle::new(9, |_: &Coalition| 0.0);
        assert!(matches!(
            full_permutation_shapley(&o),
            Err(Error::LayerCountTooLarge { limit: 8, .. })
        ));
    }

    #[test]
    fn lexicographic_permutations() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
    }

    #[test]
    fn cache_is_transparent() {
        let o = table_oracle(3, (0..8).map(|i| (i * i) as f64 * 0.37).collect());
        let cached = CachedOracle::new(&o);
        assert_eq!(exact_shapley(&o).unwrap(), exact_shapley(&cached).unwrap());
        assert_eq!(cached.distinct_evaluations(), 8);
    }

    fn random_table(l: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1 << l)
    }

    proptest! {
        #[test]
        fn efficiency_and_agreement(l in 1usize..=6, seed in any::<u64>()) {
            let table: Vec<f64> = (0..1u64 << l)
                .map(|s| ((s.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed) % 1000) as f64 / 100.0)
                .collect();
            let o = table_oracle(l, table);
            let a = exact_shapley(&o).unwrap();
            let b = full_permutation_shapley(&o).unwrap();
            let total = a.total_gain();
            let sum: f64 = a.phi.iter().sum();
            prop_assert!((sum - total).abs() <= 1e-9 * total.abs().max(1.0));
            for (x, y) in a.phi.iter().zip(&b.phi) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn linearity(t1 in random_table(4), t2 in random_table(4)) {
            let sum_table: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
            let p1 = exact_shapley(&table_oracle(4, t1)).unwrap().phi;
            let p2 = exact_shapley(&table_oracle(4, t2)).unwrap().phi;
            let ps = exact_shapley(&table_oracle(4, sum_table)).unwrap().phi;
            for i in 0..4 {
                prop_assert!((ps[i] - p1[i] - p2[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn dummy_and_symmetry(base in random_table(3)) {
            // Layer 3 is a dummy; layers 0 and 1 are exchangeable.
            let o = FnOracle::new(4, move |c: &Coalition| {
                let b = c.bits() & 0b111;
                let swapped = (b & 0b100) | ((b & 1) << 1) | ((b >> 1) & 1);
                base[b as usize] + base[swapped as usize]
            });
            let r = exact_shapley(&o).unwrap();
            prop_assert!(r.phi[3].abs() < 1e-12);
            prop_assert!((r.phi[0] - r.phi[1]).abs() < 1e-9);
        }
    }
}
