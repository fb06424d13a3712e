//! Shapley-based progressive quantization estimation.
//!
//! Each sampled permutation starts with every layer at high precision and
//! demotes the layers one at a time in permutation order. The loss increase
//! observed at each step is the demoted layer's marginal contribution; column
//! means over permutations estimate the Shapley values.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doc::Artifact;
use crate::error::{Error, Result};
use crate::game::{next_permutation, CachedOracle, Coalition, ValueOracle};

/// Enumeration guard for [`enumerate_permutations_mode`].
pub const ENUMERATION_MAX_LAYERS: usize = 7;

/// One progressive demotion pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationTrace {
    /// Demotion order.
    pub order: Vec<usize>,
    /// `payoffs[k]` is the payoff after demoting the first `k` layers of `order`.
    pub payoffs: Vec<f64>,
    /// Loss increase attributed to each layer, indexed by layer.
    pub marginals_by_layer: Vec<f64>,
}

impl PermutationTrace {
    pub fn run<O: ValueOracle + ?Sized>(oracle: &O, order: &[usize]) -> Result<Self> {
        let l = oracle.layer_count();
        if order.len() != l {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {l} layers",
                order.len()
            )));
        }
        let mut state = Coalition::full(l);
        let mut payoffs = Vec::with_capacity(l + 1);
        payoffs.push(oracle.evaluate(&state)?);
        let mut marginals_by_layer = vec![0.0; l];
        for &layer in order {
            if !state.contains(layer) {
                return Err(Error::InvalidParameter(format!(
                    "order {order:?} is not a permutation"
                )));
            }
            state.remove(layer);
            let v = oracle.evaluate(&state)?;
            marginals_by_layer[layer] = v - payoffs.last().unwrap();
            payoffs.push(v);
        }
        Ok(Self {
            order: order.to_vec(),
            payoffs,
            marginals_by_layer,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Sampled,
    Enumerated,
}

/// Per-permutation, per-layer marginal loss increases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalMatrix {
    pub layer_count: usize,
    pub sample_count: usize,
    pub b_high: u32,
    pub b_low: u32,
    pub seed: u64,
    pub oracle: String,
    pub mode: SamplingMode,
    /// `v(T)`: payoff with every layer at high precision.
    pub v_full: f64,
    /// `v(∅)`: payoff with every layer demoted.
    pub v_empty: f64,
    pub orders: Vec<Vec<usize>>,
    pub rows: Vec<Vec<f64>>,
}

impl Artifact for MarginalMatrix {
    const KIND: &'static str = "marginal_matrix";
}

impl MarginalMatrix {
    /// Bare matrix without provenance, mostly for tests and hand-built inputs.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let l = rows.first().map_or(0, Vec::len);
        if m == 0 || l == 0 || rows.iter().any(|r| r.len() != l) {
            return Err(Error::DimensionMismatch(
                "marginal matrix must be a non-empty rectangle".into(),
            ));
        }
        Ok(Self {
            layer_count: l,
            sample_count: m,
            b_high: crate::surrogate::DEFAULT_B_HIGH,
            b_low: crate::surrogate::DEFAULT_B_LOW,
            seed: 0,
            oracle: String::from("none"),
            mode: SamplingMode::Sampled,
            v_full: f64::NAN,
            v_empty: f64::NAN,
            orders: Vec::new(),
            rows,
        })
    }

    pub fn total_gain(&self) -> f64 {
        self.v_empty - self.v_full
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 || self.layer_count == 0 {
            return Err(Error::DimensionMismatch("empty marginal matrix".into()));
        }
        if self.rows.len() != self.sample_count
            || self.rows.iter().any(|r| r.len() != self.layer_count)
        {
            return Err(Error::DimensionMismatch(format!(
                "declared {}x{}, found {} rows",
                self.sample_count,
                self.layer_count,
                self.rows.len()
            )));
        }
        if !self.orders.is_empty() && self.orders.len() != self.sample_count {
            return Err(Error::DimensionMismatch("order count".into()));
        }
        Ok(())
    }

    /// Largest relative deviation of a row sum from `v(∅) - v(T)`.
    pub fn max_efficiency_residual(&self) -> f64 {
        let total = self.total_gain();
        self.rows
            .iter()
            .map(|r| (r.iter().sum::<f64>() - total).abs() / total.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    pub fn column(&self, layer: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[layer])
    }
}

/// Column statistics of a [`MarginalMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub phi_hat: Vec<f64>,
    pub per_layer_variance: Vec<f64>,
    pub sample_count: usize,
}

impl Artifact for ShapleyEstimate {
    const KIND: &'static str = "shapley_estimate";
}

/// Seed of permutation `m`: the run seed selects the key, `m` the ChaCha stream.
fn permutation_rng(seed: u64, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng
}

/// Permutation `m` of a sampled run; independent of every other permutation.
pub fn sampled_order(layer_count: usize, seed: u64, m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..layer_count).collect();
    order.shuffle(&mut permutation_rng(seed, m));
    order
}

fn assemble<O: ValueOracle + ?Sized>(
    oracle: &O,
    orders: Vec<Vec<usize>>,
    seed: u64,
    mode: SamplingMode,
    bits: (u32, u32),
) -> Result<MarginalMatrix> {
    let l = oracle.layer_count();
    let cached = CachedOracle::new(oracle);
    let traces: Vec<PermutationTrace> = orders
        .par_iter()
        .map(|order| PermutationTrace::run(&cached, order))
        .collect::<Result<_>>()
        .map_err(|e| match e {
            e @ Error::OracleFailure(_) => e,
            other => Error::OracleFailure(other.to_string()),
        })?;
    let v_full = traces[0].payoffs[0];
    let v_empty = traces[0].payoffs[l];
    Ok(MarginalMatrix {
        layer_count: l,
        sample_count: traces.len(),
        b_high: bits.0,
        b_low: bits.1,
        seed,
        oracle: oracle.fingerprint(),
        mode,
        v_full,
        v_empty,
        rows: traces.iter().map(|t| t.marginals_by_layer.clone()).collect(),
        orders,
    })
}

/// Monte-Carlo permutation sampling with `samples` progressive demotion passes.
///
/// Permutation `m` depends only on `(seed, m)`, so the first `k` rows of a
/// run are identical to a run with `samples = k`.
pub fn run_spqe<O: ValueOracle + ?Sized>(
    oracle: &O,
    samples: usize,
    seed: u64,
    bits: (u32, u32),
) -> Result<MarginalMatrix> {
    let l = oracle.layer_count();
    if samples == 0 || l == 0 {
        return Err(Error::InvalidParameter(
            "SPQE needs at least one sample and one layer".into(),
        ));
    }
    let orders = (0..samples).map(|m| sampled_order(l, seed, m)).collect();
    assemble(oracle, orders, seed, SamplingMode::Sampled, bits)
}

/// Every permutation exactly once, in lexicographic order.
pub fn enumerate_permutations_mode<O: ValueOracle + ?Sized>(
    oracle: &O,
    bits: (u32, u32),
) -> Result<MarginalMatrix> {
    let l = oracle.layer_count();
    if l == 0 {
        return Err(Error::InvalidParameter("no layers".into()));
    }
    if l > ENUMERATION_MAX_LAYERS {
        return Err(Error::LayerCountTooLarge {
            operation: "enumerate_permutations_mode",
            got: l,
            limit: ENUMERATION_MAX_LAYERS,
        });
    }
    let mut orders = Vec::new();
    let mut order: Vec<usize> = (0..l).collect();
    loop {
        orders.push(order.clone());
        if !next_permutation(&mut order) {
            break;
        }
    }
    assemble(oracle, orders, 0, SamplingMode::Enumerated, bits)
}

/// Column means and unbiased column variances (zero when `M = 1`).
pub fn estimate(matrix: &MarginalMatrix) -> Result<ShapleyEstimate> {
    matrix.validate()?;
    let m = matrix.sample_count;
    let mut phi_hat = Vec::with_capacity(matrix.layer_count);
    let mut per_layer_variance = Vec::with_capacity(matrix.layer_count);
    for i in 0..matrix.layer_count {
        let mean = matrix.column(i).sum::<f64>() / m as f64;
        let var = if m > 1 {
            matrix.column(i).map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        phi_hat.push(mean);
        per_layer_variance.push(var);
    }
    Ok(ShapleyEstimate {
        phi_hat,
        per_layer_variance,
        sample_count: m,
    })
}
