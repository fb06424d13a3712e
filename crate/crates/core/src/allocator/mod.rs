//! Budget-constrained two-level bit allocation.
//!
//! Each layer either stays at the low precision (`q[i] = true`) or is
//! promoted to the high precision (`q[i] = false`) at a byte cost `c[i]`.
//! The allocator minimizes the modeled loss increase `aᵀq + qᵀKq` subject to
//! `Σ c[i]·(1 − q[i]) ≤ B`.

mod exact;
mod greedy;
mod linearize;

use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::doc::Artifact;
use crate::error::{Error, Result};
use crate::linalg;

pub use exact::{solve_exact, solve_exact_traced, solve_exhaustive, NodeRecord, EXHAUSTIVE_MAX_LAYERS};
pub use greedy::solve_greedy;
pub use linearize::{linearize, LinearizedProgram, PairTerm};

/// Largest layer count accepted by [`solve_exact`].
pub const EXACT_MAX_LAYERS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    /// Linear loss-increase coefficient of keeping each layer low.
    pub sensitivities: Vec<f64>,
    /// Pairwise coefficients; symmetric.
    #[serde(with = "linalg::rows")]
    pub interactions: DMatrix<f64>,
    /// Bytes needed to promote each layer.
    pub costs: Vec<f64>,
    /// Promotion byte budget.
    pub budget: f64,
    pub param_counts: Vec<u64>,
    pub b_low: u32,
    pub b_high: u32,
}

impl Artifact for AllocationProblem {
    const KIND: &'static str = "allocation_problem";
}

/// Bytes needed to move each layer from `b_low` to `b_high`: `n·(b_high − b_low)/8`.
pub fn promotion_costs(param_counts: &[u64], b_low: u32, b_high: u32) -> Vec<f64> {
    param_counts
        .iter()
        .map(|&n| n as f64 * f64::from(b_high - b_low) / 8.0)
        .collect()
}

/// Budget whose full use yields a parameter-weighted average of `target_avg_bits`.
pub fn budget_from_target_bits(
    costs: &[f64],
    param_counts: &[u64],
    target_avg_bits: f64,
    b_low: u32,
    b_high: u32,
) -> Result<f64> {
    if costs.len() != param_counts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} costs for {} layers",
            costs.len(),
            param_counts.len()
        )));
    }
    let (lo, hi) = (f64::from(b_low), f64::from(b_high));
    if b_low >= b_high || !(lo..=hi).contains(&target_avg_bits) {
        return Err(Error::TargetOutOfRange {
            target: target_avg_bits,
            low: b_low,
            high: b_high,
        });
    }
    let fraction = (target_avg_bits - lo) / (hi - lo);
    Ok(fraction * costs.iter().sum::<f64>())
}

impl AllocationProblem {
    /// Problem with costs derived from parameter counts and a target average bit-width.
    pub fn from_target_bits(
        sensitivities: Vec<f64>,
        interactions: DMatrix<f64>,
        param_counts: Vec<u64>,
        target_avg_bits: f64,
        b_low: u32,
        b_high: u32,
    ) -> Result<Self> {
        let costs = promotion_costs(&param_counts, b_low, b_high);
        let budget = budget_from_target_bits(&costs, &param_counts, target_avg_bits, b_low, b_high)?;
        let p = Self {
            sensitivities,
            interactions,
            costs,
            budget,
            param_counts,
            b_low,
            b_high,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn layer_count(&self) -> usize {
        self.sensitivities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.sensitivities.len();
        if l == 0 {
            return Err(Error::DimensionMismatch("no layers".into()));
        }
        if self.interactions.shape() != (l, l)
            || self.costs.len() != l
            || self.param_counts.len() != l
        {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent problem dimensions for {l} layers"
            )));
        }
        if self.costs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter("costs must be positive and finite".into()));
        }
        if !linalg::is_symmetric(&self.interactions, 0.0) {
            return Err(Error::InvalidParameter("interaction matrix is not symmetric".into()));
        }
        let finite = self.sensitivities.iter().all(|x| x.is_finite())
            && self.interactions.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if !(self.budget >= 0.0) || self.budget.is_infinite() {
            return Err(Error::Infeasible(format!("budget {} is not a finite non-negative number", self.budget)));
        }
        Ok(())
    }

    /// Bytes spent on promotions, summed in layer order.
    pub fn promoted_bytes(&self, q: &[bool]) -> f64 {
        let mut total = 0.0;
        for (i, &low) in q.iter().enumerate() {
            if !low {
                total += self.costs[i];
            }
        }
        total
    }

    pub fn is_feasible(&self, q: &[bool]) -> bool {
        self.promoted_bytes(q) <= self.budget
    }

    pub fn bits_for(&self, q: &[bool]) -> Vec<u32> {
        q.iter()
            .map(|&low| if low { self.b_low } else { self.b_high })
            .collect()
    }

    pub fn average_bits(&self, q: &[bool]) -> f64 {
        let total: u64 = self.param_counts.iter().sum();
        let weighted: f64 = self
            .bits_for(q)
            .iter()
            .zip(&self.param_counts)
            .map(|(&b, &n)| f64::from(b) * n as f64)
            .sum();
        weighted / total as f64
    }
}

/// `aᵀq + qᵀKq`, accumulated in row-major order.
pub fn evaluate_objective(problem: &AllocationProblem, q: &[bool]) -> Result<f64> {
    let l = problem.layer_count();
    if q.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "assignment of length {} for {l} layers",
            q.len()
        )));
    }
    Ok(objective_unchecked(problem, q))
}

pub(crate) fn objective_unchecked(problem: &AllocationProblem, q: &[bool]) -> f64 {
    let l = q.len();
    let mut total = 0.0;
    for i in 0..l {
        if q[i] {
            total += problem.sensitivities[i];
        }
    }
    for i in 0..l {
        if !q[i] {
            continue;
        }
        for j in 0..l {
            if q[j] {
                total += problem.interactions[(i, j)];
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Exact,
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// `true` keeps the layer at low precision.
    pub q: Vec<bool>,
    pub objective: f64,
    pub promoted_bytes: f64,
    pub bits: Vec<u32>,
    pub average_bits: f64,
    pub solver: Solver,
    pub nodes: u64,
    /// Solve time; omitted unless timing was requested, since it breaks byte-identical reruns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl Artifact for Allocation {
    const KIND: &'static str = "allocation";
}

impl Allocation {
    pub fn from_q(problem: &AllocationProblem, q: Vec<bool>, solver: Solver, nodes: u64) -> Result<Self> {
        let objective = evaluate_objective(problem, &q)?;
        Ok(Self {
            objective,
            promoted_bytes: problem.promoted_bytes(&q),
            bits: problem.bits_for(&q),
            average_bits: problem.average_bits(&q),
            q,
            solver,
            nodes,
            wall_time_ms: None,
        })
    }

    pub fn with_wall_time(mut self, elapsed: Duration) -> Self {
        self.wall_time_ms = Some(elapsed.as_secs_f64() * 1e3);
        self
    }

    /// Indices of promoted layers.
    pub fn promoted(&self) -> Vec<usize> {
        (0..self.q.len()).filter(|&i| !self.q[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn problem(a: &[f64], k: &[f64], costs: &[f64], budget: f64) -> AllocationProblem {
        let l = a.len();
        AllocationProblem {
            sensitivities: a.to_vec(),
            interactions: DMatrix::from_row_slice(l, l, k),
            costs: costs.to_vec(),
            budget,
            param_counts: vec![64; l],
            b_low: 2,
            b_high: 4,
        }
    }

    #[test]
    fn objective_examples() {
        let p = problem(&[1.0, 2.0], &[0.5, 0.25, 0.25, 0.5], &[1.0, 1.0], 1.0);
        assert_eq!(evaluate_objective(&p, &[false, false]).unwrap(), 0.0);
        assert_eq!(evaluate_objective(&p, &[true, true]).unwrap(), 3.0 + 1.5);
        assert_eq!(evaluate_objective(&p, &[true, false]).unwrap(), 1.5);
        assert!(evaluate_objective(&p, &[true]).is_err());
    }

    #[test]
    fn budget_translation() {
        let counts = vec![100u64; 10];
        let costs = promotion_costs(&counts, 2, 4);
        assert_eq!(costs[0], 25.0);
        let total: f64 = costs.iter().sum();
        assert_eq!(budget_from_target_bits(&costs, &counts, 2.0, 2, 4).unwrap(), 0.0);
        assert_eq!(budget_from_target_bits(&costs, &counts, 4.0, 2, 4).unwrap(), total);
        let b = budget_from_target_bits(&costs, &counts, 2.5, 2, 4).unwrap();
        assert_eq!(b, 0.25 * total);
        // 2.5 layer-equivalents: two whole layers fit, three do not
        assert!(2.0 * costs[0] <= b && 3.0 * costs[0] > b);
        assert!(matches!(
            budget_from_target_bits(&costs, &counts, 4.5, 2, 4),
            Err(Error::TargetOutOfRange { .. })
        ));
        assert!(budget_from_target_bits(&costs, &counts, 1.0, 2, 4).is_err());
    }

    #[test]
    fn full_budget_hits_target_average() {
        let counts = vec![10u64, 30, 60];
        let p = AllocationProblem::from_target_bits(
            vec![0.0; 3],
            DMatrix::zeros(3, 3),
            counts,
            3.2,
            2,
            4,
        )
        .unwrap();
        // 3.2 bits allows 60% of all promotion bytes; layer 2 alone is exactly that
        let q = vec![true, true, false];
        assert!((p.promoted_bytes(&q) - p.budget).abs() < 1e-12);
        assert!((p.average_bits(&q) - 3.2).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut p = problem(&[1.0, 2.0], &[0.5, 0.25, 0.25, 0.5], &[1.0, 1.0], 1.0);
        assert!(p.validate().is_ok());
        p.costs[0] = 0.0;
        assert!(p.validate().is_err());
        let mut p = problem(&[1.0, 2.0], &[0.5, 0.25, 0.2, 0.5], &[1.0, 1.0], 1.0);
        assert!(p.validate().is_err());
        p.interactions[(1, 0)] = 0.25;
        p.budget = -1.0;
        assert!(matches!(p.validate(), Err(Error::Infeasible(_))));
    }
}
