//! Exact solvers: depth-first branch-and-bound and full enumeration.
//!
//! Both return the lexicographically smallest optimal `q` (with `false <
//! true`, layer 0 most significant) and score every candidate with the same
//! [`objective_unchecked`] routine, so their results agree bit for bit.

use super::linearize::linearize;
use super::{greedy::solve_greedy, objective_unchecked, Allocation, AllocationProblem, Solver, EXACT_MAX_LAYERS};
use crate::error::{Error, Result};

/// Enumeration guard for [`solve_exhaustive`].
pub const EXHAUSTIVE_MAX_LAYERS: usize = 20;

/// Lower bound recorded at one branch-and-bound node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    /// Values fixed for layers `0..prefix.len()`.
    pub prefix: Vec<bool>,
    pub bound: f64,
}

fn better(obj: f64, q: &[bool], best: &Option<(f64, Vec<bool>)>) -> bool {
    match best {
        None => true,
        Some((b, bq)) => obj < *b || (obj == *b && q < bq.as_slice()),
    }
}

/// Full `2^L` scan in lexicographic order of `q`.
pub fn solve_exhaustive(problem: &AllocationProblem) -> Result<Allocation> {
    problem.validate()?;
    let l = problem.layer_count();
    if l > EXHAUSTIVE_MAX_LAYERS {
        return Err(Error::LayerCountTooLarge {
            operation: "solve_exhaustive",
            got: l,
            limit: EXHAUSTIVE_MAX_LAYERS,
        });
    }
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut q = vec![false; l];
    for idx in 0..1u64 << l {
        for (i, qi) in q.iter_mut().enumerate() {
            *qi = idx >> (l - 1 - i) & 1 == 1;
        }
        if !problem.is_feasible(&q) {
            continue;
        }
        let obj = objective_unchecked(problem, &q);
        if better(obj, &q, &best) {
            best = Some((obj, q.clone()));
        }
    }
    let (_, q) = best.expect("all-low assignment is always feasible");
    Allocation::from_q(problem, q, Solver::Exhaustive, 1 << l)
}

struct Search<'a> {
    problem: &'a AllocationProblem,
    l: usize,
    linear: Vec<f64>,
    /// pair[i][j] = K_ij + K_ji for i ≠ j
    pair: Vec<Vec<f64>>,
    /// neg_suffix[f][k] = Σ_{g ≥ k, g ≠ f} min(0, pair[f][g] / 2)
    neg_suffix: Vec<Vec<f64>>,
    slack: f64,
    best: Option<(f64, Vec<bool>)>,
    nodes: u64,
    trace: Option<Vec<NodeRecord>>,
}

impl Search<'_> {
    /// `link[f]` holds `linear[f] + Σ_{j fixed low} pair[f][j]` for every free `f`.
    fn bound(&self, depth: usize, fixed_value: f64, link: &[f64]) -> f64 {
        let mut bound = fixed_value;
        for f in depth..self.l {
            bound += (link[f] + self.neg_suffix[f][depth]).min(0.0);
        }
        bound
    }

    fn descend(&mut self, q: &mut Vec<bool>, fixed_value: f64, spent: f64, link: &mut Vec<f64>) {
        self.nodes += 1;
        let depth = q.len();
        if depth == self.l {
            let obj = objective_unchecked(self.problem, q);
            if better(obj, q, &self.best) {
                self.best = Some((obj, q.clone()));
            }
            return;
        }
        let bound = self.bound(depth, fixed_value, link);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(NodeRecord {
                prefix: q.clone(),
                bound,
            });
        }
        if let Some((best, _)) = &self.best {
            if bound > best + self.slack {
                return;
            }
        }

        // q = false (promote) sorts first lexicographically.
        let cost = self.problem.costs[depth];
        if spent + cost <= self.problem.budget {
            q.push(false);
            self.descend(q, fixed_value, spent + cost, link);
            q.pop();
        }

        q.push(true);
        let saved: Vec<f64> = link[depth + 1..].to_vec();
        for f in depth + 1..self.l {
            link[f] += self.pair[f][depth];
        }
        self.descend(q, fixed_value + link[depth], spent, link);
        link[depth + 1..].copy_from_slice(&saved);
        q.pop();
    }
}

fn run_search(problem: &AllocationProblem, traced: bool) -> Result<(Allocation, Vec<NodeRecord>)> {
    problem.validate()?;
    let l = problem.layer_count();
    if l > EXACT_MAX_LAYERS {
        return Err(Error::LayerCountTooLarge {
            operation: "solve_exact",
            got: l,
            limit: EXACT_MAX_LAYERS,
        });
    }
    let program = linearize(problem)?;
    let mut pair = vec![vec![0.0; l]; l];
    for t in &program.pairs {
        pair[t.i][t.j] = t.coefficient;
        pair[t.j][t.i] = t.coefficient;
    }
    let mut neg_suffix = vec![vec![0.0; l + 1]; l];
    for f in 0..l {
        for k in (0..l).rev() {
            let term = if k == f { 0.0 } else { (pair[f][k] / 2.0).min(0.0) };
            neg_suffix[f][k] = neg_suffix[f][k + 1] + term;
        }
    }
    let scale = 1.0
        + program.linear.iter().map(|x| x.abs()).sum::<f64>()
        + program.pairs.iter().map(|p| p.coefficient.abs()).sum::<f64>();

    let mut search = Search {
        problem,
        l,
        linear: program.linear.clone(),
        pair,
        neg_suffix,
        slack: 1e-9 * scale,
        best: None,
        nodes: 0,
        trace: traced.then(Vec::new),
    };

    // Warm start: greedy on the diagonal-absorbed coefficients.
    let warm = solve_greedy(&search.linear, &problem.costs, problem.budget)?;
    if problem.is_feasible(&warm) {
        search.best = Some((objective_unchecked(problem, &warm), warm));
    }

    let mut link = search.linear.clone();
    search.descend(&mut Vec::with_capacity(l), 0.0, 0.0, &mut link);
    let (_, q) = search
        .best
        .take()
        .ok_or_else(|| Error::Infeasible("no feasible assignment found".into()))?;
    let alloc = Allocation::from_q(problem, q, Solver::Exact, search.nodes)?;
    Ok((alloc, search.trace.unwrap_or_default()))
}

/// Exact minimizer of `aᵀq + qᵀKq` under the promotion budget.
pub fn solve_exact(problem: &AllocationProblem) -> Result<Allocation> {
    run_search(problem, false).map(|(a, _)| a)
}

/// [`solve_exact`] that also records the lower bound computed at every interior node.
pub fn solve_exact_traced(problem: &AllocationProblem) -> Result<(Allocation, Vec<NodeRecord>)> {
    run_search(problem, true)
}
