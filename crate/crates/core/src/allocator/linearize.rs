use serde::{Deserialize, Serialize};

use super::AllocationProblem;
use crate::error::Result;

/// Auxiliary variable `y_ij` standing for the product `q_i · q_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    /// `K_ij + K_ji`.
    pub coefficient: f64,
}

/// The quadratic objective rewritten over `q` and auxiliary binaries `y`.
///
/// Since `q_i² = q_i`, `K_ii` moves into the linear coefficient of `q_i`;
/// each unordered pair with a non-zero coupling gets one `y_ij` with
/// `y_ij ≥ q_i + q_j − 1`, `y_ij ≤ q_i`, `y_ij ≤ q_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedProgram {
    /// `a_i + K_ii`.
    pub linear: Vec<f64>,
    pub pairs: Vec<PairTerm>,
    pub costs: Vec<f64>,
    pub budget: f64,
}

pub fn linearize(problem: &AllocationProblem) -> Result<LinearizedProgram> {
    problem.validate()?;
    let l = problem.layer_count();
    let k = &problem.interactions;
    let linear = (0..l).map(|i| problem.sensitivities[i] + k[(i, i)]).collect();
    let mut pairs = Vec::new();
    for i in 0..l {
        for j in i + 1..l {
            let coefficient = k[(i, j)] + k[(j, i)];
            if coefficient != 0.0 {
                pairs.push(PairTerm { i, j, coefficient });
            }
        }
    }
    Ok(LinearizedProgram {
        linear,
        pairs,
        costs: problem.costs.clone(),
        budget: problem.budget,
    })
}

impl LinearizedProgram {
    pub fn layer_count(&self) -> usize {
        self.linear.len()
    }

    /// Three linking rows per auxiliary variable.
    pub fn linking_constraint_count(&self) -> usize {
        3 * self.pairs.len()
    }

    pub fn objective(&self, q: &[bool], y: &[bool]) -> f64 {
        let lin: f64 = self
            .linear
            .iter()
            .zip(q)
            .filter(|(_, &qi)| qi)
            .map(|(c, _)| c)
            .sum();
        let pair: f64 = self
            .pairs
            .iter()
            .zip(y)
            .filter(|(_, &yij)| yij)
            .map(|(p, _)| p.coefficient)
            .sum();
        lin + pair
    }

    pub fn is_feasible(&self, q: &[bool], y: &[bool]) -> bool {
        let promoted: f64 = self
            .costs
            .iter()
            .zip(q)
            .filter(|(_, &qi)| !qi)
            .map(|(c, _)| c)
            .sum();
        promoted <= self.budget
            && self.pairs.iter().zip(y).all(|(p, &yij)| {
                let (qi, qj, y) = (q[p.i] as i32, q[p.j] as i32, yij as i32);
                y >= qi + qj - 1 && y <= qi && y <= qj
            })
    }

    /// `y_ij := q_i · q_j` for every pair.
    pub fn products(&self, q: &[bool]) -> Vec<bool> {
        self.pairs.iter().map(|p| q[p.i] && q[p.j]).collect()
    }

    /// Exhaustive optimum over `(q, y)`, searching `y` freely within the
    /// linking constraints rather than assuming `y = q_i q_j`. Returns the
    /// lexicographically smallest optimal `q`.
    pub fn solve_exhaustive(&self) -> Option<(Vec<bool>, Vec<bool>, f64)> {
        let l = self.layer_count();
        assert!(l <= super::EXHAUSTIVE_MAX_LAYERS);
        let mut best: Option<(Vec<bool>, Vec<bool>, f64)> = None;
        for idx in 0..1u64 << l {
            let q: Vec<bool> = (0..l).map(|i| idx >> (l - 1 - i) & 1 == 1).collect();
            // each y_ij only appears in its own three rows, so the pairs decouple
            let mut y = Vec::with_capacity(self.pairs.len());
            let mut ok = true;
            for p in &self.pairs {
                let candidates = [false, true].into_iter().filter(|&v| {
                    let (qi, qj, yv) = (q[p.i] as i32, q[p.j] as i32, v as i32);
                    yv >= qi + qj - 1 && yv <= qi && yv <= qj
                });
                match candidates.min_by(|a, b| {
                    let ca = if *a { p.coefficient } else { 0.0 };
                    let cb = if *b { p.coefficient } else { 0.0 };
                    ca.total_cmp(&cb)
                }) {
                    Some(v) => y.push(v),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok || !self.is_feasible(&q, &y) {
                continue;
            }
            let obj = self.objective(&q, &y);
            if best.as_ref().is_none_or(|b| obj < b.2) {
                best = Some((q, y, obj));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::evaluate_objective;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(a: Vec<f64>, k: DMatrix<f64>) -> AllocationProblem {
        let l = a.len();
        AllocationProblem {
            sensitivities: a,
            interactions: k,
            costs: vec![1.0; l],
            budget: l as f64 / 2.0,
            param_counts: vec![4; l],
            b_low: 2,
            b_high: 4,
        }
    }

    #[test]
    fn diagonal_k_has_no_pairs() {
        let p = problem(vec![1.0, -2.0, 3.0], DMatrix::from_diagonal(&nalgebra::dvector![0.5, 0.25, 1.0]));
        let lp = linearize(&p).unwrap();
        assert!(lp.pairs.is_empty());
        assert_eq!(lp.linear, vec![1.5, -1.75, 4.0]);
    }

    #[test]
    fn two_layer_dense() {
        let p = problem(vec![1.0, 1.0], DMatrix::from_row_slice(2, 2, &[0.0, 0.75, 0.75, 0.0]));
        let lp = linearize(&p).unwrap();
        assert_eq!(lp.pairs, vec![PairTerm { i: 0, j: 1, coefficient: 1.5 }]);
        assert_eq!(lp.linking_constraint_count(), 3);
    }

    #[test]
    fn linear_objective_matches_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let l = 10;
        let a: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut k = DMatrix::zeros(l, l);
        for i in 0..l {
            for j in 0..=i {
                let x = rng.random_range(-1.0..1.0);
                k[(i, j)] = x;
                k[(j, i)] = x;
            }
        }
        let p = problem(a, k);
        let lp = linearize(&p).unwrap();
        for _ in 0..50 {
            let q: Vec<bool> = (0..l).map(|_| rng.random()).collect();
            let y = lp.products(&q);
            let lin = lp.objective(&q, &y);
            let quad = evaluate_objective(&p, &q).unwrap();
            assert!((lin - quad).abs() <= 1e-12 * quad.abs().max(1.0), "{lin} vs {quad}");
        }
    }

    #[test]
    fn linking_rows_force_products() {
        let p = problem(vec![1.0, 1.0], DMatrix::from_row_slice(2, 2, &[0.0, -3.0, -3.0, 0.0]));
        let lp = linearize(&p).unwrap();
        // y = 1 with q_0 = 0 violates y ≤ q_0
        assert!(!lp.is_feasible(&[false, true], &[true]));
        // y = 0 with both q = 1 violates y ≥ q_0 + q_1 − 1
        assert!(!lp.is_feasible(&[true, true], &[false]));
        assert!(lp.is_feasible(&[true, true], &[true]));
    }
}
