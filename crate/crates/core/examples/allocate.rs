//! Budgeted two-level allocation: exact branch-and-bound against full
//! enumeration, greedy, and the linearized program.

use nalgebra::DMatrix;

use impq::allocator::{linearize, solve_exact, solve_exhaustive, solve_greedy, AllocationProblem};

fn main() -> impq::Result<()> {
    // Layers 0 and 1 are cheap to demote alone but expensive together.
    let a = vec![0.30, 0.25, 0.40, 0.10, 0.20, 0.35];
    let mut k = DMatrix::zeros(6, 6);
    k[(0, 1)] = 0.45;
    k[(1, 0)] = 0.45;
    k[(2, 4)] = -0.15;
    k[(4, 2)] = -0.15;
    let counts = vec![4096, 4096, 8192, 4096, 2048, 8192];
    let problem = AllocationProblem::from_target_bits(a.clone(), k, counts, 3.0, 2, 4)?;

    let exact = solve_exact(&problem)?;
    let full = solve_exhaustive(&problem)?;
    let greedy_q = solve_greedy(&a, &problem.costs, problem.budget)?;
    println!("budget {} bytes", problem.budget);
    println!("exact      bits {:?}  objective {:.4}  nodes {}", exact.bits, exact.objective, exact.nodes);
    println!("exhaustive bits {:?}  objective {:.4}", full.bits, full.objective);
    println!(
        "greedy     bits {:?}  objective {:.4}",
        problem.bits_for(&greedy_q),
        impq::allocator::evaluate_objective(&problem, &greedy_q)?
    );

    let lp = linearize(&problem)?;
    let (q, y, obj) = lp.solve_exhaustive().expect("feasible");
    println!(
        "linearized: {} pair variables, {} linking rows, objective {obj:.4}, same q: {}, y = products: {}",
        lp.pairs.len(),
        lp.linking_constraint_count(),
        q == exact.q,
        y == lp.products(&q)
    );
    Ok(())
}
