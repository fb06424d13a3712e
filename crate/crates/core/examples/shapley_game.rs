//! Exact Shapley values of a planted quadratic loss model, three ways.

use impq::game::{exact_shapley, full_permutation_shapley, CachedOracle, Coalition};
use impq::surrogate::{generate_instance, Instance, InstanceSpec};

fn main() -> impq::Result<()> {
    let Instance::Quadratic(q) = generate_instance(&InstanceSpec::quadratic(6, 42, 1.0))? else {
        unreachable!()
    };
    println!("v(T) = {:.4}  v(∅) = {:.4}", q.value(&Coalition::full(6))?, q.value(&Coalition::empty(6))?);

    let cached = CachedOracle::new(&q);
    let subsets = exact_shapley(&cached)?;
    let perms = full_permutation_shapley(&q)?;
    let closed = q.closed_form_shapley();

    println!("layer  subsets     permutations  closed form");
    for i in 0..q.layer_count() {
        println!("{i:>5}  {:>10.6}  {:>12.6}  {:>11.6}", subsets.phi[i], perms.phi[i], closed[i]);
    }
    println!(
        "sum phi = {:.6}, v(∅) - v(T) = {:.6}, oracle calls = {}",
        subsets.phi.iter().sum::<f64>(),
        subsets.total_gain(),
        cached.distinct_evaluations()
    );
    Ok(())
}
