//! Permutation sampling on the fake-quantized network, compared with the
//! exact values from all 2^L coalitions.

use impq::game::exact_shapley;
use impq::spqe::{estimate, run_spqe};
use impq::surrogate::{generate_instance, Instance, InstanceSpec, NetOracle};

fn main() -> impq::Result<()> {
    let Instance::Network { net, corpus } = generate_instance(&InstanceSpec::network(8, 3, 1.0))? else {
        unreachable!()
    };
    let oracle = NetOracle::new(net, corpus, 4, 2)?;
    let exact = exact_shapley(&oracle)?;

    for m in [10, 40, 160] {
        let matrix = run_spqe(&oracle, m, 7, (4, 2))?;
        let est = estimate(&matrix)?;
        let err = est
            .phi_hat
            .iter()
            .zip(&exact.phi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let spread = est.per_layer_variance.iter().map(|v| v.sqrt()).fold(0.0, f64::max);
        println!(
            "M={m:>3}  max |phi_hat - phi| = {err:.4}  max column sd = {spread:.4}  row residual = {:.1e}",
            matrix.max_efficiency_residual()
        );
    }
    println!("exact phi: {:?}", exact.phi.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>());
    Ok(())
}
