//! From a marginal matrix to interaction-corrected sensitivities.

use impq::interaction::{is_positive_semidefinite, InteractionModel};
use impq::spqe::{estimate, run_spqe};
use impq::surrogate::{generate_instance, InstanceSpec};
use impq::pipeline::InstanceOracle;

fn main() -> impq::Result<()> {
    let inst = generate_instance(&InstanceSpec::quadratic(5, 8, 1.0))?;
    let oracle = InstanceOracle::new(&inst, 4, 2)?;
    let matrix = run_spqe(&oracle, 100, 1, (4, 2))?;
    let est = estimate(&matrix)?;

    for alpha in [0.0, 0.5, 1.0] {
        let model = InteractionModel::build(&matrix, &est, alpha)?;
        println!("alpha = {alpha}  K PSD: {}", is_positive_semidefinite(&model.interactions, 1e-12));
        for i in 0..5 {
            let row: Vec<String> = (0..5).map(|j| format!("{:>8.4}", model.interactions[(i, j)])).collect();
            println!("  phi {:>7.4}  a {:>7.4}  K [{}]", est.phi_hat[i], model.sensitivities[i], row.join(" "));
        }
    }
    Ok(())
}
