//! Sample-count and shrinkage sweeps on a planted surrogate.

use impq::pipeline::{ablate_alpha, ablate_samples, RunConfig, ALPHA_GRID, SAMPLE_GRID};
use impq::surrogate::{generate_instance, InstanceSpec};

fn main() -> impq::Result<()> {
    let config = RunConfig::new(InstanceSpec::quadratic(8, 1, 1.0));
    let instance = generate_instance(&config.instance)?;

    println!("samples    payoff   rel_delta  phi_error");
    for r in ablate_samples(&instance, &config, &SAMPLE_GRID)? {
        println!("{:>7} {:>9.4} {:>11.4} {:>10.4}", r.samples, r.payoff, r.relative_delta, r.phi_error.unwrap());
    }
    println!();
    println!("alpha    payoff  objective  promoted");
    for r in ablate_alpha(&instance, &config, &ALPHA_GRID)? {
        println!("{:>5} {:>9.4} {:>10.4}  {}", r.alpha, r.payoff, r.objective, r.promoted);
    }
    Ok(())
}
