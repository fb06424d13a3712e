//! IMPQ against the diagonal model and the baselines at three budgets.

use impq::pipeline::{compare, RunConfig};
use impq::surrogate::{generate_instance, InstanceSpec};

fn main() -> impq::Result<()> {
    let mut config = RunConfig::new(InstanceSpec::network(8, 5, 1.0));
    config.target_avg_bits = vec![2.5, 3.0, 3.5];
    let instance = generate_instance(&config.instance)?;
    let result = compare(&instance, &config)?;
    println!("method      target  avg_bits       NLL  perplexity  promoted");
    for r in &result.rows {
        println!(
            "{:<10} {:>7} {:>9.3} {:>9.4} {:>11.4}  {}",
            r.method.name(),
            r.target_bits.unwrap(),
            r.average_bits,
            r.payoff,
            r.perplexity.unwrap(),
            r.promoted
        );
    }
    Ok(())
}
