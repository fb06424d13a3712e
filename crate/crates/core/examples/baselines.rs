//! The four importance baselines on one network and the allocations they pick.

use nalgebra::DMatrix;

use impq::allocator::AllocationProblem;
use impq::baselines::{allocate_baseline, score_layers, BaselineMethod};
use impq::game::{Coalition, ValueOracle};
use impq::surrogate::{generate_instance, Instance, InstanceSpec, NetOracle};

fn main() -> impq::Result<()> {
    let Instance::Network { net, corpus } = generate_instance(&InstanceSpec::network(8, 12, 1.0))? else {
        unreachable!()
    };
    let counts = net.layer_param_counts();
    let template = AllocationProblem::from_target_bits(vec![0.0; 8], DMatrix::zeros(8, 8), counts, 3.0, 2, 4)?;
    let oracle = NetOracle::new(net.clone(), corpus.clone(), 4, 2)?;

    for method in BaselineMethod::ALL {
        let report = score_layers(&net, &corpus, method, 12, 2)?;
        let alloc = allocate_baseline(&report, &template)?;
        let nll = oracle.evaluate(&Coalition::from_demotion_flags(&alloc.q)?)?;
        let scores: Vec<String> = report.scores.iter().map(|s| format!("{s:.3}")).collect();
        println!("{method:<10} scores [{}]", scores.join(", "));
        println!("{:<10} promoted {:?}  NLL {nll:.4}", "", alloc.promoted());
    }
    Ok(())
}
