//! Writing, re-reading and verifying run artifacts, and the TOML run config.

use impq::doc;
use impq::pipeline::{estimate_run, files, impq_allocate, verify_paths, InstanceOracle, RunConfig, Target};
use impq::surrogate::{generate_instance, InstanceDocument, InstanceSpec};

fn main() -> impq::Result<()> {
    let config = RunConfig::new(InstanceSpec::quadratic(6, 3, 1.0));
    println!("{}", config.to_toml()?);

    let dir = std::env::temp_dir().join("impq-artifacts-example");
    let instance = generate_instance(&config.instance)?;
    let oracle = InstanceOracle::new(&instance, config.b_high, config.b_low)?;
    let (matrix, est) = estimate_run(&oracle, config.samples, config.sampling_seed(), config.bits())?;
    let run = impq_allocate(&matrix, &est, config.alpha, &instance.param_counts(), Target::AverageBits(3.0))?;

    doc::write(
        dir.join(files::INSTANCE),
        &InstanceDocument {
            spec: config.instance.clone(),
            instance,
        },
    )?;
    doc::write(dir.join(files::MARGINALS), &matrix)?;
    doc::write(dir.join(files::ESTIMATE), &est)?;
    doc::write(dir.join(files::MODEL), &run.model)?;
    doc::write(dir.join(files::PROBLEM), &run.problem)?;
    doc::write(dir.join(files::ALLOCATION), &run.allocation)?;

    for check in verify_paths(&[dir.clone()])? {
        let name = check.file.rsplit('/').next().unwrap_or_default().to_string();
        println!("{:<26} {:<22} {}", name, check.check, if check.passed { "ok" } else { &check.detail });
    }
    Ok(())
}
