//! Acceptance run: one PASS/FAIL line per criterion, each with its measured
//! quantities and runtime. With `IMPQ_ACCEPTANCE_STRICT` set, any failure
//! makes the process exit with status 1.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use impq::allocator::{self, linearize, AllocationProblem};
use impq::game::{exact_shapley, Coalition, ValueOracle};
use impq::pipeline::{self, InstanceOracle, Method, RunConfig, Target};
use impq::spqe;
use impq::surrogate::{generate_instance, Instance, InstanceSpec, LayerState, NetOracle};

struct Outcome {
    passed: bool,
    detail: String,
}

fn criterion(n: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = took <= limit;
    let ok = out.passed && in_time;
    println!(
        "{} {n:>2} {name}: {} [{:.1}s of {}s]",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn quadratic(layers: usize, seed: u64, strength: f64) -> Instance {
    generate_instance(&InstanceSpec::quadratic(layers, seed, strength)).unwrap()
}

fn oracle(inst: &Instance) -> InstanceOracle {
    InstanceOracle::new(inst, 4, 2).unwrap()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn shapley_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for layers in 1..=6 {
        for seed in 0..5 {
            let o = oracle(&quadratic(layers, seed, 1.0));
            let m = spqe::enumerate_permutations_mode(&o, (4, 2)).unwrap();
            let est = spqe::estimate(&m).unwrap();
            let exact = exact_shapley(&o).unwrap();
            worst = worst.max(max_abs(&est.phi_hat, &exact.phi));
            cases += 1;
        }
    }
    Outcome {
        passed: worst < 1e-9,
        detail: format!("{cases} surrogates, max |phi_hat - phi| = {worst:.3e} (< 1e-9)"),
    }
}

fn efficiency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let configs = 120;
    let results: Vec<(f64, bool)> = (0..configs)
        .map(|c| {
            let network = c % 4 == 0;
            let layers = rng.random_range(1..=if network { 8 } else { 16 });
            let seed = rng.random::<u64>();
            let strength = rng.random_range(0.0..2.0);
            let samples = rng.random_range(1..=60);
            let sampling_seed = rng.random::<u64>();
            (network, layers, seed, strength, samples, sampling_seed)
        })
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(network, layers, seed, strength, samples, sampling_seed)| {
            let mut spec = if network {
                InstanceSpec::network(layers, seed, strength)
            } else {
                InstanceSpec::quadratic(layers, seed, strength)
            };
            spec.samples = 128;
            let o = oracle(&generate_instance(&spec).unwrap());
            let m = spqe::run_spqe(&o, samples, sampling_seed, (4, 2)).unwrap();
            let gain = m.total_gain();
            let worst = m
                .rows
                .iter()
                .map(|r| (r.iter().sum::<f64>() - gain).abs() / gain.abs())
                .fold(0.0, f64::max);
            (worst, worst <= 1e-9)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    Outcome {
        passed: results.iter().all(|r| r.1),
        detail: format!("{configs} configs, worst relative row residual {worst:.3e} (<= 1e-9)"),
    }
}

fn convergence() -> Outcome {
    let inst = quadratic(8, 1, 1.0);
    let config = RunConfig::new(InstanceSpec::quadratic(8, 1, 1.0));
    let rows = pipeline::ablate_samples(&inst, &config, &pipeline::SAMPLE_GRID).unwrap();
    let at = |m: usize| rows.iter().find(|r| r.samples == m).unwrap();
    let (e10, e640) = (at(10).phi_error.unwrap(), at(640).phi_error.unwrap());
    let late = (at(640).payoff - at(320).payoff).abs();
    let early = (at(40).payoff - at(10).payoff).abs();
    Outcome {
        passed: e640 < e10 && late <= 0.2 * early,
        detail: format!(
            "phi error M=10 {e10:.4} -> M=640 {e640:.4}; |p640-p320| = {late:.4} vs 0.2*|p40-p10| = {:.4}",
            0.2 * early
        ),
    }
}

fn random_problem(rng: &mut ChaCha8Rng, l: usize) -> AllocationProblem {
    let a: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.5)).collect();
    let mut k = DMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..=i {
            let x = rng.random_range(-1.0..1.0);
            k[(i, j)] = x;
            k[(j, i)] = x;
        }
    }
    let param_counts: Vec<u64> = (0..l).map(|_| rng.random_range(1..=64) * 64).collect();
    let costs = allocator::promotion_costs(&param_counts, 2, 4);
    let budget = rng.random_range(0.0..1.0) * costs.iter().sum::<f64>();
    AllocationProblem {
        sensitivities: a,
        interactions: k,
        costs,
        budget,
        param_counts,
        b_low: 2,
        b_high: 4,
    }
}

fn allocator_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let problems: Vec<AllocationProblem> = (0..200)
        .map(|_| {
            let l = rng.random_range(1..=14);
            random_problem(&mut rng, l)
        })
        .collect();
    let indefinite = problems
        .iter()
        .filter(|p| !impq::interaction::is_positive_semidefinite(&p.interactions, 0.0))
        .count();
    let mismatches = problems
        .par_iter()
        .filter(|p| {
            let e = allocator::solve_exact(p).unwrap();
            let x = allocator::solve_exhaustive(p).unwrap();
            e.objective != x.objective || e.q != x.q
        })
        .count();
    Outcome {
        passed: mismatches == 0,
        detail: format!("200 instances ({indefinite} indefinite K), {mismatches} mismatches"),
    }
}

fn linearization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..50 {
        let l = rng.random_range(1..=10);
        let p = random_problem(&mut rng, l);
        let lp = linearize(&p).unwrap();
        let (q, y, obj) = lp.solve_exhaustive().unwrap();
        let quad = allocator::solve_exhaustive(&p).unwrap();
        // equal optimum; compare both the linear and the quadratic reading of q
        let same_opt = obj == lp.objective(&quad.q, &lp.products(&quad.q))
            && allocator::evaluate_objective(&p, &q).unwrap() == quad.objective;
        if !same_opt || y != lp.products(&q) || q != quad.q {
            bad += 1;
        }
    }
    Outcome {
        passed: bad == 0,
        detail: format!("50 instances, {bad} with differing optimum or y != q_i q_j"),
    }
}

const PLANTED_LAYERS: usize = 8;
const PLANTED_TARGET: f64 = 3.0;

fn planted_payoffs(seed: u64, samples: usize, alphas: &[f64]) -> Vec<f64> {
    let inst = quadratic(PLANTED_LAYERS, seed, 1.0);
    let o = oracle(&inst);
    let config = RunConfig::new(InstanceSpec::quadratic(PLANTED_LAYERS, seed, 1.0));
    let (m, est) = pipeline::estimate_run(&o, samples, config.sampling_seed(), (4, 2)).unwrap();
    alphas
        .iter()
        .map(|&alpha| {
            let run =
                pipeline::impq_allocate(&m, &est, alpha, &inst.param_counts(), Target::AverageBits(PLANTED_TARGET))
                    .unwrap();
            pipeline::true_payoff(&o, &run.allocation.q).unwrap()
        })
        .collect()
}

fn interaction_benefit() -> Outcome {
    let pairs: Vec<Vec<f64>> = (0..100u64)
        .into_par_iter()
        .map(|seed| planted_payoffs(seed, 100, &[0.5, 1.0]))
        .collect();
    let no_worse = pairs.iter().filter(|p| p[0] <= p[1]).count();
    let strictly = pairs.iter().filter(|p| p[0] < p[1]).count();
    Outcome {
        passed: no_worse >= 95 && strictly >= 30,
        detail: format!("IMPQ <= diagonal on {no_worse}/100 (need 95), strictly lower on {strictly}/100 (need 30)"),
    }
}

fn alpha_interior() -> Outcome {
    let runs: Vec<Vec<f64>> = (0..50u64)
        .into_par_iter()
        .map(|seed| planted_payoffs(seed, 40, &[0.0, 0.5, 1.0]))
        .collect();
    let mean = |k: usize| runs.iter().map(|r| r[k]).sum::<f64>() / runs.len() as f64;
    let (a0, a5, a1) = (mean(0), mean(1), mean(2));
    Outcome {
        passed: a5 <= a0 && a5 <= a1 && (a5 < a0 || a5 < a1),
        detail: format!("mean true loss: alpha 0 {a0:.5}, alpha 0.5 {a5:.5}, alpha 1 {a1:.5}"),
    }
}

fn progressive_vs_pruning() -> Outcome {
    let Instance::Network { net, corpus } = generate_instance(&InstanceSpec::network(8, 1, 1.0)).unwrap() else {
        unreachable!()
    };
    let oracle = NetOracle::new(net.clone(), corpus.clone(), 4, 2).unwrap();
    let mut violations = 0;
    let mut min_gap = f64::INFINITY;
    for p in 0..5 {
        let order = spqe::sampled_order(8, 77, p);
        let mut coalition = Coalition::full(8);
        for k in 1..=8 {
            coalition.remove(order[k - 1]);
            let progressive = oracle.evaluate(&coalition).unwrap();
            let mut states = oracle.states_for(&Coalition::full(8));
            for &t in &order[..k] {
                states[t] = LayerState::Zeroed;
            }
            let pruned = net.nll_for_states(&states, &corpus).unwrap();
            min_gap = min_gap.min(pruned - progressive);
            if !(progressive.is_finite() && progressive < pruned) {
                violations += 1;
            }
        }
    }
    Outcome {
        passed: violations == 0,
        detail: format!("40 prefixes, {violations} violations, smallest pruned - progressive gap {min_gap:.4}"),
    }
}

fn baseline_head_to_head() -> Outcome {
    let targets = [2.5, 3.0, 3.5];
    let cells: Vec<(usize, usize)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let mut config = RunConfig::new(InstanceSpec::network(8, seed, 1.0));
            config.target_avg_bits = targets.to_vec();
            config.methods = vec![Method::Impq, Method::Zd, Method::Lim, Method::LlmMq, Method::Activation];
            let inst = generate_instance(&config.instance).unwrap();
            let cmp = pipeline::compare(&inst, &config).unwrap();
            let mut wins = 0;
            for t in targets {
                let cell: Vec<_> = cmp.rows.iter().filter(|r| r.target_bits == Some(t)).collect();
                let impq = cell.iter().find(|r| r.method == Method::Impq).unwrap().payoff;
                let best = cell
                    .iter()
                    .filter(|r| r.method != Method::Impq)
                    .map(|r| r.payoff)
                    .fold(f64::INFINITY, f64::min);
                if impq <= best {
                    wins += 1;
                }
            }
            (wins, targets.len())
        })
        .collect();
    let wins: usize = cells.iter().map(|c| c.0).sum();
    let total: usize = cells.iter().map(|c| c.1).sum();
    let share = wins as f64 / total as f64;
    Outcome {
        passed: share >= 0.6,
        detail: format!("IMPQ <= best baseline on {wins}/{total} cells ({:.1}%, need 60%)", 100.0 * share),
    }
}

fn cli(args: &[&str]) -> i32 {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = impq::cli::run(std::iter::once("impq").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        eprintln!("{}", String::from_utf8_lossy(&err));
    }
    code
}

fn pipeline_run(dir: &Path) -> bool {
    let d = dir.to_str().unwrap();
    let inst = format!("{d}/instance.json");
    let net_dir = format!("{d}/net");
    [
        vec!["gen-instance", "--kind", "quadratic", "--layers", "6", "--seed", "1", "--out-dir", d],
        vec!["estimate", "--instance", &inst, "--samples", "24", "--out-dir", d],
        vec!["allocate", "--instance", &inst, "--target-bits", "3.0", "--out-dir", d],
        vec!["gen-instance", "--kind", "network", "--layers", "4", "--seed", "2", "--corpus-size", "160", "--out-dir", &net_dir],
        vec!["compare", "--instance", &format!("{net_dir}/instance.json"), "--samples", "20", "--out-dir", &net_dir],
    ]
    .iter()
    .all(|args| cli(args) == 0)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if !(pipeline_run(a.path()) && pipeline_run(b.path())) {
        return Outcome {
            passed: false,
            detail: "a CLI invocation failed".into(),
        };
    }
    let mut files = Vec::new();
    for sub in ["", "net"] {
        for e in fs::read_dir(a.path().join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                files.push(p.strip_prefix(a.path()).unwrap().to_path_buf());
            }
        }
    }
    files.sort();
    let mut differing = 0;
    let mut non_round_trip = 0;
    let mut documents = 0;
    for f in &files {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        if x != y {
            differing += 1;
        }
        if f.extension().is_some_and(|e| e == "json") {
            documents += 1;
            let checks = pipeline::verify_paths(&[a.path().join(f)]).unwrap();
            if checks.iter().any(|c| c.check == "round_trip" && !c.passed) {
                non_round_trip += 1;
            }
        }
    }
    let verified = pipeline::verify_paths(&[a.path().to_path_buf(), a.path().join("net")]).unwrap();
    let failed_checks = verified.iter().filter(|c| !c.passed).count();
    Outcome {
        passed: differing == 0 && non_round_trip == 0 && failed_checks == 0 && documents >= 8,
        detail: format!(
            "{} files ({documents} documents): {differing} differ between runs, {non_round_trip} fail round trip, {failed_checks} failed verify checks",
            files.len()
        ),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "shapley exactness", secs(10), shapley_exactness),
        criterion(2, "efficiency invariant", secs(60), efficiency),
        criterion(3, "estimator convergence", secs(300), convergence),
        criterion(4, "allocator optimality", secs(300), allocator_optimality),
        criterion(5, "linearization fidelity", secs(60), linearization),
        criterion(6, "interaction benefit", secs(300), interaction_benefit),
        criterion(7, "alpha interior behavior", secs(600), alpha_interior),
        criterion(8, "progressive vs pruning", secs(120), progressive_vs_pruning),
        criterion(9, "baseline head-to-head", secs(1200), baseline_head_to_head),
        criterion(10, "determinism and round trip", secs(60), determinism),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed}/{} criteria passed", results.len());
    // Failing criteria are reported, not fatal, unless strict mode is asked for.
    if passed != results.len() && std::env::var_os("IMPQ_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
