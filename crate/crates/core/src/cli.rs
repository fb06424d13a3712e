//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 for usage errors
//! (bad flags, unreadable or invalid config), 2 when a computation fails.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::doc;
use crate::error::Error;
use crate::game::{self, ValueOracle};
use crate::pipeline::{self, files, InstanceOracle, Method, RunConfig, Target, ALPHA_GRID, SAMPLE_GRID};
use crate::spqe::{self, MarginalMatrix, ShapleyEstimate};
use crate::surrogate::{Instance, InstanceDocument, InstanceKind, InstanceSpec};

#[derive(Debug, Parser)]
#[command(name = "impq", version, about = "Shapley-based layer sensitivity and interaction-aware bit allocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded surrogate or network instance.
    GenInstance(GenArgs),
    /// Run permutation sampling and write the marginal matrix and Shapley estimate.
    Estimate(EstimateArgs),
    /// Build the interaction model from a stored estimate and solve the allocation exactly.
    Allocate(AllocateArgs),
    /// Compare IMPQ against the diagonal model and the baselines.
    Compare(RunArgs),
    /// Sweep the sample count or the shrinkage level.
    Ablate(AblateArgs),
    /// Check stored documents for round-trip identity and internal consistency.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Default)]
pub struct InstanceArgs {
    #[arg(long, value_enum)]
    pub kind: Option<InstanceKind>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub interaction_strength: Option<f64>,
    /// Hidden width (network).
    #[arg(long)]
    pub width: Option<usize>,
    /// Class count (network).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Corpus size (network).
    #[arg(long)]
    pub corpus_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML run config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Stored instance document, used instead of regenerating from the spec.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub spec: InstanceArgs,
    /// Permutations sampled (M).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub sampling_seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub b_low: Option<u32>,
    #[arg(long)]
    pub b_high: Option<u32>,
    /// Target average bit-widths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub target_bits: Vec<f64>,
    /// Promotion budget in bytes; replaces the target bits.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Enumerate every permutation instead of sampling.
    #[arg(long)]
    pub enumerate: bool,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory holding the estimate documents; defaults to the output directory.
    #[arg(long)]
    pub estimate_dir: Option<PathBuf>,
    /// Record solver wall time in the allocation document.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Samples,
    Alpha,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(value_enum)]
    pub sweep: Sweep,
    #[command(flatten)]
    pub run: RunArgs,
    /// Sweep values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Documents or directories of documents.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            1
        }
        Err(Failure::Compute(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::GenInstance(a) => gen_instance(a, out),
        Command::Estimate(a) => estimate(a, out),
        Command::Allocate(a) => allocate(a, out),
        Command::Compare(a) => compare(a, out),
        Command::Ablate(a) => ablate(a, out),
        Command::Verify(a) => verify(a, out),
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Compute(Error::Io(e))
}

fn spec_from_flags(a: &InstanceArgs, base: Option<InstanceSpec>) -> std::result::Result<InstanceSpec, Failure> {
    let mut spec = match base {
        Some(s) => s,
        None => {
            let (Some(layers), Some(seed)) = (a.layers, a.seed) else {
                return Err(Failure::Usage(
                    "--layers and --seed are required without a config or instance document".into(),
                ));
            };
            InstanceSpec::quadratic(layers, seed, 1.0)
        }
    };
    if let Some(k) = a.kind {
        spec.kind = k;
    }
    if let Some(l) = a.layers {
        spec.layers = l;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(s) = a.interaction_strength {
        spec.interaction_strength = s;
    }
    if let Some(w) = a.width {
        spec.width = w;
    }
    if let Some(c) = a.classes {
        spec.classes = c;
    }
    if let Some(n) = a.corpus_size {
        spec.samples = n;
    }
    Ok(spec)
}

fn read_config(path: &Path) -> std::result::Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Config after applying flag overrides, plus the instance it runs on.
fn resolve(a: &RunArgs) -> std::result::Result<(RunConfig, Instance), Failure> {
    let file = a.config.as_deref().map(read_config).transpose()?;
    let stored: Option<InstanceDocument> = a
        .instance
        .as_deref()
        .map(|p| pipeline::load_instance(p).map_err(|e| Failure::Usage(e.to_string())))
        .transpose()?;

    let base_spec = stored
        .as_ref()
        .map(|d| d.spec.clone())
        .or_else(|| file.as_ref().map(|c| c.instance.clone()));
    let spec = if stored.is_some() {
        base_spec.unwrap()
    } else {
        spec_from_flags(&a.spec, base_spec)?
    };
    let mut config = file.unwrap_or_else(|| RunConfig::new(spec.clone()));
    config.instance = spec;
    if let Some(m) = a.samples {
        config.samples = m;
    }
    if let Some(s) = a.sampling_seed {
        config.sampling_seed = Some(s);
    }
    if let Some(x) = a.alpha {
        config.alpha = x;
    }
    if let Some(b) = a.b_low {
        config.b_low = b;
    }
    if let Some(b) = a.b_high {
        config.b_high = b;
    }
    if !a.target_bits.is_empty() {
        config.target_avg_bits = a.target_bits.clone();
        config.budget = None;
    }
    if let Some(b) = a.budget {
        config.budget = Some(b);
    }
    if !a.methods.is_empty() {
        config.methods = a.methods.clone();
    }
    if let Some(d) = &a.out_dir {
        config.output_dir = d.clone();
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let instance = match stored {
        Some(d) => d.instance,
        None => pipeline::instance_document(&config.instance)?.instance,
    };
    Ok((config, instance))
}

fn csv_out<T: serde::Serialize>(out: &mut dyn Write, rows: &[T]) -> Outcome {
    out.write_all(pipeline::csv_string(rows)?.as_bytes()).map_err(io)
}

fn gen_instance(a: GenArgs, out: &mut dyn Write) -> Outcome {
    if a.instance.seed.is_none() {
        return Err(Failure::Usage("--seed is required".into()));
    }
    let spec = spec_from_flags(&a.instance, None)?;
    let document = pipeline::instance_document(&spec)?;
    let path = a.out_dir.join(files::INSTANCE);
    doc::write(&path, &document)?;
    #[derive(serde::Serialize)]
    struct Row<'a> {
        kind: InstanceKind,
        layers: usize,
        seed: u64,
        interaction_strength: f64,
        path: &'a str,
    }
    csv_out(
        out,
        &[Row {
            kind: spec.kind,
            layers: spec.layers,
            seed: spec.seed,
            interaction_strength: spec.interaction_strength,
            path: &path.display().to_string(),
        }],
    )
}

#[derive(serde::Serialize)]
struct EstimateSummary {
    layers: usize,
    samples: usize,
    mode: &'static str,
    sum_phi_hat: f64,
    total_gain: f64,
    efficiency_residual: f64,
    max_variance: f64,
    exact_residual: Option<f64>,
}

fn estimate(a: EstimateArgs, out: &mut dyn Write) -> Outcome {
    let (config, instance) = resolve(&a.run)?;
    let oracle = InstanceOracle::new(&instance, config.b_high, config.b_low)?;
    let (matrix, est, mode) = if a.enumerate {
        let m = spqe::enumerate_permutations_mode(&oracle, config.bits())?;
        let e = spqe::estimate(&m)?;
        (m, e, "enumerated")
    } else {
        let (m, e) = pipeline::estimate_run(&oracle, config.samples, config.sampling_seed(), config.bits())?;
        (m, e, "sampled")
    };
    let exact_residual = if a.enumerate {
        let exact = game::exact_shapley(&oracle)?;
        Some(max_abs_diff(&exact.phi, &est.phi_hat))
    } else {
        None
    };
    let dir = &config.output_dir;
    doc::write(dir.join(files::MARGINALS), &matrix)?;
    doc::write(dir.join(files::ESTIMATE), &est)?;
    csv_out(
        out,
        &[EstimateSummary {
            layers: matrix.layer_count,
            samples: matrix.sample_count,
            mode,
            sum_phi_hat: est.phi_hat.iter().sum(),
            total_gain: matrix.total_gain(),
            efficiency_residual: matrix.max_efficiency_residual(),
            max_variance: est.per_layer_variance.iter().copied().fold(0.0, f64::max),
            exact_residual,
        }],
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(serde::Serialize)]
struct AllocationSummary {
    layers: usize,
    target_bits: Option<f64>,
    budget: f64,
    promoted_bytes: f64,
    average_bits: f64,
    objective: f64,
    payoff: f64,
    perplexity: Option<f64>,
    promoted: String,
    nodes: u64,
}

fn allocate(a: AllocateArgs, out: &mut dyn Write) -> Outcome {
    let (config, instance) = resolve(&a.run)?;
    let dir = a.estimate_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    let matrix: MarginalMatrix = doc::read(dir.join(files::MARGINALS))?;
    let est: ShapleyEstimate = doc::read(dir.join(files::ESTIMATE))?;
    let oracle = InstanceOracle::new(&instance, matrix.b_high, matrix.b_low)?;
    if matrix.oracle != oracle.fingerprint() {
        return Err(Failure::Compute(Error::Document(format!(
            "estimate was produced on oracle {} but the instance is {}",
            matrix.oracle,
            oracle.fingerprint()
        ))));
    }
    let target: Target = config.targets()[0];
    let started = Instant::now();
    let mut run = pipeline::impq_allocate(&matrix, &est, config.alpha, &instance.param_counts(), target)?;
    if a.timing {
        run.allocation = run.allocation.with_wall_time(started.elapsed());
    }
    let out_dir = &config.output_dir;
    doc::write(out_dir.join(files::MODEL), &run.model)?;
    doc::write(out_dir.join(files::PROBLEM), &run.problem)?;
    doc::write(out_dir.join(files::ALLOCATION), &run.allocation)?;
    let payoff = pipeline::true_payoff(&oracle, &run.allocation.q)?;
    csv_out(
        out,
        &[AllocationSummary {
            layers: run.problem.layer_count(),
            target_bits: target.average_bits(),
            budget: run.problem.budget,
            promoted_bytes: run.allocation.promoted_bytes,
            average_bits: run.allocation.average_bits,
            objective: run.allocation.objective,
            payoff,
            perplexity: oracle.perplexity(payoff),
            promoted: run
                .allocation
                .promoted()
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            nodes: run.allocation.nodes,
        }],
    )
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

fn compare(a: RunArgs, out: &mut dyn Write) -> Outcome {
    let (config, instance) = resolve(&a)?;
    let cmp = pipeline::compare(&instance, &config)?;
    let dir = &config.output_dir;
    pipeline::write_csv(dir.join(files::COMPARE), &cmp.rows)?;
    for report in &cmp.scores {
        doc::write(dir.join(files::layer_scores(report.method)), report)?;
    }
    writeln!(
        out,
        "{:<11} {:>7} {:>9} {:>12} {:>12}  promoted",
        "method", "target", "avg_bits", "payoff", "perplexity"
    )
    .map_err(io)?;
    for r in &cmp.rows {
        writeln!(
            out,
            "{:<11} {:>7} {:>9.4} {:>12.6} {:>12}  {}",
            r.method.name(),
            r.target_bits.map_or_else(|| "budget".into(), |t| format!("{t}")),
            r.average_bits,
            r.payoff,
            fmt_opt(r.perplexity),
            if r.promoted.is_empty() { "-" } else { &r.promoted }
        )
        .map_err(io)?;
    }
    writeln!(out, "wrote {}", dir.join(files::COMPARE).display()).map_err(io)
}

fn ablate(a: AblateArgs, out: &mut dyn Write) -> Outcome {
    let (config, instance) = resolve(&a.run)?;
    let dir = &config.output_dir;
    match a.sweep {
        Sweep::Samples => {
            let grid: Vec<usize> = if a.grid.is_empty() {
                SAMPLE_GRID.to_vec()
            } else {
                a.grid
                    .iter()
                    .map(|&g| {
                        if g >= 1.0 && g.fract() == 0.0 {
                            Ok(g as usize)
                        } else {
                            Err(Failure::Usage(format!("sample count {g} is not a positive integer")))
                        }
                    })
                    .collect::<std::result::Result<_, _>>()?
            };
            let rows = pipeline::ablate_samples(&instance, &config, &grid)?;
            pipeline::write_csv(dir.join(files::ABLATE_SAMPLES), &rows)?;
            writeln!(out, "{:>7} {:>12} {:>12} {:>12}  promoted", "samples", "payoff", "rel_delta", "phi_error")
                .map_err(io)?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>7} {:>12.6} {:>12.6} {:>12}  {}",
                    r.samples,
                    r.payoff,
                    r.relative_delta,
                    fmt_opt(r.phi_error),
                    r.promoted
                )
                .map_err(io)?;
            }
            writeln!(out, "wrote {}", dir.join(files::ABLATE_SAMPLES).display()).map_err(io)
        }
        Sweep::Alpha => {
            let grid = if a.grid.is_empty() { ALPHA_GRID.to_vec() } else { a.grid.clone() };
            let rows = pipeline::ablate_alpha(&instance, &config, &grid)?;
            pipeline::write_csv(dir.join(files::ABLATE_ALPHA), &rows)?;
            writeln!(out, "{:>5} {:>12} {:>12}  promoted", "alpha", "payoff", "objective").map_err(io)?;
            for r in &rows {
                writeln!(out, "{:>5} {:>12.6} {:>12.6}  {}", r.alpha, r.payoff, r.objective, r.promoted)
                    .map_err(io)?;
            }
            writeln!(out, "wrote {}", dir.join(files::ABLATE_ALPHA).display()).map_err(io)
        }
    }
}

fn verify(a: VerifyArgs, out: &mut dyn Write) -> Outcome {
    for p in &a.paths {
        if !p.exists() {
            return Err(Failure::Usage(format!("{} does not exist", p.display())));
        }
    }
    let checks = pipeline::verify_paths(&a.paths)?;
    csv_out(out, &checks)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Compute(Error::Document(format!(
            "{failed} of {} checks failed",
            checks.len()
        ))));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("impq").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_capture(&["frobnicate"]).0, 1);
        assert_eq!(run_capture(&["gen-instance", "--layers", "4"]).0, 1);
        assert_eq!(run_capture(&["estimate", "--samples", "ten"]).0, 1);
        assert_eq!(run_capture(&["estimate", "--layers", "4"]).0, 1);
        let (code, _, err) = run_capture(&["compare", "--config", "/nonexistent/run.toml"]);
        assert_eq!(code, 1, "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("gen-instance"));
    }

    #[test]
    fn computation_errors_exit_two() {
        // 300 layers is beyond the coalition width
        let (code, _, err) = run_capture(&["gen-instance", "--layers", "300", "--seed", "1", "--out-dir", "/tmp/impq-unused"]);
        assert_eq!(code, 2, "{err}");
    }
}
