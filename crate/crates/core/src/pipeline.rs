//! End-to-end runs: instance → SPQE → interaction model → allocation, plus
//! method comparisons, ablation sweeps and artifact verification.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{self, Allocation, AllocationProblem, Solver};
use crate::baselines::{self, BaselineMethod, LayerScoreReport};
use crate::doc;
use crate::error::{Error, Result};
use crate::game::{self, Coalition, ValueOracle};
use crate::interaction::{self, InteractionModel, DEFAULT_ALPHA};
use crate::spqe::{self, MarginalMatrix, ShapleyEstimate};
use crate::surrogate::{
    generate_instance, Instance, InstanceDocument, InstanceSpec, NetOracle, QuadraticSurrogate, DEFAULT_B_HIGH,
    DEFAULT_B_LOW,
};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_TARGET_BITS: f64 = 3.0;

/// Default sample-count grid of the samples sweep.
pub const SAMPLE_GRID: [usize; 7] = [10, 20, 40, 80, 160, 320, 640];
/// Default grid of the alpha sweep.
pub const ALPHA_GRID: [f64; 3] = [0.0, 0.5, 1.0];

/// Shapley errors in the samples sweep are only computed up to this many layers.
pub const SWEEP_EXACT_MAX_LAYERS: usize = 12;

// Keeps the permutation streams apart from the instance generator's streams
// when both derive from the same user seed.
const SAMPLING_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Standard file names inside an output directory.
pub mod files {
    pub const INSTANCE: &str = "instance.json";
    pub const MARGINALS: &str = "marginal_matrix.json";
    pub const ESTIMATE: &str = "shapley_estimate.json";
    pub const MODEL: &str = "interaction_model.json";
    pub const PROBLEM: &str = "allocation_problem.json";
    pub const ALLOCATION: &str = "allocation.json";
    pub const COMPARE: &str = "compare.csv";
    pub const ABLATE_SAMPLES: &str = "ablate_samples.csv";
    pub const ABLATE_ALPHA: &str = "ablate_alpha.csv";

    pub fn layer_scores(method: super::BaselineMethod) -> String {
        format!("layer_scores_{method}.json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    Impq,
    /// IMPQ with `α = 1`: interactions dropped, only per-layer variances kept.
    Diagonal,
    Zd,
    Lim,
    LlmMq,
    Activation,
}

impl Method {
    pub fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Method::Impq | Method::Diagonal => None,
            Method::Zd => Some(BaselineMethod::Zd),
            Method::Lim => Some(BaselineMethod::Lim),
            Method::LlmMq => Some(BaselineMethod::LlmMq),
            Method::Activation => Some(BaselineMethod::Activation),
        }
    }

    pub fn name(self) -> &'static str {
        match self.baseline() {
            Some(b) => b.name(),
            None if self == Method::Impq => "impq",
            None => "diagonal",
        }
    }

    /// Methods compared when the config lists none.
    pub fn defaults_for(instance: &Instance) -> Vec<Method> {
        match instance {
            Instance::Quadratic(_) => vec![Method::Impq, Method::Diagonal],
            Instance::Network { .. } => vec![
                Method::Impq,
                Method::Diagonal,
                Method::Zd,
                Method::Lim,
                Method::LlmMq,
                Method::Activation,
            ],
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    AverageBits(f64),
    Budget(f64),
}

impl Target {
    pub fn average_bits(self) -> Option<f64> {
        match self {
            Target::AverageBits(b) => Some(b),
            Target::Budget(_) => None,
        }
    }
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_b_low() -> u32 {
    DEFAULT_B_LOW
}
fn default_b_high() -> u32 {
    DEFAULT_B_HIGH
}
fn default_targets() -> Vec<f64> {
    vec![DEFAULT_TARGET_BITS]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a run needs; stored as TOML.
///
/// ```toml
/// version = 1
/// samples = 100
/// alpha = 0.5
/// target_avg_bits = [2.5, 3.0, 3.5]
/// output_dir = "out"
///
/// [instance]
/// kind = "network"
/// layers = 8
/// seed = 1
/// interaction_strength = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub instance: InstanceSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Seed of the permutation sampler; derived from the instance seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_seed: Option<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_b_low")]
    pub b_low: u32,
    #[serde(default = "default_b_high")]
    pub b_high: u32,
    #[serde(default = "default_targets")]
    pub target_avg_bits: Vec<f64>,
    /// Explicit promotion budget in bytes; replaces `target_avg_bits` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    /// Empty means every method applicable to the instance.
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(instance: InstanceSpec) -> Self {
        Self {
            version: CONFIG_VERSION,
            instance,
            samples: DEFAULT_SAMPLES,
            sampling_seed: None,
            alpha: DEFAULT_ALPHA,
            b_low: DEFAULT_B_LOW,
            b_high: DEFAULT_B_HIGH,
            target_avg_bits: default_targets(),
            budget: None,
            methods: Vec::new(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Document(format!(
                "config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("samples must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if self.budget.is_none() && self.target_avg_bits.is_empty() {
            return Err(Error::InvalidParameter("no target average bits and no budget".into()));
        }
        Ok(())
    }

    pub fn sampling_seed(&self) -> u64 {
        self.sampling_seed
            .unwrap_or(self.instance.seed ^ SAMPLING_SEED_MIX)
    }

    pub fn targets(&self) -> Vec<Target> {
        match self.budget {
            Some(b) => vec![Target::Budget(b)],
            None => self.target_avg_bits.iter().map(|&t| Target::AverageBits(t)).collect(),
        }
    }

    pub fn bits(&self) -> (u32, u32) {
        (self.b_high, self.b_low)
    }
}

/// Payoff oracle of either instance kind.
pub enum InstanceOracle {
    Quadratic(QuadraticSurrogate),
    Network(NetOracle),
}

impl InstanceOracle {
    pub fn new(instance: &Instance, b_high: u32, b_low: u32) -> Result<Self> {
        Ok(match instance {
            Instance::Quadratic(q) => {
                q.validate()?;
                InstanceOracle::Quadratic(q.clone())
            }
            Instance::Network { net, corpus } => {
                InstanceOracle::Network(NetOracle::new(net.clone(), corpus.clone(), b_high, b_low)?)
            }
        })
    }

    /// `exp(payoff)` for the network, where the payoff is a mean NLL.
    pub fn perplexity(&self, payoff: f64) -> Option<f64> {
        match self {
            InstanceOracle::Quadratic(_) => None,
            InstanceOracle::Network(_) => Some(payoff.exp()),
        }
    }
}

impl ValueOracle for InstanceOracle {
    fn layer_count(&self) -> usize {
        match self {
            InstanceOracle::Quadratic(q) => q.layer_count(),
            InstanceOracle::Network(n) => n.layer_count(),
        }
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<f64> {
        match self {
            InstanceOracle::Quadratic(q) => q.evaluate(coalition),
            InstanceOracle::Network(n) => n.evaluate(coalition),
        }
    }

    fn fingerprint(&self) -> String {
        match self {
            InstanceOracle::Quadratic(q) => q.fingerprint(),
            InstanceOracle::Network(n) => n.fingerprint(),
        }
    }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<InstanceDocument> {
    doc::read(path)
}

pub fn instance_document(spec: &InstanceSpec) -> Result<InstanceDocument> {
    Ok(InstanceDocument {
        spec: spec.clone(),
        instance: generate_instance(spec)?,
    })
}

pub fn build_problem(
    sensitivities: Vec<f64>,
    interactions: DMatrix<f64>,
    param_counts: Vec<u64>,
    target: Target,
    b_low: u32,
    b_high: u32,
) -> Result<AllocationProblem> {
    match target {
        Target::AverageBits(bits) => {
            AllocationProblem::from_target_bits(sensitivities, interactions, param_counts, bits, b_low, b_high)
        }
        Target::Budget(budget) => {
            let p = AllocationProblem {
                costs: allocator::promotion_costs(&param_counts, b_low, b_high),
                sensitivities,
                interactions,
                budget,
                param_counts,
                b_low,
                b_high,
            };
            p.validate()?;
            Ok(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpqRun {
    pub model: InteractionModel,
    pub problem: AllocationProblem,
    pub allocation: Allocation,
}

/// Interaction model at `alpha` and its exact allocation under `target`.
pub fn impq_allocate(
    matrix: &MarginalMatrix,
    estimate: &ShapleyEstimate,
    alpha: f64,
    param_counts: &[u64],
    target: Target,
) -> Result<ImpqRun> {
    let model = InteractionModel::build(matrix, estimate, alpha)?;
    let problem = build_problem(
        model.sensitivities.clone(),
        model.interactions.clone(),
        param_counts.to_vec(),
        target,
        matrix.b_low,
        matrix.b_high,
    )?;
    let allocation = allocator::solve_exact(&problem)?;
    Ok(ImpqRun {
        model,
        problem,
        allocation,
    })
}

/// Oracle payoff at the coalition of promoted layers.
pub fn true_payoff<O: ValueOracle + ?Sized>(oracle: &O, q: &[bool]) -> Result<f64> {
    oracle.evaluate(&Coalition::from_demotion_flags(q)?)
}

/// SPQE run plus its column statistics.
pub fn estimate_run<O: ValueOracle + ?Sized>(
    oracle: &O,
    samples: usize,
    seed: u64,
    bits: (u32, u32),
) -> Result<(MarginalMatrix, ShapleyEstimate)> {
    let matrix = spqe::run_spqe(oracle, samples, seed, bits)?;
    let est = spqe::estimate(&matrix)?;
    Ok((matrix, est))
}

/// First `m` permutations of a sampled run, which equal a run with `samples = m`.
pub fn truncate(matrix: &MarginalMatrix, m: usize) -> Result<MarginalMatrix> {
    if m == 0 || m > matrix.sample_count {
        return Err(Error::InvalidParameter(format!(
            "cannot take {m} of {} permutations",
            matrix.sample_count
        )));
    }
    let mut out = matrix.clone();
    out.sample_count = m;
    out.rows.truncate(m);
    out.orders.truncate(m);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub target_bits: Option<f64>,
    pub budget: f64,
    pub average_bits: f64,
    /// Promoted layer indices, `;`-separated.
    pub promoted: String,
    pub payoff: f64,
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub scores: Vec<LayerScoreReport>,
}

fn promoted_list(q: &[bool]) -> String {
    (0..q.len())
        .filter(|&i| !q[i])
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per `(target, method)`, targets outermost, methods in config order.
pub fn compare(instance: &Instance, config: &RunConfig) -> Result<Comparison> {
    config.validate()?;
    let methods = if config.methods.is_empty() {
        Method::defaults_for(instance)
    } else {
        config.methods.clone()
    };
    let oracle = InstanceOracle::new(instance, config.b_high, config.b_low)?;
    let param_counts = instance.param_counts();

    let needs_spqe = methods.iter().any(|m| m.baseline().is_none());
    let spqe = if needs_spqe {
        Some(estimate_run(&oracle, config.samples, config.sampling_seed(), config.bits())?)
    } else {
        None
    };

    let mut scores = BTreeMap::new();
    for m in &methods {
        if let Some(b) = m.baseline() {
            let Instance::Network { net, corpus } = instance else {
                return Err(Error::InvalidParameter(format!("method {m} needs a network instance")));
            };
            if !scores.contains_key(&b) {
                scores.insert(b, baselines::score_layers(net, corpus, b, instance_seed(config), config.b_low)?);
            }
        }
    }

    let cells: Vec<(Target, Method)> = config
        .targets()
        .into_iter()
        .flat_map(|t| methods.iter().map(move |&m| (t, m)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(target, method)| {
            let allocation = match method.baseline() {
                None => {
                    let (matrix, est) = spqe.as_ref().expect("SPQE ran for IMPQ methods");
                    let alpha = if method == Method::Diagonal { 1.0 } else { config.alpha };
                    impq_allocate(matrix, est, alpha, &param_counts, target)?.allocation
                }
                Some(b) => {
                    let l = param_counts.len();
                    let template = build_problem(
                        vec![0.0; l],
                        DMatrix::zeros(l, l),
                        param_counts.clone(),
                        target,
                        config.b_low,
                        config.b_high,
                    )?;
                    baselines::allocate_baseline(&scores[&b], &template)?
                }
            };
            let payoff = true_payoff(&oracle, &allocation.q)?;
            let budget = match target {
                Target::Budget(b) => b,
                Target::AverageBits(bits) => allocator::budget_from_target_bits(
                    &allocator::promotion_costs(&param_counts, config.b_low, config.b_high),
                    &param_counts,
                    bits,
                    config.b_low,
                    config.b_high,
                )?,
            };
            Ok(ComparisonRow {
                method,
                target_bits: target.average_bits(),
                budget,
                average_bits: allocation.average_bits,
                promoted: promoted_list(&allocation.q),
                payoff,
                perplexity: oracle.perplexity(payoff),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        rows,
        scores: scores.into_values().collect(),
    })
}

fn instance_seed(config: &RunConfig) -> u64 {
    config.instance.seed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSweepRow {
    pub samples: usize,
    pub payoff: f64,
    /// `(payoff − payoff at the smallest M) / |payoff at the smallest M|`.
    pub relative_delta: f64,
    /// Max-abs error of the Shapley estimate against exact enumeration.
    pub phi_error: Option<f64>,
    pub promoted: String,
}

/// Allocated payoff as the SPQE sample count grows along a nested seed ladder.
pub fn ablate_samples(instance: &Instance, config: &RunConfig, grid: &[usize]) -> Result<Vec<SampleSweepRow>> {
    config.validate()?;
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::InvalidParameter("sample grid must be non-empty and positive".into()));
    }
    let oracle = InstanceOracle::new(instance, config.b_high, config.b_low)?;
    let target = config.targets()[0];
    let param_counts = instance.param_counts();
    let max_m = *grid.iter().max().unwrap();
    let full = spqe::run_spqe(&oracle, max_m, config.sampling_seed(), config.bits())?;
    let exact = if instance.layer_count() <= SWEEP_EXACT_MAX_LAYERS {
        Some(game::exact_shapley(&oracle)?.phi)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(grid.len());
    for &m in grid {
        let matrix = truncate(&full, m)?;
        let est = spqe::estimate(&matrix)?;
        let run = impq_allocate(&matrix, &est, config.alpha, &param_counts, target)?;
        let payoff = true_payoff(&oracle, &run.allocation.q)?;
        let phi_error = exact.as_ref().map(|phi| {
            phi.iter()
                .zip(&est.phi_hat)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        rows.push(SampleSweepRow {
            samples: m,
            payoff,
            relative_delta: 0.0,
            phi_error,
            promoted: promoted_list(&run.allocation.q),
        });
    }
    let smallest = grid.iter().enumerate().min_by_key(|(_, &m)| m).unwrap().0;
    let base = rows[smallest].payoff;
    for r in &mut rows {
        r.relative_delta = if base == 0.0 { 0.0 } else { (r.payoff - base) / base.abs() };
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    pub payoff: f64,
    pub objective: f64,
    pub promoted: String,
}

/// Allocated payoff for each shrinkage level, all from one SPQE run.
pub fn ablate_alpha(instance: &Instance, config: &RunConfig, grid: &[f64]) -> Result<Vec<AlphaSweepRow>> {
    config.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidParameter("alpha grid is empty".into()));
    }
    let oracle = InstanceOracle::new(instance, config.b_high, config.b_low)?;
    let target = config.targets()[0];
    let param_counts = instance.param_counts();
    let (matrix, est) = estimate_run(&oracle, config.samples, config.sampling_seed(), config.bits())?;
    grid.iter()
        .map(|&alpha| {
            let run = impq_allocate(&matrix, &est, alpha, &param_counts, target)?;
            Ok(AlphaSweepRow {
                alpha,
                payoff: true_payoff(&oracle, &run.allocation.q)?,
                objective: run.allocation.objective,
                promoted: promoted_list(&run.allocation.q),
            })
        })
        .collect()
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Document(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Document(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Document(e.to_string()))
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, csv_string(rows)?)?;
    Ok(())
}

/// Outcome of one invariant checked by [`verify_paths`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub file: String,
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Default)]
struct Loaded {
    instance: Option<InstanceDocument>,
    matrix: Option<MarginalMatrix>,
    estimate: Option<ShapleyEstimate>,
    problem: Option<AllocationProblem>,
}

const EFFICIENCY_TOL: f64 = 1e-9;

/// Re-checks stored artifacts: byte-identical round trips, plus the
/// invariants of each document kind and the consistency of documents that
/// sit in the same directory. Directories are scanned for `*.json`.
pub fn verify_paths(paths: &[PathBuf]) -> Result<Vec<Check>> {
    let mut groups: BTreeMap<PathBuf, Vec<PathBuf>> = BTreeMap::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.retain(|e| e.extension().is_some_and(|x| x == "json"));
            entries.sort();
            groups.entry(p.clone()).or_default().extend(entries);
        } else {
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            groups.entry(dir).or_default().push(p.clone());
        }
    }
    let mut checks = Vec::new();
    for files in groups.values() {
        verify_group(files, &mut checks)?;
    }
    Ok(checks)
}

fn push(checks: &mut Vec<Check>, file: &Path, check: &'static str, result: std::result::Result<(), String>) {
    checks.push(Check {
        file: file.display().to_string(),
        check,
        passed: result.is_ok(),
        detail: result.err().unwrap_or_default(),
    });
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn round_trip<T: doc::Artifact>(text: &str) -> (std::result::Result<(), String>, Option<T>) {
    match doc::from_str::<T>(text) {
        Err(e) => (Err(e.to_string()), None),
        Ok(v) => {
            let same = doc::to_string(&v).map(|s| s == text).unwrap_or(false);
            (ensure(same, || "re-serialized bytes differ".into()), Some(v))
        }
    }
}

fn verify_group(files: &[PathBuf], checks: &mut Vec<Check>) -> Result<()> {
    // Read everything first so cross-document checks can run in any file order.
    let mut texts = Vec::new();
    let mut loaded = Loaded::default();
    for f in files {
        let text = fs::read_to_string(f)?;
        let kind = doc::kind_of(&text).map_err(|e| Error::Document(format!("{}: {e}", f.display())))?;
        match kind.as_str() {
            "instance" => loaded.instance = doc::from_str(&text).ok(),
            "marginal_matrix" => loaded.matrix = doc::from_str(&text).ok(),
            "shapley_estimate" => loaded.estimate = doc::from_str(&text).ok(),
            "allocation_problem" => loaded.problem = doc::from_str(&text).ok(),
            _ => {}
        }
        texts.push((f, kind, text));
    }

    for (f, kind, text) in &texts {
        let f = f.as_path();
        match kind.as_str() {
            "instance" => {
                let (rt, v) = round_trip::<InstanceDocument>(text);
                push(checks, f, "round_trip", rt);
                if let Some(d) = v {
                    let regen = generate_instance(&d.spec).map_err(|e| e.to_string());
                    push(
                        checks,
                        f,
                        "regenerates_from_spec",
                        regen.and_then(|i| ensure(i == d.instance, || "instance differs from its spec".into())),
                    );
                }
            }
            "marginal_matrix" => {
                let (rt, v) = round_trip::<MarginalMatrix>(text);
                push(checks, f, "round_trip", rt);
                if let Some(m) = v {
                    push(checks, f, "shape", m.validate().map_err(|e| e.to_string()));
                    let tol = EFFICIENCY_TOL * m.total_gain().abs().max(1.0);
                    let r = m.max_efficiency_residual();
                    push(checks, f, "efficiency", ensure(r <= tol, || format!("row residual {r:e}")));
                }
            }
            "shapley_estimate" => {
                let (rt, v) = round_trip::<ShapleyEstimate>(text);
                push(checks, f, "round_trip", rt);
                if let (Some(e), Some(m)) = (v, &loaded.matrix) {
                    let again = spqe::estimate(m).map_err(|e| e.to_string());
                    push(
                        checks,
                        f,
                        "matches_marginals",
                        again.and_then(|a| ensure(a == e, || "column statistics differ".into())),
                    );
                }
            }
            "interaction_model" => {
                let (rt, v) = round_trip::<InteractionModel>(text);
                push(checks, f, "round_trip", rt);
                if let Some(model) = v {
                    push(
                        checks,
                        f,
                        "symmetric",
                        ensure(
                            crate::linalg::is_symmetric(&model.covariance, 0.0)
                                && crate::linalg::is_symmetric(&model.interactions, 0.0),
                            || "asymmetric matrix".into(),
                        ),
                    );
                    let shrunk = interaction::shrink(&model.covariance, model.alpha).map_err(|e| e.to_string());
                    push(
                        checks,
                        f,
                        "shrinkage",
                        shrunk.and_then(|k| ensure(k == model.interactions, || "K differs from shrink(C)".into())),
                    );
                    if let Some(e) = &loaded.estimate {
                        let a = interaction::extract_sensitivities(e, &model.interactions).map_err(|e| e.to_string());
                        push(
                            checks,
                            f,
                            "sensitivities",
                            a.and_then(|a| ensure(a == model.sensitivities, || "a differs from phi − row sums".into())),
                        );
                    }
                }
            }
            "allocation_problem" => {
                let (rt, v) = round_trip::<AllocationProblem>(text);
                push(checks, f, "round_trip", rt);
                if let Some(p) = v {
                    push(checks, f, "valid", p.validate().map_err(|e| e.to_string()));
                }
            }
            "allocation" => {
                let (rt, v) = round_trip::<Allocation>(text);
                push(checks, f, "round_trip", rt);
                if let (Some(a), Some(p)) = (v, &loaded.problem) {
                    push(
                        checks,
                        f,
                        "within_budget",
                        ensure(a.q.len() == p.layer_count() && p.is_feasible(&a.q), || {
                            format!("promoted {} of budget {}", a.promoted_bytes, p.budget)
                        }),
                    );
                    let obj = allocator::evaluate_objective(p, &a.q).map_err(|e| e.to_string());
                    push(
                        checks,
                        f,
                        "objective",
                        obj.and_then(|o| ensure(o == a.objective, || format!("stored {} vs {o}", a.objective))),
                    );
                    if a.solver == Solver::Exact && p.layer_count() <= allocator::EXHAUSTIVE_MAX_LAYERS {
                        let x = allocator::solve_exhaustive(p).map_err(|e| e.to_string());
                        push(
                            checks,
                            f,
                            "optimal",
                            x.and_then(|x| ensure(x.q == a.q, || "differs from exhaustive optimum".into())),
                        );
                    }
                }
            }
            "layer_scores" => {
                let (rt, v) = round_trip::<LayerScoreReport>(text);
                push(checks, f, "round_trip", rt);
                if let Some(r) = v {
                    push(
                        checks,
                        f,
                        "finite",
                        ensure(r.scores.iter().all(|s| s.is_finite()), || "non-finite score".into()),
                    );
                    if let Some(InstanceDocument {
                        instance: Instance::Network { net, corpus },
                        ..
                    }) = &loaded.instance
                    {
                        let b_low = r.notes.get("bits").and_then(|b| b.parse().ok()).unwrap_or(DEFAULT_B_LOW);
                        let again = baselines::score_layers(net, corpus, r.method, r.calibration_seed, b_low)
                            .map_err(|e| e.to_string());
                        push(
                            checks,
                            f,
                            "recomputes",
                            again.and_then(|a| ensure(a.scores == r.scores, || "scores differ".into())),
                        );
                    }
                }
            }
            other => push(checks, f, "known_kind", Err(format!("unknown document kind {other:?}"))),
        }
    }
    Ok(())
}
