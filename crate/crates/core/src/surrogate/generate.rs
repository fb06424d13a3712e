use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MAX_LAYERS;

use super::net::{LayeredNet, SyntheticCorpus};
use super::quadratic::QuadraticSurrogate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Quadratic,
    Network,
}

/// Everything that determines a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub layers: usize,
    pub seed: u64,
    pub interaction_strength: f64,
    /// Hidden width `d` (network only).
    #[serde(default = "default_width")]
    pub width: usize,
    /// Class count `V` (network only).
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Corpus size `N` (network only).
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_width() -> usize {
    16
}
fn default_classes() -> usize {
    8
}
fn default_samples() -> usize {
    512
}

impl InstanceSpec {
    pub fn quadratic(layers: usize, seed: u64, interaction_strength: f64) -> Self {
        Self {
            kind: InstanceKind::Quadratic,
            layers,
            seed,
            interaction_strength,
            width: default_width(),
            classes: default_classes(),
            samples: default_samples(),
        }
    }

    pub fn network(layers: usize, seed: u64, interaction_strength: f64) -> Self {
        Self {
            kind: InstanceKind::Network,
            ..Self::quadratic(layers, seed, interaction_strength)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instance {
    Quadratic(QuadraticSurrogate),
    Network {
        net: LayeredNet,
        corpus: SyntheticCorpus,
    },
}

impl Instance {
    pub fn layer_count(&self) -> usize {
        match self {
            Instance::Quadratic(q) => q.layer_count(),
            Instance::Network { net, .. } => net.layer_count,
        }
    }

    /// Parameter count per quantizable layer. Surrogate layers carry no
    /// tensors, so each is assigned a nominal 4096 parameters.
    pub fn param_counts(&self) -> Vec<u64> {
        match self {
            Instance::Quadratic(q) => vec![SURROGATE_LAYER_PARAMS; q.layer_count()],
            Instance::Network { net, .. } => net.layer_param_counts(),
        }
    }
}

/// A generated instance together with the spec that reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub spec: InstanceSpec,
    pub instance: Instance,
}

impl crate::doc::Artifact for InstanceDocument {
    const KIND: &'static str = "instance";
}

pub const SURROGATE_LAYER_PARAMS: u64 = 4096;

// RNG stream identifiers; each part of an instance draws from its own stream.
const STREAM_LINEAR: u64 = 1;
const STREAM_PAIRS: u64 = 2;
const STREAM_WEIGHTS: u64 = 3;
const STREAM_HEAD: u64 = 4;
const STREAM_CORPUS: u64 = 5;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministically builds an instance from its spec.
pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    if spec.layers == 0 || spec.layers > MAX_LAYERS {
        return Err(Error::InvalidParameter(format!(
            "layer count {} outside 1..={MAX_LAYERS}",
            spec.layers
        )));
    }
    if !(spec.interaction_strength >= 0.0 && spec.interaction_strength.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "interaction strength {} must be finite and non-negative",
            spec.interaction_strength
        )));
    }
    match spec.kind {
        InstanceKind::Quadratic => Ok(Instance::Quadratic(quadratic(spec)?)),
        InstanceKind::Network => {
            if spec.width == 0 || spec.classes < 2 || spec.samples == 0 {
                return Err(Error::InvalidParameter(format!(
                    "network needs width ≥ 1, classes ≥ 2, samples ≥ 1 (got {}, {}, {})",
                    spec.width, spec.classes, spec.samples
                )));
            }
            let (net, corpus) = network(spec)?;
            Ok(Instance::Network { net, corpus })
        }
    }
}

// Pair couplings relative to a unit-scale first-order term. Fitted on the
// layered net: joint demotion of two layers mostly costs less than the sum of
// the two separate demotions, with a spread of either sign.
const PAIR_MEAN: f64 = -0.09;
const PAIR_STD: f64 = 0.14;

fn quadratic(spec: &InstanceSpec) -> Result<QuadraticSurrogate> {
    let l = spec.layers;
    let mut lin = rng_for(spec.seed, STREAM_LINEAR);
    let g_eff: Vec<f64> = (0..l).map(|_| lin.random_range(0.5..1.5)).collect();

    let mut pairs = rng_for(spec.seed, STREAM_PAIRS);
    let mut h_eff = vec![vec![0.0; l]; l];
    for i in 0..l {
        h_eff[i][i] = 0.1 * g_eff[i] * pairs.random::<f64>();
        for j in 0..i {
            let x = spec.interaction_strength * (PAIR_MEAN + PAIR_STD * normal(&mut pairs));
            h_eff[i][j] = x;
            h_eff[j][i] = x;
        }
    }
    QuadraticSurrogate::new(1.0, g_eff, h_eff, spec.seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

const WEIGHT_GAIN: f64 = 1.5;
const BIAS_STD: f64 = 0.1;
const HEAD_GAIN: f64 = 3.0;

fn network(spec: &InstanceSpec) -> Result<(LayeredNet, SyntheticCorpus)> {
    let (l, d, v) = (spec.layers, spec.width, spec.classes);
    // Layers share a common component with weight `rho`, correlating their
    // quantization errors.
    let rho = spec.interaction_strength / (1.0 + spec.interaction_strength);
    let mut rng = rng_for(spec.seed, STREAM_WEIGHTS);
    let std = WEIGHT_GAIN / (d as f64).sqrt();
    let shared = DMatrix::from_fn(d, d, |_, _| normal(&mut rng));
    let mut weights = Vec::with_capacity(l);
    let mut biases = Vec::with_capacity(l);
    for _ in 0..l {
        let own = DMatrix::from_fn(d, d, |_, _| normal(&mut rng));
        weights.push((own * (1.0 - rho).sqrt() + &shared * rho.sqrt()) * std);
        biases.push((0..d).map(|_| BIAS_STD * normal(&mut rng)).collect());
    }

    let mut head_rng = rng_for(spec.seed, STREAM_HEAD);
    let head_std = HEAD_GAIN / (d as f64).sqrt();
    let head = DMatrix::from_fn(v, d, |_, _| head_std * normal(&mut head_rng));

    let net = LayeredNet {
        layer_count: l,
        width: d,
        classes: v,
        weights,
        biases,
        head,
        seed: spec.seed,
    };
    net.validate()?;

    let mut corpus_rng = rng_for(spec.seed, STREAM_CORPUS);
    let inputs = DMatrix::from_fn(spec.samples, d, |_, _| normal(&mut corpus_rng));
    let logits = net.logits(&net.weights, &inputs);
    let labels = logits
        .row_iter()
        .map(|row| {
            // first maximum wins ties
            let mut best = 0;
            for (k, x) in row.iter().enumerate() {
                if *x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    let corpus = SyntheticCorpus {
        inputs,
        labels,
        seed: spec.seed,
    };
    Ok((net, corpus))
}
