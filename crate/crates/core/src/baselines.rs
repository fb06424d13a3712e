//! Layer-importance baselines: Z-score distribution, layer input
//! modification, first-order LLM-MQ sensitivity and activation-norm scoring.
//!
//! Higher scores mean "more important"; every method except LLM-MQ feeds the
//! greedy allocator, LLM-MQ feeds the exact allocator with a purely linear
//! objective.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{self, Allocation, AllocationProblem, Solver};
use crate::doc::Artifact;
use crate::error::{Error, Result};
use crate::surrogate::{fake_quantize, LayeredNet, SyntheticCorpus};

/// Calibration batch size drawn from the corpus.
pub const CALIBRATION_SAMPLES: usize = 128;

/// Central finite-difference step for LLM-MQ gradients.
pub const GRADIENT_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BaselineMethod {
    Zd,
    Lim,
    LlmMq,
    Activation,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 4] = [
        BaselineMethod::Zd,
        BaselineMethod::Lim,
        BaselineMethod::LlmMq,
        BaselineMethod::Activation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Zd => "zd",
            BaselineMethod::Lim => "lim",
            BaselineMethod::LlmMq => "llm_mq",
            BaselineMethod::Activation => "activation",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScoreReport {
    pub method: BaselineMethod,
    pub scores: Vec<f64>,
    pub calibration_seed: u64,
    pub notes: BTreeMap<String, String>,
}

impl Artifact for LayerScoreReport {
    const KIND: &'static str = "layer_scores";
}

/// Fraction of weights whose z-score exceeds 1 (population standard deviation).
/// A constant tensor scores 0.
pub fn zd_score(weights: &DMatrix<f64>) -> Result<f64> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "z-score distribution needs at least two weights".into(),
        ));
    }
    let mean = weights.mean();
    let sigma = (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let outliers = weights.iter().filter(|&&w| (w - mean) / sigma > 1.0).count();
    Ok(outliers as f64 / n as f64)
}

/// Mean over the batch of `−cos(input_k, output_k)`, one vector per row.
pub fn lim_score(inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<f64> {
    if inputs.shape() != outputs.shape() || inputs.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "inputs {:?} vs outputs {:?}",
            inputs.shape(),
            outputs.shape()
        )));
    }
    let mut total = 0.0;
    for (k, (x, y)) in inputs.row_iter().zip(outputs.row_iter()).enumerate() {
        let (nx, ny) = (x.norm(), y.norm());
        if nx == 0.0 || ny == 0.0 {
            return Err(Error::ZeroVector(k));
        }
        total -= x.dot(&y) / (nx * ny);
    }
    Ok(total / inputs.nrows() as f64)
}

/// `|⟨g, W − Q_b(W)⟩|` over the flattened tensors.
pub fn llm_mq_sensitivity(gradient: &DMatrix<f64>, weights: &DMatrix<f64>, bits: u32) -> Result<f64> {
    if gradient.shape() != weights.shape() {
        return Err(Error::ShapeMismatch(format!(
            "gradient {:?} vs weights {:?}",
            gradient.shape(),
            weights.shape()
        )));
    }
    let residual = weights - fake_quantize(weights, bits)?;
    Ok(gradient.dot(&residual).abs())
}

/// `100 · min_j(norm_j) / norm_i`.
pub fn activation_score(hidden_norms: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = hidden_norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::ZeroNorm(i));
    }
    let min = hidden_norms.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(hidden_norms.iter().map(|n| 100.0 * min / n).collect())
}

/// Seeded calibration subset, in ascending sample order.
pub fn calibration_batch(corpus: &SyntheticCorpus, seed: u64) -> SyntheticCorpus {
    let n = corpus.len();
    let take = CALIBRATION_SAMPLES.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, take).into_vec();
    idx.sort_unstable();
    corpus.select(&idx)
}

/// Masked Frobenius norm of each layer's output activations (mask all ones).
pub fn hidden_norms(net: &LayeredNet, batch: &SyntheticCorpus) -> Vec<f64> {
    net.hidden_states(&net.weights, &batch.inputs)[1..]
        .iter()
        .map(|h| h.norm())
        .collect()
}

/// Gradient of the batch mean NLL with respect to layer `t`'s weights, by
/// central finite differences at full precision.
pub fn nll_gradient(net: &LayeredNet, batch: &SyntheticCorpus, layer: usize, step: f64) -> Result<DMatrix<f64>> {
    if layer >= net.layer_count {
        return Err(Error::InvalidParameter(format!("layer {layer} out of range")));
    }
    // Everything before `layer` is unaffected by the perturbation.
    let states = net.hidden_states(&net.weights[..layer], &batch.inputs);
    let entry = states.last().unwrap();
    let suffix = LayeredNet {
        layer_count: net.layer_count - layer,
        width: net.width,
        classes: net.classes,
        weights: net.weights[layer..].to_vec(),
        biases: net.biases[layer..].to_vec(),
        head: net.head.clone(),
        seed: net.seed,
    };
    let shifted = SyntheticCorpus {
        inputs: entry.clone(),
        labels: batch.labels.clone(),
        seed: batch.seed,
    };
    let mut weights = suffix.weights.clone();
    let mut grad = DMatrix::zeros(net.width, net.width);
    for r in 0..net.width {
        for c in 0..net.width {
            let w0 = weights[0][(r, c)];
            weights[0][(r, c)] = w0 + step;
            let plus = suffix.mean_nll(&weights, &shifted)?;
            weights[0][(r, c)] = w0 - step;
            let minus = suffix.mean_nll(&weights, &shifted)?;
            weights[0][(r, c)] = w0;
            grad[(r, c)] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// Per-layer scores of one baseline on a network instance.
pub fn score_layers(
    net: &LayeredNet,
    corpus: &SyntheticCorpus,
    method: BaselineMethod,
    calibration_seed: u64,
    b_low: u32,
) -> Result<LayerScoreReport> {
    net.validate()?;
    net.validate_corpus(corpus)?;
    let mut notes = BTreeMap::new();
    let scores = match method {
        BaselineMethod::Zd => net.weights.iter().map(zd_score).collect::<Result<_>>()?,
        BaselineMethod::Lim => {
            let batch = calibration_batch(corpus, calibration_seed);
            notes.insert("calibration_samples".into(), batch.len().to_string());
            let states = net.hidden_states(&net.weights, &batch.inputs);
            states
                .windows(2)
                .map(|w| lim_score(&w[0], &w[1]))
                .collect::<Result<_>>()?
        }
        BaselineMethod::LlmMq => {
            let batch = calibration_batch(corpus, calibration_seed);
            notes.insert("calibration_samples".into(), batch.len().to_string());
            notes.insert("bits".into(), b_low.to_string());
            notes.insert("gradient".into(), format!("central finite differences, step {GRADIENT_STEP:e}"));
            (0..net.layer_count)
                .map(|t| {
                    let g = nll_gradient(net, &batch, t, GRADIENT_STEP)?;
                    llm_mq_sensitivity(&g, &net.weights[t], b_low)
                })
                .collect::<Result<_>>()?
        }
        BaselineMethod::Activation => {
            let batch = calibration_batch(corpus, calibration_seed);
            notes.insert("calibration_samples".into(), batch.len().to_string());
            activation_score(&hidden_norms(net, &batch))?
        }
    };
    Ok(LayerScoreReport {
        method,
        scores,
        calibration_seed,
        notes,
    })
}

/// Allocation chosen by a baseline under the same promotion budget as IMPQ.
///
/// The returned allocation's objective is the summed score of the layers left
/// at low precision.
pub fn allocate_baseline(report: &LayerScoreReport, template: &AllocationProblem) -> Result<Allocation> {
    let l = template.layer_count();
    if report.scores.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {l} layers",
            report.scores.len()
        )));
    }
    let problem = AllocationProblem {
        sensitivities: report.scores.clone(),
        interactions: DMatrix::zeros(l, l),
        ..template.clone()
    };
    match report.method {
        BaselineMethod::LlmMq => allocator::solve_exact(&problem),
        _ => {
            problem.validate()?;
            let q = allocator::solve_greedy(&report.scores, &problem.costs, problem.budget)?;
            Allocation::from_q(&problem, q, Solver::Greedy, 0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{generate_instance, Instance, InstanceSpec};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zd_examples() {
        assert_eq!(zd_score(&DMatrix::from_element(3, 3, 0.7)).unwrap(), 0.0);
        let w = DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 0.0, 0.0, 10.0]);
        assert_eq!(zd_score(&w).unwrap(), 0.2);
        assert!(zd_score(&DMatrix::from_element(1, 1, 1.0)).is_err());
    }

    #[test]
    fn zd_gaussian_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = DMatrix::from_fn(300, 300, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = zd_score(&w).unwrap();
        assert!((s - 0.1587).abs() < 0.02, "{s}");
    }

    #[test]
    fn lim_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 3.0]);
        assert!((lim_score(&x, &x).unwrap() + 1.0).abs() < 1e-15);
        assert!((lim_score(&x, &(-&x)).unwrap() - 1.0).abs() < 1e-15);
        let y = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 3.0, 0.5]);
        assert!(lim_score(&x, &y).unwrap().abs() < 1e-15);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(lim_score(&x, &z), Err(Error::ZeroVector(1))));
        assert!(matches!(
            lim_score(&x, &DMatrix::zeros(3, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn llm_mq_examples() {
        // already on the 2-bit grid {-1, 0, 1}
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]);
        let g = DMatrix::from_element(2, 2, 3.0);
        assert_eq!(llm_mq_sensitivity(&g, &w, 2).unwrap(), 0.0);

        let w = DMatrix::from_row_slice(1, 3, &[3.0, -3.0, 1.0]);
        let residual = &w - fake_quantize(&w, 2).unwrap();
        let g = &residual / residual.norm();
        let s = llm_mq_sensitivity(&g, &w, 2).unwrap();
        assert!(s > 0.0);
        assert!((s - residual.norm()).abs() < 1e-12);
        assert!(matches!(
            llm_mq_sensitivity(&DMatrix::zeros(2, 2), &w, 2),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn activation_examples() {
        assert_eq!(activation_score(&[2.0, 2.0]).unwrap(), vec![100.0, 100.0]);
        assert_eq!(activation_score(&[1.0, 2.0, 4.0]).unwrap(), vec![100.0, 50.0, 25.0]);
        assert!(matches!(activation_score(&[1.0, 0.0]), Err(Error::ZeroNorm(1))));
    }

    fn small_net() -> (LayeredNet, SyntheticCorpus) {
        let mut spec = InstanceSpec::network(4, 3, 0.5);
        spec.samples = 200;
        match generate_instance(&spec).unwrap() {
            Instance::Network { net, corpus } => (net, corpus),
            _ => unreachable!(),
        }
    }

    #[test]
    fn finite_difference_gradient_matches_directional_derivative() {
        let (net, corpus) = small_net();
        let batch = calibration_batch(&corpus, 1);
        let g = nll_gradient(&net, &batch, 2, GRADIENT_STEP).unwrap();
        // compare against a finite difference along a random direction of the full net
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dir = DMatrix::from_fn(net.width, net.width, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = 1e-5;
        let mut plus = net.weights.clone();
        plus[2] += &dir * eps;
        let mut minus = net.weights.clone();
        minus[2] -= &dir * eps;
        let fd = (net.mean_nll(&plus, &batch).unwrap() - net.mean_nll(&minus, &batch).unwrap()) / (2.0 * eps);
        assert!((fd - g.dot(&dir)).abs() < 1e-6 * fd.abs().max(1.0), "{fd} vs {}", g.dot(&dir));
    }

    #[test]
    fn llm_mq_scores_recomputed_independently() {
        let (net, corpus) = small_net();
        let report = score_layers(&net, &corpus, BaselineMethod::LlmMq, 9, 2).unwrap();
        let batch = calibration_batch(&corpus, 9);
        for t in 0..4 {
            let g = nll_gradient(&net, &batch, t, GRADIENT_STEP).unwrap();
            let q = fake_quantize(&net.weights[t], 2).unwrap();
            let mut dot = 0.0;
            for r in 0..net.width {
                for c in 0..net.width {
                    dot += g[(r, c)] * (net.weights[t][(r, c)] - q[(r, c)]);
                }
            }
            assert!((report.scores[t] - dot.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn score_ranges() {
        let (net, corpus) = small_net();
        for m in BaselineMethod::ALL {
            let r = score_layers(&net, &corpus, m, 4, 2).unwrap();
            assert_eq!(r.scores.len(), 4);
            assert!(r.scores.iter().all(|s| s.is_finite()));
            match m {
                BaselineMethod::Zd => assert!(r.scores.iter().all(|s| (0.0..=1.0).contains(s))),
                BaselineMethod::Lim => assert!(r.scores.iter().all(|s| (-1.0..=1.0).contains(s))),
                BaselineMethod::Activation => {
                    assert!(r.scores.iter().all(|s| *s > 0.0 && *s <= 100.0))
                }
                BaselineMethod::LlmMq => assert!(r.scores.iter().all(|s| *s >= 0.0)),
            }
        }
    }

    fn template(l: usize, target: f64) -> AllocationProblem {
        AllocationProblem::from_target_bits(vec![0.0; l], DMatrix::zeros(l, l), vec![64; l], target, 2, 4).unwrap()
    }

    fn report(method: BaselineMethod, scores: Vec<f64>) -> LayerScoreReport {
        LayerScoreReport {
            method,
            scores,
            calibration_seed: 0,
            notes: BTreeMap::new(),
        }
    }

    #[test]
    fn baseline_allocations() {
        let zd = allocate_baseline(&report(BaselineMethod::Zd, vec![0.3, 0.1, 0.2]), &template(3, 2.0)).unwrap();
        assert_eq!(zd.bits, vec![2, 2, 2]);

        // room for one promotion out of three layers
        let act = allocate_baseline(
            &report(BaselineMethod::Activation, vec![100.0, 50.0, 25.0]),
            &template(3, 2.8),
        )
        .unwrap();
        assert_eq!(act.promoted(), vec![0]);

        let scores = vec![0.4, 0.9, 0.1, 0.5];
        let t = template(4, 3.0);
        let mq = allocate_baseline(&report(BaselineMethod::LlmMq, scores.clone()), &t).unwrap();
        let direct = allocator::solve_exact(&AllocationProblem {
            sensitivities: scores,
            ..t
        })
        .unwrap();
        assert_eq!(mq.q, direct.q);
        assert_eq!(mq.promoted(), vec![1, 3]);
    }

    #[test]
    fn ranking_is_scale_invariant() {
        let t = template(5, 3.0);
        let scores = vec![0.3, 0.7, 0.1, 0.9, 0.5];
        for m in BaselineMethod::ALL {
            let a = allocate_baseline(&report(m, scores.clone()), &t).unwrap();
            let scaled: Vec<f64> = scores.iter().map(|s| s * 37.5).collect();
            let b = allocate_baseline(&report(m, scaled), &t).unwrap();
            assert_eq!(a.q, b.q, "{m}");
        }
    }
}
