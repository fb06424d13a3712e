use std::borrow::Borrow;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{check_coalition, Coalition, ValueOracle};
use crate::linalg;
use crate::surrogate::quantize::fake_quantize;

/// Fully connected tanh network: `h ← tanh(W_t h + b_t)` for each of the
/// `layer_count` square layers, then `logits = head · h`.
///
/// Only the square layer matrices take part in quantization; biases and the
/// head stay at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredNet {
    pub layer_count: usize,
    pub width: usize,
    pub classes: usize,
    #[serde(with = "linalg::rows_vec")]
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(with = "linalg::rows")]
    pub head: DMatrix<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    #[serde(with = "linalg::rows")]
    pub inputs: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl SyntheticCorpus {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Corpus restricted to the given sample indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> SyntheticCorpus {
        let inputs = self.inputs.select_rows(indices);
        SyntheticCorpus {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            seed: self.seed,
        }
    }
}

/// How a layer's weights enter a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerState {
    Full,
    Quantized(u32),
    Zeroed,
}

impl LayeredNet {
    pub fn validate(&self) -> Result<()> {
        let (l, d, v) = (self.layer_count, self.width, self.classes);
        if l == 0 || l > crate::game::MAX_LAYERS || d == 0 || v < 2 {
            return Err(Error::InvalidParameter(format!(
                "invalid net shape: layers {l}, width {d}, classes {v}"
            )));
        }
        if self.weights.len() != l
            || self.biases.len() != l
            || self.weights.iter().any(|w| w.shape() != (d, d))
            || self.biases.iter().any(|b| b.len() != d)
            || self.head.shape() != (v, d)
        {
            return Err(Error::DimensionMismatch("layered net tensors".into()));
        }
        let finite = self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().flatten().all(|x| x.is_finite())
            && self.head.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite net parameter".into()));
        }
        Ok(())
    }

    pub fn validate_corpus(&self, corpus: &SyntheticCorpus) -> Result<()> {
        if corpus.is_empty() {
            return Err(Error::InvalidParameter("empty corpus".into()));
        }
        if corpus.inputs.shape() != (corpus.labels.len(), self.width) {
            return Err(Error::DimensionMismatch(format!(
                "corpus inputs {:?}, expected ({}, {})",
                corpus.inputs.shape(),
                corpus.labels.len(),
                self.width
            )));
        }
        if let Some(&bad) = corpus.labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::DimensionMismatch(format!(
                "label {bad} outside {} classes",
                self.classes
            )));
        }
        Ok(())
    }

    /// Parameter count of each quantizable layer.
    pub fn layer_param_counts(&self) -> Vec<u64> {
        self.weights.iter().map(|w| w.len() as u64).collect()
    }

    /// Per-layer weight tensors for the given layer states.
    pub fn materialize(&self, states: &[LayerState]) -> Result<Vec<DMatrix<f64>>> {
        if states.len() != self.layer_count {
            return Err(Error::DimensionMismatch(format!(
                "{} layer states for {} layers",
                states.len(),
                self.layer_count
            )));
        }
        self.weights
            .iter()
            .zip(states)
            .map(|(w, s)| match *s {
                LayerState::Full => Ok(w.clone()),
                LayerState::Quantized(bits) => fake_quantize(w, bits),
                LayerState::Zeroed => Ok(DMatrix::zeros(w.nrows(), w.ncols())),
            })
            .collect()
    }

    /// Activations of a batch: element 0 is the input, element `t + 1` the
    /// output of layer `t`.
    pub fn hidden_states<W: Borrow<DMatrix<f64>>>(
        &self,
        weights: &[W],
        inputs: &DMatrix<f64>,
    ) -> Vec<DMatrix<f64>> {
        let mut states = Vec::with_capacity(self.layer_count + 1);
        states.push(inputs.clone());
        for (w, b) in weights.iter().zip(&self.biases) {
            let prev = states.last().unwrap();
            let mut z = prev * w.borrow().transpose();
            for mut row in z.row_iter_mut() {
                for (x, bias) in row.iter_mut().zip(b) {
                    *x = (*x + bias).tanh();
                }
            }
            states.push(z);
        }
        states
    }

    pub fn logits<W: Borrow<DMatrix<f64>>>(&self, weights: &[W], inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.hidden_states(weights, inputs).pop().unwrap();
        last * self.head.transpose()
    }

    /// Mean negative log-likelihood of the labels under the given weights.
    pub fn mean_nll<W: Borrow<DMatrix<f64>>>(
        &self,
        weights: &[W],
        corpus: &SyntheticCorpus,
    ) -> Result<f64> {
        let logits = self.logits(weights, &corpus.inputs);
        mean_nll_of_logits(&logits, &corpus.labels)
    }

    pub fn nll_for_states(&self, states: &[LayerState], corpus: &SyntheticCorpus) -> Result<f64> {
        let weights = self.materialize(states)?;
        self.mean_nll(&weights, corpus)
    }
}

/// Mean of `-log softmax(logits_k)[label_k]` over the rows.
pub fn mean_nll_of_logits(logits: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (k, row) in logits.row_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss(format!("non-finite logit in sample {k}")));
        }
        let max = row.max();
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[labels[k]];
    }
    let nll = total / labels.len() as f64;
    if !nll.is_finite() {
        return Err(Error::NonFiniteLoss("mean NLL".into()));
    }
    Ok(nll)
}

/// Payoff oracle over a layered net: members of the coalition run at
/// `b_high` bits, the rest at `b_low` bits; payoff is the corpus mean NLL.
pub struct NetOracle {
    net: LayeredNet,
    corpus: SyntheticCorpus,
    b_high: u32,
    b_low: u32,
    high: Vec<DMatrix<f64>>,
    low: Vec<DMatrix<f64>>,
    fingerprint: String,
}

impl NetOracle {
    pub fn new(net: LayeredNet, corpus: SyntheticCorpus, b_high: u32, b_low: u32) -> Result<Self> {
        net.validate()?;
        net.validate_corpus(&corpus)?;
        let high = net.materialize(&vec![LayerState::Quantized(b_high); net.layer_count])?;
        let low = net.materialize(&vec![LayerState::Quantized(b_low); net.layer_count])?;
        let fingerprint = crate::doc::fingerprint_of(&(&net, &corpus, b_high, b_low));
        Ok(Self {
            net,
            corpus,
            b_high,
            b_low,
            high,
            low,
            fingerprint,
        })
    }

    pub fn net(&self) -> &LayeredNet {
        &self.net
    }

    pub fn corpus(&self) -> &SyntheticCorpus {
        &self.corpus
    }

    pub fn bits(&self) -> (u32, u32) {
        (self.b_high, self.b_low)
    }

    /// Layer states induced by a coalition.
    pub fn states_for(&self, coalition: &Coalition) -> Vec<LayerState> {
        (0..self.net.layer_count)
            .map(|t| {
                LayerState::Quantized(if coalition.contains(t) {
                    self.b_high
                } else {
                    self.b_low
                })
            })
            .collect()
    }
}

impl ValueOracle for NetOracle {
    fn layer_count(&self) -> usize {
        self.net.layer_count
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<f64> {
        check_coalition(self.net.layer_count, coalition)?;
        let weights: Vec<&DMatrix<f64>> = (0..self.net.layer_count)
            .map(|t| {
                if coalition.contains(t) {
                    &self.high[t]
                } else {
                    &self.low[t]
                }
            })
            .collect();
        self.net.mean_nll(&weights, &self.corpus)
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}
