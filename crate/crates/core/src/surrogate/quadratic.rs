use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{check_coalition, Coalition, ValueOracle, MAX_LAYERS};

/// Second-order loss model of layer demotion.
///
/// `g_eff[i]` is the first-order loss increase of demoting layer `i` alone and
/// `h_eff[i][j]` the pairwise term that is active when both `i` and `j` are
/// demoted. `v(S) = base_loss + Σ_{i∉S} g_eff[i] + Σ_{i∉S} Σ_{j∉S} h_eff[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurrogate {
    pub base_loss: f64,
    pub g_eff: Vec<f64>,
    pub h_eff: Vec<Vec<f64>>,
    pub seed: u64,
}

impl QuadraticSurrogate {
    pub fn new(base_loss: f64, g_eff: Vec<f64>, h_eff: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let s = Self {
            base_loss,
            g_eff,
            h_eff,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.g_eff.len();
        if l == 0 || l > MAX_LAYERS {
            return Err(Error::InvalidParameter(format!(
                "layer count {l} outside 1..={MAX_LAYERS}"
            )));
        }
        if self.h_eff.len() != l || self.h_eff.iter().any(|r| r.len() != l) {
            return Err(Error::DimensionMismatch(format!(
                "h_eff must be {l}x{l}"
            )));
        }
        for i in 0..l {
            for j in 0..i {
                if self.h_eff[i][j] != self.h_eff[j][i] {
                    return Err(Error::InvalidParameter(format!(
                        "h_eff not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let finite = self.base_loss.is_finite()
            && self.g_eff.iter().all(|x| x.is_finite())
            && self.h_eff.iter().flatten().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.g_eff.len()
    }

    pub fn value(&self, coalition: &Coalition) -> Result<f64> {
        check_coalition(self.layer_count(), coalition)?;
        let demoted: Vec<usize> = coalition.complement().members().collect();
        let mut v = self.base_loss;
        for &i in &demoted {
            v += self.g_eff[i];
        }
        for &i in &demoted {
            for &j in &demoted {
                v += self.h_eff[i][j];
            }
        }
        Ok(v)
    }

    /// Closed-form Shapley value of the demotion game: `g_eff[i] + Σ_j h_eff[i][j]`.
    ///
    /// Pair `(i, j)` contributes `2·h_eff[i][j]` to whichever of the two is
    /// demoted second, which is `i` in half of all orderings.
    pub fn closed_form_shapley(&self) -> Vec<f64> {
        self.g_eff
            .iter()
            .zip(&self.h_eff)
            .map(|(g, row)| g + row.iter().sum::<f64>())
            .collect()
    }
}

impl ValueOracle for QuadraticSurrogate {
    fn layer_count(&self) -> usize {
        self.g_eff.len()
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<f64> {
        self.value(coalition)
    }

    fn fingerprint(&self) -> String {
        crate::doc::fingerprint_of(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_coalition_is_base_loss() {
        let s = QuadraticSurrogate::new(1.25, vec![1.0, 2.0], vec![vec![0.1, 0.2], vec![0.2, 0.3]], 0)
            .unwrap();
        assert_eq!(s.value(&Coalition::full(2)).unwrap(), 1.25);
    }

    #[test]
    fn empty_coalition_sums_all_terms() {
        let s = QuadraticSurrogate::new(0.0, vec![1.0, 1.0], vec![vec![0.0, 0.5], vec![0.5, 0.0]], 0)
            .unwrap();
        assert_eq!(s.value(&Coalition::empty(2)).unwrap(), 3.0);
    }

    #[test]
    fn rejects_asymmetric_or_mismatched() {
        assert!(QuadraticSurrogate::new(0.0, vec![1.0, 1.0], vec![vec![0.0, 0.5], vec![0.4, 0.0]], 0).is_err());
        assert!(QuadraticSurrogate::new(0.0, vec![1.0, 1.0], vec![vec![0.0]], 0).is_err());
        let s = QuadraticSurrogate::new(0.0, vec![1.0], vec![vec![0.0]], 0).unwrap();
        assert!(matches!(
            s.value(&Coalition::full(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
