use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest representable integer level for a symmetric signed grid of `bits` bits.
pub fn max_level(bits: u32) -> Result<i32> {
    match bits {
        2 | 4 => Ok((1 << (bits - 1)) - 1),
        other => Err(Error::UnsupportedBitWidth(other)),
    }
}

/// Per-tensor symmetric scale `max|w| / (2^(bits-1) - 1)`.
pub fn quantization_scale(weights: &DMatrix<f64>, bits: u32) -> Result<f64> {
    let levels = max_level(bits)? as f64;
    Ok(weights.amax() / levels)
}

/// Per-tensor symmetric uniform fake quantization with round-half-to-even.
///
/// Each entry is replaced by `clamp(round(w / scale), -m, m) * scale` where
/// `m = 2^(bits-1) - 1`. An all-zero tensor is returned unchanged.
pub fn fake_quantize(weights: &DMatrix<f64>, bits: u32) -> Result<DMatrix<f64>> {
    let levels = max_level(bits)? as f64;
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "cannot quantize non-finite weights".into(),
        ));
    }
    let scale = weights.amax() / levels;
    if scale == 0.0 {
        return Ok(weights.clone());
    }
    Ok(weights.map(|w| (w / scale).round_ties_even().clamp(-levels, levels) * scale))
}
