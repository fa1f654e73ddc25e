//! Baking a trained model into lookup tables.
//!
//! Each pointwise branch becomes a Channel LUT: one FP32 feature row for each
//! of the 16³ nibble triples. Each split-FC group becomes a Weight LUT: a
//! `V × V` table of INT8 partial weights, addressed by the two quantized
//! pooled features of that group. The basis lattices are copied as FP32.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod bundle;
mod storage;
mod tables;

pub use bundle::{bake, export_bundle, import_bundle, read_bundle, write_bundle, LutBundle, LutDims, BUNDLE_VERSION};
pub use storage::{bundle_storage, dense_fc_lut_bytes, naive_lut_size, weight_lut_bytes, StorageReport};
pub use tables::{build_channel_lut, build_weight_lut, ChannelLut, WeightLut, NIBBLE_TRIPLES};

#[derive(Debug, Error)]
pub enum LutError {
    #[error("weight tables need group length 2, model has {0}")]
    UnsupportedGroupLength(usize),
    #[error("branch first layer is {0}x{0}; only pointwise branches can be tabulated")]
    UnsupportedKernel(usize),
    #[error("invalid quantization: {0}")]
    InvalidQuant(String),
    #[error("model contains non-finite parameters")]
    NonFinite,
    #[error("bundle i/o: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("not a LUT bundle (bad magic)")]
    BadMagic,
    #[error("bundle version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("bundle checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed bundle: {0}")]
    Malformed(String),
}

/// Pooled-feature quantization: sampling interval `Δs` and offset `R`.
/// Defaults `Δs = 2`, `R = 16` give 64 index values per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantSpec {
    pub delta_s: f64,
    pub offset: f64,
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self {
            delta_s: 2.0,
            offset: 16.0,
        }
    }
}

impl QuantSpec {
    pub fn new(delta_s: f64, offset: f64) -> Result<Self, LutError> {
        let q = Self { delta_s, offset };
        q.validate()?;
        Ok(q)
    }

    /// `Δs` and `R` positive, and `R·Δs` a whole number so every grid point
    /// has an integer index.
    pub fn validate(&self) -> Result<(), LutError> {
        let ok = |v: f64| v.is_finite() && v > 0.0 && (v as f32) as f64 == v;
        if !ok(self.delta_s) || !ok(self.offset) {
            return Err(LutError::InvalidQuant(format!(
                "delta_s {} and offset {} must be positive and representable in f32",
                self.delta_s, self.offset
            )));
        }
        let half = self.offset * self.delta_s;
        if half.fract() != 0.0 || half > (1u64 << 20) as f64 {
            return Err(LutError::InvalidQuant(format!(
                "offset x delta_s = {half} must be a whole number"
            )));
        }
        Ok(())
    }

    /// Index values per axis, `V = 2·R·Δs`.
    pub fn levels(&self) -> usize {
        (2.0 * self.offset * self.delta_s) as usize
    }

    /// Representative feature value of index `i`, the inverse of [`feature_to_index`].
    pub fn dequantize(&self, index: usize) -> f64 {
        index as f64 / self.delta_s - self.offset
    }
}

/// `Q = clamp(⌊u·Δs⌋ / Δs, −R, R − 1/Δs)`.
pub fn quantize_feature(u: f64, q: &QuantSpec) -> f64 {
    let stepped = (u * q.delta_s).floor() / q.delta_s;
    stepped.clamp(-q.offset, q.offset - 1.0 / q.delta_s)
}

/// `I = ⌊(Q + R)·Δs⌋`.
pub fn feature_to_index(quantized: f64, q: &QuantSpec) -> usize {
    // Q lies on the 1/Δs grid, so the product is integral up to rounding
    let raw = ((quantized + q.offset) * q.delta_s + 1e-6).floor();
    (raw.max(0.0) as usize).min(q.levels() - 1)
}

/// Table index of a raw pooled feature.
#[inline]
pub fn feature_index(u: f64, q: &QuantSpec) -> usize {
    feature_to_index(quantize_feature(u, q), q)
}
