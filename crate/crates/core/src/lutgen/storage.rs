use num_bigint::BigUint;
use serde::Serialize;

use super::{LutBundle, NIBBLE_TRIPLES};

/// Bytes of a complete table over `k × k` pixels of `channels` 8-bit samples:
/// `(2^8)^(k·k·channels)`.
pub fn naive_lut_size(rf_k: u32, channels: u32) -> BigUint {
    assert!(rf_k >= 1 && channels >= 1, "kernel side and channel count must be positive");
    BigUint::from(256u32).pow(rf_k * rf_k * channels)
}

/// INT8 Weight LUT bytes: `K · V² · N`.
pub fn weight_lut_bytes(groups: usize, levels: usize, outputs: usize) -> u64 {
    (groups * levels * levels * outputs) as u64
}

/// Bytes a single unsplit table over all `C` quantized features would need: `V^C · N`.
pub fn dense_fc_lut_bytes(levels: usize, channels: usize, outputs: usize) -> BigUint {
    BigUint::from(levels).pow(channels as u32) * BigUint::from(outputs)
}

/// Per-section storage of a bundle's tables, excluding the file header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StorageReport {
    pub channel_lut_bytes: u64,
    pub weight_lut_bytes: u64,
    pub basis_lut_bytes: u64,
    pub total_bytes: u64,
    /// `V^C · N` as a decimal string; it overflows every fixed-width integer at default settings.
    pub unsplit_weight_lut_bytes: String,
}

pub fn bundle_storage(bundle: &LutBundle) -> StorageReport {
    let d = &bundle.dims;
    let channel_lut_bytes = (2 * NIBBLE_TRIPLES * d.channels * 4) as u64;
    let weight = weight_lut_bytes(d.groups, bundle.quant.levels(), d.basis_luts);
    let basis_lut_bytes = (d.basis_luts * d.lattice_bins.pow(3) * 3 * 4) as u64;
    StorageReport {
        channel_lut_bytes,
        weight_lut_bytes: weight,
        basis_lut_bytes,
        total_bytes: channel_lut_bytes + weight + basis_lut_bytes,
        unsplit_weight_lut_bytes: dense_fc_lut_bytes(bundle.quant.levels(), d.channels, d.basis_luts).to_string(),
    }
}

impl std::fmt::Display for StorageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kib = |b: u64| b as f64 / 1024.0;
        writeln!(f, "channel LUTs     {:>12} B  ({:.1} KiB)", self.channel_lut_bytes, kib(self.channel_lut_bytes))?;
        writeln!(f, "weight LUTs      {:>12} B  ({:.1} KiB)", self.weight_lut_bytes, kib(self.weight_lut_bytes))?;
        writeln!(f, "basis lattices   {:>12} B  ({:.1} KiB)", self.basis_lut_bytes, kib(self.basis_lut_bytes))?;
        writeln!(f, "total            {:>12} B  ({:.1} KiB)", self.total_bytes, kib(self.total_bytes))?;
        write!(f, "unsplit FC table would need {} B", self.unsplit_weight_lut_bytes)
    }
}
