use serde::Serialize;

use super::{fuse_with, interpolate_with, weights_with, EngineError, NoTally};
use crate::imaging::{bilinear_downsample, ImageU8};
use crate::lutgen::{quantize_feature, LutBundle};
use crate::model::{fuse_luts, pooled_features, predict_weights, trilinear_apply, TrainableModel};

/// Absolute allowance on top of `K·s_w/2` for FP32 rounding in the table path.
pub const WEIGHT_FP_SLACK: f64 = 1e-6;

/// Largest disagreement between the table path and the network path.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub images: usize,
    pub max_weight_deviation: f64,
    pub max_pixel_deviation: u8,
    /// `K · s_w / 2`.
    pub weight_bound: f64,
    pub within_bounds: bool,
}

/// Compare `bundle` against `model` on every image. The network reference
/// quantizes its pooled features exactly as the tables do, so the only
/// remaining difference is INT8 storage of the split-FC outputs.
pub fn verify_equivalence(
    model: &TrainableModel,
    bundle: &LutBundle,
    images: &[ImageU8],
    working_size: usize,
) -> Result<EquivalenceReport, EngineError> {
    bundle.validate()?;
    if working_size == 0 {
        return Err(EngineError::DimensionMismatch("working size must be positive".into()));
    }
    let cfg = &model.config;
    let d = &bundle.dims;
    if (cfg.feature_channels, cfg.groups, cfg.basis_luts, cfg.lattice_bins) != (d.channels, d.groups, d.basis_luts, d.lattice_bins) {
        return Err(EngineError::DimensionMismatch("model and bundle shapes differ".into()));
    }
    let weight_bound = d.groups as f64 * bundle.weights.scale() as f64 / 2.0;
    let mut max_w = 0.0f64;
    let mut max_px = 0u8;
    for img in images {
        let working = bilinear_downsample(img, working_size, working_size);

        let u: Vec<f64> = pooled_features(model, &working)
            .into_iter()
            .map(|v| quantize_feature(v, &bundle.quant))
            .collect();
        let net_w = predict_weights(&model.head, &u)?;
        let net_img = trilinear_apply(&fuse_luts(&model.basis, &net_w)?, img).to_u8();

        let lut_w = weights_with(bundle, &working, &mut NoTally);
        let fused = fuse_with(bundle, &lut_w, &mut NoTally)?;
        let lut_img = interpolate_with(&fused, img, &mut NoTally);

        for (a, b) in lut_w.iter().zip(&net_w) {
            max_w = max_w.max((*a as f64 - b).abs());
        }
        for (a, b) in lut_img.data().iter().zip(net_img.data()) {
            max_px = max_px.max(a.abs_diff(*b));
        }
    }
    Ok(EquivalenceReport {
        images: images.len(),
        max_weight_deviation: max_w,
        max_pixel_deviation: max_px,
        weight_bound,
        within_bounds: max_w <= weight_bound + WEIGHT_FP_SLACK && max_px <= 1,
    })
}
