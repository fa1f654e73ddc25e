//! Analytic gradients of the L1 training objective.
//!
//! The objective is the mean absolute difference between the raw (unclamped)
//! lattice output and the target. Subgradients are 0 at a zero residual and at
//! a zero ReLU pre-activation.

use ndarray::Array2;

use super::lattice::CellTaps;
use super::{fuse_luts, predict_weights, trilinear_map, ModelError, TrainableModel};
use crate::imaging::{split_bitplanes, ImageU8};

/// Loss value and its gradient, flattened in [`TrainableModel::flatten`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self {
            loss: 0.0,
            values: vec![0.0; len],
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        self.loss += other.loss;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.loss *= s;
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

/// Objective value of the raw forward pass, used by training diagnostics and
/// gradient checks.
pub fn raw_l1(model: &TrainableModel, full: &ImageU8, working: &ImageU8, target: &ImageU8) -> Result<f64, ModelError> {
    let out = super::forward_raw(model, full, working)?;
    Ok(out
        .output
        .iter()
        .zip(target.data())
        .map(|(o, &t)| (o - t as f64 / 255.0).abs())
        .sum::<f64>()
        / out.output.len() as f64)
}

/// Sign pattern of every nondifferentiable point of the objective: each hidden
/// ReLU gate of both branches and the sign of each output residual. Two
/// parameter vectors with equal signatures lie in the same smooth piece.
pub fn kink_signature(model: &TrainableModel, full: &ImageU8, working: &ImageU8, target: &ImageU8) -> Result<Vec<i8>, ModelError> {
    let planes = split_bitplanes(working);
    let (ww, wh) = (working.width(), working.height());
    let mut sig = Vec::new();
    for (branch, plane) in [(&model.msb, &planes.msb), (&model.lsb, &planes.lsb)] {
        let trace = branch.mlp.forward_batch(branch.input_rows(plane, ww, wh));
        for hidden in &trace.inputs[1..] {
            sig.extend(hidden.iter().map(|&v| (v > 0.0) as i8));
        }
    }
    let out = super::forward_raw(model, full, working)?;
    sig.extend(out.output.iter().zip(target.data()).map(|(o, &t)| {
        let r = o - t as f64 / 255.0;
        (r > 0.0) as i8 - (r < 0.0) as i8
    }));
    Ok(sig)
}

pub fn compute_gradients(
    model: &TrainableModel,
    full: &ImageU8,
    working: &ImageU8,
    target: &ImageU8,
) -> Result<Gradients, ModelError> {
    if !full.same_dimensions(target) {
        return Err(ModelError::DimensionMismatch(format!(
            "input {}x{} vs target {}x{}",
            full.width(),
            full.height(),
            target.width(),
            target.height()
        )));
    }
    let cfg = &model.config;
    let (c, l, n) = (cfg.feature_channels, cfg.group_len, cfg.basis_luts);

    let planes = split_bitplanes(working);
    let (ww, wh) = (working.width(), working.height());
    let msb_trace = model.msb.mlp.forward_batch(model.msb.input_rows(&planes.msb, ww, wh));
    let lsb_trace = model.lsb.mlp.forward_batch(model.lsb.input_rows(&planes.lsb, ww, wh));
    let pixels = (ww * wh) as f64;
    let u: Vec<f64> = (0..c)
        .map(|ch| {
            msb_trace.output.column(ch).sum() / pixels + lsb_trace.output.column(ch).sum() / pixels
        })
        .collect();

    let weights = predict_weights(&model.head, &u)?;
    let fused = fuse_luts(&model.basis, &weights)?;
    let out = trilinear_map(&fused, full);

    let count = out.len() as f64;
    let mut loss = 0.0;
    let d_out: Vec<f64> = out
        .iter()
        .zip(target.data())
        .map(|(&o, &t)| {
            let r = o - t as f64 / 255.0;
            loss += r.abs();
            if r > 0.0 {
                1.0 / count
            } else if r < 0.0 {
                -1.0 / count
            } else {
                0.0
            }
        })
        .collect();
    loss /= count;

    // scatter output gradients onto the fused lattice
    let taps = CellTaps::<f64>::new(cfg.lattice_bins);
    let mut d_fused = vec![0.0; fused.data().len()];
    for (rgb, g) in full.pixels().zip(d_out.chunks_exact(3)) {
        taps.for_each_corner(rgb, |vertex, weight| {
            let at = vertex * 3;
            d_fused[at] += weight * g[0];
            d_fused[at + 1] += weight * g[1];
            d_fused[at + 2] += weight * g[2];
        });
    }

    let d_weights: Vec<f64> = model
        .basis
        .iter()
        .map(|b| b.data().iter().zip(&d_fused).map(|(v, g)| v * g).sum())
        .collect();

    let msb_len = model.msb.mlp.param_count();
    let lsb_len = model.lsb.mlp.param_count();
    let head_len = model.head.param_count();
    let mut values = vec![0.0; model.param_count()];

    // split FC
    let mut d_u = vec![0.0; c];
    let mut at = msb_len + lsb_len;
    for (k, group) in model.head.groups.iter().enumerate() {
        let slice = &u[k * l..(k + 1) * l];
        for row in 0..n {
            for col in 0..l {
                values[at + row * l + col] = d_weights[row] * slice[col];
                d_u[k * l + col] += group.weight[[row, col]] * d_weights[row];
            }
        }
        at += n * l;
        values[at..at + n].copy_from_slice(&d_weights);
        at += n;
    }
    debug_assert_eq!(at, msb_len + lsb_len + head_len);

    // basis lattices
    for (basis_w, chunk) in weights
        .iter()
        .zip(values[at..].chunks_exact_mut(d_fused.len()))
    {
        for (dst, g) in chunk.iter_mut().zip(&d_fused) {
            *dst = basis_w * g;
        }
    }

    // mean pooling spreads dU evenly over pixels of both branches
    let rows = ww * wh;
    let d_feat = Array2::from_shape_fn((rows, c), |(_, ch)| d_u[ch] / pixels);
    model
        .msb
        .mlp
        .backward(&msb_trace, d_feat.clone(), &mut values[..msb_len]);
    model
        .lsb
        .mlp
        .backward(&lsb_trace, d_feat, &mut values[msb_len..msb_len + lsb_len]);

    Ok(Gradients { loss, values })
}
