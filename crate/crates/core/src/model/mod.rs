//! The trainable weight-prediction network.
//!
//! Two pointwise branches read the high and low nibbles of a small working
//! image. Their per-pixel features are mean-pooled and summed into a
//! `C`-vector `U`. A split fully-connected head maps each length-`L` slice of
//! `U` to `N` partial weights, and the partial weights are summed. The weights
//! blend `N` basis lattices into one lattice, which is applied to the
//! full-resolution image by trilinear interpolation.

use std::cell::Cell;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{split_bitplanes, ImageF32, ImageU8};

pub mod ablation;
mod adam;
mod checkpoint;
mod grad;
mod lattice;
mod mlp;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use grad::{compute_gradients, kink_signature, raw_l1, Gradients};
pub use lattice::{fuse_luts, trilinear_apply, trilinear_map, Lattice3D};
pub(crate) use lattice::CellTaps;
pub use mlp::{DenseLayer, Mlp};
pub use train::{evaluate_psnr, train, train_model, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

thread_local! {
    static NETWORK_EVALS: Cell<u64> = const { Cell::new(0) };
}

/// Branch pixel evaluations plus head evaluations performed on this thread.
///
/// The pure-LUT inference path must leave this unchanged.
pub fn network_eval_count() -> u64 {
    NETWORK_EVALS.with(Cell::get)
}

fn count_network_evals(n: usize) {
    NETWORK_EVALS.with(|c| c.set(c.get() + n as u64));
}

/// Architecture hyperparameters. Defaults: `C = 10`, `K = 5`, `L = 2`,
/// `N = 20`, 17 lattice bins, six weight layers per branch, 32x32 working image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Pooled feature width `C`.
    pub feature_channels: usize,
    /// Split-FC group count `K`.
    pub groups: usize,
    /// Split-FC group length `L`.
    pub group_len: usize,
    /// Basis lattice count `N`.
    pub basis_luts: usize,
    /// Lattice bins per color axis `M`.
    pub lattice_bins: usize,
    /// Hidden layer widths of each branch; the branch has `len + 1` weight layers.
    pub hidden_widths: Vec<usize>,
    /// Side of the square working image used for weight prediction.
    pub train_resolution: usize,
    /// Spatial kernel of the first branch layer. Only 1 can be baked.
    pub first_kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_channels: 10,
            groups: 5,
            group_len: 2,
            basis_luts: 20,
            lattice_bins: 17,
            hidden_widths: vec![32, 64, 128, 64, 32],
            train_resolution: 32,
            first_kernel: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.feature_channels == 0 || self.groups == 0 || self.group_len == 0 {
            return bad("C, K and L must be positive".into());
        }
        if self.groups * self.group_len != self.feature_channels {
            return bad(format!(
                "C = {} must equal K x L = {} x {}",
                self.feature_channels, self.groups, self.group_len
            ));
        }
        if self.basis_luts == 0 {
            return bad("N must be at least 1".into());
        }
        if self.lattice_bins < 2 {
            return bad("lattice needs at least 2 bins".into());
        }
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if self.train_resolution == 0 {
            return bad("train_resolution must be positive".into());
        }
        if self.first_kernel == 0 || self.first_kernel.is_multiple_of(2) {
            return bad("first_kernel must be odd".into());
        }
        Ok(())
    }

    /// Layer widths from input to output for one branch.
    pub fn branch_widths(&self) -> Vec<usize> {
        let mut widths = vec![3 * self.first_kernel * self.first_kernel];
        widths.extend(&self.hidden_widths);
        widths.push(self.feature_channels);
        widths
    }
}

/// Which nibble of each sample a branch reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchTag {
    Msb,
    Lsb,
}

/// Per-pixel feature extractor; ReLU between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseBranch {
    pub mlp: Mlp,
    kernel: usize,
}

impl PointwiseBranch {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        Self {
            mlp: Mlp::new(&config.branch_widths(), rng),
            kernel: config.first_kernel,
        }
    }

    pub fn from_mlp(mlp: Mlp) -> Self {
        assert_eq!(mlp.input_width(), 3, "pointwise branches read one RGB triple");
        Self { mlp, kernel: 1 }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1
    }

    pub fn output_width(&self) -> usize {
        self.mlp.output_width()
    }

    /// Features of one nibble triple (each 0..=15, scaled by 1/15).
    pub fn pixel_features(&self, nibble_rgb: [u8; 3]) -> Vec<f64> {
        assert!(self.is_pointwise(), "single-pixel evaluation needs a 1x1 first layer");
        count_network_evals(1);
        let input = nibble_rgb.map(|v| v as f64 / 15.0);
        self.mlp.eval(&input)
    }

    /// Network input rows for every pixel of a nibble plane.
    pub fn input_rows(&self, plane: &[u8], width: usize, height: usize) -> Array2<f64> {
        let k = self.kernel;
        let pixels = width * height;
        if k == 1 {
            return Array2::from_shape_fn((pixels, 3), |(p, c)| plane[p * 3 + c] as f64 / 15.0);
        }
        let r = (k / 2) as isize;
        let mut rows = Array2::zeros((pixels, 3 * k * k));
        for y in 0..height {
            for x in 0..width {
                let mut row = rows.row_mut(y * width + x);
                let mut col = 0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (sx, sy) = (x as isize + dx, y as isize + dy);
                        let inside = sx >= 0 && sy >= 0 && (sx as usize) < width && (sy as usize) < height;
                        for c in 0..3 {
                            if inside {
                                let at = (sy as usize * width + sx as usize) * 3 + c;
                                row[col] = plane[at] as f64 / 15.0;
                            }
                            col += 1;
                        }
                    }
                }
            }
        }
        rows
    }

    /// Mean feature over all pixels of a nibble plane.
    pub fn pooled(&self, plane: &[u8], width: usize, height: usize) -> Vec<f64> {
        count_network_evals(width * height);
        let trace = self.mlp.forward_batch(self.input_rows(plane, width, height));
        trace
            .output
            .mean_axis(ndarray::Axis(0))
            .expect("image has at least one pixel")
            .to_vec()
    }
}

/// One split-FC group: `N × L` weights plus `N` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FcGroup {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitFC {
    pub groups: Vec<FcGroup>,
}

impl SplitFC {
    pub fn zeros(groups: usize, group_len: usize, outputs: usize) -> Self {
        Self {
            groups: (0..groups)
                .map(|_| FcGroup {
                    weight: Array2::zeros((outputs, group_len)),
                    bias: Array1::zeros(outputs),
                })
                .collect(),
        }
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_len(&self) -> usize {
        self.groups[0].weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.groups[0].weight.nrows()
    }

    /// `FC_k(x)` for one group; no instrumentation.
    pub(crate) fn group_output(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let g = &self.groups[k];
        g.bias
            .iter()
            .zip(g.weight.rows())
            .map(|(b, row)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Evaluate group `k` on its slice of the feature vector.
    pub fn eval_group(&self, k: usize, x: &[f64]) -> Vec<f64> {
        count_network_evals(1);
        self.group_output(k, x)
    }

    pub fn param_count(&self) -> usize {
        self.groups.iter().map(|g| g.weight.len() + g.bias.len()).sum()
    }
}

/// `w = Σ_k (W_k · U[kL..kL+L] + b_k)`.
pub fn predict_weights(head: &SplitFC, u: &[f64]) -> Result<Vec<f64>, ModelError> {
    let l = head.group_len();
    if u.len() != head.group_count() * l {
        return Err(ModelError::DimensionMismatch(format!(
            "feature vector of length {} for {} groups of {}",
            u.len(),
            head.group_count(),
            l
        )));
    }
    let mut w = vec![0.0; head.outputs()];
    for (k, chunk) in u.chunks(l).enumerate() {
        for (acc, v) in w.iter_mut().zip(head.eval_group(k, chunk)) {
            *acc += v;
        }
    }
    Ok(w)
}

/// Features of one nibble triple; see [`PointwiseBranch::pixel_features`].
pub fn branch_pixel_features(branch: &PointwiseBranch, nibble_rgb: [u8; 3]) -> Vec<f64> {
    branch.pixel_features(nibble_rgb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainableModel {
    pub config: ModelConfig,
    pub msb: PointwiseBranch,
    pub lsb: PointwiseBranch,
    pub head: SplitFC,
    pub basis: Vec<Lattice3D<f64>>,
}

/// Named slice of the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub range: std::ops::Range<usize>,
}

impl TrainableModel {
    /// Seeded initialization that starts close to the identity transform.
    ///
    /// Branches are He-uniform. The head starts with tiny random weights and
    /// biases of `1/K` on output 0 in every group, so `w ≈ e_0`. Basis 0 is the
    /// identity lattice and the rest are zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msb = PointwiseBranch::new(&config, &mut rng);
        let lsb = PointwiseBranch::new(&config, &mut rng);
        let mut head = SplitFC::zeros(config.groups, config.group_len, config.basis_luts);
        let share = 1.0 / config.groups as f64;
        for g in &mut head.groups {
            g.weight.mapv_inplace(|_| rng.gen_range(-1e-4..1e-4));
            g.bias[0] = share;
        }
        let mut basis = vec![Lattice3D::identity(config.lattice_bins)];
        basis.extend((1..config.basis_luts).map(|_| Lattice3D::zeros(config.lattice_bins)));
        Ok(Self {
            config,
            msb,
            lsb,
            head,
            basis,
        })
    }

    /// Branch for the given nibble plane.
    pub fn branch(&self, tag: BranchTag) -> &PointwiseBranch {
        match tag {
            BranchTag::Msb => &self.msb,
            BranchTag::Lsb => &self.lsb,
        }
    }

    pub fn param_count(&self) -> usize {
        self.msb.mlp.param_count()
            + self.lsb.mlp.param_count()
            + self.head.param_count()
            + self.basis.iter().map(|b| b.data().len()).sum::<usize>()
    }

    /// Parameter groups in flattening (and checkpoint) order.
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |name, len: usize| {
            out.push(ParamGroup {
                name,
                range: at..at + len,
            });
            at += len;
        };
        push("msb_branch", self.msb.mlp.param_count());
        push("lsb_branch", self.lsb.mlp.param_count());
        push("split_fc", self.head.param_count());
        push(
            "basis_luts",
            self.basis.iter().map(|b| b.data().len()).sum(),
        );
        out
    }

    /// All parameters: MSB branch, LSB branch, head groups (weights then
    /// biases), basis lattices.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.msb.mlp.write_params(&mut out);
        self.lsb.mlp.write_params(&mut out);
        for g in &self.head.groups {
            out.extend(g.weight.iter());
            out.extend(g.bias.iter());
        }
        for b in &self.basis {
            out.extend_from_slice(b.data());
        }
        out
    }

    pub fn unflatten(&mut self, src: &[f64]) -> Result<(), ModelError> {
        if src.len() != self.param_count() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} parameters supplied, model has {}",
                src.len(),
                self.param_count()
            )));
        }
        let mut at = self.msb.mlp.read_params(src);
        at += self.lsb.mlp.read_params(&src[at..]);
        for g in &mut self.head.groups {
            for v in g.weight.iter_mut().chain(g.bias.iter_mut()) {
                *v = src[at];
                at += 1;
            }
        }
        for b in &mut self.basis {
            let n = b.data().len();
            b.data_mut().copy_from_slice(&src[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn working_image(&self, full: &ImageU8) -> ImageU8 {
        let r = self.config.train_resolution;
        crate::imaging::bilinear_downsample(full, r, r)
    }
}

/// `U`: pooled MSB-branch features plus pooled LSB-branch features.
pub fn pooled_features(model: &TrainableModel, working: &ImageU8) -> Vec<f64> {
    let planes = split_bitplanes(working);
    let (w, h) = (working.width(), working.height());
    let hi = model.msb.pooled(&planes.msb, w, h);
    let lo = model.lsb.pooled(&planes.lsb, w, h);
    hi.iter().zip(&lo).map(|(a, b)| a + b).collect()
}

/// Output of [`forward_raw`]: unclamped interleaved samples and the basis weights.
#[derive(Debug, Clone)]
pub struct RawForward {
    pub output: Vec<f64>,
    pub weights: Vec<f64>,
}

/// End-to-end prediction without clamping the lattice output.
pub fn forward_raw(model: &TrainableModel, full: &ImageU8, working: &ImageU8) -> Result<RawForward, ModelError> {
    let u = pooled_features(model, working);
    let weights = predict_weights(&model.head, &u)?;
    let fused = fuse_luts(&model.basis, &weights)?;
    Ok(RawForward {
        output: trilinear_map(&fused, full),
        weights,
    })
}

/// End-to-end prediction: retouched image (clamped) and basis weights.
pub fn forward(model: &TrainableModel, full: &ImageU8, working: &ImageU8) -> Result<(ImageF32, Vec<f64>), ModelError> {
    let u = pooled_features(model, working);
    let weights = predict_weights(&model.head, &u)?;
    let fused = fuse_luts(&model.basis, &weights)?;
    Ok((trilinear_apply(&fused, full), weights))
}

/// Mean absolute difference over all samples.
pub fn l1_loss(pred: &ImageF32, target: &ImageF32) -> Result<f64, ModelError> {
    if pred.width() != target.width() || pred.height() != target.height() {
        return Err(ModelError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            target.width(),
            target.height()
        )));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .sum();
    Ok(sum / pred.data().len() as f64)
}
