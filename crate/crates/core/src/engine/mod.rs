//! Pure lookup-table inference.
//!
//! The weight stage reads one Channel LUT row per pixel per branch, averages,
//! quantizes the pooled features into table indices, and sums INT8 Weight LUT
//! cells in an `i32` accumulator before a single multiply by the table scale.
//! The interpolation stage fuses the basis lattices with those weights and maps
//! every full-resolution pixel through the fused lattice. No branch or head
//! network is evaluated anywhere on this path.

use thiserror::Error;

use crate::imaging::{bilinear_downsample, split_bitplanes, unit_to_byte, ImageU8};
use crate::lutgen::{feature_index, ChannelLut, LutBundle, LutError};
use crate::model::{fuse_luts, CellTaps, Lattice3D, ModelError};

mod bench;
mod verify;

pub use bench::{bench, count_ops, BenchOptions, BenchReport, OpCountReport, TimingStats};
pub use verify::{verify_equivalence, EquivalenceReport, WEIGHT_FP_SLACK};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid benchmark settings: {0}")]
    InvalidBench(String),
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Default side of the square working image.
pub const DEFAULT_WORKING_SIZE: usize = 32;

/// Operation sink for the instrumented paths. [`NoTally`] compiles away.
pub(crate) trait Tally {
    fn lookups(&mut self, _n: u64) {}
    fn channel_adds(&mut self, _n: u64) {}
    fn adds(&mut self, _n: u64) {}
    fn multiplies(&mut self, _n: u64) {}
}

pub(crate) struct NoTally;
impl Tally for NoTally {}

/// Basis weights predicted from `working` using only table lookups.
pub fn lut_weights(bundle: &LutBundle, working: &ImageU8) -> Result<Vec<f32>, EngineError> {
    bundle.validate()?;
    Ok(weights_with(bundle, working, &mut NoTally))
}

fn accumulate_rows(table: &ChannelLut, plane: &[u8], acc: &mut [f32]) {
    for px in plane.chunks_exact(3) {
        let row = table.row(ChannelLut::index([px[0], px[1], px[2]]));
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

pub(crate) fn weights_with(bundle: &LutBundle, working: &ImageU8, tally: &mut impl Tally) -> Vec<f32> {
    let d = &bundle.dims;
    let c = d.channels;
    let planes = split_bitplanes(working);
    let pixels = working.pixel_count();

    let mut hi = vec![0f32; c];
    let mut lo = vec![0f32; c];
    accumulate_rows(&bundle.msb, &planes.msb, &mut hi);
    accumulate_rows(&bundle.lsb, &planes.lsb, &mut lo);
    tally.lookups(2 * pixels as u64);
    tally.channel_adds((2 * pixels * c) as u64);

    let inv = 1.0 / pixels as f32;
    let q = &bundle.quant;
    let index: Vec<usize> = hi
        .iter()
        .zip(&lo)
        .map(|(h, l)| feature_index((h * inv + l * inv) as f64, q))
        .collect();
    // per channel: two scalings and one add to pool, then
    // quantization (scale, rescale) and indexing (shift, scale)
    tally.multiplies(1 + 2 * c as u64 + 3 * c as u64);
    tally.adds(c as u64 + c as u64);

    let n = d.basis_luts;
    let mut sum = vec![0i32; n];
    for k in 0..d.groups {
        let cell = bundle.weights.cell(k, index[2 * k], index[2 * k + 1]);
        for (s, &v) in sum.iter_mut().zip(cell) {
            *s += v as i32;
        }
    }
    tally.lookups(d.groups as u64);
    tally.adds((d.groups * n) as u64);

    let scale = bundle.weights.scale();
    tally.multiplies(n as u64);
    sum.into_iter().map(|s| s as f32 * scale).collect()
}

pub(crate) fn fuse_with(bundle: &LutBundle, weights: &[f32], tally: &mut impl Tally) -> Result<Lattice3D<f32>, EngineError> {
    let fused = fuse_luts(&bundle.basis, weights)?;
    let samples = fused.data().len() as u64 * bundle.basis.len() as u64;
    tally.multiplies(samples);
    tally.adds(samples);
    Ok(fused)
}

pub(crate) fn interpolate_with(lattice: &Lattice3D<f32>, img: &ImageU8, tally: &mut impl Tally) -> ImageU8 {
    let taps = CellTaps::<f32>::new(lattice.bins());
    let data = lattice.data();
    let mut out = Vec::with_capacity(img.data().len());
    for rgb in img.pixels() {
        let mut px = [0f32; 3];
        taps.for_each_corner(rgb, |vertex, weight| {
            let at = vertex * 3;
            px[0] += weight * data[at];
            px[1] += weight * data[at + 1];
            px[2] += weight * data[at + 2];
        });
        out.extend(px.map(|v| unit_to_byte(v as f64)));
    }
    // per pixel: 3 complements, 4 + 8 corner-weight products,
    // 8 corners x 3 channels multiply-adds, 3 output scalings
    let pixels = img.pixel_count() as u64;
    tally.lookups(pixels * 8);
    tally.multiplies(pixels * (12 + 24 + 3));
    tally.adds(pixels * (3 + 24));
    ImageU8::new(img.width(), img.height(), out).expect("output matches input dimensions")
}

/// Retouch `full` with a baked bundle. The weights come from a
/// `working_size × working_size` bilinear downsample of the input.
pub fn retouch(bundle: &LutBundle, full: &ImageU8, working_size: usize) -> Result<ImageU8, EngineError> {
    if working_size == 0 {
        return Err(EngineError::DimensionMismatch("working size must be positive".into()));
    }
    bundle.validate()?;
    let working = bilinear_downsample(full, working_size, working_size);
    let weights = weights_with(bundle, &working, &mut NoTally);
    let fused = fuse_with(bundle, &weights, &mut NoTally)?;
    Ok(interpolate_with(&fused, full, &mut NoTally))
}

/// A bundle whose retouch is the identity map: zero channel tables, a single
/// Weight LUT cell value selecting basis 0, and an identity basis 0.
pub fn identity_bundle(dims: crate::lutgen::LutDims, quant: crate::lutgen::QuantSpec) -> Result<LutBundle, EngineError> {
    use crate::lutgen::{WeightLut, NIBBLE_TRIPLES};
    use crate::model::BranchTag;
    let levels = quant.levels();
    let mut wvals = vec![0i8; dims.groups * levels * levels * dims.basis_luts];
    for cell in wvals[..levels * levels * dims.basis_luts].chunks_mut(dims.basis_luts) {
        cell[0] = 1;
    }
    let mut basis = vec![Lattice3D::<f32>::zeros(dims.lattice_bins); dims.basis_luts];
    basis[0] = Lattice3D::identity(dims.lattice_bins);
    let bundle = LutBundle {
        dims,
        quant,
        msb: ChannelLut::from_values(BranchTag::Msb, dims.channels, vec![0.0; NIBBLE_TRIPLES * dims.channels])?,
        lsb: ChannelLut::from_values(BranchTag::Lsb, dims.channels, vec![0.0; NIBBLE_TRIPLES * dims.channels])?,
        weights: WeightLut::from_values(dims.groups, levels, dims.basis_luts, wvals, 1.0)?,
        basis,
    };
    bundle.validate()?;
    Ok(bundle)
}
