//! Bundle file layout, all little-endian:
//!
//! ```text
//! "ICELUT01"
//! version u32, C u32, K u32, L u32, N u32, M u32,
//! delta_s f32, R f32, V u32, weight scale f32, crc32 u32 (of the payload)
//! payload:
//!   MSB channel table   4096·C f32
//!   LSB channel table   4096·C f32
//!   weight tables       K·V·V·N i8
//!   basis lattices      N·M³·3 f32
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_channel_lut, build_weight_lut, ChannelLut, LutError, QuantSpec, WeightLut, NIBBLE_TRIPLES};
use crate::model::{BranchTag, Lattice3D, TrainableModel};

const MAGIC: &[u8; 8] = b"ICELUT01";
pub const BUNDLE_VERSION: u32 = 1;
const HEADER_BYTES: usize = 8 + 11 * 4;

/// Shape of a baked model: everything the inference engine needs to know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutDims {
    pub channels: usize,
    pub groups: usize,
    pub group_len: usize,
    pub basis_luts: usize,
    pub lattice_bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutBundle {
    pub dims: LutDims,
    pub quant: QuantSpec,
    pub msb: ChannelLut,
    pub lsb: ChannelLut,
    pub weights: WeightLut,
    pub basis: Vec<Lattice3D<f32>>,
}

impl LutBundle {
    /// Cross-check every table against `dims` and `quant`.
    pub fn validate(&self) -> Result<(), LutError> {
        let d = &self.dims;
        let bad = |m: String| Err(LutError::Malformed(m));
        self.quant.validate()?;
        if d.group_len != 2 || d.groups * d.group_len != d.channels {
            return bad(format!("{} groups of {} for {} channels", d.groups, d.group_len, d.channels));
        }
        if self.msb.channels() != d.channels || self.lsb.channels() != d.channels {
            return bad("channel table width disagrees with channel count".into());
        }
        let w = &self.weights;
        if w.groups() != d.groups || w.levels() != self.quant.levels() || w.outputs() != d.basis_luts {
            return bad("weight table shape disagrees with header".into());
        }
        if self.basis.len() != d.basis_luts || self.basis.iter().any(|b| b.bins() != d.lattice_bins) {
            return bad("basis lattice count or size disagrees with header".into());
        }
        Ok(())
    }
}

/// Convert a trained pointwise model into lookup tables. Deterministic.
pub fn bake(model: &TrainableModel, quant: &QuantSpec) -> Result<LutBundle, LutError> {
    quant.validate()?;
    let cfg = &model.config;
    if cfg.first_kernel != 1 {
        return Err(LutError::UnsupportedKernel(cfg.first_kernel));
    }
    if cfg.group_len != 2 {
        return Err(LutError::UnsupportedGroupLength(cfg.group_len));
    }
    if model.flatten().iter().any(|v| !v.is_finite()) {
        return Err(LutError::NonFinite);
    }
    let bundle = LutBundle {
        dims: LutDims {
            channels: cfg.feature_channels,
            groups: cfg.groups,
            group_len: cfg.group_len,
            basis_luts: cfg.basis_luts,
            lattice_bins: cfg.lattice_bins,
        },
        quant: *quant,
        msb: build_channel_lut(&model.msb, BranchTag::Msb)?,
        lsb: build_channel_lut(&model.lsb, BranchTag::Lsb)?,
        weights: build_weight_lut(&model.head, quant)?,
        basis: model.basis.iter().map(|b| b.cast::<f32>()).collect(),
    };
    bundle.validate()?;
    Ok(bundle)
}

fn payload(bundle: &LutBundle) -> Vec<u8> {
    let mut out = Vec::new();
    for table in [&bundle.msb, &bundle.lsb] {
        for v in table.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend(bundle.weights.values().iter().map(|&v| v as u8));
    for lattice in &bundle.basis {
        for v in lattice.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn to_u32(v: usize) -> Result<u32, LutError> {
    u32::try_from(v).map_err(|_| LutError::Malformed(format!("field {v} exceeds u32")))
}

pub fn write_bundle(bundle: &LutBundle, out: &mut impl Write) -> Result<(), LutError> {
    bundle.validate()?;
    let body = payload(bundle);
    let d = &bundle.dims;
    let mut head = Vec::with_capacity(HEADER_BYTES);
    head.extend_from_slice(MAGIC);
    for v in [BUNDLE_VERSION, to_u32(d.channels)?, to_u32(d.groups)?, to_u32(d.group_len)?, to_u32(d.basis_luts)?, to_u32(d.lattice_bins)?] {
        head.extend_from_slice(&v.to_le_bytes());
    }
    head.extend_from_slice(&(bundle.quant.delta_s as f32).to_le_bytes());
    head.extend_from_slice(&(bundle.quant.offset as f32).to_le_bytes());
    head.extend_from_slice(&to_u32(bundle.quant.levels())?.to_le_bytes());
    head.extend_from_slice(&bundle.weights.scale().to_le_bytes());
    head.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.write_all(&head)?;
    out.write_all(&body)?;
    Ok(())
}

pub fn read_bundle(input: &mut impl Read) -> Result<LutBundle, LutError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(LutError::BadMagic);
    }
    if bytes.len() < HEADER_BYTES {
        return Err(LutError::Malformed("truncated header".into()));
    }
    let word = |i: usize| {
        let at = 8 + 4 * i;
        [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]
    };
    let field = |i: usize| u32::from_le_bytes(word(i));
    let version = field(0);
    if version != BUNDLE_VERSION {
        return Err(LutError::VersionMismatch {
            found: version,
            expected: BUNDLE_VERSION,
        });
    }
    let body = &bytes[HEADER_BYTES..];
    let stored = field(10);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(LutError::ChecksumMismatch { stored, computed });
    }

    let dims = LutDims {
        channels: field(1) as usize,
        groups: field(2) as usize,
        group_len: field(3) as usize,
        basis_luts: field(4) as usize,
        lattice_bins: field(5) as usize,
    };
    let quant = QuantSpec::new(f32::from_le_bytes(word(6)) as f64, f32::from_le_bytes(word(7)) as f64)?;
    let levels = field(8) as usize;
    let scale = f32::from_le_bytes(word(9));
    if levels != quant.levels() {
        return Err(LutError::Malformed(format!("{levels} levels for delta_s {} offset {}", quant.delta_s, quant.offset)));
    }
    if dims.lattice_bins < 2 || dims.channels == 0 || dims.basis_luts == 0 {
        return Err(LutError::Malformed("degenerate dimensions".into()));
    }

    let channel_len = NIBBLE_TRIPLES * dims.channels;
    let weight_len = dims.groups * levels * levels * dims.basis_luts;
    let lattice_len = dims.lattice_bins.pow(3) * 3;
    let expected = 2 * channel_len * 4 + weight_len + dims.basis_luts * lattice_len * 4;
    if body.len() != expected {
        return Err(LutError::Malformed(format!("payload is {} bytes, expected {expected}", body.len())));
    }

    let floats = |range: &[u8]| -> Vec<f32> {
        range
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let mut at = 0;
    let msb = ChannelLut::from_values(BranchTag::Msb, dims.channels, floats(&body[at..at + channel_len * 4]))?;
    at += channel_len * 4;
    let lsb = ChannelLut::from_values(BranchTag::Lsb, dims.channels, floats(&body[at..at + channel_len * 4]))?;
    at += channel_len * 4;
    let wvals = body[at..at + weight_len].iter().map(|&b| b as i8).collect();
    at += weight_len;
    let weights = WeightLut::from_values(dims.groups, levels, dims.basis_luts, wvals, scale)?;
    let mut basis = Vec::with_capacity(dims.basis_luts);
    for _ in 0..dims.basis_luts {
        let data = floats(&body[at..at + lattice_len * 4]);
        at += lattice_len * 4;
        basis.push(Lattice3D::from_data(dims.lattice_bins, data).map_err(|e| LutError::Malformed(e.to_string()))?);
    }
    let bundle = LutBundle {
        dims,
        quant,
        msb,
        lsb,
        weights,
        basis,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn export_bundle(bundle: &LutBundle, path: &Path) -> Result<(), LutError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_bundle(bundle, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn import_bundle(path: &Path) -> Result<LutBundle, LutError> {
    read_bundle(&mut File::open(path)?)
}
