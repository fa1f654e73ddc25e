//! Checkpoint file: little-endian, magic `ICEMDL01`, the model configuration
//! as `u32` fields, then every parameter tensor in declaration order as an
//! `f32` array prefixed by its `u64` length.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Lattice3D, ModelConfig, ModelError, TrainableModel};

const MAGIC: &[u8; 8] = b"ICEMDL01";

pub fn write_checkpoint(model: &TrainableModel, out: &mut impl Write) -> Result<(), ModelError> {
    let cfg = &model.config;
    out.write_all(MAGIC)?;
    let mut fields = vec![
        cfg.feature_channels,
        cfg.groups,
        cfg.group_len,
        cfg.basis_luts,
        cfg.lattice_bins,
        cfg.train_resolution,
        cfg.first_kernel,
        cfg.hidden_widths.len(),
    ];
    fields.extend(&cfg.hidden_widths);
    for f in fields {
        let v = u32::try_from(f).map_err(|_| ModelError::Checkpoint(format!("field {f} exceeds u32")))?;
        out.write_all(&v.to_le_bytes())?;
    }

    let mut tensor = |values: &mut dyn Iterator<Item = f64>, len: usize| -> Result<(), ModelError> {
        out.write_all(&(len as u64).to_le_bytes())?;
        for v in values {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    };
    for branch in [&model.msb, &model.lsb] {
        for layer in &branch.mlp.layers {
            tensor(&mut layer.weight.iter().copied(), layer.weight.len())?;
            tensor(&mut layer.bias.iter().copied(), layer.bias.len())?;
        }
    }
    for g in &model.head.groups {
        tensor(&mut g.weight.iter().copied(), g.weight.len())?;
        tensor(&mut g.bias.iter().copied(), g.bias.len())?;
    }
    for b in &model.basis {
        tensor(&mut b.data().iter().copied(), b.data().len())?;
    }
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<TrainableModel, ModelError> {
    let bad = |m: &str| ModelError::Checkpoint(m.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32_field = || -> Result<usize, ModelError> {
        let mut b = [0u8; 4];
        input.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
        Ok(u32::from_le_bytes(b) as usize)
    };
    let mut cfg = ModelConfig {
        feature_channels: u32_field()?,
        groups: u32_field()?,
        group_len: u32_field()?,
        basis_luts: u32_field()?,
        lattice_bins: u32_field()?,
        train_resolution: u32_field()?,
        first_kernel: u32_field()?,
        hidden_widths: Vec::new(),
    };
    let depth = u32_field()?;
    if depth > 64 {
        return Err(bad("implausible layer count"));
    }
    for _ in 0..depth {
        cfg.hidden_widths.push(u32_field()?);
    }
    cfg.validate()
        .map_err(|e| ModelError::Checkpoint(format!("invalid config: {e}")))?;

    // shapes come from a template model; values are overwritten below
    let mut model = TrainableModel::new(cfg, 0)?;
    let mut flat = Vec::with_capacity(model.param_count());
    let mut expected = Vec::new();
    for branch in [&model.msb, &model.lsb] {
        for layer in &branch.mlp.layers {
            expected.push(layer.weight.len());
            expected.push(layer.bias.len());
        }
    }
    for g in &model.head.groups {
        expected.push(g.weight.len());
        expected.push(g.bias.len());
    }
    expected.extend(model.basis.iter().map(|b: &Lattice3D<f64>| b.data().len()));

    for len in expected {
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8).map_err(|_| bad("truncated tensor header"))?;
        if u64::from_le_bytes(b8) != len as u64 {
            return Err(bad("tensor length does not match configuration"));
        }
        let mut raw = vec![0u8; len * 4];
        input.read_exact(&mut raw).map_err(|_| bad("truncated tensor"))?;
        for chunk in raw.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(ModelError::NonFinite("checkpoint tensor".into()));
            }
            flat.push(v as f64);
        }
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after last tensor"));
    }
    model.unflatten(&flat)?;
    Ok(model)
}

pub fn save_checkpoint(model: &TrainableModel, path: &Path) -> Result<(), ModelError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainableModel, ModelError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
