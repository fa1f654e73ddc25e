//! Direct pixel-to-pixel mappers for comparing channel-coupled and
//! channel-independent pointwise networks.
//!
//! A [`ChannelMode::PerChannel`] mapper applies one shared scalar network to
//! each sample independently, so output red can only depend on input red. A
//! [`ChannelMode::Joint`] mapper sees the whole RGB triple.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamState, Mlp, ModelError, TrainConfig};
use crate::imaging::ImageU8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelMode {
    Joint,
    PerChannel,
}

#[derive(Debug, Clone)]
pub struct PixelMapper {
    pub mode: ChannelMode,
    pub mlp: Mlp,
}

impl PixelMapper {
    pub fn new(mode: ChannelMode, hidden: &[usize], seed: u64) -> Self {
        let io = match mode {
            ChannelMode::Joint => 3,
            ChannelMode::PerChannel => 1,
        };
        let mut widths = vec![io];
        widths.extend_from_slice(hidden);
        widths.push(io);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            mode,
            mlp: Mlp::new(&widths, &mut rng),
        }
    }

    fn rows(&self, img: &ImageU8) -> Array2<f64> {
        let samples = img.data();
        match self.mode {
            ChannelMode::Joint => {
                Array2::from_shape_fn((img.pixel_count(), 3), |(p, c)| samples[p * 3 + c] as f64 / 255.0)
            }
            ChannelMode::PerChannel => Array2::from_shape_fn((samples.len(), 1), |(i, _)| samples[i] as f64 / 255.0),
        }
    }

    /// Interleaved RGB output for every pixel.
    pub fn map(&self, img: &ImageU8) -> Vec<f64> {
        // both layouts flatten row-major into pixel-major, channel-minor order
        self.mlp.forward_batch(self.rows(img)).output.iter().copied().collect()
    }

    pub fn l1(&self, pairs: &[(ImageU8, ImageU8)]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (input, target) in pairs {
            for (o, &t) in self.map(input).iter().zip(target.data()) {
                sum += (o - t as f64 / 255.0).abs();
            }
            count += target.data().len();
        }
        sum / count as f64
    }
}

/// Train with L1 and Adam, one pair per step. Returns the mapper and the
/// per-step loss trace.
pub fn train_pixel_mapper(
    pairs: &[(ImageU8, ImageU8)],
    mode: ChannelMode,
    hidden: &[usize],
    steps: usize,
    cfg: &TrainConfig,
) -> Result<(PixelMapper, Vec<f64>), ModelError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut mapper = PixelMapper::new(mode, hidden, cfg.seed);
    let mut params = Vec::new();
    mapper.mlp.write_params(&mut params);
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut trace = Vec::with_capacity(steps);
    let mut next = order.len();
    for _ in 0..steps {
        if next == order.len() {
            order.shuffle(&mut rng);
            next = 0;
        }
        let (input, target) = &pairs[order[next]];
        next += 1;
        let fwd = mapper.mlp.forward_batch(mapper.rows(input));
        let count = target.data().len() as f64;
        let mut loss = 0.0;
        let mut d_out = fwd.output.clone();
        for (d, &t) in d_out.iter_mut().zip(target.data()) {
            let r = *d - t as f64 / 255.0;
            loss += r.abs();
            *d = if r > 0.0 {
                1.0 / count
            } else if r < 0.0 {
                -1.0 / count
            } else {
                0.0
            };
        }
        trace.push(loss / count);
        let mut grads = vec![0.0; params.len()];
        mapper.mlp.backward(&fwd, d_out, &mut grads);
        adam_step(&mut params, &grads, &mut adam, cfg)?;
        mapper.mlp.read_params(&params);
    }
    Ok((mapper, trace))
}
