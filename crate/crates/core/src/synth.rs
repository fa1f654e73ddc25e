//! Synthetic paired data: smooth multi-octave noise images and fixed analytic
//! color maps applied to them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::imaging::{unit_to_byte, ImageU8};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("unknown transform `{0}` (expected gamma:<g>, channel-mix, warm-tone, channel-swap, exposure, joined by +)")]
    UnknownTransform(String),
    #[error("invalid gamma `{0}`")]
    BadGamma(String),
}

/// Row-stochastic mixing matrix used by [`Transform::ChannelMix`].
pub const CHANNEL_MIX: [[f64; 3]; 3] = [[0.80, 0.15, 0.05], [0.10, 0.80, 0.10], [0.05, 0.15, 0.80]];

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// `x ↦ x^γ` on every sample.
    Gamma(f64),
    /// Fixed 3×3 mix with rows summing to one.
    ChannelMix,
    /// Warmer white balance: red lifted, blue cut.
    WarmTone,
    /// `(r, g, b) ↦ (g, b, r)`.
    ChannelSwap,
    /// Image-adaptive gamma that moves the mean sample to one half.
    Exposure,
    /// Left-to-right composition.
    Chain(Vec<Transform>),
}

impl FromStr for Transform {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        let parts: Vec<&str> = s.split('+').map(str::trim).collect();
        if parts.len() > 1 {
            return parts.into_iter().map(str::parse).collect::<Result<_, _>>().map(Transform::Chain);
        }
        match s.trim() {
            "channel-mix" => Ok(Self::ChannelMix),
            "warm-tone" => Ok(Self::WarmTone),
            "channel-swap" => Ok(Self::ChannelSwap),
            "exposure" => Ok(Self::Exposure),
            other => match other.strip_prefix("gamma:") {
                Some(g) => match g.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Ok(Self::Gamma(v)),
                    _ => Err(SynthError::BadGamma(g.to_string())),
                },
                None => Err(SynthError::UnknownTransform(other.to_string())),
            },
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gamma(g) => write!(f, "gamma:{g}"),
            Self::ChannelMix => f.write_str("channel-mix"),
            Self::WarmTone => f.write_str("warm-tone"),
            Self::ChannelSwap => f.write_str("channel-swap"),
            Self::Exposure => f.write_str("exposure"),
            Self::Chain(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl Transform {
    fn apply_unit(&self, px: &mut [[f64; 3]]) {
        match self {
            Self::Gamma(g) => px.iter_mut().flatten().for_each(|v| *v = v.powf(*g)),
            Self::ChannelMix => {
                for p in px.iter_mut() {
                    let src = *p;
                    for (o, row) in p.iter_mut().zip(&CHANNEL_MIX) {
                        *o = row[0] * src[0] + row[1] * src[1] + row[2] * src[2];
                    }
                }
            }
            Self::WarmTone => {
                for p in px.iter_mut() {
                    p[0] = (p[0] * 1.08 + 0.02).min(1.0);
                    p[2] *= 0.88;
                }
            }
            Self::ChannelSwap => px.iter_mut().for_each(|p| *p = [p[1], p[2], p[0]]),
            Self::Exposure => {
                let mean = px.iter().flatten().sum::<f64>() / (px.len() * 3) as f64;
                let g = 0.5f64.ln() / mean.clamp(0.05, 0.95).ln();
                px.iter_mut().flatten().for_each(|v| *v = v.powf(g));
            }
            Self::Chain(parts) => parts.iter().for_each(|t| t.apply_unit(px)),
        }
    }

    pub fn apply(&self, img: &ImageU8) -> ImageU8 {
        let mut px: Vec<[f64; 3]> = img.pixels().map(|p| p.map(|v| v as f64 / 255.0)).collect();
        self.apply_unit(&mut px);
        let data = px.iter().flat_map(|p| p.map(unit_to_byte)).collect();
        ImageU8::new(img.width(), img.height(), data).expect("same dimensions")
    }
}

fn value_noise(width: usize, height: usize, cells: usize, rng: &mut impl Rng) -> Vec<f64> {
    let g = cells + 1;
    let grid: Vec<f64> = (0..g * g).map(|_| rng.gen::<f64>()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = (y as f64 + 0.5) / height as f64 * cells as f64;
        let y0 = (fy.floor() as usize).min(cells - 1);
        let ty = smooth(fy - y0 as f64);
        for x in 0..width {
            let fx = (x as f64 + 0.5) / width as f64 * cells as f64;
            let x0 = (fx.floor() as usize).min(cells - 1);
            let tx = smooth(fx - x0 as f64);
            let at = |i: usize, j: usize| grid[(y0 + j) * g + x0 + i];
            let top = at(0, 0) * (1.0 - tx) + at(1, 0) * tx;
            let bottom = at(0, 1) * (1.0 - tx) + at(1, 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Random smooth color image: per-channel value noise at 2, 4, and 8 cells
/// per side, contrast-stretched and raised to a random exposure exponent.
pub fn smooth_noise(width: usize, height: usize, rng: &mut impl Rng) -> ImageU8 {
    textured_noise(width, height, 0.0, rng)
}

/// [`smooth_noise`] plus independent per-sample grain uniform in `±grain`,
/// added before the exposure curve.
pub fn textured_noise(width: usize, height: usize, grain: f64, rng: &mut impl Rng) -> ImageU8 {
    let exposure = rng.gen_range(0.6..1.6);
    let mut channels = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut acc = vec![0.0; width * height];
        for (cells, amp) in [(2, 0.5), (4, 0.3), (8, 0.2)] {
            for (a, v) in acc.iter_mut().zip(value_noise(width, height, cells, rng)) {
                *a += amp * v;
            }
        }
        channels.push(acc);
    }
    let mut data = Vec::with_capacity(width * height * 3);
    for p in 0..width * height {
        for ch in &channels {
            let jitter = if grain > 0.0 { rng.gen_range(-grain..grain) } else { 0.0 };
            let v = (0.5 + (ch[p] - 0.5) * 2.2 + jitter).clamp(0.0, 1.0);
            data.push(unit_to_byte(v.powf(exposure)));
        }
    }
    ImageU8::new(width, height, data).expect("consistent buffer")
}

/// Named synthetic pair.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub name: String,
    pub input: ImageU8,
    pub target: ImageU8,
}

/// `count` deterministic pairs of `size × size` smooth images.
pub fn synth_pairs(count: usize, size: usize, transform: &Transform, seed: u64) -> Vec<SynthPair> {
    synth_pairs_textured(count, size, 0.0, transform, seed)
}

/// [`synth_pairs`] with per-sample grain (see [`textured_noise`]).
pub fn synth_pairs_textured(count: usize, size: usize, grain: f64, transform: &Transform, seed: u64) -> Vec<SynthPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let input = textured_noise(size, size, grain, &mut rng);
            SynthPair {
                name: format!("{i:04}.png"),
                target: transform.apply(&input),
                input,
            }
        })
        .collect()
}
