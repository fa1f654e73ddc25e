use std::time::Instant;

use serde::Serialize;

use super::{fuse_with, interpolate_with, weights_with, EngineError, NoTally, Tally};
use crate::imaging::{bilinear_downsample, ImageU8};
use crate::lutgen::LutBundle;
use crate::model::{pooled_features, predict_weights, TrainableModel};

/// Exact operation counts of one retouch, split by stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OpCountReport {
    pub working_pixels: u64,
    pub full_pixels: u64,
    /// Channel LUT rows and Weight LUT cells read.
    pub table_lookups: u64,
    /// Additions folding Channel LUT rows into the pooled sums, `2·P·C`.
    pub channel_accumulation_adds: u64,
    /// All weight-stage additions, channel accumulation included.
    pub adds: u64,
    pub multiplies: u64,
    /// `adds + multiplies` of the weight stage.
    pub weight_stage_ops: u64,
    /// Arithmetic of fusing the basis lattices.
    pub fusion_ops: u64,
    /// Arithmetic of the per-pixel trilinear pass.
    pub interpolation_ops: u64,
    pub interpolation_lookups: u64,
}

#[derive(Default)]
struct Counter {
    lookups: u64,
    channel_adds: u64,
    adds: u64,
    multiplies: u64,
}

impl Tally for Counter {
    fn lookups(&mut self, n: u64) {
        self.lookups += n;
    }
    fn channel_adds(&mut self, n: u64) {
        self.channel_adds += n;
    }
    fn adds(&mut self, n: u64) {
        self.adds += n;
    }
    fn multiplies(&mut self, n: u64) {
        self.multiplies += n;
    }
}

impl Counter {
    fn arithmetic(&self) -> u64 {
        self.channel_adds + self.adds + self.multiplies
    }
}

/// Count every operation of a retouch at the given sizes by running the
/// instrumented path on a synthetic image.
pub fn count_ops(
    bundle: &LutBundle,
    working_size: (usize, usize),
    full_size: (usize, usize),
) -> Result<OpCountReport, EngineError> {
    bundle.validate()?;
    let (ww, wh) = working_size;
    let (fw, fh) = full_size;
    if ww * wh == 0 || fw * fh == 0 {
        return Err(EngineError::DimensionMismatch("sizes must be positive".into()));
    }
    let working = ImageU8::from_fn(ww, wh, |x, y| [(x * 7) as u8, (y * 13) as u8, (x + y) as u8]);
    let full = ImageU8::from_fn(fw, fh, |x, y| [(x * 3) as u8, (y * 5) as u8, (x ^ y) as u8]);

    let mut weight = Counter::default();
    let w = weights_with(bundle, &working, &mut weight);
    let mut fusion = Counter::default();
    let fused = fuse_with(bundle, &w, &mut fusion)?;
    let mut interp = Counter::default();
    interpolate_with(&fused, &full, &mut interp);

    Ok(OpCountReport {
        working_pixels: (ww * wh) as u64,
        full_pixels: (fw * fh) as u64,
        table_lookups: weight.lookups,
        channel_accumulation_adds: weight.channel_adds,
        adds: weight.channel_adds + weight.adds,
        multiplies: weight.multiplies,
        weight_stage_ops: weight.arithmetic(),
        fusion_ops: fusion.arithmetic(),
        interpolation_ops: interp.arithmetic(),
        interpolation_lookups: interp.lookups,
    })
}

/// Wall-clock statistics in milliseconds over all timed samples.
#[derive(Debug, Clone, Serialize)]
pub struct TimingStats {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub samples: usize,
}

impl TimingStats {
    fn from_samples(mut ms: Vec<f64>) -> Self {
        ms.sort_by(f64::total_cmp);
        let pick = |p: f64| ms[((ms.len() - 1) as f64 * p).round() as usize];
        Self {
            median: pick(0.5),
            p10: pick(0.1),
            p90: pick(0.9),
            samples: ms.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub repeats: usize,
    pub warmup: usize,
    pub working_size: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repeats: 10,
            warmup: 2,
            working_size: super::DEFAULT_WORKING_SIZE,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub images: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub working_size: usize,
    /// Working image to basis weights, table path.
    pub weight_stage_ms: TimingStats,
    /// Lattice fusion plus trilinear mapping of the full image.
    pub interpolation_stage_ms: TimingStats,
    /// Working image to basis weights through the networks, when a model was given.
    pub network_weight_stage_ms: Option<TimingStats>,
    /// Network weight-stage median over table weight-stage median.
    pub speedup: Option<f64>,
}

fn time_ms(f: impl FnOnce()) -> f64 {
    let start = Instant::now();
    f();
    start.elapsed().as_secs_f64() * 1e3
}

/// Time both stages on every image, `warmup` untimed rounds first. With a
/// model, also time the network weight stage on the same working images.
pub fn bench(
    bundle: &LutBundle,
    images: &[ImageU8],
    opts: &BenchOptions,
    model: Option<&TrainableModel>,
) -> Result<BenchReport, EngineError> {
    bundle.validate()?;
    if opts.repeats < 3 {
        return Err(EngineError::InvalidBench(format!("repeats must be at least 3, got {}", opts.repeats)));
    }
    if opts.warmup < 1 {
        return Err(EngineError::InvalidBench("at least one warmup round is required".into()));
    }
    if images.is_empty() {
        return Err(EngineError::InvalidBench("no images to time".into()));
    }
    if opts.working_size == 0 {
        return Err(EngineError::InvalidBench("working size must be positive".into()));
    }
    let working: Vec<ImageU8> = images
        .iter()
        .map(|img| bilinear_downsample(img, opts.working_size, opts.working_size))
        .collect();

    let mut weight_ms = Vec::new();
    let mut interp_ms = Vec::new();
    let mut net_ms = Vec::new();
    for round in 0..opts.warmup + opts.repeats {
        let timed = round >= opts.warmup;
        for (full, small) in images.iter().zip(&working) {
            let mut w = Vec::new();
            let t_w = time_ms(|| w = weights_with(bundle, small, &mut NoTally));
            let mut result = Ok(());
            let t_i = time_ms(|| {
                result = fuse_with(bundle, &w, &mut NoTally).map(|fused| {
                    std::hint::black_box(interpolate_with(&fused, full, &mut NoTally));
                })
            });
            result?;
            if let Some(model) = model {
                let mut out = Ok(Vec::new());
                let t_n = time_ms(|| out = predict_weights(&model.head, &pooled_features(model, small)));
                std::hint::black_box(out?);
                if timed {
                    net_ms.push(t_n);
                }
            }
            if timed {
                weight_ms.push(t_w);
                interp_ms.push(t_i);
            }
            std::hint::black_box(&w);
        }
    }
    let weight_stage_ms = TimingStats::from_samples(weight_ms);
    let network_weight_stage_ms = model.map(|_| TimingStats::from_samples(net_ms));
    let speedup = network_weight_stage_ms
        .as_ref()
        .map(|n| n.median / weight_stage_ms.median.max(1e-9));
    Ok(BenchReport {
        images: images.len(),
        repeats: opts.repeats,
        warmup: opts.warmup,
        working_size: opts.working_size,
        weight_stage_ms,
        interpolation_stage_ms: TimingStats::from_samples(interp_ms),
        network_weight_stage_ms,
        speedup,
    })
}
