use super::{LutError, QuantSpec};
use crate::model::{BranchTag, PointwiseBranch, SplitFC};

/// Number of distinct nibble triples, `16³`.
pub const NIBBLE_TRIPLES: usize = 16 * 16 * 16;

/// FP32 branch features for every nibble triple; row `r·256 + g·16 + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLut {
    pub tag: BranchTag,
    channels: usize,
    values: Vec<f32>,
}

impl ChannelLut {
    pub fn from_values(tag: BranchTag, channels: usize, values: Vec<f32>) -> Result<Self, LutError> {
        if channels == 0 || values.len() != NIBBLE_TRIPLES * channels {
            return Err(LutError::Malformed(format!(
                "channel table of {} values for {channels} channels",
                values.len()
            )));
        }
        Ok(Self {
            tag,
            channels,
            values,
        })
    }

    #[inline]
    pub fn index(rgb: [u8; 3]) -> usize {
        ((rgb[0] as usize) << 8) | ((rgb[1] as usize) << 4) | rgb[2] as usize
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn row(&self, index: usize) -> &[f32] {
        &self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn entry(&self, rgb: [u8; 3]) -> &[f32] {
        self.row(Self::index(rgb))
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Tabulate a pointwise branch over all 4096 nibble triples.
pub fn build_channel_lut(branch: &PointwiseBranch, tag: BranchTag) -> Result<ChannelLut, LutError> {
    if !branch.is_pointwise() {
        return Err(LutError::UnsupportedKernel(branch.kernel()));
    }
    let channels = branch.output_width();
    let mut values = Vec::with_capacity(NIBBLE_TRIPLES * channels);
    for r in 0..16u8 {
        for g in 0..16u8 {
            for b in 0..16u8 {
                values.extend(branch.pixel_features([r, g, b]).into_iter().map(|v| v as f32));
            }
        }
    }
    ChannelLut::from_values(tag, channels, values)
}

/// `K` INT8 tables of `V × V × N` partial weights sharing one dequantization scale.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightLut {
    groups: usize,
    levels: usize,
    outputs: usize,
    values: Vec<i8>,
    scale: f32,
}

impl WeightLut {
    pub fn from_values(groups: usize, levels: usize, outputs: usize, values: Vec<i8>, scale: f32) -> Result<Self, LutError> {
        if values.len() != groups * levels * levels * outputs {
            return Err(LutError::Malformed(format!(
                "weight table of {} values for {groups}x{levels}x{levels}x{outputs}",
                values.len()
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(LutError::Malformed(format!("weight scale {scale}")));
        }
        if values.contains(&i8::MIN) {
            return Err(LutError::Malformed("weight value -128 outside [-127, 127]".into()));
        }
        Ok(Self {
            groups,
            levels,
            outputs,
            values,
            scale,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// The `N` stored values of group `k` at index pair `(i, j)`.
    #[inline]
    pub fn cell(&self, k: usize, i: usize, j: usize) -> &[i8] {
        let at = ((k * self.levels + i) * self.levels + j) * self.outputs;
        &self.values[at..at + self.outputs]
    }
}

/// Tabulate every split-FC group over the full `V × V` grid of quantized inputs
/// and quantize with a symmetric global scale `max|FC| / 127`.
pub fn build_weight_lut(head: &SplitFC, q: &QuantSpec) -> Result<WeightLut, LutError> {
    q.validate()?;
    if head.group_len() != 2 {
        return Err(LutError::UnsupportedGroupLength(head.group_len()));
    }
    let (groups, levels, outputs) = (head.group_count(), q.levels(), head.outputs());
    let mut raw = Vec::with_capacity(groups * levels * levels * outputs);
    for k in 0..groups {
        for i in 0..levels {
            for j in 0..levels {
                raw.extend(head.eval_group(k, &[q.dequantize(i), q.dequantize(j)]));
            }
        }
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(LutError::NonFinite);
    }
    let max_abs = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs > 0.0 {
        (max_abs / 127.0) as f32
    } else {
        1.0
    };
    let s = scale as f64;
    let values = raw
        .iter()
        .map(|v| (v / s).round().clamp(-127.0, 127.0) as i8)
        .collect();
    WeightLut::from_values(groups, levels, outputs, values, scale)
}
