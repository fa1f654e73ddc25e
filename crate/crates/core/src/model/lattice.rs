//! 3D color lattices and trilinear lookup.

use num_traits::Float;

use super::ModelError;
use crate::imaging::{ImageF32, ImageU8};

/// `bins³` RGB vertices. Vertex `(i, j, k)` sits at input color
/// `(i, j, k) / (bins - 1)`; storage is `i`-major, then `j`, then `k`, with the
/// three output channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice3D<T> {
    bins: usize,
    data: Vec<T>,
}

impl<T: Float> Lattice3D<T> {
    pub fn zeros(bins: usize) -> Self {
        assert!(bins >= 2, "a lattice needs at least two bins per axis");
        Self {
            bins,
            data: vec![T::zero(); bins * bins * bins * 3],
        }
    }

    pub fn identity(bins: usize) -> Self {
        let mut lattice = Self::zeros(bins);
        let step = T::from(bins - 1).unwrap();
        for i in 0..bins {
            for j in 0..bins {
                for k in 0..bins {
                    let at = lattice.offset(i, j, k);
                    lattice.data[at] = T::from(i).unwrap() / step;
                    lattice.data[at + 1] = T::from(j).unwrap() / step;
                    lattice.data[at + 2] = T::from(k).unwrap() / step;
                }
            }
        }
        lattice
    }

    pub fn from_data(bins: usize, data: Vec<T>) -> Result<Self, ModelError> {
        if bins < 2 || data.len() != bins * bins * bins * 3 {
            return Err(ModelError::DimensionMismatch(format!(
                "lattice with {bins} bins cannot hold {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("lattice vertex".into()));
        }
        Ok(Self { bins, data })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn vertex_count(&self) -> usize {
        self.bins * self.bins * self.bins
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        ((i * self.bins + j) * self.bins + k) * 3
    }

    pub fn vertex(&self, i: usize, j: usize, k: usize) -> [T; 3] {
        let at = self.offset(i, j, k);
        [self.data[at], self.data[at + 1], self.data[at + 2]]
    }

    pub fn cast<U: Float>(&self) -> Lattice3D<U> {
        Lattice3D {
            bins: self.bins,
            data: self.data.iter().map(|&v| U::from(v).unwrap()).collect(),
        }
    }

    /// Interpolated output for one 8-bit color.
    #[inline]
    pub fn lookup(&self, rgb: [u8; 3]) -> [T; 3] {
        let taps = CellTaps::<T>::new(self.bins);
        let mut out = [T::zero(); 3];
        taps.for_each_corner(rgb, |vertex, weight| {
            let at = vertex * 3;
            for (o, &v) in out.iter_mut().zip(&self.data[at..at + 3]) {
                *o = *o + weight * v;
            }
        });
        out
    }
}

/// Per-axis cell position for every byte value of a lattice with fixed bin count.
pub(crate) struct CellTaps<T> {
    bins: usize,
    lower: [usize; 256],
    frac: [T; 256],
}

impl<T: Float> CellTaps<T> {
    pub(crate) fn new(bins: usize) -> Self {
        let mut lower = [0usize; 256];
        let mut frac = [T::zero(); 256];
        let scale = T::from(bins - 1).unwrap() / T::from(255).unwrap();
        for v in 0..256 {
            let pos = T::from(v).unwrap() * scale;
            let i0 = pos.floor().to_usize().unwrap().min(bins - 2);
            lower[v] = i0;
            frac[v] = pos - T::from(i0).unwrap();
        }
        Self { bins, lower, frac }
    }

    /// Visit the eight corners of the cell holding `rgb` as `(vertex index, weight)`.
    #[inline]
    pub(crate) fn for_each_corner(&self, rgb: [u8; 3], mut visit: impl FnMut(usize, T)) {
        let (i, j, k) = (
            self.lower[rgb[0] as usize],
            self.lower[rgb[1] as usize],
            self.lower[rgb[2] as usize],
        );
        let (fr, fg, fb) = (
            self.frac[rgb[0] as usize],
            self.frac[rgb[1] as usize],
            self.frac[rgb[2] as usize],
        );
        let one = T::one();
        let wr = [one - fr, fr];
        let wg = [one - fg, fg];
        let wb = [one - fb, fb];
        let m = self.bins;
        for (di, &a) in wr.iter().enumerate() {
            for (dj, &b) in wg.iter().enumerate() {
                let ab = a * b;
                let base = ((i + di) * m + (j + dj)) * m + k;
                visit(base, ab * wb[0]);
                visit(base + 1, ab * wb[1]);
            }
        }
    }
}

/// Weighted sum of basis lattices, vertex by vertex.
pub fn fuse_luts<T: Float>(basis: &[Lattice3D<T>], weights: &[T]) -> Result<Lattice3D<T>, ModelError> {
    if basis.is_empty() || basis.len() != weights.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} basis lattices for {} weights",
            basis.len(),
            weights.len()
        )));
    }
    let bins = basis[0].bins;
    if basis.iter().any(|b| b.bins != bins) {
        return Err(ModelError::DimensionMismatch(
            "basis lattices disagree on bin count".into(),
        ));
    }
    let mut fused = Lattice3D::zeros(bins);
    for (lattice, &w) in basis.iter().zip(weights) {
        for (acc, &v) in fused.data.iter_mut().zip(&lattice.data) {
            *acc = *acc + w * v;
        }
    }
    Ok(fused)
}

/// Raw (unclamped) trilinear mapping of every pixel, interleaved RGB.
pub fn trilinear_map<T: Float>(lattice: &Lattice3D<T>, img: &ImageU8) -> Vec<T> {
    let taps = CellTaps::<T>::new(lattice.bins);
    let mut out = Vec::with_capacity(img.data().len());
    for rgb in img.pixels() {
        let mut px = [T::zero(); 3];
        taps.for_each_corner(rgb, |vertex, weight| {
            let at = vertex * 3;
            px[0] = px[0] + weight * lattice.data[at];
            px[1] = px[1] + weight * lattice.data[at + 1];
            px[2] = px[2] + weight * lattice.data[at + 2];
        });
        out.extend_from_slice(&px);
    }
    out
}

/// Trilinear mapping into a clamped floating-point image.
pub fn trilinear_apply<T: Float>(lattice: &Lattice3D<T>, img: &ImageU8) -> ImageF32 {
    let raw = trilinear_map(lattice, img);
    let data = raw
        .into_iter()
        .map(|v| v.to_f32().unwrap_or(0.0))
        .collect();
    ImageF32::new(img.width(), img.height(), data).expect("lattice entries are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_vertices_are_normalized_indices() {
        let lattice = Lattice3D::<f64>::identity(5);
        assert_eq!(lattice.vertex(1, 2, 4), [0.25, 0.5, 1.0]);
        assert_eq!(lattice.vertex(0, 0, 0), [0.0; 3]);
    }

    #[test]
    fn identity_reproduces_every_byte() {
        for bins in [2, 3, 17, 33] {
            let lattice = Lattice3D::<f32>::identity(bins);
            for v in 0..=255u8 {
                let out = lattice.lookup([v, 255 - v, v / 2]);
                let expect = [v as f32 / 255.0, (255 - v) as f32 / 255.0, (v / 2) as f32 / 255.0];
                for c in 0..3 {
                    assert!((out[c] - expect[c]).abs() <= 1e-6, "bins {bins} value {v}");
                }
            }
        }
    }

    #[test]
    fn vertex_hits_return_vertex_value_exactly() {
        // 17 bins: byte 0, 255 and every multiple of 255/16 that is integral
        let mut lattice = Lattice3D::<f64>::zeros(2);
        for (n, v) in lattice.data_mut().iter_mut().enumerate() {
            *v = 0.1 * n as f64 - 0.7;
        }
        assert_eq!(lattice.lookup([0, 0, 0]), lattice.vertex(0, 0, 0));
        assert_eq!(lattice.lookup([255, 0, 255]), lattice.vertex(1, 0, 1));
        assert_eq!(lattice.lookup([255, 255, 255]), lattice.vertex(1, 1, 1));
    }

    #[test]
    fn two_bin_unit_lattice_at_mid_gray() {
        let lattice = Lattice3D::<f64>::identity(2);
        let out = trilinear_map(&lattice, &ImageU8::filled(1, 1, [128, 128, 128]));
        for v in out {
            assert!((v - 128.0 / 255.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_lattice_maps_to_black() {
        let img = ImageU8::from_fn(4, 4, |x, y| [(x * 60) as u8, (y * 60) as u8, 9]);
        let out = trilinear_apply(&Lattice3D::<f32>::zeros(9), &img);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fuse_one_hot_selects_basis() {
        let basis = vec![
            Lattice3D::<f64>::identity(3),
            Lattice3D::from_data(3, (0..81).map(|i| i as f64).collect()).unwrap(),
        ];
        assert_eq!(fuse_luts(&basis, &[0.0, 1.0]).unwrap(), basis[1]);
        assert_eq!(fuse_luts(&basis, &[1.0, 0.0]).unwrap(), basis[0]);
        let zero = fuse_luts(&basis, &[0.0, 0.0]).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fuse_half_identity() {
        let basis = vec![Lattice3D::<f64>::identity(4), Lattice3D::zeros(4)];
        let fused = fuse_luts(&basis, &[0.5, 0.5]).unwrap();
        for (f, i) in fused.data().iter().zip(basis[0].data()) {
            assert_eq!(*f, 0.5 * i);
        }
    }

    #[test]
    fn fuse_rejects_mismatch() {
        let basis = vec![Lattice3D::<f64>::identity(4), Lattice3D::zeros(5)];
        assert!(fuse_luts(&basis, &[0.5, 0.5]).is_err());
        assert!(fuse_luts(&basis[..1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn corner_weights_sum_to_one() {
        let taps = CellTaps::<f64>::new(17);
        for v in [0u8, 1, 77, 128, 254, 255] {
            let mut total = 0.0;
            taps.for_each_corner([v, 255 - v, 3], |_, w| total += w);
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
