//! Sliding-window extraction of 4th-order patch tensors and their inverse.
//!
//! A window of `Nt` frames becomes a tensor of shape `Nw x Nw x Nt x Np`:
//! in-patch row, in-patch column, frame offset within the window, patch index.
//! The patch grid steps by `stride` and clamps its last row/column so the
//! frame border is always covered.

use thiserror::Error;

use crate::tensor::{DenseTensor, TensorError};

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("empty frame list")]
    EmptyInput,
    #[error("frame {index} is {got_h}x{got_w}, expected {want_h}x{want_w}")]
    FrameSizeMismatch {
        index: usize,
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("pixel count {got} does not match {h}x{w}")]
    PixelCount { got: usize, h: usize, w: usize },
    #[error("pixel {index} = {value} outside [0,1]")]
    PixelRange { index: usize, value: f64 },
    #[error("pixel {index} is not finite")]
    PixelNonFinite { index: usize },
    #[error("patch size {patch} exceeds frame dimensions {h}x{w}")]
    PatchTooLarge { patch: usize, h: usize, w: usize },
    #[error("stride {stride} outside valid range [1, {patch}]")]
    BadStride { stride: usize, patch: usize },
    #[error("window [{start}, {start}+{len}) outside sequence of {frames} frames")]
    WindowOutOfRange {
        start: usize,
        len: usize,
        frames: usize,
    },
    #[error("tensor shape {got:?} inconsistent with provenance ({want:?})")]
    ProvenanceMismatch { got: Vec<usize>, want: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Single grayscale frame. Pixels are stored row-major and addressed `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Frame {
    /// Normalized-intensity frame; every pixel must lie in `[0, 1]`.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self, PatchError> {
        let f = Self::from_raw(height, width, pixels)?;
        for (i, &v) in f.pixels.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(PatchError::PixelRange { index: i, value: v });
            }
        }
        Ok(f)
    }

    /// Unconstrained-range frame, for decomposition components that leave
    /// `[0, 1]` (sparse residuals can be negative, backgrounds can overshoot).
    pub fn from_raw(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self, PatchError> {
        if pixels.len() != height * width {
            return Err(PatchError::PixelCount {
                got: pixels.len(),
                h: height,
                w: width,
            });
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(PatchError::PixelNonFinite { index: i });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.pixels[col + self.width * row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.pixels[col + self.width * row] = v;
    }
}

/// Patch-tensor geometry: square patch side, grid stride, frames per window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub temporal_size: usize,
}

impl PatchConfig {
    pub fn validate(&self, height: usize, width: usize) -> Result<(), PatchError> {
        if self.patch_size == 0 || self.patch_size > height || self.patch_size > width {
            return Err(PatchError::PatchTooLarge {
                patch: self.patch_size,
                h: height,
                w: width,
            });
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(PatchError::BadStride {
                stride: self.stride,
                patch: self.patch_size,
            });
        }
        Ok(())
    }
}

/// Top-left positions of patches along one axis: multiples of `stride`, with
/// the final position clamped to `extent - patch` so the border is covered.
pub fn grid_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut pos = Vec::new();
    let mut p = 0;
    while p <= last {
        pos.push(p);
        if p == last {
            return pos;
        }
        p += stride;
    }
    pos.push(last);
    pos
}

/// Where each patch came from, enough to invert the extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchProvenance {
    pub frame_height: usize,
    pub frame_width: usize,
    /// First frame of the temporal window within the full sequence.
    pub window_start: usize,
    /// Top-left `(row, col)` per patch index.
    pub origins: Vec<(usize, usize)>,
}

/// 4th-order patch tensor plus the geometry needed to reconstruct frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTensor4D {
    pub tensor: DenseTensor,
    pub provenance: PatchProvenance,
}

/// Extracts the patch tensor for the window starting at `window_start`.
pub fn build_tensor(
    frames: &[Frame],
    cfg: &PatchConfig,
    window_start: usize,
) -> Result<PatchTensor4D, PatchError> {
    let first = frames.first().ok_or(PatchError::EmptyInput)?;
    let (h, w) = (first.height, first.width);
    for (i, f) in frames.iter().enumerate() {
        if f.height != h || f.width != w {
            return Err(PatchError::FrameSizeMismatch {
                index: i,
                got_h: f.height,
                got_w: f.width,
                want_h: h,
                want_w: w,
            });
        }
    }
    cfg.validate(h, w)?;
    let nt = cfg.temporal_size;
    if nt == 0 || window_start + nt > frames.len() {
        return Err(PatchError::WindowOutOfRange {
            start: window_start,
            len: nt,
            frames: frames.len(),
        });
    }
    let rows = grid_positions(h, cfg.patch_size, cfg.stride);
    let cols = grid_positions(w, cfg.patch_size, cfg.stride);
    // Patch index runs over the grid with the row position fastest.
    let mut origins = Vec::with_capacity(rows.len() * cols.len());
    for &c in &cols {
        for &r in &rows {
            origins.push((r, c));
        }
    }
    let nw = cfg.patch_size;
    let np = origins.len();
    let mut tensor = DenseTensor::zeros(&[nw, nw, nt, np])?;
    {
        let data = tensor.data_mut();
        let mut flat = 0;
        for (r0, c0) in &origins {
            for t in 0..nt {
                let frame = &frames[window_start + t];
                for j in 0..nw {
                    for i in 0..nw {
                        // storage order: i fastest, then j, t, p
                        data[flat + i] = frame.get(r0 + i, c0 + j);
                    }
                    flat += nw;
                }
            }
        }
    }
    Ok(PatchTensor4D {
        tensor,
        provenance: PatchProvenance {
            frame_height: h,
            frame_width: w,
            window_start,
            origins,
        },
    })
}

/// How to merge values where patches overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overlap {
    #[default]
    Mean,
    Median,
}

/// Inverts [`build_tensor`]: returns the window's frames, overlaps merged per
/// `overlap`. A pixel whose contributions are all identical reproduces that
/// value bit-exactly.
pub fn reconstruct(t: &PatchTensor4D, overlap: Overlap) -> Result<Vec<Frame>, PatchError> {
    let shape = t.tensor.shape();
    let (h, w) = (t.provenance.frame_height, t.provenance.frame_width);
    let ok = shape.len() == 4
        && shape[0] == shape[1]
        && shape[3] == t.provenance.origins.len()
        && t.provenance
            .origins
            .iter()
            .all(|&(r, c)| r + shape[0] <= h && c + shape[1] <= w);
    if !ok {
        return Err(PatchError::ProvenanceMismatch {
            got: shape.to_vec(),
            want: vec![shape[0], shape[0], shape[2], t.provenance.origins.len()],
        });
    }
    let (nw, nt, np) = (shape[0], shape[2], shape[3]);
    let data = t.tensor.data();
    let mut frames = Vec::with_capacity(nt);
    match overlap {
        Overlap::Mean => {
            for tt in 0..nt {
                let mut acc: Vec<MeanCell> = vec![MeanCell::default(); h * w];
                for p in 0..np {
                    let (r0, c0) = t.provenance.origins[p];
                    for j in 0..nw {
                        let base = nw * (j + nw * (tt + nt * p));
                        for i in 0..nw {
                            acc[(c0 + j) + w * (r0 + i)].push(data[base + i]);
                        }
                    }
                }
                let pixels = acc.iter().map(MeanCell::value).collect();
                frames.push(Frame::from_raw(h, w, pixels)?);
            }
        }
        Overlap::Median => {
            for tt in 0..nt {
                let mut acc: Vec<Vec<f64>> = vec![Vec::new(); h * w];
                for p in 0..np {
                    let (r0, c0) = t.provenance.origins[p];
                    for j in 0..nw {
                        let base = nw * (j + nw * (tt + nt * p));
                        for i in 0..nw {
                            acc[(c0 + j) + w * (r0 + i)].push(data[base + i]);
                        }
                    }
                }
                let pixels = acc
                    .iter_mut()
                    .map(|vals| {
                        debug_assert!(!vals.is_empty(), "border clamp guarantees coverage");
                        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        let n = vals.len();
                        if n % 2 == 1 {
                            vals[n / 2]
                        } else {
                            0.5 * (vals[n / 2 - 1] + vals[n / 2])
                        }
                    })
                    .collect();
                frames.push(Frame::from_raw(h, w, pixels)?);
            }
        }
    }
    Ok(frames)
}

/// Running mean that short-circuits when every contribution is identical, so
/// the roundtrip through overlapping patches is exact rather than 1-ulp off.
#[derive(Debug, Clone, Copy, Default)]
struct MeanCell {
    sum: f64,
    count: u32,
    first: f64,
    uniform: bool,
}

impl MeanCell {
    #[inline]
    fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.first = v;
            self.uniform = true;
        } else if v != self.first {
            self.uniform = false;
        }
        self.sum += v;
        self.count += 1;
    }

    #[inline]
    fn value(&self) -> f64 {
        debug_assert!(self.count > 0, "border clamp guarantees coverage");
        if self.uniform {
            self.first
        } else {
            self.sum / self.count as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
    }

    fn random_frames(n: usize, h: usize, w: usize, seed: &mut u64) -> Vec<Frame> {
        (0..n)
            .map(|_| Frame::new(h, w, (0..h * w).map(|_| lcg(seed)).collect()).unwrap())
            .collect()
    }

    #[test]
    fn grid_covers_border_with_clamp() {
        assert_eq!(grid_positions(256, 60, 60), vec![0, 60, 120, 180, 196]);
        assert_eq!(grid_positions(60, 60, 60), vec![0]);
        assert_eq!(grid_positions(10, 4, 3), vec![0, 3, 6]);
        assert_eq!(grid_positions(11, 4, 3), vec![0, 3, 6, 7]);
    }

    #[test]
    fn default_sequence_geometry_yields_25_patches() {
        let mut seed = 3;
        let frames = random_frames(15, 256, 256, &mut seed);
        let cfg = PatchConfig {
            patch_size: 60,
            stride: 60,
            temporal_size: 15,
        };
        let pt = build_tensor(&frames, &cfg, 0).unwrap();
        assert_eq!(pt.tensor.shape(), &[60, 60, 15, 25]);
        assert_eq!(pt.provenance.origins.len(), 25);
    }

    #[test]
    fn single_patch_window_matches_frames_directly() {
        let mut seed = 5;
        let frames = random_frames(3, 8, 8, &mut seed);
        let cfg = PatchConfig {
            patch_size: 8,
            stride: 8,
            temporal_size: 3,
        };
        let pt = build_tensor(&frames, &cfg, 0).unwrap();
        assert_eq!(pt.tensor.shape(), &[8, 8, 3, 1]);
        for t in 0..3 {
            for i in 0..8 {
                for j in 0..8 {
                    assert_eq!(pt.tensor.get(&[i, j, t, 0]), frames[t].get(i, j));
                }
            }
        }
    }

    #[test]
    fn constant_frames_give_constant_tensor() {
        let frames: Vec<Frame> = (0..4)
            .map(|_| Frame::new(10, 12, vec![0.25; 120]).unwrap())
            .collect();
        let cfg = PatchConfig {
            patch_size: 5,
            stride: 3,
            temporal_size: 4,
        };
        let pt = build_tensor(&frames, &cfg, 0).unwrap();
        assert!(pt.tensor.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn every_pixel_is_covered_by_some_patch() {
        for (h, w, nw, stride) in [(17, 23, 5, 4), (16, 16, 7, 7), (9, 31, 3, 1)] {
            let rows = grid_positions(h, nw, stride);
            let cols = grid_positions(w, nw, stride);
            let mut covered = vec![false; h * w];
            for &r in &rows {
                for &c in &cols {
                    for i in 0..nw {
                        for j in 0..nw {
                            covered[(c + j) + w * (r + i)] = true;
                        }
                    }
                }
            }
            assert!(covered.iter().all(|&c| c), "{h}x{w} patch {nw} stride {stride}");
        }
    }

    #[test]
    fn roundtrip_is_exact_for_overlapping_and_aligned_strides() {
        let mut seed = 7;
        for stride in [3, 5, 7] {
            let frames = random_frames(4, 19, 14, &mut seed);
            let cfg = PatchConfig {
                patch_size: 7,
                stride,
                temporal_size: 4,
            };
            let pt = build_tensor(&frames, &cfg, 0).unwrap();
            for overlap in [Overlap::Mean, Overlap::Median] {
                let back = reconstruct(&pt, overlap).unwrap();
                assert_eq!(back, frames, "stride {stride} {overlap:?}");
            }
        }
    }

    #[test]
    fn roundtrip_respects_window_start() {
        let mut seed = 9;
        let frames = random_frames(10, 12, 12, &mut seed);
        let cfg = PatchConfig {
            patch_size: 6,
            stride: 4,
            temporal_size: 3,
        };
        let pt = build_tensor(&frames, &cfg, 5).unwrap();
        assert_eq!(pt.provenance.window_start, 5);
        let back = reconstruct(&pt, Overlap::Mean).unwrap();
        assert_eq!(back[..], frames[5..8]);
    }

    #[test]
    fn reconstruction_is_linear_in_the_tensor() {
        let mut seed = 11;
        let frames = random_frames(3, 11, 13, &mut seed);
        let cfg = PatchConfig {
            patch_size: 5,
            stride: 2,
            temporal_size: 3,
        };
        let pt = build_tensor(&frames, &cfg, 0).unwrap();
        let x = &pt.tensor;
        let y = DenseTensor::from_fn(x.shape(), |_| lcg(&mut seed) - 0.5).unwrap();
        let combo = PatchTensor4D {
            tensor: x.scale(0.7).add(&y.scale(-1.3)).unwrap(),
            provenance: pt.provenance.clone(),
        };
        let ry = reconstruct(
            &PatchTensor4D {
                tensor: y,
                provenance: pt.provenance.clone(),
            },
            Overlap::Mean,
        )
        .unwrap();
        let rx = reconstruct(&pt, Overlap::Mean).unwrap();
        let rc = reconstruct(&combo, Overlap::Mean).unwrap();
        for t in 0..3 {
            for r in 0..11 {
                for c in 0..13 {
                    let want = 0.7 * rx[t].get(r, c) - 1.3 * ry[t].get(r, c);
                    assert!((rc[t].get(r, c) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn build_rejects_invalid_geometry_and_inputs() {
        let mut seed = 13;
        let frames = random_frames(4, 10, 10, &mut seed);
        let ok = PatchConfig {
            patch_size: 5,
            stride: 5,
            temporal_size: 2,
        };
        assert!(build_tensor(&[], &ok, 0).is_err());
        assert!(matches!(
            build_tensor(
                &frames,
                &PatchConfig {
                    patch_size: 11,
                    ..ok
                },
                0
            ),
            Err(PatchError::PatchTooLarge { .. })
        ));
        for stride in [0, 6] {
            assert!(matches!(
                build_tensor(&frames, &PatchConfig { stride, ..ok }, 0),
                Err(PatchError::BadStride { .. })
            ));
        }
        assert!(matches!(
            build_tensor(&frames, &ok, 3),
            Err(PatchError::WindowOutOfRange { .. })
        ));
        let mut mixed = frames.clone();
        mixed.push(Frame::new(9, 10, vec![0.0; 90]).unwrap());
        assert!(matches!(
            build_tensor(&mixed, &ok, 0),
            Err(PatchError::FrameSizeMismatch { .. })
        ));
    }

    #[test]
    fn frame_constructor_enforces_unit_range_but_raw_does_not() {
        assert!(matches!(
            Frame::new(2, 2, vec![0.0, 0.5, 1.0, 1.5]),
            Err(PatchError::PixelRange { index: 3, .. })
        ));
        assert!(Frame::from_raw(2, 2, vec![-3.0, 0.5, 1.0, 7.5]).is_ok());
        assert!(matches!(
            Frame::from_raw(2, 2, vec![0.0; 3]),
            Err(PatchError::PixelCount { .. })
        ));
    }

    #[test]
    fn median_overlap_differs_from_mean_on_skewed_contributions() {
        // Pixel (0,2) of a 3x5 frame with 3x3 patches at stride 1 is covered by
        // all three patches. Contributions 0.9, 0.0, 0.0: mean 0.3, median 0.
        let cfg = PatchConfig {
            patch_size: 3,
            stride: 1,
            temporal_size: 1,
        };
        let frames = vec![Frame::new(3, 5, vec![0.0; 15]).unwrap()];
        let pt = build_tensor(&frames, &cfg, 0).unwrap();
        assert_eq!(pt.provenance.origins, vec![(0, 0), (0, 1), (0, 2)]);
        let mut t = pt.tensor.clone();
        t.set(&[0, 2, 0, 0], 0.9); // patch at col 0 sees pixel (0,2) at j=2
        let modified = PatchTensor4D {
            tensor: t,
            provenance: pt.provenance.clone(),
        };
        let mean = reconstruct(&modified, Overlap::Mean).unwrap();
        let median = reconstruct(&modified, Overlap::Median).unwrap();
        assert!((mean[0].get(0, 2) - 0.3).abs() < 1e-12);
        assert_eq!(median[0].get(0, 2), 0.0);
    }
}
