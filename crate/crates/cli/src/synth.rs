//! Synthetic infrared sequences with planted targets and exact ground truth.
//!
//! A sequence is background + targets + noise, clamped to [0, 1]:
//! the background is constant, a smooth multi-scale drifting field, or a
//! low-rank bilateral ring composition; each target is an isotropic Gaussian
//! blob whose given radius spans two standard deviations, moved by a constant
//! per-frame velocity; noise is zero-mean Gaussian. Everything derives from
//! one seed, so the same spec always produces bit-identical frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use istd_core::evaluation::{EvalError, GroundTruth, TargetRecord};
use istd_core::patch::{Frame, PatchError};
use istd_core::solver::{btr_compose, BtrFactors, Ranks, SolverError, TrChain};
use istd_core::tensor::DenseTensor;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    BadSpec(String),
    #[error("target {index} centroid leaves the frame at frame {frame}")]
    TargetLeavesFrame { index: usize, frame: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Frame(#[from] PatchError),
    #[error(transparent)]
    GroundTruth(#[from] EvalError),
}

/// One moving blob: start position, per-frame velocity, peak brightness
/// added to the background, and radius (two standard deviations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    pub row: f64,
    pub col: f64,
    pub vel_row: f64,
    pub vel_col: f64,
    pub amplitude: f64,
    pub radius: f64,
}

impl TargetSpec {
    fn position(&self, frame: usize) -> (f64, f64) {
        let t = frame as f64;
        (self.row + self.vel_row * t, self.col + self.vel_col * t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundKind {
    /// Every pixel of every frame equals the level.
    Constant(f64),
    /// Sum of a few smooth positive components — two frame-scale fields and
    /// two weaker patch-scale ones — each drifting slowly in time.
    Smooth,
    /// Composition of two random positive ring chains at the given ranks.
    LowRankBtr(Ranks),
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    pub background: BackgroundKind,
    pub noise_sigma: f64,
    pub targets: Vec<TargetSpec>,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.height == 0 || self.width == 0 || self.n_frames == 0 {
            return Err(SynthError::BadSpec(format!(
                "degenerate geometry {}x{}x{}",
                self.height, self.width, self.n_frames
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(SynthError::BadSpec(format!(
                "noise sigma {} must be finite and >= 0",
                self.noise_sigma
            )));
        }
        if let BackgroundKind::Constant(c) = self.background {
            if !(0.0..=1.0).contains(&c) {
                return Err(SynthError::BadSpec(format!(
                    "constant background {c} outside [0, 1]"
                )));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !(t.amplitude > 0.0) || !t.amplitude.is_finite() {
                return Err(SynthError::BadSpec(format!(
                    "target {i} amplitude {} must be positive",
                    t.amplitude
                )));
            }
            if !(t.radius > 0.0) || !t.radius.is_finite() {
                return Err(SynthError::BadSpec(format!(
                    "target {i} radius {} must be positive",
                    t.radius
                )));
            }
            for (v, name) in [
                (t.row, "row"),
                (t.col, "col"),
                (t.vel_row, "vel_row"),
                (t.vel_col, "vel_col"),
            ] {
                if !v.is_finite() {
                    return Err(SynthError::BadSpec(format!(
                        "target {i} {name} is not finite"
                    )));
                }
            }
            for f in 0..self.n_frames {
                let (r, c) = t.position(f);
                let (ri, ci) = (r.round(), c.round());
                if ri < 0.0
                    || ci < 0.0
                    || ri as usize >= self.height
                    || ci as usize >= self.width
                {
                    return Err(SynthError::TargetLeavesFrame { index: i, frame: f });
                }
            }
        }
        Ok(())
    }
}

/// Generates the sequence and its exact per-frame centroids.
pub fn synth_sequence(spec: &SynthSpec) -> Result<(Vec<Frame>, GroundTruth), SynthError> {
    spec.validate()?;
    let (h, w, n) = (spec.height, spec.width, spec.n_frames);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = background(spec, &mut rng)?;

    let mut gt = GroundTruth::new();
    for f in 0..n {
        for (i, t) in spec.targets.iter().enumerate() {
            let (cr, cc) = t.position(f);
            render_blob(&mut data[f], h, w, cr, cc, t.amplitude, t.radius);
            let rec = TargetRecord {
                row: cr.round() as usize,
                col: cc.round() as usize,
                box_size: None,
            };
            gt.push(f, rec).map_err(|_| SynthError::TargetLeavesFrame {
                index: i,
                frame: f,
            })?;
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| SynthError::BadSpec(e.to_string()))?;
        for frame in &mut data {
            for v in frame.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }

    let frames = data
        .into_iter()
        .map(|mut pixels| {
            for v in &mut pixels {
                *v = v.clamp(0.0, 1.0);
            }
            Frame::new(h, w, pixels).map_err(SynthError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((frames, gt))
}

/// Adds `amplitude · exp(−d²/(2σ²))` around a possibly fractional center,
/// with σ = radius/2, rendered out to twice the radius (4σ, < 4e-4 of peak).
fn render_blob(pixels: &mut [f64], h: usize, w: usize, cr: f64, cc: f64, amp: f64, radius: f64) {
    let sigma = radius / 2.0;
    let cut = (2.0 * radius).ceil().max(1.0);
    let r0 = ((cr - cut).floor().max(0.0)) as usize;
    let r1 = ((cr + cut).ceil().min(h as f64 - 1.0)) as usize;
    let c0 = ((cc - cut).floor().max(0.0)) as usize;
    let c1 = ((cc + cut).ceil().min(w as f64 - 1.0)) as usize;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let dr = r as f64 - cr;
            let dc = c as f64 - cc;
            pixels[c + w * r] += amp * (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp();
        }
    }
}

fn background(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, SynthError> {
    let (h, w, n) = (spec.height, spec.width, spec.n_frames);
    match &spec.background {
        BackgroundKind::Constant(c) => Ok(vec![vec![*c; h * w]; n]),
        BackgroundKind::Smooth => Ok(smooth_background(h, w, n, rng)),
        BackgroundKind::LowRankBtr(ranks) => btr_background(h, w, n, *ranks, rng),
    }
}

/// Spatial period, in pixels, of the stride-locked structures: the two
/// shimmer stripes and the diagonal weave. A patch grid whose stride divides
/// this period samples all three at identical phase in every patch, so the
/// across-patch view of the scene stays coherent, the way a static landscape
/// does, while pixel columns and rows still see the stripes swing through
/// time.
pub const SHIMMER_PERIOD: f64 = 24.0;

/// Integer wave numbers (per [`SHIMMER_PERIOD`]) of the static diagonal
/// weave. High wave numbers make its phase race across neighbouring rows and
/// columns even though its amplitude is faint.
pub const WEAVE_WAVENUMBERS: (f64, f64) = (9.0, 9.0);

/// Wavelengths, in pixels, of the two static axis-aligned granulation waves.
/// Deliberately incommensurate with [`SHIMMER_PERIOD`] so a patch grid
/// samples them at a different phase in every patch.
pub const GRANULATION_WAVELENGTHS: (f64, f64) = (11.3, 13.7);

/// A sky-like scene built from five layers: one separable luminance gradient
/// `σ(r)·τ(c)` at several times the frame scale, a global brightness flicker,
/// two weak axis-aligned stripes ("shimmer") whose amplitudes oscillate
/// around zero over the sequence, two static granulation waves, and a faint
/// static diagonal weave. The composition keeps spatial slices and the
/// across-patch view nearly rank-1 while genuinely mixing space and time,
/// which is the texture the decomposition model expects from real sequences.
/// Output spans [0.08, 0.85] after an affine rescale of the whole sequence.
fn smooth_background(h: usize, w: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let nf = n as f64;
    let tau = std::f64::consts::TAU;
    // Coarse separable gradient, wavelength 3–4× the frame in each axis. The
    // phase is anchored near a crest so every frame rides the steep flank of
    // the cosine: each sequence then spans a healthy brightness range, which
    // keeps the final rescale gain (and with it the fine textures' per-pixel
    // steps) bounded.
    let lam_r = h as f64 * (3.0 + rng.gen::<f64>());
    let lam_c = w as f64 * (3.0 + rng.gen::<f64>());
    let ph_r = (rng.gen::<f64>() - 0.5) * 0.6;
    let ph_c = (rng.gen::<f64>() - 0.5) * 0.6;
    // global flicker: everything breathes together
    let flicker_cycles = 0.5 + rng.gen::<f64>();
    let flicker_phase = rng.gen::<f64>() * tau;
    // shimmer stripes: small, slow, zero-mean in time, one per spatial axis
    let amp_row = 0.05 + 0.015 * rng.gen::<f64>();
    let amp_col = 0.05 + 0.015 * rng.gen::<f64>();
    let ph_row = rng.gen::<f64>() * tau;
    let ph_col = rng.gen::<f64>() * tau;
    let cyc_row = 0.5 + 0.5 * rng.gen::<f64>();
    let cyc_col = 0.5 + 0.5 * rng.gen::<f64>();
    let tph_row = rng.gen::<f64>() * tau;
    let tph_col = rng.gen::<f64>() * tau;
    // static granulation waves, one per axis
    let amp_gr = 0.05 + 0.012 * rng.gen::<f64>();
    let amp_gc = 0.05 + 0.012 * rng.gen::<f64>();
    let ph_gr = rng.gen::<f64>() * tau;
    let ph_gc = rng.gen::<f64>() * tau;
    // static diagonal weave
    let amp_weave = 0.026 + 0.006 * rng.gen::<f64>();
    let ph_weave = rng.gen::<f64>() * tau;

    let sigma: Vec<f64> = (0..h)
        .map(|r| 0.68 + 0.32 * (tau * r as f64 / lam_r + ph_r).cos())
        .collect();
    let tau_c: Vec<f64> = (0..w)
        .map(|c| 0.68 + 0.32 * (tau * c as f64 / lam_c + ph_c).cos())
        .collect();
    let stripe_r: Vec<f64> = (0..h)
        .map(|r| (tau * r as f64 / SHIMMER_PERIOD + ph_row).cos())
        .collect();
    let stripe_c: Vec<f64> = (0..w)
        .map(|c| (tau * c as f64 / SHIMMER_PERIOD + ph_col).cos())
        .collect();
    let gran_r: Vec<f64> = (0..h)
        .map(|r| amp_gr * (tau * r as f64 / GRANULATION_WAVELENGTHS.0 + ph_gr).cos())
        .collect();
    let gran_c: Vec<f64> = (0..w)
        .map(|c| amp_gc * (tau * c as f64 / GRANULATION_WAVELENGTHS.1 + ph_gc).cos())
        .collect();

    let mut data: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let tf = t as f64;
            let flicker = 1.0 + 0.05 * (tau * flicker_cycles * tf / nf + flicker_phase).cos();
            let s_row = amp_row * (tau * cyc_row * tf / nf + tph_row).cos();
            let s_col = amp_col * (tau * cyc_col * tf / nf + tph_col).cos();
            let mut pixels = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let weave_phase = tau
                        * (WEAVE_WAVENUMBERS.0 * r as f64 + WEAVE_WAVENUMBERS.1 * c as f64)
                        / SHIMMER_PERIOD;
                    let v = sigma[r] * tau_c[c]
                        + s_row * stripe_r[r]
                        + s_col * stripe_c[c]
                        + gran_r[r]
                        + gran_c[c]
                        + amp_weave * (weave_phase + ph_weave).cos();
                    pixels[c + w * r] = v * flicker;
                }
            }
            pixels
        })
        .collect();
    rescale(&mut data, 0.08, 0.85);
    data
}

/// Background from two random positive ring chains: the left chain spans
/// (height, width, R), the right (R, frames, 1); their bilateral composition
/// is sliced per frame.
fn btr_background(
    h: usize,
    w: usize,
    n: usize,
    ranks: Ranks,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, SynthError> {
    let mut core = |r: usize, d: usize| {
        DenseTensor::from_fn(&[r, d, r], |_| 0.15 + 0.85 * rng.gen::<f64>())
            .map_err(SolverError::from)
    };
    let left = TrChain::new([
        core(ranks.spatial, h)?,
        core(ranks.spatial, w)?,
        core(ranks.spatial, ranks.interaction)?,
    ])?;
    let right = TrChain::new([
        core(ranks.temporal, ranks.interaction)?,
        core(ranks.temporal, n)?,
        core(ranks.temporal, 1)?,
    ])?;
    let x = btr_compose(&BtrFactors::new(left, right)?)?;
    let raw = x.data();
    // composition shape (h, w, n, 1), column-major: i + h*(j + w*t)
    let mut data: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let mut pixels = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    pixels[c + w * r] = raw[r + h * (c + w * t)];
                }
            }
            pixels
        })
        .collect();
    rescale(&mut data, 0.1, 0.85);
    Ok(data)
}

/// Affine map of the whole sequence onto [lo, hi]; a constant sequence maps
/// to the midpoint.
fn rescale(data: &mut [Vec<f64>], lo: f64, hi: f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for frame in data.iter() {
        for &v in frame {
            min = min.min(v);
            max = max.max(v);
        }
    }
    let span = max - min;
    for frame in data.iter_mut() {
        for v in frame {
            *v = if span > 0.0 {
                lo + (hi - lo) * (*v - min) / span
            } else {
                0.5 * (lo + hi)
            };
        }
    }
}
