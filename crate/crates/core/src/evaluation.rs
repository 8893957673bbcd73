//! Detection scoring: threshold sweeps over a per-sequence-normalized score
//! map against ground-truth target positions.
//!
//! For each threshold τ a pixel is "hot" when its score is ≥ τ. A target
//! counts as detected when at least one hot pixel falls inside its
//! neighborhood — its bounding box when one is given, otherwise a Chebyshev
//! ball around the centroid. Hot pixels inside no target's neighborhood are
//! false pixels; pixels inside a neighborhood are never false, whether or
//! not the target was counted, avoiding a double penalty.
//!
//! Sweeping τ over an even grid yields the detection-probability and
//! false-alarm curves Pd(τ), Pf(τ), three trapezoidal AUCs — the (Pf, Pd)
//! curve plus the two threshold-domain curves — and the derived
//! ratio/difference/sum scores.

use thiserror::Error;

use crate::patch::{Frame, PatchError};

/// Chebyshev radius used for targets without a bounding box.
pub const DEFAULT_HIT_RADIUS: usize = 3;

/// Reported stand-in for an infinite detection-to-false ratio.
pub const SNPR_CAP: f64 = 1e9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("ground truth contains no targets; detection probability undefined")]
    EmptyGroundTruth,
    #[error("ground truth line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Frame(#[from] PatchError),
}

/// One annotated target: centroid plus an optional box height/width. The
/// box is centered on the centroid and clipped to the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetRecord {
    pub row: usize,
    pub col: usize,
    pub box_size: Option<(usize, usize)>,
}

/// Per-frame target annotations, indexed by frame number.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    frames: Vec<Vec<TargetRecord>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a target, growing the frame list as needed.
    pub fn push(&mut self, frame: usize, target: TargetRecord) -> Result<(), EvalError> {
        if let Some((h, w)) = target.box_size {
            if h == 0 || w == 0 {
                return Err(EvalError::BadInput(format!(
                    "empty bounding box {h}x{w} for frame {frame}"
                )));
            }
        }
        if self.frames.len() <= frame {
            self.frames.resize(frame + 1, Vec::new());
        }
        self.frames[frame].push(target);
        Ok(())
    }

    /// Highest annotated frame index + 1.
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Targets of `frame`; empty past the annotated range.
    pub fn targets(&self, frame: usize) -> &[TargetRecord] {
        self.frames.get(frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_targets(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Parses the text form: one target per line,
    /// `frame_index row col [box_h box_w]`, 0-based, whitespace-separated.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut gt = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 && fields.len() != 5 {
                return Err(EvalError::Parse {
                    line: idx + 1,
                    msg: format!("expected 3 or 5 fields, got {}", fields.len()),
                });
            }
            let num = |s: &str| {
                s.parse::<usize>().map_err(|_| EvalError::Parse {
                    line: idx + 1,
                    msg: format!("bad integer {s:?}"),
                })
            };
            let frame = num(fields[0])?;
            let row = num(fields[1])?;
            let col = num(fields[2])?;
            let box_size = if fields.len() == 5 {
                Some((num(fields[3])?, num(fields[4])?))
            } else {
                None
            };
            gt.push(frame, TargetRecord { row, col, box_size })
                .map_err(|e| EvalError::Parse {
                    line: idx + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(gt)
    }

    /// Inverse of [`GroundTruth::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (f, targets) in self.frames.iter().enumerate() {
            for t in targets {
                match t.box_size {
                    Some((h, w)) => {
                        out.push_str(&format!("{f} {} {} {h} {w}\n", t.row, t.col))
                    }
                    None => out.push_str(&format!("{f} {} {}\n", t.row, t.col)),
                }
            }
        }
        out
    }
}

/// Per-frame detection scores, one value per pixel in [0, 1].
#[derive(Debug, Clone)]
pub struct ScoreMap {
    frames: Vec<Frame>,
}

impl ScoreMap {
    /// Min-max normalizes the whole sequence onto [0, 1]. A constant
    /// sequence (no dynamic range) maps to all zeros.
    pub fn from_frames(frames: Vec<Frame>) -> Result<Self, EvalError> {
        check_consistent(&frames)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f in &frames {
            for &v in f.pixels() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = hi - lo;
        let frames = frames
            .into_iter()
            .map(|f| {
                let (h, w) = (f.height(), f.width());
                let pixels = f
                    .into_pixels()
                    .into_iter()
                    .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
                    .collect();
                Frame::new(h, w, pixels).map_err(EvalError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { frames })
    }

    /// Takes frames already scaled to [0, 1] as-is (no normalization).
    pub fn from_normalized(frames: Vec<Frame>) -> Result<Self, EvalError> {
        check_consistent(&frames)?;
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }
}

fn check_consistent(frames: &[Frame]) -> Result<(), EvalError> {
    if frames.is_empty() {
        return Err(EvalError::BadInput("empty score sequence".into()));
    }
    let (h, w) = (frames[0].height(), frames[0].width());
    if frames.iter().any(|f| f.height() != h || f.width() != w) {
        return Err(EvalError::BadInput("inconsistent frame sizes".into()));
    }
    Ok(())
}

/// Pixel region of one target: inclusive row/col bounds clipped to the frame.
fn target_region(
    t: &TargetRecord,
    height: usize,
    width: usize,
    hit_radius: usize,
) -> Result<(usize, usize, usize, usize), EvalError> {
    if t.row >= height || t.col >= width {
        return Err(EvalError::BadInput(format!(
            "target centroid ({}, {}) outside {height}x{width} frame",
            t.row, t.col
        )));
    }
    let (up, down, left, right) = match t.box_size {
        Some((h, w)) => ((h - 1) / 2, h / 2, (w - 1) / 2, w / 2),
        None => (hit_radius, hit_radius, hit_radius, hit_radius),
    };
    let r0 = t.row.saturating_sub(up);
    let r1 = (t.row + down).min(height - 1);
    let c0 = t.col.saturating_sub(left);
    let c1 = (t.col + right).min(width - 1);
    Ok((r0, r1, c0, c1))
}

/// Counts (detected targets, false pixels) at one threshold: hot = score ≥
/// τ; a target is detected when its neighborhood holds a hot pixel; hot
/// pixels inside no neighborhood are false.
pub fn detect_at_threshold(
    frame: &Frame,
    tau: f64,
    targets: &[TargetRecord],
    hit_radius: usize,
) -> Result<(usize, usize), EvalError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(EvalError::BadInput(format!("threshold {tau} outside [0, 1]")));
    }
    let (h, w) = (frame.height(), frame.width());
    let mut region = vec![false; h * w];
    let mut detected = 0;
    for t in targets {
        let (r0, r1, c0, c1) = target_region(t, h, w, hit_radius)?;
        let mut hit = false;
        for r in r0..=r1 {
            for c in c0..=c1 {
                region[c + w * r] = true;
                hit |= frame.get(r, c) >= tau;
            }
        }
        if hit {
            detected += 1;
        }
    }
    let mut false_pixels = 0;
    for r in 0..h {
        for c in 0..w {
            if !region[c + w * r] && frame.get(r, c) >= tau {
                false_pixels += 1;
            }
        }
    }
    Ok((detected, false_pixels))
}

/// Derived threshold-domain scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucFamily {
    /// Ratio of detection to false-alarm AUC, capped at [`SNPR_CAP`].
    pub snpr: f64,
    /// Set when the true ratio exceeded the cap (including division by 0).
    pub snpr_capped: bool,
    /// Detection minus false-alarm AUC, in [−1, 1].
    pub tdbs: f64,
    /// Detection plus complemented false-alarm AUC, in [0, 2].
    pub odp: f64,
}

/// The three derived scores from the two threshold-domain AUCs.
pub fn auc_family(auc_dtau: f64, auc_ftau: f64) -> AucFamily {
    let (snpr, snpr_capped) = if auc_ftau == 0.0 {
        (SNPR_CAP, true)
    } else {
        let r = auc_dtau / auc_ftau;
        if r > SNPR_CAP {
            (SNPR_CAP, true)
        } else {
            (r, false)
        }
    };
    AucFamily {
        snpr,
        snpr_capped,
        tdbs: auc_dtau - auc_ftau,
        odp: auc_dtau + (1.0 - auc_ftau),
    }
}

/// Threshold sweep with per-threshold rates and the full AUC family.
#[derive(Debug, Clone)]
pub struct RocCurve {
    /// Ascending, evenly spaced in [0, 1].
    pub thresholds: Vec<f64>,
    /// Detected / actual targets, per threshold; nonincreasing.
    pub pd: Vec<f64>,
    /// False / total pixels, per threshold; nonincreasing.
    pub pf: Vec<f64>,
    /// Area under (Pf, Pd) sorted by Pf, anchored at (0,0) and (1,1); the
    /// rank-based detection quality, 1 for a perfect separator.
    pub auc_df: f64,
    /// Area under (τ, Pd) on the threshold grid.
    pub auc_dtau: f64,
    /// Area under (τ, Pf) on the threshold grid.
    pub auc_ftau: f64,
    pub family: AucFamily,
}

/// [`roc_sweep_with`] at the default Chebyshev hit radius.
pub fn roc_sweep(
    scores: &ScoreMap,
    gt: &GroundTruth,
    n_thresholds: usize,
) -> Result<RocCurve, EvalError> {
    roc_sweep_with(scores, gt, n_thresholds, DEFAULT_HIT_RADIUS)
}

pub fn roc_sweep_with(
    scores: &ScoreMap,
    gt: &GroundTruth,
    n_thresholds: usize,
    hit_radius: usize,
) -> Result<RocCurve, EvalError> {
    if n_thresholds < 2 {
        return Err(EvalError::BadInput(format!(
            "need at least 2 thresholds, got {n_thresholds}"
        )));
    }
    let total_targets = gt.total_targets();
    if total_targets == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    if gt.n_frames() > scores.len() {
        return Err(EvalError::BadInput(format!(
            "ground truth annotates frame {} but only {} score frames exist",
            gt.n_frames() - 1,
            scores.len()
        )));
    }
    let (h, w) = (scores.height(), scores.width());

    // One pass per frame: the per-target neighborhood maximum decides
    // detection at every threshold at once, and the sorted non-neighborhood
    // scores give false counts by binary search. Equivalent to calling
    // detect_at_threshold per (frame, τ) but linear instead of quadratic.
    let mut target_maxima = Vec::with_capacity(total_targets);
    let mut outside_scores = Vec::new();
    for fidx in 0..scores.len() {
        let frame = scores.frame(fidx);
        let targets = gt.targets(fidx);
        let mut region = vec![false; h * w];
        for t in targets {
            let (r0, r1, c0, c1) = target_region(t, h, w, hit_radius)?;
            let mut best = f64::NEG_INFINITY;
            for r in r0..=r1 {
                for c in c0..=c1 {
                    region[c + w * r] = true;
                    best = best.max(frame.get(r, c));
                }
            }
            target_maxima.push(best);
        }
        for r in 0..h {
            for c in 0..w {
                if !region[c + w * r] {
                    outside_scores.push(frame.get(r, c));
                }
            }
        }
    }
    target_maxima.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    outside_scores.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let total_pixels = (scores.len() * h * w) as f64;

    let n = n_thresholds;
    let mut thresholds = Vec::with_capacity(n);
    let mut pd = Vec::with_capacity(n);
    let mut pf = Vec::with_capacity(n);
    for k in 0..n {
        let tau = k as f64 / (n - 1) as f64;
        let hot_targets = target_maxima.len() - target_maxima.partition_point(|v| *v < tau);
        let hot_false = outside_scores.len() - outside_scores.partition_point(|v| *v < tau);
        thresholds.push(tau);
        pd.push(hot_targets as f64 / total_targets as f64);
        pf.push(hot_false as f64 / total_pixels);
    }

    let auc_dtau = trapezoid(&thresholds, &pd);
    let auc_ftau = trapezoid(&thresholds, &pf);
    let auc_df = {
        let mut pts: Vec<(f64, f64)> = pf.iter().copied().zip(pd.iter().copied()).collect();
        pts.push((0.0, 0.0));
        pts.push((1.0, 1.0));
        pts.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        trapezoid(&xs, &ys)
    };
    Ok(RocCurve {
        thresholds,
        pd,
        pf,
        auc_df,
        auc_dtau,
        auc_ftau,
        family: auc_family(auc_dtau, auc_ftau),
    })
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let mut area = 0.0;
    for i in 1..x.len() {
        area += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) / 2.0;
    }
    area
}
