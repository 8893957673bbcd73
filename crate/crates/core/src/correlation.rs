//! Mode-pair structure analysis for order-4 tensors.
//!
//! For a chosen pair of modes the tensor becomes a sequence of matrix
//! slices, one per joint index of the two remaining modes. Two per-slice
//! statistics summarize how much coherent structure that pairing exposes:
//! the share of Frobenius energy carried by the leading singular value, and
//! the agreement `|cos θ|` between principal singular vectors of adjacent
//! slices. Pairings that keep correlated axes together score high on both,
//! which is what justifies splitting the patch tensor between modes (1,2)
//! and (3,4).

use thiserror::Error;

use crate::matrix::{svd, Matrix};
use crate::tensor::{DenseTensor, TensorError};

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("invalid mode pair: {0}")]
    BadPair(String),
    #[error("invalid slice input: {0}")]
    BadSlice(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Unordered pair of distinct modes of an order-4 tensor, held as 0-based
/// indices with `first < second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimPair {
    first: usize,
    second: usize,
}

impl DimPair {
    pub fn new(a: usize, b: usize) -> Result<Self, CorrelationError> {
        if a == b || a >= 4 || b >= 4 {
            return Err(CorrelationError::BadPair(format!(
                "modes must be distinct and within 0..4, got ({a}, {b})"
            )));
        }
        Ok(Self {
            first: a.min(b),
            second: a.max(b),
        })
    }

    /// All six pairs in lexicographic order.
    pub fn all() -> [DimPair; 6] {
        [
            DimPair { first: 0, second: 1 },
            DimPair { first: 0, second: 2 },
            DimPair { first: 0, second: 3 },
            DimPair { first: 1, second: 2 },
            DimPair { first: 1, second: 3 },
            DimPair { first: 2, second: 3 },
        ]
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn second(&self) -> usize {
        self.second
    }

    /// 1-based label used in reports, e.g. `"(1,2)"`.
    pub fn label(&self) -> String {
        format!("({},{})", self.first + 1, self.second + 1)
    }
}

/// Which singular-vector side defines the principal direction of a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    #[default]
    Left,
    Right,
}

/// Slices of `t` along `pair`: the paired modes lead (rows = first mode,
/// columns = second mode) and the remaining two modes merge into the slice
/// index, first remaining mode fastest.
pub fn slice_sequence(
    t: &DenseTensor,
    pair: DimPair,
) -> Result<Vec<Matrix>, CorrelationError> {
    if t.order() != 4 {
        return Err(CorrelationError::BadPair(format!(
            "expected an order-4 tensor, got order {}",
            t.order()
        )));
    }
    let rest: Vec<usize> = (0..4)
        .filter(|m| *m != pair.first && *m != pair.second)
        .collect();
    let perm = [pair.first, pair.second, rest[0], rest[1]];
    let p = t.permute(&perm)?;
    let (rows, cols) = (p.shape()[0], p.shape()[1]);
    let slice_len = rows * cols;
    let n_slices = p.shape()[2] * p.shape()[3];
    // After the permutation each slice is a contiguous column-major block.
    let slices = (0..n_slices)
        .map(|s| {
            let chunk = &p.data()[s * slice_len..(s + 1) * slice_len];
            Matrix::new(rows, cols, chunk.to_vec())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(slices)
}

/// Share of the slice's squared Frobenius energy carried by the leading
/// singular value: `σ₁² / Σ σ_k²`, in (0, 1] for a nonzero slice and exactly
/// 1 for rank-1 slices. An all-zero slice reports 0, the degenerate marker.
pub fn energy_ratio(m: &Matrix) -> Result<f64, CorrelationError> {
    let total: f64 = m.data().iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let s = svd(m)?;
    Ok(s.s[0] * s.s[0] / total)
}

/// Principal-direction agreement between two slices, with a flag for an
/// ill-defined principal direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    /// `|cos θ|` between the leading singular vectors, in [0, 1].
    pub cos: f64,
    /// True when either slice has σ₁ ≈ σ₂ (within 1e-10 relatively): the
    /// leading vector is then an arbitrary basis choice and `cos` is noise.
    pub degenerate: bool,
}

/// `|⟨u₁(m1), u₁(m2)⟩|` where `u₁` is the leading singular vector on the
/// chosen side. Both slices must be nonzero and of equal shape.
pub fn direction_consistency(
    m1: &Matrix,
    m2: &Matrix,
    side: Side,
) -> Result<Direction, CorrelationError> {
    if m1.rows() != m2.rows() || m1.cols() != m2.cols() {
        return Err(CorrelationError::BadSlice(format!(
            "shape mismatch: {}x{} vs {}x{}",
            m1.rows(),
            m1.cols(),
            m2.rows(),
            m2.cols()
        )));
    }
    if m1.data().iter().all(|v| *v == 0.0) || m2.data().iter().all(|v| *v == 0.0) {
        return Err(CorrelationError::BadSlice(
            "all-zero slice has no principal direction".into(),
        ));
    }
    let s1 = svd(m1)?;
    let s2 = svd(m2)?;
    let degenerate = is_degenerate(&s1.s) || is_degenerate(&s2.s);
    let (v1, v2) = match side {
        Side::Left => (s1.u.column(0), s2.u.column(0)),
        Side::Right => (s1.v.column(0), s2.v.column(0)),
    };
    let cos: f64 = v1.iter().zip(v2).map(|(a, b)| a * b).sum::<f64>().abs();
    Ok(Direction {
        cos: cos.min(1.0),
        degenerate,
    })
}

fn is_degenerate(s: &[f64]) -> bool {
    s.len() > 1 && s[0] - s[1] <= 1e-10 * s[0].max(1e-300)
}

/// Per-pair slice statistics plus means over the well-defined entries.
#[derive(Debug, Clone)]
pub struct PairReport {
    pub pair: DimPair,
    /// One entry per slice; 0 marks an all-zero (degenerate) slice.
    pub energy_ratios: Vec<f64>,
    /// One entry per adjacent slice pair; 0 when either slice is all-zero.
    pub direction_cos: Vec<f64>,
    /// Set when the entry's principal direction was ill-defined (degenerate
    /// spectrum or an all-zero slice); such entries still appear in
    /// `direction_cos` but are excluded from `mean_direction_cos`.
    pub direction_degenerate: Vec<bool>,
    /// Mean of nonzero energy ratios (all-zero slices excluded).
    pub mean_energy_ratio: f64,
    /// Mean of well-defined direction entries.
    pub mean_direction_cos: f64,
}

#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// All six mode pairs, in `DimPair::all()` order.
    pub pairs: Vec<PairReport>,
}

impl CorrelationReport {
    pub fn pair(&self, pair: DimPair) -> &PairReport {
        self.pairs
            .iter()
            .find(|p| p.pair == pair)
            .expect("report covers all six pairs")
    }
}

/// Full six-pair report with the default (left) principal side.
pub fn analyze(t: &DenseTensor) -> Result<CorrelationReport, CorrelationError> {
    analyze_with(t, Side::Left)
}

pub fn analyze_with(t: &DenseTensor, side: Side) -> Result<CorrelationReport, CorrelationError> {
    let mut pairs = Vec::with_capacity(6);
    for pair in DimPair::all() {
        let slices = slice_sequence(t, pair)?;
        let energy_ratios = slices
            .iter()
            .map(energy_ratio)
            .collect::<Result<Vec<_>, _>>()?;
        let mut direction_cos = Vec::with_capacity(slices.len().saturating_sub(1));
        let mut direction_degenerate = Vec::with_capacity(slices.len().saturating_sub(1));
        for w in slices.windows(2) {
            if energy_ratios.is_empty() {
                break;
            }
            let zero = |m: &Matrix| m.data().iter().all(|v| *v == 0.0);
            if zero(&w[0]) || zero(&w[1]) {
                direction_cos.push(0.0);
                direction_degenerate.push(true);
            } else {
                let d = direction_consistency(&w[0], &w[1], side)?;
                direction_cos.push(d.cos);
                direction_degenerate.push(d.degenerate);
            }
        }
        let live: Vec<f64> = energy_ratios.iter().copied().filter(|r| *r > 0.0).collect();
        let mean_energy_ratio = if live.is_empty() {
            0.0
        } else {
            live.iter().sum::<f64>() / live.len() as f64
        };
        let live_dir: Vec<f64> = direction_cos
            .iter()
            .zip(&direction_degenerate)
            .filter(|(_, d)| !**d)
            .map(|(c, _)| *c)
            .collect();
        let mean_direction_cos = if live_dir.is_empty() {
            0.0
        } else {
            live_dir.iter().sum::<f64>() / live_dir.len() as f64
        };
        pairs.push(PairReport {
            pair,
            energy_ratios,
            direction_cos,
            direction_degenerate,
            mean_energy_ratio,
            mean_direction_cos,
        });
    }
    Ok(CorrelationReport { pairs })
}
