//! Dense N-way tensors with unfold/fold/contract under one linearization rule.
//!
//! A single convention governs every flattening in this crate: wherever an
//! ordered list of modes is collapsed into one axis, the first listed mode
//! varies fastest. Element storage follows the same rule (mode 0 fastest), so
//! an unfolding whose row modes then column modes read `0, 1, …, N-1` is a
//! reinterpretation of the existing buffer.

use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("invalid shape {0:?}: need at least one mode, all extents positive")]
    InvalidShape(Vec<usize>),
    #[error("data length {got} does not match shape product {want}")]
    DataLength { got: usize, want: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("invalid mode partition: {0}")]
    InvalidPartition(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },
    #[error("singular value iteration failed to converge after {0} sweeps")]
    SvdNoConvergence(usize),
}

/// Dense real tensor of order >= 1, stored first-index-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Validates extents, length, and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(TensorError::InvalidShape(shape));
        }
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(TensorError::DataLength {
                got: data.len(),
                want,
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(bad));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        Self::from_elem(shape, 0.0)
    }

    pub fn from_elem(shape: &[usize], v: f64) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(TensorError::InvalidShape(shape.to_vec()));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        })
    }

    /// Builds entry-by-entry; `f` receives the full multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self, TensorError> {
        let mut t = Self::zeros(shape)?;
        let mut idx = vec![0usize; shape.len()];
        for flat in 0..t.data.len() {
            t.data[flat] = f(&idx);
            increment(&mut idx, shape);
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Strides under first-index-fastest storage.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        let mut stride = 1;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[k]);
            off += i * stride;
            stride *= self.shape[k];
        }
        off
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.flat_index(idx);
        self.data[off] = v;
    }

    /// Reorders modes so new mode `k` is old mode `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<DenseTensor, TensorError> {
        let n = self.order();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&m| m >= n || std::mem::replace(&mut seen[m], true)) {
            return Err(TensorError::InvalidPartition(format!(
                "permutation {perm:?} is not a rearrangement of 0..{n}"
            )));
        }
        let new_shape: Vec<usize> = perm.iter().map(|&m| self.shape[m]).collect();
        let old_strides = self.strides();
        let mut out = DenseTensor::zeros(&new_shape)?;
        let mut idx = vec![0usize; n];
        let mut src = 0usize;
        // Walk the output in storage order; `src` tracks the input offset.
        let steps: Vec<usize> = perm.iter().map(|&m| old_strides[m]).collect();
        for flat in 0..out.data.len() {
            out.data[flat] = self.data[src];
            for k in 0..n {
                idx[k] += 1;
                src += steps[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                src -= steps[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Ok(out)
    }

    /// Elementwise combination; shapes must match exactly.
    pub fn zip_with(
        &self,
        other: &DenseTensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseTensor, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::DimensionMismatch(format!(
                "elementwise op on shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor, TensorError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor, TensorError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> DenseTensor {
        self.map(|v| v * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len());
    let mut acc = 1usize;
    for &e in shape {
        s.push(acc);
        acc *= e;
    }
    s
}

#[inline]
fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in 0..idx.len() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Split of modes `0..order` into ordered row and column groups.
///
/// Each group linearizes with its first listed mode varying fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePartition {
    pub row_modes: Vec<usize>,
    pub col_modes: Vec<usize>,
}

impl ModePartition {
    pub fn new(row_modes: Vec<usize>, col_modes: Vec<usize>) -> Self {
        Self { row_modes, col_modes }
    }

    /// Both groups nonempty, disjoint, and jointly covering `0..order`.
    pub fn validate(&self, order: usize) -> Result<(), TensorError> {
        if self.row_modes.is_empty() || self.col_modes.is_empty() {
            return Err(TensorError::InvalidPartition(
                "row and column groups must both be nonempty".into(),
            ));
        }
        let mut seen = vec![false; order];
        for &m in self.row_modes.iter().chain(&self.col_modes) {
            if m >= order {
                return Err(TensorError::InvalidPartition(format!(
                    "mode {m} out of range for order {order}"
                )));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(TensorError::InvalidPartition(format!("mode {m} listed twice")));
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(TensorError::InvalidPartition(format!(
                "groups {:?} | {:?} do not cover all {order} modes",
                self.row_modes, self.col_modes
            )));
        }
        Ok(())
    }

    fn is_storage_order(&self, order: usize) -> bool {
        self.row_modes
            .iter()
            .chain(&self.col_modes)
            .enumerate()
            .all(|(k, &m)| k == m && m < order)
    }
}

/// Flattens `t` to a matrix under `partition`.
pub fn unfold(t: &DenseTensor, partition: &ModePartition) -> Result<Matrix, TensorError> {
    partition.validate(t.order())?;
    let rows: usize = partition.row_modes.iter().map(|&m| t.shape()[m]).product();
    let cols: usize = partition.col_modes.iter().map(|&m| t.shape()[m]).product();
    if partition.is_storage_order(t.order()) {
        // Row-then-column listing in storage order is the identity linearization.
        return Matrix::new(rows, cols, t.data().to_vec());
    }
    let mut out = Matrix::zeros(rows, cols);
    let plan = UnfoldPlan::new(t.shape(), partition, rows);
    let src = t.data();
    let dst = out.data_mut();
    plan.for_each(|flat, matrix_off| dst[matrix_off] = src[flat]);
    Ok(out)
}

/// Inverse of [`unfold`]: rebuilds a tensor of `shape` from `m`.
pub fn fold(
    m: &Matrix,
    partition: &ModePartition,
    shape: &[usize],
) -> Result<DenseTensor, TensorError> {
    partition.validate(shape.len())?;
    let rows: usize = partition.row_modes.iter().map(|&k| shape[k]).product();
    let cols: usize = partition.col_modes.iter().map(|&k| shape[k]).product();
    if m.rows() != rows || m.cols() != cols {
        return Err(TensorError::DimensionMismatch(format!(
            "fold: matrix {}x{} vs partition {}x{} of shape {:?}",
            m.rows(),
            m.cols(),
            rows,
            cols,
            shape
        )));
    }
    if partition.is_storage_order(shape.len()) {
        return DenseTensor::new(shape.to_vec(), m.data().to_vec());
    }
    let mut out = DenseTensor::zeros(shape)?;
    let plan = UnfoldPlan::new(shape, partition, rows);
    let src = m.data();
    let dst = out.data_mut();
    plan.for_each(|flat, matrix_off| dst[flat] = src[matrix_off]);
    Ok(out)
}

/// Shared index walk for unfold/fold: visits every element once in tensor
/// storage order, yielding `(tensor_flat, row + rows * col)`.
struct UnfoldPlan {
    shape: Vec<usize>,
    // Per tensor mode: stride contribution to the linearized matrix offset.
    matrix_steps: Vec<usize>,
    numel: usize,
}

impl UnfoldPlan {
    fn new(shape: &[usize], partition: &ModePartition, rows: usize) -> Self {
        let mut matrix_steps = vec![0usize; shape.len()];
        let mut stride = 1usize;
        for &m in &partition.row_modes {
            matrix_steps[m] = stride;
            stride *= shape[m];
        }
        debug_assert_eq!(stride, rows);
        let mut stride = rows;
        for &m in &partition.col_modes {
            matrix_steps[m] = stride;
            stride *= shape[m];
        }
        Self {
            shape: shape.to_vec(),
            matrix_steps,
            numel: shape.iter().product(),
        }
    }

    fn for_each(&self, mut visit: impl FnMut(usize, usize)) {
        let n = self.shape.len();
        let mut idx = vec![0usize; n];
        let mut moff = 0usize;
        for flat in 0..self.numel {
            visit(flat, moff);
            for k in 0..n {
                idx[k] += 1;
                moff += self.matrix_steps[k];
                if idx[k] < self.shape[k] {
                    break;
                }
                moff -= self.matrix_steps[k] * self.shape[k];
                idx[k] = 0;
            }
        }
    }
}

/// General pairwise contraction: sums products over paired modes
/// (`x_modes[i]` against `y_modes[i]`, equal extents required).
///
/// Result modes are x's free modes then y's free modes, each keeping their
/// original relative order. Contracting every mode yields a shape `[1]` scalar.
pub fn contract(
    x: &DenseTensor,
    y: &DenseTensor,
    x_modes: &[usize],
    y_modes: &[usize],
) -> Result<DenseTensor, TensorError> {
    if x_modes.len() != y_modes.len() {
        return Err(TensorError::DimensionMismatch(format!(
            "contract: {} x-modes vs {} y-modes",
            x_modes.len(),
            y_modes.len()
        )));
    }
    check_distinct(x_modes, x.order())?;
    check_distinct(y_modes, y.order())?;
    for (&xm, &ym) in x_modes.iter().zip(y_modes) {
        if x.shape()[xm] != y.shape()[ym] {
            return Err(TensorError::DimensionMismatch(format!(
                "contract: mode {xm} extent {} vs mode {ym} extent {}",
                x.shape()[xm],
                y.shape()[ym]
            )));
        }
    }
    let x_free: Vec<usize> = (0..x.order()).filter(|m| !x_modes.contains(m)).collect();
    let y_free: Vec<usize> = (0..y.order()).filter(|m| !y_modes.contains(m)).collect();

    let x_strides = x.strides();
    let y_strides = y.strides();
    let pair_shape: Vec<usize> = x_modes.iter().map(|&m| x.shape()[m]).collect();
    let pair_x: Vec<usize> = x_modes.iter().map(|&m| x_strides[m]).collect();
    let pair_y: Vec<usize> = y_modes.iter().map(|&m| y_strides[m]).collect();

    let mut out_shape: Vec<usize> = x_free.iter().map(|&m| x.shape()[m]).collect();
    out_shape.extend(y_free.iter().map(|&m| y.shape()[m]));
    if out_shape.is_empty() {
        out_shape.push(1); // full contraction: scalar result
    }
    let mut out = DenseTensor::zeros(&out_shape)?;

    // Outer walk over free indices mirrors the output storage order, so the
    // offsets advance odometer-style just like the output's own flat index.
    let free_shape: Vec<usize> = x_free
        .iter()
        .map(|&m| x.shape()[m])
        .chain(y_free.iter().map(|&m| y.shape()[m]))
        .collect();
    let free_steps: Vec<(usize, usize)> = x_free
        .iter()
        .map(|&m| (x_strides[m], 0))
        .chain(y_free.iter().map(|&m| (0, y_strides[m])))
        .collect();

    let pair_count: usize = pair_shape.iter().product();
    let mut pair_off: Vec<(usize, usize)> = Vec::with_capacity(pair_count);
    {
        let mut idx = vec![0usize; pair_shape.len()];
        let (mut xo, mut yo) = (0usize, 0usize);
        for _ in 0..pair_count {
            pair_off.push((xo, yo));
            for k in 0..idx.len() {
                idx[k] += 1;
                xo += pair_x[k];
                yo += pair_y[k];
                if idx[k] < pair_shape[k] {
                    break;
                }
                xo -= pair_x[k] * pair_shape[k];
                yo -= pair_y[k] * pair_shape[k];
                idx[k] = 0;
            }
        }
    }

    let xd = x.data();
    let yd = y.data();
    let mut idx = vec![0usize; free_shape.len()];
    let (mut xb, mut yb) = (0usize, 0usize);
    for flat in 0..out.numel() {
        let mut acc = 0.0;
        for &(xo, yo) in &pair_off {
            acc += xd[xb + xo] * yd[yb + yo];
        }
        out.data_mut()[flat] = acc;
        for k in 0..idx.len() {
            idx[k] += 1;
            xb += free_steps[k].0;
            yb += free_steps[k].1;
            if idx[k] < free_shape[k] {
                break;
            }
            xb -= free_steps[k].0 * free_shape[k];
            yb -= free_steps[k].1 * free_shape[k];
            idx[k] = 0;
        }
    }
    Ok(out)
}

fn check_distinct(modes: &[usize], order: usize) -> Result<(), TensorError> {
    let mut seen = vec![false; order];
    for &m in modes {
        if m >= order {
            return Err(TensorError::DimensionMismatch(format!(
                "mode {m} out of range for order {order}"
            )));
        }
        if std::mem::replace(&mut seen[m], true) {
            return Err(TensorError::DimensionMismatch(format!(
                "mode {m} listed twice in contraction"
            )));
        }
    }
    Ok(())
}
