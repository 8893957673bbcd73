//! Background/target separation of a 4th-order patch tensor.
//!
//! The background is modeled as two coupled 3-core tensor-ring chains: a
//! spatial chain composing to `A` (patch row, patch column, interaction) and a
//! temporal-patch chain composing to `B` (interaction, frame, patch). Their
//! mode-3/mode-1 contraction approximates the low-rank part of the data; a
//! sparse tensor `T` absorbs the targets. All blocks are updated in closed
//! form inside a proximal alternating minimization loop, so every sweep
//! decreases the objective
//!
//! ```text
//!   alpha/2 ||B4 - A x B||^2  + beta1/2 ||A - ring(left)||^2
//! + beta2/2 ||B - ring(right)||^2 + beta3/2 ||D - B4 - T||^2 + lambda1 ||T||_1
//! ```
//!
//! plus the proximal anchors on each block.

use thiserror::Error;

use crate::matrix::{spd_solve, Matrix};
use crate::tensor::{fold, unfold, DenseTensor, ModePartition, TensorError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("solver diverged to non-finite values at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Chain ranks: `spatial` bonds the left chain, `temporal` the right chain,
/// `interaction` is the shared mode joining the two composites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ranks {
    pub spatial: usize,
    pub interaction: usize,
    pub temporal: usize,
}

impl Default for Ranks {
    fn default() -> Self {
        Self {
            spatial: 6,
            interaction: 3,
            temporal: 30,
        }
    }
}

/// Closed tensor-ring chain of three order-3 cores.
///
/// Core `k` has shape `(r_k, I_k, r_{k+1})` with rank indices circular:
/// the chain composes to `X(i1,i2,i3) = sum G1(a,i1,b) G2(b,i2,c) G3(c,i3,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrChain {
    cores: [DenseTensor; 3],
}

impl TrChain {
    pub fn new(cores: [DenseTensor; 3]) -> Result<Self, SolverError> {
        for k in 0..3 {
            if cores[k].order() != 3 {
                return Err(SolverError::BadInput(format!(
                    "ring core {k} has order {}, expected 3",
                    cores[k].order()
                )));
            }
        }
        for k in 0..3 {
            let right = cores[k].shape()[2];
            let left_next = cores[(k + 1) % 3].shape()[0];
            if right != left_next {
                return Err(SolverError::BadInput(format!(
                    "ring rank mismatch between cores {k} and {}: {right} vs {left_next}",
                    (k + 1) % 3
                )));
            }
        }
        Ok(Self { cores })
    }

    /// All-ones chain with uniform bond rank `r` and mode extents `dims`.
    pub fn ones(dims: [usize; 3], r: usize) -> Result<Self, SolverError> {
        Self::uniform(dims, r, 1.0)
    }

    /// Chain whose cores are filled with `1/r`, so the composition is the
    /// all-ones tensor. A literal all-ones chain composes to `r^3` per entry,
    /// which at realistic ranks (r = 30 gives 27000) starts the solver many
    /// orders of magnitude away from image-scale data and takes thousands of
    /// sweeps to decay; the rank-normalized fill keeps the same uniform,
    /// rank-1 degenerate start at a consistent scale.
    pub fn normalized_ones(dims: [usize; 3], r: usize) -> Result<Self, SolverError> {
        Self::uniform(dims, r, 1.0 / r as f64)
    }

    fn uniform(dims: [usize; 3], r: usize, value: f64) -> Result<Self, SolverError> {
        let mk = |i: usize| DenseTensor::from_elem(&[r, dims[i], r], value);
        Ok(Self {
            cores: [
                mk(0).map_err(SolverError::from)?,
                mk(1).map_err(SolverError::from)?,
                mk(2).map_err(SolverError::from)?,
            ],
        })
    }

    pub fn cores(&self) -> &[DenseTensor; 3] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k]
    }

    pub fn set_core(&mut self, k: usize, core: DenseTensor) -> Result<(), SolverError> {
        if core.shape() != self.cores[k].shape() {
            return Err(SolverError::BadInput(format!(
                "core {k} replacement shape {:?} != {:?}",
                core.shape(),
                self.cores[k].shape()
            )));
        }
        self.cores[k] = core;
        Ok(())
    }

    /// Mode extents `(I1, I2, I3)` of the composed tensor.
    pub fn dims(&self) -> [usize; 3] {
        [
            self.cores[0].shape()[1],
            self.cores[1].shape()[1],
            self.cores[2].shape()[1],
        ]
    }
}

/// The two chains of the bilateral factorization. The left chain composes the
/// spatial factor `(Nw, Nw, R)`; the right one the temporal-patch factor
/// `(R, Nt, Np)`; `R` (third left dim == second right dim) must agree.
#[derive(Debug, Clone, PartialEq)]
pub struct BtrFactors {
    pub left: TrChain,
    pub right: TrChain,
}

impl BtrFactors {
    pub fn new(left: TrChain, right: TrChain) -> Result<Self, SolverError> {
        if left.dims()[2] != right.dims()[0] {
            return Err(SolverError::BadInput(format!(
                "interaction rank mismatch: left composes to ..x{}, right to {}x..",
                left.dims()[2],
                right.dims()[0]
            )));
        }
        Ok(Self { left, right })
    }
}

/// Same contraction semantics as [`contract`], routed through matrix
/// multiplication of the paired unfoldings. The generic element-wise
/// contraction walks an index odometer per output entry; on solver-sized
/// operands this route is roughly an order of magnitude faster, so every
/// hot composition below uses it. Output modes are the free modes of `x`
/// followed by the free modes of `y`, matching [`contract`].
fn contract_mm(
    x: &DenseTensor,
    mx: &[usize],
    y: &DenseTensor,
    my: &[usize],
) -> Result<DenseTensor, SolverError> {
    let free_x: Vec<usize> = (0..x.order()).filter(|m| !mx.contains(m)).collect();
    let free_y: Vec<usize> = (0..y.order()).filter(|m| !my.contains(m)).collect();
    let xm = unfold(x, &ModePartition::new(free_x.clone(), mx.to_vec()))?;
    let ym = unfold(y, &ModePartition::new(my.to_vec(), free_y.clone()))?;
    let prod = xm.matmul(&ym)?;
    let mut shape: Vec<usize> = free_x.iter().map(|&m| x.shape()[m]).collect();
    shape.extend(free_y.iter().map(|&m| y.shape()[m]));
    if shape.is_empty() {
        shape.push(1);
    }
    // Column-major (free_x, free_y) is exactly the output storage order.
    Ok(DenseTensor::new(shape, prod.into_data())?)
}

/// Composes a 3-core ring chain to its order-3 tensor.
pub fn tr_compose(chain: &TrChain) -> Result<DenseTensor, SolverError> {
    // W(a, i1, i2, c) = sum_b G1(a,i1,b) G2(b,i2,c)
    let w = contract_mm(chain.core(0), &[2], chain.core(1), &[0])?;
    // X(i1, i2, i3) = sum_{c,a} W(a,i1,i2,c) G3(c,i3,a)
    let x = contract_mm(&w, &[3, 0], chain.core(2), &[0, 2])?;
    Ok(x)
}

/// Composes both chains and joins them over the interaction mode:
/// `X(i,j,t,p) = sum_r A(i,j,r) B(r,t,p)`.
pub fn btr_compose(factors: &BtrFactors) -> Result<DenseTensor, SolverError> {
    let left = tr_compose(&factors.left)?;
    let right = tr_compose(&factors.right)?;
    contract_mm(&left, &[2], &right, &[0])
}

/// Matrix of the chain with core `k` removed, folded so that
/// `unfold(X, [k | k+1, k+2]) = unfold(G_k, [1 | 0, 2]) * subchain_matrix(chain, k)`
/// holds exactly for the composed tensor `X` (mode arithmetic circular).
///
/// Rows are the joint rank index `(a, b)` with `a` (core `k`'s left rank)
/// fastest; columns are `(i_{k+1}, i_{k+2})` with `i_{k+1}` fastest.
pub fn subchain_matrix(chain: &TrChain, k: usize) -> Result<Matrix, SolverError> {
    if k >= 3 {
        return Err(SolverError::BadInput(format!("core index {k} out of range")));
    }
    let next = chain.core((k + 1) % 3);
    let nnext = chain.core((k + 2) % 3);
    // S(b, i_{k+1}, i_{k+2}, a) = sum_c G_{k+1}(b,.,c) G_{k+2}(c,.,a)
    let s = contract_mm(next, &[2], nnext, &[0])?;
    let m = unfold(&s, &ModePartition::new(vec![3, 0], vec![1, 2]))?;
    Ok(m)
}

/// Weights and stopping controls of one decomposition run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Coupling between the 4-D background and the bilateral composition.
    pub alpha: f64,
    /// Sparsity weight on the target tensor.
    pub lambda1: f64,
    /// Pull of the spatial factor toward its ring composition.
    pub beta1: f64,
    /// Pull of the temporal-patch factor toward its ring composition.
    pub beta2: f64,
    /// Data-fidelity weight on `D - B4 - T`.
    pub beta3: f64,
    /// Proximal anchor weight shared by every block.
    pub rho: f64,
    pub max_iter: usize,
    /// Relative change of `T` between sweeps below which the loop stops.
    pub tol: f64,
    pub ranks: Ranks,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda1: 0.1,
            beta1: 1.0,
            beta2: 1.0,
            beta3: 2.0,
            rho: 0.01,
            max_iter: 20,
            tol: 1e-3,
            ranks: Ranks::default(),
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("alpha", self.alpha),
            ("lambda1", self.lambda1),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("rho", self.rho),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SolverError::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(SolverError::InvalidParams("max_iter must be >= 1".into()));
        }
        if self.ranks.spatial == 0 || self.ranks.interaction == 0 || self.ranks.temporal == 0 {
            return Err(SolverError::InvalidParams("ranks must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sparsity weight from a detection-sensitivity level `h`:
/// `lambda1 = h / sqrt(Nw^2 * Nt)`.
pub fn lambda_from_h(h: f64, patch_size: usize, temporal_size: usize) -> Result<f64, SolverError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(SolverError::InvalidParams(format!(
            "sensitivity level must be positive and finite, got {h}"
        )));
    }
    if patch_size == 0 || temporal_size == 0 {
        return Err(SolverError::InvalidParams(
            "patch and temporal sizes must be >= 1".into(),
        ));
    }
    Ok(h / ((patch_size * patch_size * temporal_size) as f64).sqrt())
}

/// Elementwise soft threshold `sign(x) * max(|x| - xi, 0)`, the proximal map
/// of `xi * ||.||_1`.
pub fn shrink(t: &DenseTensor, xi: f64) -> Result<DenseTensor, SolverError> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(SolverError::InvalidParams(format!(
            "shrink threshold must be nonnegative and finite, got {xi}"
        )));
    }
    Ok(t.map(|x| x.signum() * (x.abs() - xi).max(0.0)))
}

/// All mutable blocks of the minimization plus its progress record.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Spatial composite `A`, shape `(Nw, Nw, R)`.
    pub spatial: DenseTensor,
    /// Temporal-patch composite `B`, shape `(R, Nt, Np)`.
    pub temporal: DenseTensor,
    pub factors: BtrFactors,
    /// Low-rank 4-D background estimate.
    pub background: DenseTensor,
    /// Sparse 4-D target estimate.
    pub target: DenseTensor,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after each sweep.
    pub objective_history: Vec<f64>,
}

impl SolverState {
    /// Start of every run: background copies the data, target is zero, the
    /// composites and all six ring cores are filled with ones.
    pub fn init(data: &DenseTensor, params: &SolverParams) -> Result<Self, SolverError> {
        if data.order() != 4 {
            return Err(SolverError::BadInput(format!(
                "expected an order-4 patch tensor, got order {}",
                data.order()
            )));
        }
        let s = data.shape();
        let (nw1, nw2, nt, np) = (s[0], s[1], s[2], s[3]);
        let r = params.ranks.interaction;
        let spatial = DenseTensor::from_elem(&[nw1, nw2, r], 1.0)?;
        let temporal = DenseTensor::from_elem(&[r, nt, np], 1.0)?;
        let left = TrChain::normalized_ones([nw1, nw2, r], params.ranks.spatial)?;
        let right = TrChain::normalized_ones([r, nt, np], params.ranks.temporal)?;
        Ok(Self {
            spatial,
            temporal,
            factors: BtrFactors::new(left, right)?,
            background: data.clone(),
            target: DenseTensor::zeros(s)?,
            iterations: 0,
            converged: false,
            objective_history: Vec::new(),
        })
    }
}

fn spatial_split() -> ModePartition {
    ModePartition::new(vec![0, 1], vec![2])
}

fn temporal_split() -> ModePartition {
    ModePartition::new(vec![0], vec![1, 2])
}

fn background_split() -> ModePartition {
    ModePartition::new(vec![0, 1], vec![2, 3])
}

fn core_split() -> ModePartition {
    ModePartition::new(vec![1], vec![0, 2])
}

/// Closed-form minimizer for the spatial composite `A`:
/// `(alpha X B^T + beta1 C + rho A_prev) (alpha B B^T + (beta1+rho) I)^-1`,
/// where `X` unfolds the background over (rows, cols | frames, patches) and
/// `C` unfolds the left-chain composition.
pub fn update_spatial_factor(
    state: &SolverState,
    params: &SolverParams,
) -> Result<DenseTensor, SolverError> {
    let x = unfold(&state.background, &background_split())?;
    let b = unfold(&state.temporal, &temporal_split())?;
    let c = unfold(&tr_compose(&state.factors.left)?, &spatial_split())?;
    let a_prev = unfold(&state.spatial, &spatial_split())?;

    let mut lhs = b.matmul_nt(&b)?;
    lhs.scale(params.alpha);
    lhs.add_diagonal(params.beta1 + params.rho);

    let mut rhs = x.matmul_nt(&b)?;
    rhs.scale(params.alpha);
    rhs.add_scaled(params.beta1, &c)?;
    rhs.add_scaled(params.rho, &a_prev)?;

    // Right-division through the SPD solve: (lhs^-1 rhs^T)^T.
    let solved = spd_solve(&lhs, &rhs.transpose())?;
    Ok(fold(&solved.transpose(), &spatial_split(), state.spatial.shape())?)
}

/// Closed-form minimizer for the temporal-patch composite `B`:
/// `(alpha A^T A + (beta2+rho) I)^-1 (alpha A^T X + beta2 D + rho B_prev)`,
/// `D` being the right-chain composition unfolded over (interaction | rest).
pub fn update_temporal_factor(
    state: &SolverState,
    params: &SolverParams,
) -> Result<DenseTensor, SolverError> {
    let x = unfold(&state.background, &background_split())?;
    let a = unfold(&state.spatial, &spatial_split())?;
    let d = unfold(&tr_compose(&state.factors.right)?, &temporal_split())?;
    let b_prev = unfold(&state.temporal, &temporal_split())?;

    let mut lhs = a.matmul_tn(&a)?;
    lhs.scale(params.alpha);
    lhs.add_diagonal(params.beta2 + params.rho);

    let mut rhs = a.matmul_tn(&x)?;
    rhs.scale(params.alpha);
    rhs.add_scaled(params.beta2, &d)?;
    rhs.add_scaled(params.rho, &b_prev)?;

    let solved = spd_solve(&lhs, &rhs)?;
    Ok(fold(&solved, &temporal_split(), state.temporal.shape())?)
}

/// Which chain a core update addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainSide {
    Left,
    Right,
}

/// Closed-form minimizer for ring core `k` of the chosen chain:
/// `(beta A_k M_k^T + rho G_prev) (beta M_k M_k^T + rho I)^-1` in the
/// `[1 | 0,2]` core unfolding, where `A_k` unfolds the chain's composite
/// target and `M_k` is [`subchain_matrix`].
pub fn update_core(
    state: &SolverState,
    side: ChainSide,
    k: usize,
    params: &SolverParams,
) -> Result<DenseTensor, SolverError> {
    let (chain, target, beta) = match side {
        ChainSide::Left => (&state.factors.left, &state.spatial, params.beta1),
        ChainSide::Right => (&state.factors.right, &state.temporal, params.beta2),
    };
    if k >= 3 {
        return Err(SolverError::BadInput(format!("core index {k} out of range")));
    }
    let m = subchain_matrix(chain, k)?;
    let a_k = unfold(
        target,
        &ModePartition::new(vec![k], vec![(k + 1) % 3, (k + 2) % 3]),
    )?;
    let g_prev = unfold(chain.core(k), &core_split())?;

    let mut rhs = a_k.matmul_nt(&m)?;
    rhs.scale(beta);
    rhs.add_scaled(params.rho, &g_prev)?;

    // The normal matrix is (r^2 x r^2); when the subchain is wide the dual
    // Gram form (columns x columns) gives the same minimizer much cheaper:
    // (beta M M^T + rho I)^-1 = (1/rho) [I - M ((rho/beta) I + M^T M)^-1 M^T].
    let new_mat = if params.rho > 0.0 && m.rows() > 2 * m.cols() {
        let mut gram = m.matmul_tn(&m)?;
        gram.add_diagonal(params.rho / beta);
        let w = rhs.matmul(&m)?;
        let z = spd_solve(&gram, &w.transpose())?;
        let correction = m.matmul(&z)?; // rows x I_k
        let mut out = rhs;
        out.add_scaled(-1.0, &correction.transpose())?;
        out.scale(1.0 / params.rho);
        out
    } else {
        let mut lhs = m.matmul_nt(&m)?;
        lhs.scale(beta);
        lhs.add_diagonal(params.rho);
        spd_solve(&lhs, &rhs.transpose())?.transpose()
    };
    Ok(fold(&new_mat, &core_split(), chain.core(k).shape())?)
}

/// Closed-form minimizer for the 4-D background:
/// `(alpha (A x B) + beta3 (D - T) + rho B4_prev) / (alpha + beta3 + rho)`.
pub fn update_background(
    state: &SolverState,
    data: &DenseTensor,
    params: &SolverParams,
) -> Result<DenseTensor, SolverError> {
    let compose = contract_mm(&state.spatial, &[2], &state.temporal, &[0])?;
    let denom = params.alpha + params.beta3 + params.rho;
    let mut out = compose.scale(params.alpha);
    out = out.add(&data.sub(&state.target)?.scale(params.beta3))?;
    out = out.add(&state.background.scale(params.rho))?;
    Ok(out.scale(1.0 / denom))
}

/// Proximal minimizer for the sparse target: soft threshold of
/// `(beta3 (D - B4) + rho T_prev) / (beta3 + rho)` at `lambda1 / (beta3+rho)`.
pub fn update_target(
    state: &SolverState,
    data: &DenseTensor,
    params: &SolverParams,
) -> Result<DenseTensor, SolverError> {
    let denom = params.beta3 + params.rho;
    let pull = data
        .sub(&state.background)?
        .scale(params.beta3)
        .add(&state.target.scale(params.rho))?
        .scale(1.0 / denom);
    shrink(&pull, params.lambda1 / denom)
}

/// Objective value at the current state (without proximal anchor terms).
pub fn objective(state: &SolverState, data: &DenseTensor, params: &SolverParams) -> Result<f64, SolverError> {
    let compose = contract_mm(&state.spatial, &[2], &state.temporal, &[0])?;
    let fit = state.background.sub(&compose)?.frobenius_norm();
    let left = state
        .spatial
        .sub(&tr_compose(&state.factors.left)?)?
        .frobenius_norm();
    let right = state
        .temporal
        .sub(&tr_compose(&state.factors.right)?)?
        .frobenius_norm();
    let resid = data
        .sub(&state.background)?
        .sub(&state.target)?
        .frobenius_norm();
    Ok(0.5 * params.alpha * fit * fit
        + 0.5 * params.beta1 * left * left
        + 0.5 * params.beta2 * right * right
        + 0.5 * params.beta3 * resid * resid
        + params.lambda1 * state.target.l1_norm())
}

/// Runs the full alternating minimization on an order-4 patch tensor.
///
/// Block order per sweep: spatial composite, temporal composite, left-chain
/// cores 0..3, right-chain cores 0..3, background, target. Stops after
/// `max_iter` sweeps or once the relative change of `T` drops below `tol`.
pub fn solve(data: &DenseTensor, params: &SolverParams) -> Result<SolverState, SolverError> {
    params.validate()?;
    let mut state = SolverState::init(data, params)?;
    state
        .objective_history
        .push(objective(&state, data, params)?);
    for it in 0..params.max_iter {
        state.spatial = update_spatial_factor(&state, params)?;
        state.temporal = update_temporal_factor(&state, params)?;
        for k in 0..3 {
            let core = update_core(&state, ChainSide::Left, k, params)?;
            state.factors.left.set_core(k, core)?;
        }
        for k in 0..3 {
            let core = update_core(&state, ChainSide::Right, k, params)?;
            state.factors.right.set_core(k, core)?;
        }
        state.background = update_background(&state, data, params)?;
        // update_target reads the refreshed background and the previous target.
        let new_target = update_target(&state, data, params)?;
        let delta = new_target.sub(&state.target)?.frobenius_norm();
        let denom = state.target.frobenius_norm().max(1e-12);
        state.target = new_target;
        state.iterations = it + 1;

        if !state.background.max_abs().is_finite() || !state.target.max_abs().is_finite() {
            return Err(SolverError::Diverged { iteration: it + 1 });
        }
        state
            .objective_history
            .push(objective(&state, data, params)?);

        if delta / denom < params.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
