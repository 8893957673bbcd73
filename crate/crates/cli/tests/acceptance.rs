//! Acceptance suite: one test per shipped guarantee, spanning the tensor
//! algebra, the solver, evaluation, the correlation analyzer, file formats,
//! and the end-to-end pipeline. Each test prints a single
//! `acceptance NN <name>: PASS` line once its assertions hold, so a full run
//! doubles as a checklist.

use std::path::Path;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use istd_cli::config::RunConfig;
use istd_cli::io::{read_pgm, read_tensor, write_pgm, write_tensor, BitDepth};
use istd_cli::run;
use istd_cli::synth::{BackgroundKind, SynthSpec, TargetSpec};
use istd_core::correlation::analyze;
use istd_core::patch::{build_tensor, reconstruct, Frame, Overlap, PatchConfig};
use istd_core::solver::{
    btr_compose, objective, solve, subchain_matrix, tr_compose, update_background, update_core,
    update_spatial_factor, update_target, update_temporal_factor, BtrFactors, ChainSide, Ranks,
    SolverParams, SolverState, TrChain,
};
use istd_core::tensor::{contract, fold, unfold, DenseTensor, ModePartition};
use istd_core::{auc_family, Matrix};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor {
    DenseTensor::from_fn(shape, |_| rng.gen::<f64>() * 2.0 - 1.0).unwrap()
}

fn random_chain(rng: &mut ChaCha8Rng, dims: [usize; 3], rank: usize) -> TrChain {
    let mut chain = TrChain::ones(dims, rank).unwrap();
    for k in 0..3 {
        let core = random_tensor(rng, chain.core(k).shape());
        chain.set_core(k, core).unwrap();
    }
    chain
}

/// Contraction of two tensors over paired modes, computed through the matrix
/// route: unfold both sides, multiply, fold the product back. Serves as the
/// independent oracle for `contract`, which sums indices directly.
fn contract_via_unfold(
    x: &DenseTensor,
    y: &DenseTensor,
    x_modes: &[usize],
    y_modes: &[usize],
) -> DenseTensor {
    let x_free: Vec<usize> = (0..x.order()).filter(|m| !x_modes.contains(m)).collect();
    let y_free: Vec<usize> = (0..y.order()).filter(|m| !y_modes.contains(m)).collect();
    let mx = unfold(x, &ModePartition::new(x_free.clone(), x_modes.to_vec())).unwrap();
    let my = unfold(y, &ModePartition::new(y_modes.to_vec(), y_free.clone())).unwrap();
    let prod = mx.matmul(&my).unwrap();
    let mut out_shape: Vec<usize> = x_free.iter().map(|&m| x.shape()[m]).collect();
    out_shape.extend(y_free.iter().map(|&m| y.shape()[m]));
    let rows: Vec<usize> = (0..x_free.len()).collect();
    let cols: Vec<usize> = (x_free.len()..out_shape.len()).collect();
    fold(&prod, &ModePartition::new(rows, cols), &out_shape).unwrap()
}

fn max_abs_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn a01_contraction_matches_unfold_multiply_fold() {
    let started = Instant::now();
    let mut r = rng(0xC0_01);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let ox = r.gen_range(2..=4);
        let oy = r.gen_range(2..=4);
        let k = r.gen_range(1..=ox.min(oy) - 1);
        let paired: Vec<usize> = (0..k).map(|_| r.gen_range(1..=4)).collect();

        let mut x_shape: Vec<usize> = (0..ox - k).map(|_| r.gen_range(1..=4)).collect();
        x_shape.extend(&paired);
        let mut x_modes: Vec<usize> = (0..ox).collect();
        x_modes.shuffle(&mut r);
        let x_modes = &x_modes[..k];
        // place the paired extents at the sampled mode positions
        let mut shape = vec![0; ox];
        let mut free_extents = x_shape[..ox - k].iter().copied();
        for (m, extent) in shape.iter_mut().enumerate() {
            *extent = match x_modes.iter().position(|&xm| xm == m) {
                Some(pos) => paired[pos],
                None => free_extents.next().unwrap(),
            };
        }
        let x = random_tensor(&mut r, &shape);

        let mut y_modes: Vec<usize> = (0..oy).collect();
        y_modes.shuffle(&mut r);
        let y_modes = &y_modes[..k];
        let mut shape = vec![0; oy];
        for (m, extent) in shape.iter_mut().enumerate() {
            *extent = match y_modes.iter().position(|&ym| ym == m) {
                Some(pos) => paired[pos],
                None => r.gen_range(1..=4),
            };
        }
        let y = random_tensor(&mut r, &shape);

        let direct = contract(&x, &y, x_modes, y_modes).unwrap();
        let via_matrix = contract_via_unfold(&x, &y, x_modes, y_modes);
        worst = worst.max(max_abs_diff(&direct, &via_matrix));
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(worst < 1e-12, "max abs diff {worst}");
    assert!(secs < 5.0, "took {secs:.2}s");
    println!("acceptance 01 contraction-oracle: PASS (200 pairs, max diff {worst:.2e}, {secs:.2}s)");
}

/// Brute-force ring composition: X(i1,i2,i3) = Σ_{a,b,c} G1(a,i1,b) G2(b,i2,c) G3(c,i3,a).
fn brute_tr(chain: &TrChain) -> DenseTensor {
    let dims = chain.dims();
    let (g1, g2, g3) = (chain.core(0), chain.core(1), chain.core(2));
    let r = g1.shape()[0];
    DenseTensor::from_fn(&dims, |idx| {
        let (i1, i2, i3) = (idx[0], idx[1], idx[2]);
        let mut sum = 0.0;
        for a in 0..r {
            for b in 0..r {
                for c in 0..r {
                    sum += g1.get(&[a, i1, b]) * g2.get(&[b, i2, c]) * g3.get(&[c, i3, a]);
                }
            }
        }
        sum
    })
    .unwrap()
}

#[test]
fn a02_ring_composition_matches_brute_force() {
    let started = Instant::now();
    let mut r = rng(0xC0_02);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let interaction = r.gen_range(1..=3);
        let left_dims = [r.gen_range(1..=4), r.gen_range(1..=4), interaction];
        let right_dims = [interaction, r.gen_range(1..=4), r.gen_range(1..=4)];
        let left_rank = r.gen_range(1..=3);
        let right_rank = r.gen_range(1..=3);
        let left = random_chain(&mut r, left_dims, left_rank);
        let right = random_chain(&mut r, right_dims, right_rank);

        let a_brute = brute_tr(&left);
        let b_brute = brute_tr(&right);
        worst = worst.max(max_abs_diff(&tr_compose(&left).unwrap(), &a_brute));
        worst = worst.max(max_abs_diff(&tr_compose(&right).unwrap(), &b_brute));

        let factors = BtrFactors::new(left, right).unwrap();
        let x = btr_compose(&factors).unwrap();
        let shape = [left_dims[0], left_dims[1], right_dims[1], right_dims[2]];
        let x_brute = DenseTensor::from_fn(&shape, |idx| {
            (0..interaction)
                .map(|k| a_brute.get(&[idx[0], idx[1], k]) * b_brute.get(&[k, idx[2], idx[3]]))
                .sum()
        })
        .unwrap();
        worst = worst.max(max_abs_diff(&x, &x_brute));
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(worst < 1e-12, "max abs diff {worst}");
    assert!(secs < 5.0, "took {secs:.2}s");
    println!("acceptance 02 ring-composition-oracle: PASS (100 sets, max diff {worst:.2e}, {secs:.2}s)");
}

/// A solver state with every block randomized, so block minimizers are
/// checked at generic points rather than at the friendly init.
fn random_state(r: &mut ChaCha8Rng, data: &DenseTensor, params: &SolverParams) -> SolverState {
    let mut state = SolverState::init(data, params).unwrap();
    state.spatial = random_tensor(r, state.spatial.shape());
    state.temporal = random_tensor(r, state.temporal.shape());
    let left_dims = state.factors.left.dims();
    let right_dims = state.factors.right.dims();
    let left = random_chain(r, left_dims, params.ranks.spatial);
    let right = random_chain(r, right_dims, params.ranks.temporal);
    state.factors = BtrFactors::new(left, right).unwrap();
    state.background = random_tensor(r, data.shape());
    state.target = random_tensor(r, data.shape());
    state
}

fn spatial_mat(t: &DenseTensor) -> Matrix {
    unfold(t, &ModePartition::new(vec![0, 1], vec![2])).unwrap()
}

fn temporal_mat(t: &DenseTensor) -> Matrix {
    unfold(t, &ModePartition::new(vec![0], vec![1, 2])).unwrap()
}

/// ‖α(M·G − P) + β(M − C) + ρ(M − Q)‖_F and the scale of its pieces, for the
/// ridge-regularized least-squares blocks written as M·G majorization.
fn grad_residual(
    m: &Matrix,
    gram: &Matrix,
    p: &Matrix,
    alpha: f64,
    anchors: &[(f64, &Matrix)],
) -> (f64, f64) {
    let mut grad = m.matmul(gram).unwrap();
    grad.add_scaled(-1.0, p).unwrap();
    grad.scale(alpha);
    let mut scale = alpha * (m.matmul(gram).unwrap().frobenius_norm() + p.frobenius_norm());
    for &(weight, anchor) in anchors {
        let mut pull = m.clone();
        pull.add_scaled(-1.0, anchor).unwrap();
        pull.scale(weight);
        grad.add_scaled(1.0, &pull).unwrap();
        scale += weight * (m.frobenius_norm() + anchor.frobenius_norm());
    }
    (grad.frobenius_norm(), scale)
}

#[test]
fn a03_block_updates_are_exact_minimizers() {
    let mut r = rng(0xC0_03);
    let params = SolverParams {
        ranks: Ranks {
            spatial: 2,
            interaction: 2,
            temporal: 3,
        },
        ..SolverParams::default()
    };
    let shape = [5, 5, 4, 6];
    let mut worst = [0.0_f64; 6];
    for _ in 0..50 {
        let data = random_tensor(&mut r, &shape);
        let state = random_state(&mut r, &data, &params);

        // spatial composite: α/2‖X − A·Bᵀ... gradient α(A·BBᵀ − XBᵀ) + β1(A−C) + ρ(A−A₀)
        let a_new = spatial_mat(&update_spatial_factor(&state, &params).unwrap());
        let x = unfold(
            &state.background,
            &ModePartition::new(vec![0, 1], vec![2, 3]),
        )
        .unwrap();
        let b = temporal_mat(&state.temporal);
        let c = spatial_mat(&tr_compose(&state.factors.left).unwrap());
        let a_prev = spatial_mat(&state.spatial);
        let (res, scale) = grad_residual(
            &a_new,
            &b.matmul_nt(&b).unwrap(),
            &x.matmul_nt(&b).unwrap(),
            params.alpha,
            &[(params.beta1, &c), (params.rho, &a_prev)],
        );
        worst[0] = worst[0].max(res / scale);

        // temporal composite, transposed form: gradient α(AᵀA·B − AᵀX) + β2(B−D) + ρ(B−B₀)
        let b_new = temporal_mat(&update_temporal_factor(&state, &params).unwrap());
        let a = spatial_mat(&state.spatial);
        let d = temporal_mat(&tr_compose(&state.factors.right).unwrap());
        let b_prev = temporal_mat(&state.temporal);
        let bt = b_new.transpose();
        let (res, scale) = grad_residual(
            &bt,
            &a.matmul_tn(&a).unwrap(),
            &x.transpose().matmul(&a).unwrap(),
            params.alpha,
            &[
                (params.beta2, &d.transpose()),
                (params.rho, &b_prev.transpose()),
            ],
        );
        worst[1] = worst[1].max(res / scale);

        // ring cores, both chains: gradient β(G·MMᵀ − A_k Mᵀ) + ρ(G−G₀)
        for (side, slot, beta, target) in [
            (ChainSide::Left, 2usize, params.beta1, &state.spatial),
            (ChainSide::Right, 3usize, params.beta2, &state.temporal),
        ] {
            let chain = match side {
                ChainSide::Left => &state.factors.left,
                ChainSide::Right => &state.factors.right,
            };
            for k in 0..3 {
                let g_new = update_core(&state, side, k, &params).unwrap();
                let core_split = ModePartition::new(vec![1], vec![0, 2]);
                let g_mat = unfold(&g_new, &core_split).unwrap();
                let m = subchain_matrix(chain, k).unwrap();
                let a_k = unfold(
                    target,
                    &ModePartition::new(vec![k], vec![(k + 1) % 3, (k + 2) % 3]),
                )
                .unwrap();
                let g_prev = unfold(chain.core(k), &core_split).unwrap();
                let (res, scale) = grad_residual(
                    &g_mat,
                    &m.matmul_nt(&m).unwrap(),
                    &a_k.matmul_nt(&m).unwrap(),
                    beta,
                    &[(params.rho, &g_prev)],
                );
                worst[slot] = worst[slot].max(res / scale);
            }
        }

        // background: pointwise gradient α(B−A∘B) + β3(B−(D−T)) + ρ(B−B₀)
        let bg_new = update_background(&state, &data, &params).unwrap();
        let compose = contract(&state.spatial, &state.temporal, &[2], &[0]).unwrap();
        let mut res = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..bg_new.numel() {
            let v = bg_new.data()[i];
            let g = params.alpha * (v - compose.data()[i])
                + params.beta3 * (v - (data.data()[i] - state.target.data()[i]))
                + params.rho * (v - state.background.data()[i]);
            res = res.max(g.abs());
            scale = scale.max(v.abs().max(compose.data()[i].abs()).max(1.0));
        }
        worst[4] = worst[4].max(res / ((params.alpha + params.beta3 + params.rho) * scale));

        // target: soft-threshold optimality through the subgradient of λ₁‖T‖₁
        let t_new = update_target(&state, &data, &params).unwrap();
        let mut res = 0.0_f64;
        for i in 0..t_new.numel() {
            let v = t_new.data()[i];
            let fit = params.beta3 * (v - (data.data()[i] - state.background.data()[i]))
                + params.rho * (v - state.target.data()[i]);
            let viol = if v != 0.0 {
                (fit + params.lambda1 * v.signum()).abs()
            } else {
                (fit.abs() - params.lambda1).max(0.0)
            };
            res = res.max(viol);
        }
        let scale = params.beta3 * (data.max_abs() + state.background.max_abs())
            + params.rho * state.target.max_abs()
            + params.lambda1;
        worst[5] = worst[5].max(res / scale);
    }
    let overall = worst.iter().copied().fold(0.0, f64::max);
    assert!(
        overall < 1e-8,
        "worst relative optimality residuals {worst:?}"
    );
    println!(
        "acceptance 03 block-minimizer-residuals: PASS (50 instances x 6 blocks, worst {overall:.2e})"
    );
}

#[test]
fn a04_objective_descends_monotonically() {
    let params = SolverParams {
        tol: 1e-12, // effectively disables early stopping
        ..SolverParams::default()
    };
    let mut r = rng(0xC0_04);
    let mut worst_rise = 0.0_f64;
    for _ in 0..50 {
        let data = DenseTensor::from_fn(&[8, 8, 5, 6], |_| r.gen::<f64>()).unwrap();
        let state = solve(&data, &params).unwrap();
        assert_eq!(state.iterations, 20);
        assert_eq!(state.objective_history.len(), 21);
        for w in state.objective_history.windows(2) {
            let slack = 1e-9 * w[0].abs();
            worst_rise = worst_rise.max(w[1] - w[0]);
            assert!(
                w[1] <= w[0] + slack,
                "objective rose from {} to {}",
                w[0],
                w[1]
            );
        }
        // the recorded history matches an independent evaluation at the end
        let recomputed = objective(&state, &data, &params).unwrap();
        let last = *state.objective_history.last().unwrap();
        assert!((recomputed - last).abs() <= 1e-9 * last.abs());
    }
    println!(
        "acceptance 04 monotone-descent: PASS (50 runs x 20 sweeps, worst rise {worst_rise:.2e})"
    );
}

#[test]
fn a05_planted_spikes_and_background_recovered() {
    let started = Instant::now();
    let params = SolverParams::default();
    let shape = [30, 30, 10, 9];
    let n: usize = shape.iter().product();
    let mut f1_sum = 0.0;
    let mut err_sum = 0.0;
    for seed in 0..20u64 {
        let mut r = rng(0xC0_05 + seed);
        // positive, DC-heavy cores give a bright, well-conditioned background
        let mut make_chain = |dims: [usize; 3], rank: usize| {
            let mut chain = TrChain::ones(dims, rank).unwrap();
            for k in 0..3 {
                let core =
                    DenseTensor::from_fn(chain.core(k).shape(), |_| 0.15 + 0.85 * r.gen::<f64>())
                        .unwrap();
                chain.set_core(k, core).unwrap();
            }
            chain
        };
        let left = make_chain([30, 30, params.ranks.interaction], params.ranks.spatial);
        let right = make_chain(
            [params.ranks.interaction, 10, 9],
            params.ranks.temporal,
        );
        let mut bg = btr_compose(&BtrFactors::new(left, right).unwrap()).unwrap();
        let peak = bg.max_abs();
        bg = bg.scale(1.0 / peak);

        let mut support = std::collections::BTreeSet::new();
        while support.len() < 10 {
            support.insert(r.gen_range(0..n));
        }
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut data = bg.clone();
        for (i, v) in data.data_mut().iter_mut().enumerate() {
            if support.contains(&i) {
                *v += 5.0;
            }
            *v += noise.sample(&mut r);
        }

        let state = solve(&data, &params).unwrap();
        let predicted: std::collections::BTreeSet<usize> = state
            .target
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let tp = predicted.intersection(&support).count() as f64;
        let precision = if predicted.is_empty() {
            0.0
        } else {
            tp / predicted.len() as f64
        };
        let recall = tp / support.len() as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let err = state.background.sub(&bg).unwrap().frobenius_norm() / bg.frobenius_norm();
        f1_sum += f1;
        err_sum += err;
    }
    let secs = started.elapsed().as_secs_f64();
    let f1 = f1_sum / 20.0;
    let err = err_sum / 20.0;
    assert!(f1 >= 0.9, "mean F1 {f1}");
    assert!(err <= 2e-2, "mean background relative error {err}");
    assert!(secs < 30.0, "took {secs:.2}s");
    println!(
        "acceptance 05 planted-recovery: PASS (20 seeds, mean F1 {f1:.4}, mean bg err {err:.2e}, {secs:.1}s)"
    );
}

#[test]
fn a06_end_to_end_detection_on_synthetic_scene() {
    let started = Instant::now();
    let cfg = RunConfig::default();
    let spec = SynthSpec {
        height: 256,
        width: 256,
        n_frames: 100,
        background: BackgroundKind::Smooth,
        noise_sigma: 0.02,
        targets: vec![TargetSpec {
            row: 64.0,
            col: 51.2,
            vel_row: 0.3,
            vel_col: 0.4,
            amplitude: 0.4,
            radius: 2.0,
        }],
        seed: 0,
    };
    let dir = tempfile::tempdir().unwrap();
    let curve = run::pipeline(&spec, &dir.path().join("run"), &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert!(curve.auc_df >= 0.95, "auc_df {}", curve.auc_df);
    assert!(curve.auc_ftau <= 0.05, "auc_ftau {}", curve.auc_ftau);
    assert!(secs < 120.0, "took {secs:.2}s");
    println!(
        "acceptance 06 synthetic-detection: PASS (auc_df {:.4}, auc_ftau {:.4}, {secs:.1}s)",
        curve.auc_df, curve.auc_ftau
    );
}

#[test]
fn a07_auc_family_reference_values_and_ranges() {
    let fam = auc_family(1.0, 0.0021);
    assert!((fam.snpr - 476.1905).abs() <= 1e-4, "snpr {}", fam.snpr);
    assert!(!fam.snpr_capped);
    assert!((fam.tdbs - 0.9979).abs() <= 1e-12, "tdbs {}", fam.tdbs);
    assert!((fam.odp - 1.9979).abs() <= 1e-12, "odp {}", fam.odp);

    let mut r = rng(0xC0_07);
    for _ in 0..1000 {
        let fam = auc_family(r.gen::<f64>(), r.gen::<f64>());
        assert!((-1.0..=1.0).contains(&fam.tdbs), "tdbs {}", fam.tdbs);
        assert!((0.0..=2.0).contains(&fam.odp), "odp {}", fam.odp);
    }
    println!(
        "acceptance 07 auc-family: PASS (snpr {:.4}, tdbs {:.4}, odp {:.4}; 1000 range draws)",
        fam.snpr, fam.tdbs, fam.odp
    );
}

#[test]
fn a08_aligned_pairs_dominate_mixed_pairs() {
    let cfg = PatchConfig {
        patch_size: 24,
        stride: 24,
        temporal_size: 10,
    };
    let mut er = [0.0_f64; 6];
    let mut cos = [0.0_f64; 6];
    let mut labels: [String; 6] = Default::default();
    for seed in 1000..1020u64 {
        let spec = SynthSpec {
            height: 96,
            width: 96,
            n_frames: 10,
            background: BackgroundKind::Smooth,
            noise_sigma: 0.005,
            targets: vec![],
            seed,
        };
        let (frames, _) = istd_cli::synth::synth_sequence(&spec).unwrap();
        let patches = build_tensor(&frames, &cfg, 0).unwrap();
        let report = analyze(&patches.tensor).unwrap();
        for (i, p) in report.pairs.iter().enumerate() {
            er[i] += p.mean_energy_ratio / 20.0;
            cos[i] += p.mean_direction_cos / 20.0;
            labels[i] = p.pair.label();
        }
    }
    let aligned = |l: &str| l == "(1,2)" || l == "(3,4)";
    let min_aligned = |v: &[f64; 6]| {
        v.iter()
            .zip(&labels)
            .filter(|(_, l)| aligned(l))
            .map(|(x, _)| *x)
            .fold(f64::INFINITY, f64::min)
    };
    let max_mixed = |v: &[f64; 6]| {
        v.iter()
            .zip(&labels)
            .filter(|(_, l)| !aligned(l))
            .map(|(x, _)| *x)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    for (metric, v) in [("energy ratio", &er), ("direction cos", &cos)] {
        let (lo, hi) = (min_aligned(v), max_mixed(v));
        assert!(
            lo > hi,
            "{metric}: aligned min {lo} vs mixed max {hi} ({labels:?} = {v:?})"
        );
    }
    println!(
        "acceptance 08 dimension-correlation-ordering: PASS (er margin {:.1e}, cos margin {:.1e})",
        min_aligned(&er) - max_mixed(&er),
        min_aligned(&cos) - max_mixed(&cos)
    );
}

#[test]
fn a09_roundtrips_and_determinism() {
    let mut r = rng(0xC0_09);

    // patch grid that tiles the frame exactly: reconstruction is bit-equal
    let frames: Vec<Frame> = (0..4)
        .map(|_| Frame::new(20, 15, (0..300).map(|_| r.gen::<f64>()).collect()).unwrap())
        .collect();
    let cfg = PatchConfig {
        patch_size: 5,
        stride: 5,
        temporal_size: 3,
    };
    let t = build_tensor(&frames, &cfg, 1).unwrap();
    let rec = reconstruct(&t, Overlap::Mean).unwrap();
    for (orig, back) in frames[1..4].iter().zip(&rec) {
        assert_eq!(orig.pixels(), back.pixels(), "tiled roundtrip not exact");
    }
    // overlapping grid: averaged copies of one source value stay within 1 ulp-ish
    let cfg = PatchConfig {
        patch_size: 6,
        stride: 4,
        temporal_size: 3,
    };
    let t = build_tensor(&frames, &cfg, 0).unwrap();
    let rec = reconstruct(&t, Overlap::Mean).unwrap();
    for (orig, back) in frames[0..3].iter().zip(&rec) {
        let worst = orig
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-14, "overlapped roundtrip diff {worst}");
    }

    // PGM: quantization error bounded by half a level per depth
    let dir = tempfile::tempdir().unwrap();
    let frame = Frame::new(9, 7, (0..63).map(|_| r.gen::<f64>()).collect()).unwrap();
    for (depth, levels) in [(BitDepth::Eight, 255.0), (BitDepth::Sixteen, 65535.0)] {
        let path = dir.path().join("frame.pgm");
        write_pgm(&path, &frame, depth).unwrap();
        let back = read_pgm(&path).unwrap();
        let worst = frame
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(
            worst <= 0.5 / levels + 1e-12,
            "pgm roundtrip at {levels} levels: {worst}"
        );
    }

    // tensor container: bit-exact
    let tensor = random_tensor(&mut r, &[3, 4, 2, 5]);
    let path = dir.path().join("t.btrt");
    write_tensor(&path, &tensor).unwrap();
    let back = read_tensor(&path).unwrap();
    assert_eq!(tensor.shape(), back.shape());
    assert!(
        tensor
            .data()
            .iter()
            .zip(back.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "tensor file roundtrip not bit-exact"
    );

    // same seed, same pipeline, byte-identical metrics
    let spec = SynthSpec {
        height: 16,
        width: 16,
        n_frames: 6,
        background: BackgroundKind::Smooth,
        noise_sigma: 0.01,
        targets: vec![TargetSpec {
            row: 8.0,
            col: 4.0,
            vel_row: 0.0,
            vel_col: 0.3,
            amplitude: 0.5,
            radius: 1.0,
        }],
        seed: 7,
    };
    let cfg = RunConfig {
        nw: 8,
        nt: 3,
        ranks: Ranks {
            spatial: 2,
            interaction: 2,
            temporal: 3,
        },
        max_iter: 3,
        thresholds: 20,
        ..RunConfig::default()
    };
    let read_metrics = |out: &Path| {
        let curve = run::pipeline(&spec, out, &cfg).unwrap();
        (
            std::fs::read(out.join("metrics.csv")).unwrap(),
            curve.auc_df,
        )
    };
    let (first, auc_a) = read_metrics(&dir.path().join("p1"));
    let (second, auc_b) = read_metrics(&dir.path().join("p2"));
    assert_eq!(first, second, "metrics differ between identical runs");
    assert_eq!(auc_a, auc_b);

    println!("acceptance 09 roundtrips-and-determinism: PASS");
}

#[test]
fn a10_default_parameters_conform() {
    let cfg = RunConfig::default();
    let params = cfg.solver_params().unwrap();
    assert_eq!(params.alpha, 1.0);
    assert_eq!(params.lambda1, 0.1);
    assert_eq!(params.beta1, 1.0);
    assert_eq!(params.beta2, 1.0);
    assert_eq!(params.beta3, 2.0);
    assert_eq!(params.rho, 0.01);
    assert_eq!(params.max_iter, 20);
    assert_eq!(SolverParams::default().max_iter, 20);
    println!(
        "acceptance 10 default-parameters: PASS (alpha 1, lambda1 0.1, beta 1/1/2, rho 0.01, 20 sweeps)"
    );
}
