//! Library-consumer scenarios stitched entirely from the public API:
//! frames → patch tensor → decomposition → reconstruction → ROC scoring,
//! plus the correlation analyzer on data with a known exact answer.

use istd_core::correlation::analyze;
use istd_core::evaluation::{roc_sweep, GroundTruth, ScoreMap, TargetRecord};
use istd_core::patch::{build_tensor, reconstruct, Frame, Overlap, PatchConfig, PatchTensor4D};
use istd_core::solver::{solve, Ranks, SolverParams};
use istd_core::tensor::DenseTensor;

fn lcg(seed: &mut u64) -> f64 {
    *seed = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
}

/// A slow smooth gradient (near-constant inside any 8×8 patch), a 2×2 block
/// mover of amplitude 0.35, and faint pixel noise.
fn scene() -> (Vec<Frame>, GroundTruth) {
    let (h, w, n) = (24, 24, 6);
    let mut seed = 42;
    let mut frames = Vec::with_capacity(n);
    let mut gt = GroundTruth::new();
    for t in 0..n {
        let (r0, c0) = (6 + t, 4 + t);
        let mut pixels = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                let phase = (r as f64 + 0.5 * c as f64) / 96.0;
                let mut v = 0.3 + 0.25 * (std::f64::consts::TAU * phase).sin();
                if (r0..r0 + 2).contains(&r) && (c0..c0 + 2).contains(&c) {
                    v += 0.35;
                }
                v += 0.008 * (lcg(&mut seed) - 0.5);
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        frames.push(Frame::new(h, w, pixels).unwrap());
        gt.push(
            t,
            TargetRecord {
                row: r0,
                col: c0,
                box_size: None,
            },
        )
        .unwrap();
    }
    (frames, gt)
}

#[test]
fn planted_mover_is_detected_through_the_public_api() {
    let (frames, gt) = scene();
    let cfg = PatchConfig {
        patch_size: 8,
        stride: 8,
        temporal_size: 6,
    };
    let patches = build_tensor(&frames, &cfg, 0).unwrap();
    assert_eq!(patches.tensor.shape(), &[8, 8, 6, 9]);

    let params = SolverParams {
        ranks: Ranks {
            spatial: 2,
            interaction: 2,
            temporal: 3,
        },
        max_iter: 12,
        tol: 1e-6,
        ..SolverParams::default()
    };
    let state = solve(&patches.tensor, &params).unwrap();

    let target_frames = reconstruct(
        &PatchTensor4D {
            tensor: state.target.clone(),
            provenance: patches.provenance.clone(),
        },
        Overlap::Mean,
    )
    .unwrap();
    let scores = ScoreMap::from_frames(target_frames).unwrap();
    let roc = roc_sweep(&scores, &gt, 64).unwrap();
    assert!(roc.auc_df >= 0.9, "auc_df {}", roc.auc_df);
    assert!(roc.auc_ftau <= 0.1, "auc_ftau {}", roc.auc_ftau);
    assert!(roc.family.odp > 1.0, "odp {}", roc.family.odp);

    // the separated background stays close to the planted gradient where the
    // target is absent
    let background_frames = reconstruct(
        &PatchTensor4D {
            tensor: state.background.clone(),
            provenance: patches.provenance,
        },
        Overlap::Mean,
    )
    .unwrap();
    let mut worst = 0.0_f64;
    for (t, bg) in background_frames.iter().enumerate() {
        for r in 0..24 {
            for c in 0..24 {
                let in_block = (6 + t..8 + t).contains(&r) && (4 + t..6 + t).contains(&c);
                if !in_block {
                    let phase = (r as f64 + 0.5 * c as f64) / 96.0;
                    let clean = 0.3 + 0.25 * (std::f64::consts::TAU * phase).sin();
                    worst = worst.max((bg.get(r, c) - clean).abs());
                }
            }
        }
    }
    assert!(worst < 0.05, "background deviates by {worst}");
}

#[test]
fn analyzer_reports_perfect_structure_on_rank_one_data() {
    let f = |k: usize, n: usize| 0.5 + (k as f64 + 1.0) / n as f64;
    let t = DenseTensor::from_fn(&[5, 4, 6, 3], |idx| {
        f(idx[0], 5) * f(idx[1], 4) * f(idx[2], 6) * f(idx[3], 3)
    })
    .unwrap();
    let report = analyze(&t).unwrap();
    assert_eq!(report.pairs.len(), 6);
    for p in &report.pairs {
        assert!(
            (p.mean_energy_ratio - 1.0).abs() < 1e-12,
            "pair {}: energy ratio {}",
            p.pair.label(),
            p.mean_energy_ratio
        );
        assert!(
            (p.mean_direction_cos - 1.0).abs() < 1e-12,
            "pair {}: direction cos {}",
            p.pair.label(),
            p.mean_direction_cos
        );
        assert!(p.direction_degenerate.iter().all(|d| !d));
    }
}
