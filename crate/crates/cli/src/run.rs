//! Batch flows behind the subcommands: decomposition over temporal windows,
//! score evaluation, correlation analysis, and sequence synthesis.
//!
//! A sequence of F frames splits into ⌈F/Nt⌉ windows of Nt frames starting
//! at multiples of Nt, the last window right-aligned; frames covered by two
//! windows get their outputs averaged. Windows are independent and may run
//! on a bounded worker pool, but every file is written from the calling
//! thread in window order, so outputs are deterministic. On any failure the
//! files and directories a flow created are removed again.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use istd_core::correlation::{analyze, CorrelationReport};
use istd_core::evaluation::{roc_sweep_with, GroundTruth, RocCurve, ScoreMap};
use istd_core::patch::{build_tensor, reconstruct, Frame, PatchTensor4D};
use istd_core::solver::solve;

use crate::config::RunConfig;
use crate::io::{self, BitDepth};
use crate::synth::{synth_sequence, SynthSpec};

/// Files and directories created by one flow, so a failure can undo them.
#[derive(Debug, Default)]
struct Outputs {
    created: Vec<PathBuf>,
}

impl Outputs {
    /// Creates `dir` (and missing ancestors), recording whatever was new.
    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(p) = cur {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            missing.push(p.to_path_buf());
            cur = p.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        missing.reverse();
        self.created.extend(missing);
        Ok(())
    }

    /// Records a file about to be written.
    fn file(&mut self, path: &Path) -> PathBuf {
        self.created.push(path.to_path_buf());
        path.to_path_buf()
    }

    /// Best-effort removal of everything recorded, newest first.
    fn cleanup(&self) {
        for p in self.created.iter().rev() {
            if p.is_dir() {
                let _ = fs::remove_dir(p);
            } else {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn guarded<T>(body: impl FnOnce(&mut Outputs) -> Result<T>) -> Result<T> {
    let mut outputs = Outputs::default();
    let result = body(&mut outputs);
    if result.is_err() {
        outputs.cleanup();
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTiming {
    pub window: usize,
    pub start_frame: usize,
    pub iterations: usize,
    /// Wall-clock of the solve call only; reconstruction and I/O excluded.
    pub seconds: f64,
}

#[derive(Debug)]
pub struct DetectOutcome {
    pub n_frames: usize,
    pub timings: Vec<WindowTiming>,
    pub background_dir: PathBuf,
    pub target_dir: PathBuf,
}

struct WindowOutput {
    start: usize,
    iterations: usize,
    seconds: f64,
    background: Vec<Frame>,
    target: Vec<Frame>,
}

/// Decomposes the PGM sequence in `input` and writes per-frame background
/// and target-score images plus a per-window timing table under `out`.
pub fn detect(input: &Path, out: &Path, cfg: &RunConfig) -> Result<DetectOutcome> {
    guarded(|outputs| detect_inner(input, out, cfg, outputs))
}

fn detect_inner(
    input: &Path,
    out: &Path,
    cfg: &RunConfig,
    outputs: &mut Outputs,
) -> Result<DetectOutcome> {
    let frames = io::load_frames(input)?;
    let (h, w) = (frames[0].height(), frames[0].width());
    let f_total = frames.len();
    if f_total < cfg.nt {
        bail!(
            "sequence has {f_total} frames but the temporal window needs {}",
            cfg.nt
        );
    }
    let pc = cfg.patch_config();
    pc.validate(h, w)?;
    let params = cfg.solver_params()?;

    let n_win = f_total.div_ceil(cfg.nt);
    let starts: Vec<usize> = (0..n_win)
        .map(|wi| (wi * cfg.nt).min(f_total - cfg.nt))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building worker pool")?;
    let windows: Vec<WindowOutput> = pool.install(|| {
        starts
            .par_iter()
            .map(|&start| -> Result<WindowOutput> {
                let pt = build_tensor(&frames, &pc, start)?;
                let t0 = Instant::now();
                let state = solve(&pt.tensor, &params)?;
                let seconds = t0.elapsed().as_secs_f64();
                let background = reconstruct(
                    &PatchTensor4D {
                        tensor: state.background,
                        provenance: pt.provenance.clone(),
                    },
                    cfg.overlap,
                )?;
                let target = reconstruct(
                    &PatchTensor4D {
                        tensor: state.target.map(f64::abs),
                        provenance: pt.provenance,
                    },
                    cfg.overlap,
                )?;
                Ok(WindowOutput {
                    start,
                    iterations: state.iterations,
                    seconds,
                    background,
                    target,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // Average the windows covering each frame (at most two: the right-aligned
    // last window overlaps its predecessor when Nt does not divide F).
    let mut bg_acc = vec![vec![0.0f64; h * w]; f_total];
    let mut tg_acc = vec![vec![0.0f64; h * w]; f_total];
    let mut cover = vec![0u32; f_total];
    for wo in &windows {
        for (k, (bg, tg)) in wo.background.iter().zip(&wo.target).enumerate() {
            let f = wo.start + k;
            cover[f] += 1;
            for (px, (&b, &t)) in bg.pixels().iter().zip(tg.pixels()).enumerate() {
                bg_acc[f][px] += b;
                tg_acc[f][px] += t;
            }
        }
    }

    let bg_dir = out.join("background");
    let tg_dir = out.join("target");
    outputs.ensure_dir(&bg_dir)?;
    outputs.ensure_dir(&tg_dir)?;
    for f in 0..f_total {
        let n = f64::from(cover[f].max(1));
        let finish = |acc: &Vec<f64>| -> Result<Frame> {
            let pixels = acc.iter().map(|v| (v / n).clamp(0.0, 1.0)).collect();
            Ok(Frame::new(h, w, pixels)?)
        };
        let name = format!("{f:04}.pgm");
        io::write_pgm(&outputs.file(&bg_dir.join(&name)), &finish(&bg_acc[f])?, BitDepth::Sixteen)?;
        io::write_pgm(&outputs.file(&tg_dir.join(&name)), &finish(&tg_acc[f])?, BitDepth::Sixteen)?;
    }

    let timings: Vec<WindowTiming> = windows
        .iter()
        .enumerate()
        .map(|(i, wo)| WindowTiming {
            window: i,
            start_frame: wo.start,
            iterations: wo.iterations,
            seconds: wo.seconds,
        })
        .collect();
    let mut csv = String::from("window,start_frame,iterations,seconds\n");
    for t in &timings {
        csv.push_str(&format!(
            "{},{},{},{:.6}\n",
            t.window, t.start_frame, t.iterations, t.seconds
        ));
    }
    fs::write(outputs.file(&out.join("timing.csv")), csv)?;

    Ok(DetectOutcome {
        n_frames: f_total,
        timings,
        background_dir: bg_dir,
        target_dir: tg_dir,
    })
}

/// Scores the PGM maps in `scores` against a ground-truth file and writes
/// the threshold table plus the AUC summary to `out/metrics.csv`.
pub fn eval(scores: &Path, gt_path: &Path, out: &Path, cfg: &RunConfig) -> Result<RocCurve> {
    guarded(|outputs| eval_inner(scores, gt_path, out, cfg, outputs))
}

fn eval_inner(
    scores: &Path,
    gt_path: &Path,
    out: &Path,
    cfg: &RunConfig,
    outputs: &mut Outputs,
) -> Result<RocCurve> {
    let frames = io::load_frames(scores)?;
    let text = fs::read_to_string(gt_path)
        .with_context(|| format!("reading ground truth {}", gt_path.display()))?;
    let gt = GroundTruth::parse(&text)?;
    let map = ScoreMap::from_frames(frames)?;
    let roc = roc_sweep_with(&map, &gt, cfg.thresholds, cfg.hit_radius)?;

    outputs.ensure_dir(out)?;
    let mut csv = String::new();
    for ((tau, pd), pf) in roc.thresholds.iter().zip(&roc.pd).zip(&roc.pf) {
        csv.push_str(&format!("threshold,{tau},{pd},{pf}\n"));
    }
    csv.push_str(&format!(
        "auc,{},{},{},{},{},{}\n",
        roc.auc_df, roc.auc_dtau, roc.auc_ftau, roc.family.snpr, roc.family.tdbs, roc.family.odp
    ));
    fs::write(outputs.file(&out.join("metrics.csv")), csv)?;
    Ok(roc)
}

/// Dimension-correlation report of a patch tensor, written to `out/corr.csv`.
/// `input` is either a `.btrt` tensor file or a frame directory, in which
/// case the first temporal window's patch tensor is analyzed.
pub fn analyze_corr(input: &Path, out: &Path, cfg: &RunConfig) -> Result<CorrelationReport> {
    guarded(|outputs| analyze_corr_inner(input, out, cfg, outputs))
}

fn analyze_corr_inner(
    input: &Path,
    out: &Path,
    cfg: &RunConfig,
    outputs: &mut Outputs,
) -> Result<CorrelationReport> {
    let tensor = if input.is_file() {
        io::read_tensor(input)?
    } else {
        let frames = io::load_frames(input)?;
        let pc = cfg.patch_config();
        pc.validate(frames[0].height(), frames[0].width())?;
        if frames.len() < cfg.nt {
            bail!(
                "sequence has {} frames but the temporal window needs {}",
                frames.len(),
                cfg.nt
            );
        }
        build_tensor(&frames, &pc, 0)?.tensor
    };
    let report = analyze(&tensor)?;

    outputs.ensure_dir(out)?;
    let mut csv = String::from("pair,slice,energy_ratio,direction_cos,degenerate\n");
    for p in &report.pairs {
        let label = format!("{}-{}", p.pair.first() + 1, p.pair.second() + 1);
        for (i, er) in p.energy_ratios.iter().enumerate() {
            let (cos, degen) = if i < p.direction_cos.len() {
                (
                    p.direction_cos[i].to_string(),
                    u8::from(p.direction_degenerate[i]).to_string(),
                )
            } else {
                (String::new(), String::new())
            };
            csv.push_str(&format!("{label},{i},{er},{cos},{degen}\n"));
        }
        csv.push_str(&format!(
            "{label},mean,{},{},\n",
            p.mean_energy_ratio, p.mean_direction_cos
        ));
    }
    fs::write(outputs.file(&out.join("corr.csv")), csv)?;
    Ok(report)
}

/// Generates a synthetic sequence into `out/frames` plus `out/gt.txt`.
pub fn synth(spec: &SynthSpec, out: &Path, depth: BitDepth) -> Result<PathBuf> {
    guarded(|outputs| synth_inner(spec, out, depth, outputs))
}

fn synth_inner(
    spec: &SynthSpec,
    out: &Path,
    depth: BitDepth,
    outputs: &mut Outputs,
) -> Result<PathBuf> {
    let (frames, gt) = synth_sequence(spec)?;
    let frames_dir = out.join("frames");
    outputs.ensure_dir(&frames_dir)?;
    for (i, f) in frames.iter().enumerate() {
        io::write_pgm(&outputs.file(&frames_dir.join(format!("{i:04}.pgm"))), f, depth)?;
    }
    let text = format!("# frame row col [box_h box_w]\n{}", gt.to_text());
    fs::write(outputs.file(&out.join("gt.txt")), text)?;
    Ok(frames_dir)
}

/// synth → detect → eval under one failure guard; returns the final curve.
pub fn pipeline(spec: &SynthSpec, out: &Path, cfg: &RunConfig) -> Result<RocCurve> {
    guarded(|outputs| {
        let frames_dir = synth_inner(spec, out, BitDepth::Sixteen, outputs)?;
        let detect = detect_inner(&frames_dir, out, cfg, outputs)?;
        eval_inner(&detect.target_dir, &out.join("gt.txt"), out, cfg, outputs)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{BackgroundKind, TargetSpec};
    use istd_core::solver::Ranks;

    /// Small geometry the solver can chew through in well under a second.
    fn tiny_cfg() -> RunConfig {
        RunConfig {
            nw: 4,
            nt: 2,
            ranks: Ranks { spatial: 2, interaction: 2, temporal: 2 },
            max_iter: 2,
            thresholds: 20,
            hit_radius: 1,
            ..RunConfig::default()
        }
    }

    fn tiny_spec() -> SynthSpec {
        SynthSpec {
            height: 8,
            width: 8,
            n_frames: 5,
            background: BackgroundKind::Constant(0.2),
            noise_sigma: 0.01,
            targets: vec![TargetSpec {
                row: 4.0,
                col: 4.0,
                vel_row: 0.0,
                vel_col: 0.0,
                amplitude: 0.6,
                radius: 1.0,
            }],
            seed: 7,
        }
    }

    #[test]
    fn detect_covers_every_frame_and_right_aligns_the_last_window() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let frames_dir = synth(&tiny_spec(), dir.path(), BitDepth::Sixteen).unwrap();
        // 5 frames, Nt = 2 → windows at 0, 2, 3 (last right-aligned)
        let outcome = detect(&frames_dir, &out, &tiny_cfg()).unwrap();
        assert_eq!(outcome.n_frames, 5);
        let starts: Vec<usize> = outcome.timings.iter().map(|t| t.start_frame).collect();
        assert_eq!(starts, vec![0, 2, 3]);
        assert!(outcome.timings.iter().all(|t| t.iterations >= 1));
        for f in 0..5 {
            assert!(out.join("background").join(format!("{f:04}.pgm")).is_file());
            assert!(out.join("target").join(format!("{f:04}.pgm")).is_file());
        }
        let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
        assert_eq!(timing.lines().count(), 4); // header + 3 windows
        assert!(timing.starts_with("window,start_frame,iterations,seconds"));
    }

    #[test]
    fn pipeline_emits_metrics_and_is_deterministic() {
        let run = |root: &Path| -> (RocCurve, String) {
            let roc = pipeline(&tiny_spec(), root, &tiny_cfg()).unwrap();
            let csv = fs::read_to_string(root.join("metrics.csv")).unwrap();
            (roc, csv)
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let (roc1, csv1) = run(d1.path());
        let (_, csv2) = run(d2.path());
        assert_eq!(csv1, csv2, "same seed must give identical metrics");
        assert!(csv1.ends_with('\n'));
        let last = csv1.lines().last().unwrap();
        assert!(last.starts_with("auc,"));
        assert_eq!(last.split(',').count(), 7);
        assert_eq!(roc1.thresholds.len(), 20);
        // the planted blob is glaring at this scale; the sweep must see it
        assert!(roc1.auc_df > 0.8, "auc_df {}", roc1.auc_df);
    }

    #[test]
    fn eval_failure_removes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let frames_dir = synth(&tiny_spec(), dir.path(), BitDepth::Sixteen).unwrap();
        let out = dir.path().join("fresh_out");
        let empty_gt = dir.path().join("empty.txt");
        fs::write(&empty_gt, "# no targets\n").unwrap();
        let err = eval(&frames_dir, &empty_gt, &out, &tiny_cfg()).unwrap_err();
        assert!(err.to_string().contains("no targets"), "{err:#}");
        assert!(!out.exists(), "failed run must remove directories it created");
    }

    #[test]
    fn detect_rejects_windows_longer_than_the_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let frames_dir = synth(&tiny_spec(), dir.path(), BitDepth::Sixteen).unwrap();
        let mut cfg = tiny_cfg();
        cfg.nt = 9; // sequence has 5 frames
        let out = dir.path().join("out");
        assert!(detect(&frames_dir, &out, &cfg).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn analyze_corr_accepts_tensor_files_and_frame_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let frames_dir = synth(&tiny_spec(), dir.path(), BitDepth::Sixteen).unwrap();
        let cfg = tiny_cfg();
        let out_a = dir.path().join("a");
        let report = analyze_corr(&frames_dir, &out_a, &cfg).unwrap();
        assert_eq!(report.pairs.len(), 6);
        let csv = fs::read_to_string(out_a.join("corr.csv")).unwrap();
        assert!(csv.starts_with("pair,slice,energy_ratio,direction_cos,degenerate"));
        assert!(csv.contains("1-2,mean,"));

        // the same tensor saved to disk gives the same report
        let frames = io::load_frames(&frames_dir).unwrap();
        let pt = build_tensor(&frames, &cfg.patch_config(), 0).unwrap();
        let tensor_path = dir.path().join("t.btrt");
        io::write_tensor(&tensor_path, &pt.tensor).unwrap();
        let out_b = dir.path().join("b");
        analyze_corr(&tensor_path, &out_b, &cfg).unwrap();
        assert_eq!(
            fs::read_to_string(out_a.join("corr.csv")).unwrap(),
            fs::read_to_string(out_b.join("corr.csv")).unwrap()
        );
    }
}
