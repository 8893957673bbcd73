//! `istd` — infrared small-target detection over PGM sequences.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use istd_cli::config::{self, ConfigOverlay, RunConfig};
use istd_cli::io::BitDepth;
use istd_cli::run;
use istd_cli::synth::{BackgroundKind, SynthSpec, TargetSpec};

#[derive(Parser)]
#[command(
    name = "istd",
    version,
    about = "Separates moving small targets from low-rank backgrounds in infrared sequences"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    knobs: Knobs,
}

/// Shared tuning flags; every flag can also appear as a `key = value` line
/// in the file given by `--config`, with the command line taking precedence.
#[derive(Args)]
struct Knobs {
    /// Config file of `key = value` lines mirroring these flags
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Patch side length
    #[arg(long, global = true)]
    nw: Option<usize>,
    /// Patch-grid step (defaults to the patch side)
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Frames per temporal window
    #[arg(long, global = true)]
    nt: Option<usize>,
    /// Ring ranks
    #[arg(long, global = true, value_name = "R1,R,R2")]
    ranks: Option<String>,
    /// Background-composition coupling weight
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Sparsity weight on the target tensor
    #[arg(long, global = true)]
    lambda1: Option<f64>,
    /// Sensitivity level deriving lambda1 = H / sqrt(nw^2 * nt)
    #[arg(long = "H", global = true, conflicts_with = "lambda1")]
    h: Option<f64>,
    /// Spatial-factor ring coupling weight
    #[arg(long, global = true)]
    beta1: Option<f64>,
    /// Temporal-factor ring coupling weight
    #[arg(long, global = true)]
    beta2: Option<f64>,
    /// Data-fidelity weight
    #[arg(long, global = true)]
    beta3: Option<f64>,
    /// Proximal anchor weight
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Sweep limit per window
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Relative target-change stopping tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of evenly spaced detection thresholds
    #[arg(long, global = true)]
    thresholds: Option<usize>,
    /// Chebyshev hit radius for box-less ground truth
    #[arg(long, global = true)]
    hit_radius: Option<usize>,
    /// Patch-overlap merge rule: mean | median
    #[arg(long, global = true)]
    overlap: Option<String>,
    /// Worker threads for independent windows (0 = one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for synthetic generation
    #[arg(long, global = true)]
    seed: Option<u64>,
}

impl Knobs {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                Some(ConfigOverlay::parse_file(&text)?)
            }
            None => None,
        };
        let cli = ConfigOverlay {
            nw: self.nw,
            stride: self.stride,
            nt: self.nt,
            ranks: self
                .ranks
                .as_deref()
                .map(config::parse_ranks)
                .transpose()
                .map_err(anyhow::Error::msg)?,
            alpha: self.alpha,
            lambda1: self.lambda1,
            h: self.h,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            rho: self.rho,
            max_iter: self.max_iter,
            tol: self.tol,
            thresholds: self.thresholds,
            hit_radius: self.hit_radius,
            overlap: self
                .overlap
                .as_deref()
                .map(config::parse_overlap)
                .transpose()
                .map_err(anyhow::Error::msg)?,
            jobs: self.jobs,
            seed: self.seed,
        };
        Ok(config::resolve(file, cli)?)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Decompose a PGM sequence into background and target-score images
    Detect {
        /// Directory of input frames, lexicographic name order = time
        input: PathBuf,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score saved target maps against a ground-truth file
    Eval {
        /// Directory of target-score PGMs
        scores: PathBuf,
        /// Ground-truth file: `frame row col [box_h box_w]` per line
        gt: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Report per-dimension-pair structural correlation of a patch tensor
    AnalyzeCorr {
        /// Frame directory (first window is analyzed) or a .btrt tensor file
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a synthetic sequence with exact ground truth
    Synth {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// synth → detect → eval in one run
    Pipeline {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        scene: SceneArgs,
    },
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// Number of frames
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Background: smooth | btr | constant:<level>
    #[arg(long, default_value = "smooth")]
    background: String,
    /// Zero-mean Gaussian noise level
    #[arg(long, default_value_t = 0.02)]
    noise_sigma: f64,
    /// Target as `row,col,vel_row,vel_col,amplitude,radius`; repeatable.
    /// Without any, one slow diagonal mover of amplitude 0.4 is planted.
    #[arg(long = "target", value_name = "SPEC")]
    targets: Vec<String>,
    /// Bit depth of the written frames
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u8).range(8..=16))]
    depth: u8,
}

impl SceneArgs {
    fn depth(&self) -> Result<BitDepth> {
        match self.depth {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => anyhow::bail!("depth must be 8 or 16, got {other}"),
        }
    }

    fn spec(&self, cfg: &RunConfig) -> Result<SynthSpec> {
        let background = if self.background == "smooth" {
            BackgroundKind::Smooth
        } else if self.background == "btr" {
            BackgroundKind::LowRankBtr(cfg.ranks)
        } else if let Some(level) = self.background.strip_prefix("constant:") {
            BackgroundKind::Constant(
                level
                    .parse()
                    .with_context(|| format!("bad constant background level {level:?}"))?,
            )
        } else {
            anyhow::bail!(
                "background must be smooth, btr, or constant:<level>, got {:?}",
                self.background
            );
        };
        let targets = if self.targets.is_empty() {
            vec![TargetSpec {
                row: self.height as f64 * 0.25,
                col: self.width as f64 * 0.2,
                vel_row: 0.3,
                vel_col: 0.4,
                amplitude: 0.4,
                radius: 2.0,
            }]
        } else {
            self.targets
                .iter()
                .map(|s| parse_target(s))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(SynthSpec {
            height: self.height,
            width: self.width,
            n_frames: self.frames,
            background,
            noise_sigma: self.noise_sigma,
            targets,
            seed: cfg.seed,
        })
    }
}

fn parse_target(s: &str) -> Result<TargetSpec> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        anyhow::bail!(
            "target needs row,col,vel_row,vel_col,amplitude,radius, got {s:?}"
        );
    }
    let num = |i: usize| -> Result<f64> {
        parts[i]
            .parse()
            .with_context(|| format!("bad number {:?} in target {s:?}", parts[i]))
    };
    Ok(TargetSpec {
        row: num(0)?,
        col: num(1)?,
        vel_row: num(2)?,
        vel_col: num(3)?,
        amplitude: num(4)?,
        radius: num(5)?,
    })
}

fn print_aucs(roc: &istd_core::evaluation::RocCurve) {
    println!(
        "auc_df={} auc_dtau={} auc_ftau={} snpr={} tdbs={} odp={}",
        roc.auc_df, roc.auc_dtau, roc.auc_ftau, roc.family.snpr, roc.family.tdbs, roc.family.odp
    );
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = cli.knobs.resolve()?;
    match cli.cmd {
        Cmd::Detect { input, out } => {
            let outcome = run::detect(&input, &out, &cfg)?;
            let total: f64 = outcome.timings.iter().map(|t| t.seconds).sum();
            println!(
                "decomposed {} frames in {} windows, solve time {total:.3}s",
                outcome.n_frames,
                outcome.timings.len()
            );
        }
        Cmd::Eval { scores, gt, out } => {
            let roc = run::eval(&scores, &gt, &out, &cfg)?;
            print_aucs(&roc);
        }
        Cmd::AnalyzeCorr { input, out } => {
            let report = run::analyze_corr(&input, &out, &cfg)?;
            for p in &report.pairs {
                println!(
                    "pair {}-{}: mean_energy_ratio={:.6} mean_direction_cos={:.6}",
                    p.pair.first() + 1,
                    p.pair.second() + 1,
                    p.mean_energy_ratio,
                    p.mean_direction_cos
                );
            }
        }
        Cmd::Synth { out, scene } => {
            let spec = scene.spec(&cfg)?;
            let frames_dir = run::synth(&spec, &out, scene.depth()?)?;
            println!(
                "wrote {} frames to {} and ground truth to {}",
                spec.n_frames,
                frames_dir.display(),
                out.join("gt.txt").display()
            );
        }
        Cmd::Pipeline { out, scene } => {
            let spec = scene.spec(&cfg)?;
            let roc = run::pipeline(&spec, &out, &cfg)?;
            print_aucs(&roc);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
