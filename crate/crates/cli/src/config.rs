//! Run configuration: solver weights, patch geometry, evaluation knobs.
//!
//! Values resolve in three layers — built-in defaults, then an optional flat
//! `key = value` config file, then explicit command-line flags. Every file
//! key spells exactly like its flag. The sparsity weight can be given
//! directly (`lambda1`) or derived from a sensitivity level (`H`); setting
//! both in the same layer is an error, and a command-line choice replaces
//! whichever form the file used.

use thiserror::Error;

use istd_core::patch::{Overlap, PatchConfig};
use istd_core::solver::{lambda_from_h, Ranks, SolverError, SolverParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Patch side length.
    pub nw: usize,
    /// Patch-grid step; `None` follows `nw` (non-overlapping grid).
    pub stride: Option<usize>,
    /// Frames per temporal window.
    pub nt: usize,
    pub ranks: Ranks,
    pub alpha: f64,
    pub lambda1: f64,
    /// Sensitivity level; when set, `lambda1 = H / sqrt(nw² · nt)`.
    pub h: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Evenly spaced detection thresholds in [0, 1].
    pub thresholds: usize,
    /// Chebyshev radius for box-less ground-truth targets.
    pub hit_radius: usize,
    pub overlap: Overlap,
    /// Worker threads for independent windows; 0 means one per core.
    pub jobs: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nw: 60,
            stride: None,
            nt: 15,
            ranks: Ranks::default(),
            alpha: 1.0,
            lambda1: 0.1,
            h: None,
            beta1: 1.0,
            beta2: 1.0,
            beta3: 2.0,
            rho: 0.01,
            max_iter: 20,
            tol: 1e-3,
            thresholds: 100,
            hit_radius: 3,
            overlap: Overlap::Mean,
            jobs: 1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.nw)
    }

    /// Effective sparsity weight, deriving from `H` when present.
    pub fn lambda(&self) -> Result<f64, ConfigError> {
        match self.h {
            Some(h) => Ok(lambda_from_h(h, self.nw, self.nt)?),
            None => Ok(self.lambda1),
        }
    }

    pub fn patch_config(&self) -> PatchConfig {
        PatchConfig {
            patch_size: self.nw,
            stride: self.stride(),
            temporal_size: self.nt,
        }
    }

    pub fn solver_params(&self) -> Result<SolverParams, ConfigError> {
        Ok(SolverParams {
            alpha: self.alpha,
            lambda1: self.lambda()?,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            rho: self.rho,
            max_iter: self.max_iter,
            tol: self.tol,
            ranks: self.ranks,
        })
    }
}

/// One layer of explicitly set values (a parsed file or the command line).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverlay {
    pub nw: Option<usize>,
    pub stride: Option<usize>,
    pub nt: Option<usize>,
    pub ranks: Option<Ranks>,
    pub alpha: Option<f64>,
    pub lambda1: Option<f64>,
    pub h: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub rho: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub thresholds: Option<usize>,
    pub hit_radius: Option<usize>,
    pub overlap: Option<Overlap>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

impl ConfigOverlay {
    /// Parses the flat `key = value` file form. `#` starts a comment, blank
    /// lines are skipped, keys spell like the flags, duplicates are errors.
    pub fn parse_file(text: &str) -> Result<Self, ConfigError> {
        let mut overlay = Self::default();
        let mut seen = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                msg: format!("expected `key = value`, got {content:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.contains(&key.to_string()) {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("duplicate key {key:?}"),
                });
            }
            seen.push(key.to_string());
            overlay.set(key, value).map_err(|msg| ConfigError::Parse { line, msg })?;
        }
        Ok(overlay)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse()
                .map_err(|_| format!("bad value {v:?} for key {key:?}"))
        }
        match key {
            "nw" => self.nw = Some(num(key, value)?),
            "stride" => self.stride = Some(num(key, value)?),
            "nt" => self.nt = Some(num(key, value)?),
            "ranks" => self.ranks = Some(parse_ranks(value)?),
            "alpha" => self.alpha = Some(num(key, value)?),
            "lambda1" => self.lambda1 = Some(num(key, value)?),
            "H" => self.h = Some(num(key, value)?),
            "beta1" => self.beta1 = Some(num(key, value)?),
            "beta2" => self.beta2 = Some(num(key, value)?),
            "beta3" => self.beta3 = Some(num(key, value)?),
            "rho" => self.rho = Some(num(key, value)?),
            "max-iter" => self.max_iter = Some(num(key, value)?),
            "tol" => self.tol = Some(num(key, value)?),
            "thresholds" => self.thresholds = Some(num(key, value)?),
            "hit-radius" => self.hit_radius = Some(num(key, value)?),
            "overlap" => self.overlap = Some(parse_overlap(value)?),
            "jobs" => self.jobs = Some(num(key, value)?),
            "seed" => self.seed = Some(num(key, value)?),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(nw, nt, ranks, alpha, beta1, beta2, beta3, rho, max_iter, tol, thresholds, hit_radius, overlap, jobs, seed);
        if self.stride.is_some() {
            cfg.stride = self.stride;
        }
    }
}

/// `R1,R,R2` → ring ranks.
pub fn parse_ranks(s: &str) -> Result<Ranks, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("ranks need three comma-separated values, got {s:?}"));
    }
    let parse = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| format!("bad rank {v:?} in {s:?}"))
    };
    Ok(Ranks {
        spatial: parse(parts[0])?,
        interaction: parse(parts[1])?,
        temporal: parse(parts[2])?,
    })
}

pub fn parse_overlap(s: &str) -> Result<Overlap, String> {
    match s {
        "mean" => Ok(Overlap::Mean),
        "median" => Ok(Overlap::Median),
        other => Err(format!("overlap must be `mean` or `median`, got {other:?}")),
    }
}

/// Defaults, overlaid by the file, overlaid by the command line. The two
/// spellings of the sparsity weight are exclusive within a layer; when the
/// command line picks one, it silently retires the file's choice.
pub fn resolve(file: Option<ConfigOverlay>, cli: ConfigOverlay) -> Result<RunConfig, ConfigError> {
    let file = file.unwrap_or_default();
    if file.lambda1.is_some() && file.h.is_some() {
        return Err(ConfigError::Conflict(
            "config file sets both lambda1 and H; pick one".into(),
        ));
    }
    if cli.lambda1.is_some() && cli.h.is_some() {
        return Err(ConfigError::Conflict(
            "both --lambda1 and --H given; pick one".into(),
        ));
    }
    let mut cfg = RunConfig::default();
    file.apply(&mut cfg);
    cfg.h = file.h;
    if let Some(l) = file.lambda1 {
        cfg.lambda1 = l;
    }
    cli.apply(&mut cfg);
    if let Some(l) = cli.lambda1 {
        cfg.lambda1 = l;
        cfg.h = None;
    }
    if let Some(h) = cli.h {
        cfg.h = Some(h);
    }
    Ok(cfg)
}
