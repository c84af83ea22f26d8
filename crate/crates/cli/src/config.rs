//! Run settings: built-in defaults, overridden by a `key = value` file,
//! overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::Args;
use lumen::features::PcaBasis;
use lumen::nmi::HistogramConfig;
use lumen::optimizer::LevelSchedule;
use lumen::quality::DEFAULT_GATE_THRESHOLD;
use lumen::robust::{InitConfig, OutlierMethod, DEFAULT_HYPOTHESES, DEFAULT_INLIER_THRESHOLD};
use lumen::stitch::StitchOptions;

use crate::CliError;

/// Flags shared by the registration-driven subcommands. Each one may also
/// appear in the `--config` file under the same name without dashes.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Minimum SSIM for a pair to be registered.
    #[arg(long)]
    pub ssim_threshold: Option<f64>,
    /// ht, ransac, msac or mlesac.
    #[arg(long)]
    pub outlier_method: Option<String>,
    /// Hypotheses drawn by the sample-consensus filters.
    #[arg(long)]
    pub ransac_iters: Option<usize>,
    /// Transfer error (px) below which a match counts as an inlier.
    #[arg(long)]
    pub inlier_threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Histogram bins per intensity axis.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Optimizer iterations per pyramid level.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Pyramid depth, or `auto`.
    #[arg(long)]
    pub levels: Option<String>,
    /// Convergence tolerance on the normalized step.
    #[arg(long)]
    pub tol: Option<f64>,
    /// PCA-SIFT basis file; the bundled basis otherwise.
    #[arg(long, value_name = "FILE")]
    pub pca_basis: Option<PathBuf>,
    /// Skip contrast enhancement before registration.
    #[arg(long)]
    pub no_enhance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ssim_threshold: f64,
    pub outlier_method: OutlierMethod,
    pub ransac_iters: usize,
    pub inlier_threshold: f64,
    pub seed: u64,
    pub bins: usize,
    pub max_iters: usize,
    pub levels: Option<usize>,
    pub tol: f64,
    pub pca_basis: Option<PathBuf>,
    pub enhance: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = LevelSchedule::default();
        Self {
            ssim_threshold: DEFAULT_GATE_THRESHOLD,
            outlier_method: OutlierMethod::Mlesac,
            ransac_iters: DEFAULT_HYPOTHESES,
            inlier_threshold: DEFAULT_INLIER_THRESHOLD,
            seed: 0,
            bins: schedule.histogram.bins_b,
            max_iters: schedule.max_iter_per_level,
            levels: None,
            tol: schedule.convergence_tol,
            pca_basis: None,
            enhance: true,
        }
    }
}

pub const KEYS: [&str; 11] = [
    "ssim-threshold",
    "outlier-method",
    "ransac-iters",
    "inlier-threshold",
    "seed",
    "bins",
    "max-iters",
    "levels",
    "tol",
    "pca-basis",
    "enhance",
];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// underscores in keys are accepted in place of dashes.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!("config line {}: unknown key '{key}'", n + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::usage(format!("invalid value '{v}' for {key}")))
}

fn parse_levels(v: &str) -> Result<Option<usize>, CliError> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse::<usize>("levels", v).map(Some)
    }
}

fn parse_method(v: &str) -> Result<OutlierMethod, CliError> {
    v.parse().map_err(|e: lumen::Error| CliError::usage(e.to_string()))
}

impl RunConfig {
    fn apply(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "ssim-threshold" => self.ssim_threshold = parse(key, v)?,
            "outlier-method" => self.outlier_method = parse_method(v)?,
            "ransac-iters" => self.ransac_iters = parse(key, v)?,
            "inlier-threshold" => self.inlier_threshold = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "bins" => self.bins = parse(key, v)?,
            "max-iters" => self.max_iters = parse(key, v)?,
            "levels" => self.levels = parse_levels(v)?,
            "tol" => self.tol = parse(key, v)?,
            "pca-basis" => self.pca_basis = Some(PathBuf::from(v)),
            "enhance" => self.enhance = parse(key, v)?,
            _ => return Err(CliError::usage(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &o.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            for (k, v) in parse_config_text(&text)? {
                cfg.apply(&k, &v)?;
            }
        }
        if let Some(v) = o.ssim_threshold {
            cfg.ssim_threshold = v;
        }
        if let Some(v) = &o.outlier_method {
            cfg.outlier_method = parse_method(v)?;
        }
        if let Some(v) = o.ransac_iters {
            cfg.ransac_iters = v;
        }
        if let Some(v) = o.inlier_threshold {
            cfg.inlier_threshold = v;
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.bins {
            cfg.bins = v;
        }
        if let Some(v) = o.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = &o.levels {
            cfg.levels = parse_levels(v)?;
        }
        if let Some(v) = o.tol {
            cfg.tol = v;
        }
        if let Some(v) = &o.pca_basis {
            cfg.pca_basis = Some(v.clone());
        }
        if o.no_enhance {
            cfg.enhance = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.ssim_threshold) {
            return Err(CliError::usage("ssim-threshold must lie in [0, 1]"));
        }
        if !(self.inlier_threshold > 0.0) || !(self.tol > 0.0) {
            return Err(CliError::usage("inlier-threshold and tol must be positive"));
        }
        if self.ransac_iters == 0 || self.max_iters == 0 || self.levels == Some(0) {
            return Err(CliError::usage("ransac-iters, max-iters and levels must be positive"));
        }
        HistogramConfig::square(self.bins).map_err(|e| CliError::usage(e.to_string()))?;
        Ok(())
    }

    pub fn init_config(&self) -> Result<InitConfig, CliError> {
        let mut init = InitConfig {
            method: self.outlier_method,
            ..InitConfig::default()
        };
        init.robust.hypotheses = self.ransac_iters;
        init.robust.inlier_threshold = self.inlier_threshold;
        init.robust.seed = self.seed;
        if let Some(path) = &self.pca_basis {
            init.basis = Some(Arc::new(load_basis(path)?));
        }
        Ok(init)
    }

    pub fn schedule(&self) -> LevelSchedule {
        LevelSchedule {
            levels: self.levels,
            max_iter_per_level: self.max_iters,
            convergence_tol: self.tol,
            histogram: HistogramConfig::square(self.bins).expect("validated"),
            ..LevelSchedule::default()
        }
    }

    pub fn stitch_options(&self) -> Result<StitchOptions, CliError> {
        Ok(StitchOptions {
            gate_threshold: self.ssim_threshold,
            enhance: self.enhance,
            init: self.init_config()?,
            schedule: self.schedule(),
            ..StitchOptions::default()
        })
    }
}

fn load_basis(path: &Path) -> Result<PcaBasis, CliError> {
    PcaBasis::load(path).map_err(CliError::from)
}
