//! Flat `section.key = value` run configuration.
//!
//! Top-level keys (`alpha`, `seed`, `output_dir`) have no section. Lists are
//! comma separated. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// One-based line number, 0 for whole-config validation errors.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalConfig {
    pub n_trajectories: usize,
    pub horizons: Vec<f64>,
    pub truncation_caps: Vec<f64>,
    pub x_init_cutoff: f64,
    /// Entry abscissa of the adiabatic treatment of deep excursions; 0 disables it.
    pub x_deep: f64,
    pub deep_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub n_trajectories: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub ci_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Nu")]
    pub nu: usize,
    pub k: usize,
    pub stretch_factor: f64,
    /// Eigenfunctions that get the full localization diagnostics.
    pub localization_count: usize,
    /// Longer truncation for the stability check of `⟨X⟩`; 0 skips it.
    pub stability_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub m_list: Vec<f64>,
    pub slack: f64,
    /// Cut-off level of the Cesàro means.
    pub cesaro_m: f64,
    pub degeneracy_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub seed: u64,
    pub classical: ClassicalConfig,
    pub lyapunov: LyapunovConfig,
    pub spectral: SpectralConfig,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 2.0,
            seed: 42,
            classical: ClassicalConfig {
                n_trajectories: 16,
                horizons: vec![1e3, 1e4, 1e5],
                truncation_caps: vec![2.0, 5.0],
                x_init_cutoff: 50.0,
                x_deep: 10.0,
                deep_eps: 1e-2,
            },
            lyapunov: LyapunovConfig { n_trajectories: 16, t: 1e4, ci_level: 0.99 },
            spectral: SpectralConfig {
                l: 20.0,
                nx: 600,
                nu: 96,
                k: 100,
                stretch_factor: 20.0,
                localization_count: 20,
                stability_l: 30.0,
            },
            analysis: AnalysisConfig { m_list: vec![2.0, 3.0, 4.0, 5.0], slack: 0.1, cesaro_m: 5.0, degeneracy_tol: 1e-6 },
            output_dir: PathBuf::from("cusplab_out"),
        }
    }
}

const KEYS: &[&str] = &[
    "alpha",
    "seed",
    "output_dir",
    "classical.n_trajectories",
    "classical.horizons",
    "classical.truncation_caps",
    "classical.x_init_cutoff",
    "classical.x_deep",
    "classical.deep_eps",
    "lyapunov.n_trajectories",
    "lyapunov.T",
    "lyapunov.ci_level",
    "spectral.L",
    "spectral.Nx",
    "spectral.Nu",
    "spectral.k",
    "spectral.stretch_factor",
    "spectral.localization_count",
    "spectral.stability_L",
    "analysis.m_list",
    "analysis.slack",
    "analysis.cesaro_m",
    "analysis.degeneracy_tol",
];

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got {v:?}"))
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(s.trim())).collect()
}

fn set(cfg: &mut RunConfig, key: &str, v: &str) -> Result<(), String> {
    match key {
        "alpha" => cfg.alpha = parse_f64(v)?,
        "seed" => cfg.seed = v.parse().map_err(|_| format!("expected an unsigned 64-bit integer, got {v:?}"))?,
        "output_dir" => cfg.output_dir = PathBuf::from(v),
        "classical.n_trajectories" => cfg.classical.n_trajectories = parse_usize(v)?,
        "classical.horizons" => cfg.classical.horizons = parse_list(v)?,
        "classical.truncation_caps" => cfg.classical.truncation_caps = parse_list(v)?,
        "classical.x_init_cutoff" => cfg.classical.x_init_cutoff = parse_f64(v)?,
        "classical.x_deep" => cfg.classical.x_deep = parse_f64(v)?,
        "classical.deep_eps" => cfg.classical.deep_eps = parse_f64(v)?,
        "lyapunov.n_trajectories" => cfg.lyapunov.n_trajectories = parse_usize(v)?,
        "lyapunov.T" => cfg.lyapunov.t = parse_f64(v)?,
        "lyapunov.ci_level" => cfg.lyapunov.ci_level = parse_f64(v)?,
        "spectral.L" => cfg.spectral.l = parse_f64(v)?,
        "spectral.Nx" => cfg.spectral.nx = parse_usize(v)?,
        "spectral.Nu" => cfg.spectral.nu = parse_usize(v)?,
        "spectral.k" => cfg.spectral.k = parse_usize(v)?,
        "spectral.stretch_factor" => cfg.spectral.stretch_factor = parse_f64(v)?,
        "spectral.localization_count" => cfg.spectral.localization_count = parse_usize(v)?,
        "spectral.stability_L" => cfg.spectral.stability_l = parse_f64(v)?,
        "analysis.m_list" => cfg.analysis.m_list = parse_list(v)?,
        "analysis.slack" => cfg.analysis.slack = parse_f64(v)?,
        "analysis.cesaro_m" => cfg.analysis.cesaro_m = parse_f64(v)?,
        "analysis.degeneracy_tol" => cfg.analysis.degeneracy_tol = parse_f64(v)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

fn increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

impl RunConfig {
    /// Range checks; the returned message names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(("alpha", "alpha must be in (1,2]".into()));
        }
        let c = &self.classical;
        if c.horizons.is_empty() || !c.horizons.iter().all(|&h| positive(h)) || !increasing(&c.horizons) {
            return Err(("classical.horizons", "horizons must be positive and increasing".into()));
        }
        if !c.truncation_caps.iter().all(|&m| positive(m)) {
            return Err(("classical.truncation_caps", "caps must be positive".into()));
        }
        if c.n_trajectories == 0 {
            return Err(("classical.n_trajectories", "need at least one trajectory".into()));
        }
        if !positive(c.x_init_cutoff) {
            return Err(("classical.x_init_cutoff", "x_init_cutoff must be positive".into()));
        }
        if !(c.x_deep == 0.0 || (c.x_deep.is_finite() && c.x_deep >= 2.0)) {
            return Err(("classical.x_deep", "x_deep must be 0 (off) or at least 2".into()));
        }
        if !(c.deep_eps > 0.0 && c.deep_eps <= 0.1) {
            return Err(("classical.deep_eps", "deep_eps must be in (0, 0.1]".into()));
        }
        let l = &self.lyapunov;
        if l.n_trajectories < 2 {
            return Err(("lyapunov.n_trajectories", "need at least two trajectories for an interval".into()));
        }
        if !positive(l.t) {
            return Err(("lyapunov.T", "T must be positive".into()));
        }
        if !(l.ci_level > 0.0 && l.ci_level < 1.0) {
            return Err(("lyapunov.ci_level", "ci_level must be in (0,1)".into()));
        }
        let s = &self.spectral;
        if !(s.l >= 5.0 && s.l.is_finite()) {
            return Err(("spectral.L", "L must be at least 5".into()));
        }
        if s.nx < 8 || s.nu < 8 {
            return Err(("spectral.Nx", "Nx and Nu must be at least 8".into()));
        }
        if s.k < 1 || s.k + 8 >= s.nx * s.nu {
            return Err(("spectral.k", "k must be at least 1 and well below Nx*Nu".into()));
        }
        if !(s.stretch_factor >= 1.0 && s.stretch_factor.is_finite()) {
            return Err(("spectral.stretch_factor", "stretch_factor must be at least 1".into()));
        }
        if s.localization_count < 1 || s.localization_count > s.k {
            return Err(("spectral.localization_count", "localization_count must be in [1, k]".into()));
        }
        if !(s.stability_l == 0.0 || s.stability_l > s.l) {
            return Err(("spectral.stability_L", "stability_L must be 0 (off) or exceed L".into()));
        }
        let a = &self.analysis;
        if a.m_list.is_empty() || !a.m_list.iter().all(|&m| m >= 2.0 && m.is_finite()) || !increasing(&a.m_list) {
            return Err(("analysis.m_list", "m_list must be increasing with entries >= 2".into()));
        }
        if !(a.slack >= 0.0 && a.slack.is_finite()) {
            return Err(("analysis.slack", "slack must be non-negative".into()));
        }
        if !(a.cesaro_m >= 2.0 && a.cesaro_m.is_finite()) {
            return Err(("analysis.cesaro_m", "cesaro_m must be at least 2".into()));
        }
        if !(a.degeneracy_tol >= 0.0 && a.degeneracy_tol < 1.0) {
            return Err(("analysis.degeneracy_tol", "degeneracy_tol must be in [0,1)".into()));
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut key_lines: Vec<(&str, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ConfigError { line: line_no, message };
        let Some((k, v)) = line.split_once('=') else {
            return Err(err(format!("expected `key = value`, got {line:?}")));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(err(format!("unknown key {k:?}")));
        }
        if key_lines.iter().any(|(seen, _)| *seen == k) {
            return Err(err(format!("duplicate key {k:?}")));
        }
        set(&mut cfg, k, v).map_err(err)?;
        key_lines.push((KEYS[KEYS.iter().position(|x| *x == k).unwrap()], line_no));
    }
    cfg.validate().map_err(|(key, message)| ConfigError {
        line: key_lines.iter().find(|(k, _)| *k == key).map_or(0, |(_, l)| *l),
        message,
    })?;
    Ok(cfg)
}

/// Shortest decimal that reads back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")
}

/// Every key with its resolved value, in a form [`parse_config`] accepts.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let c = &cfg.classical;
    let l = &cfg.lyapunov;
    let p = &cfg.spectral;
    let a = &cfg.analysis;
    let _ = writeln!(s, "alpha = {}", num(cfg.alpha));
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "output_dir = {}", cfg.output_dir.display());
    let _ = writeln!(s, "\nclassical.n_trajectories = {}", c.n_trajectories);
    let _ = writeln!(s, "classical.horizons = {}", list(&c.horizons));
    let _ = writeln!(s, "classical.truncation_caps = {}", list(&c.truncation_caps));
    let _ = writeln!(s, "classical.x_init_cutoff = {}", num(c.x_init_cutoff));
    let _ = writeln!(s, "classical.x_deep = {}", num(c.x_deep));
    let _ = writeln!(s, "classical.deep_eps = {}", num(c.deep_eps));
    let _ = writeln!(s, "\nlyapunov.n_trajectories = {}", l.n_trajectories);
    let _ = writeln!(s, "lyapunov.T = {}", num(l.t));
    let _ = writeln!(s, "lyapunov.ci_level = {}", num(l.ci_level));
    let _ = writeln!(s, "\nspectral.L = {}", num(p.l));
    let _ = writeln!(s, "spectral.Nx = {}", p.nx);
    let _ = writeln!(s, "spectral.Nu = {}", p.nu);
    let _ = writeln!(s, "spectral.k = {}", p.k);
    let _ = writeln!(s, "spectral.stretch_factor = {}", num(p.stretch_factor));
    let _ = writeln!(s, "spectral.localization_count = {}", p.localization_count);
    let _ = writeln!(s, "spectral.stability_L = {}", num(p.stability_l));
    let _ = writeln!(s, "\nanalysis.m_list = {}", list(&a.m_list));
    let _ = writeln!(s, "analysis.slack = {}", num(a.slack));
    let _ = writeln!(s, "analysis.cesaro_m = {}", num(a.cesaro_m));
    let _ = writeln!(s, "analysis.degeneracy_tol = {}", num(a.degeneracy_tol));
    s
}
