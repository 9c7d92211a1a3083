//! Stage orchestration: classical ensembles, Lyapunov ensembles, the
//! spectrum, and the comparison analysis.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use cusplab_core::analysis::{
    self, comparison_report, density1_select, make_cutoff, AnalysisError, CappedAverage, ClassicalSummary,
    LocalizationRow, LyapunovSummary, SchnirelmanSummary, SelectionLevel, SpectralSummary,
};
use cusplab_core::dynamics::{sample_initial, time_averages, FlowOptions, LineElement, Observable, Table};
use cusplab_core::lyapunov::lyapunov_estimate;
use cusplab_core::rng::Stream;
use cusplab_core::spectral::{
    self, assemble, decay_profile, marginal_density, position_expectation, smallest_eigenpairs, tail_window,
    verify_diff_inequality, DecayPoint, EigenOptions, EigenPair, MappedGrid, SpectralError,
};
use cusplab_core::{stats, CuspDomain, GrowthClass, Rectangle};

use crate::artifacts::{fmt_f64, read_csv, read_json, write_csv, write_json, Manifest, StageStatus};
use crate::config::{serialize_config, RunConfig};
use crate::report::render_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Classical,
    Lyapunov,
    Spectrum,
    Analysis,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Classical, Stage::Lyapunov, Stage::Spectrum, Stage::Analysis];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Classical => "classical",
            Stage::Lyapunov => "lyapunov",
            Stage::Spectrum => "spectrum",
            Stage::Analysis => "analysis",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| format!("unknown stage {s:?} (expected classical, lyapunov, spectrum or analysis)"))
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("trajectory {index} stayed singular after {attempts} reseeds: {message}")]
    Singular { index: usize, attempts: usize, message: String },
    #[error("missing artifacts (run the listed stages first): {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("malformed artifact {file}: {message}")]
    Malformed { file: String, message: String },
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StageError + '_ {
    move |source| StageError::Io { path: path.to_path_buf(), source }
}

pub const CLASSICAL_CSV: &str = "classical_trajectories.csv";
pub const CLASSICAL_JSON: &str = "classical_summary.json";
pub const LYAPUNOV_CSV: &str = "lyapunov_trajectories.csv";
pub const LYAPUNOV_JSON: &str = "lyapunov_summary.json";
pub const EIGENVALUES_CSV: &str = "eigenvalues.csv";
pub const MARGINALS_CSV: &str = "marginals.csv";
pub const DIAGONAL_CSV: &str = "diagonal_elements.csv";
pub const MATRIX_CSV: &str = "matrix_elements.csv";
pub const SPECTRAL_JSON: &str = "spectral_summary.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const PLOT_CSV: &str = "plot_data.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved";

const MAX_RESEEDS: usize = 100;
const LYAPUNOV_STREAM_TAG: u64 = 0x4c79_6170_756e_6f76;

fn domain(cfg: &RunConfig) -> CuspDomain {
    CuspDomain::new(cfg.alpha).expect("alpha validated at parse time")
}

fn flow_options(cfg: &RunConfig) -> FlowOptions {
    if cfg.classical.x_deep > 0.0 {
        FlowOptions::deep(cfg.classical.x_deep, cfg.classical.deep_eps)
    } else {
        FlowOptions::exact()
    }
}

/// Output of one stage: the files it wrote, relative to the output directory.
type StageFiles = Vec<&'static str>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTrajectory {
    pub index: usize,
    pub start: [f64; 3],
    pub reseeds: usize,
    pub n_collisions: u64,
    pub n_excursions: u64,
    /// `averages[h][c]`: channel `x`, then each cap, at horizon `h`.
    pub averages: Vec<Vec<f64>>,
}

pub fn classical_trajectory(cfg: &RunConfig, index: usize) -> Result<ClassicalTrajectory, StageError> {
    let table: Table = domain(cfg).into();
    let opts = flow_options(cfg);
    let x = Observable::X;
    let mut rng = Stream::new(cfg.seed, index as u64);
    let mut last = String::new();
    for reseeds in 0..=MAX_RESEEDS {
        let z0 = sample_initial(&table, cfg.classical.x_init_cutoff, &mut rng).state;
        let mut channels = vec![(&x, None)];
        channels.extend(cfg.classical.truncation_caps.iter().map(|&m| (&x, Some(m))));
        match time_averages(&table, &z0, &cfg.classical.horizons, channels, &opts) {
            Ok((averages, st)) if st.singular.is_none() => {
                return Ok(ClassicalTrajectory {
                    index,
                    start: [z0.x, z0.y, z0.theta],
                    reseeds,
                    n_collisions: st.n_collisions,
                    n_excursions: st.n_excursions,
                    averages,
                })
            }
            Ok((_, st)) => last = format!("{:?}", st.singular),
            Err(e) => last = e.to_string(),
        }
    }
    Err(StageError::Singular { index, attempts: MAX_RESEEDS, message: last })
}

pub fn classical_summary(cfg: &RunConfig, runs: &[ClassicalTrajectory]) -> Result<ClassicalSummary, StageError> {
    let d = domain(cfg);
    let horizons = &cfg.classical.horizons;
    let median_average = (0..horizons.len())
        .map(|h| stats::median(&runs.iter().map(|r| r.averages[h][0]).collect::<Vec<_>>()))
        .collect();
    let last = horizons.len() - 1;
    let mut capped = Vec::new();
    for (c, &m) in cfg.classical.truncation_caps.iter().enumerate() {
        let vals: Vec<f64> = runs.iter().map(|r| r.averages[last][c + 1]).collect();
        let target = d
            .liouville_integral(&|x: f64| x.min(m), GrowthClass::Bounded)
            .map_err(|e| StageError::Analysis(AnalysisError::Quadrature(e.to_string())))?;
        capped.push(CappedAverage { cap: m, mean: stats::mean(&vals), std_err: stats::std_err(&vals), target });
    }
    Ok(ClassicalSummary { n_trajectories: runs.len(), horizons: horizons.clone(), median_average, capped })
}

fn run_classical(cfg: &RunConfig, dir: &Path) -> Result<StageFiles, StageError> {
    let runs: Vec<ClassicalTrajectory> = (0..cfg.classical.n_trajectories)
        .into_par_iter()
        .map(|i| classical_trajectory(cfg, i))
        .collect::<Result<_, _>>()?;
    let mut names = vec!["x".to_string()];
    names.extend(cfg.classical.truncation_caps.iter().map(|m| format!("min(x,{m})")));
    let mut rows = Vec::new();
    for r in &runs {
        for (h, &t) in cfg.classical.horizons.iter().enumerate() {
            for (c, name) in names.iter().enumerate() {
                rows.push(vec![
                    r.index.to_string(),
                    fmt_f64(t),
                    name.clone(),
                    fmt_f64(r.averages[h][c]),
                    r.reseeds.to_string(),
                ]);
            }
        }
    }
    let csv_path = dir.join(CLASSICAL_CSV);
    write_csv(&csv_path, &["trajectory", "horizon", "observable", "average", "reseeds"], &rows).map_err(io_err(&csv_path))?;
    let summary = classical_summary(cfg, &runs)?;
    let json_path = dir.join(CLASSICAL_JSON);
    write_json(&json_path, &summary).map_err(io_err(&json_path))?;
    Ok(vec![CLASSICAL_CSV, CLASSICAL_JSON])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTrajectory {
    pub index: usize,
    pub reseeds: usize,
    pub lambda_hat: f64,
    pub g_average: f64,
    pub n_collisions: u64,
    pub n_excursions: u64,
}

fn lyapunov_on(
    table: &Table,
    cfg: &RunConfig,
    index: usize,
    opts: &FlowOptions,
) -> Result<LyapunovTrajectory, StageError> {
    let mut rng = Stream::new(cfg.seed ^ LYAPUNOV_STREAM_TAG, index as u64);
    let mut last = String::new();
    for reseeds in 0..=MAX_RESEEDS {
        let z0: LineElement = sample_initial(table, cfg.classical.x_init_cutoff, &mut rng).state;
        match lyapunov_estimate(table, &z0, cfg.lyapunov.t, true, opts, &mut rng) {
            Ok(e) if e.singular.is_none() => {
                return Ok(LyapunovTrajectory {
                    index,
                    reseeds,
                    lambda_hat: e.lambda_hat,
                    g_average: e.g_time_average,
                    n_collisions: e.n_collisions,
                    n_excursions: e.n_excursions,
                })
            }
            Ok(e) => last = format!("{:?}", e.singular),
            Err(e) => last = e.to_string(),
        }
    }
    Err(StageError::Singular { index, attempts: MAX_RESEEDS, message: last })
}

pub fn lyapunov_trajectory(cfg: &RunConfig, index: usize) -> Result<LyapunovTrajectory, StageError> {
    lyapunov_on(&domain(cfg).into(), cfg, index, &flow_options(cfg))
}

/// The same estimator on the unit square, where the exponent vanishes.
pub fn rectangle_control(cfg: &RunConfig) -> Result<LyapunovTrajectory, StageError> {
    let table: Table = Rectangle::new(1.0, 1.0).expect("unit square").into();
    lyapunov_on(&table, cfg, 0, &FlowOptions::exact())
}

fn run_lyapunov(cfg: &RunConfig, dir: &Path) -> Result<StageFiles, StageError> {
    let runs: Vec<LyapunovTrajectory> = (0..cfg.lyapunov.n_trajectories)
        .into_par_iter()
        .map(|i| lyapunov_trajectory(cfg, i))
        .collect::<Result<_, _>>()?;
    let control = rectangle_control(cfg)?;
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                fmt_f64(r.lambda_hat),
                fmt_f64(r.g_average),
                r.n_collisions.to_string(),
                r.n_excursions.to_string(),
                r.reseeds.to_string(),
            ]
        })
        .collect();
    let csv_path = dir.join(LYAPUNOV_CSV);
    write_csv(&csv_path, &["trajectory", "lambda_hat", "g_average", "n_collisions", "n_excursions", "reseeds"], &rows)
        .map_err(io_err(&csv_path))?;
    let lams: Vec<f64> = runs.iter().map(|r| r.lambda_hat).collect();
    let gs: Vec<f64> = runs.iter().map(|r| r.g_average).collect();
    let summary = LyapunovSummary {
        n_trajectories: runs.len(),
        horizon: cfg.lyapunov.t,
        lambda_mean: stats::mean(&lams),
        ci_level: cfg.lyapunov.ci_level,
        ci_halfwidth: stats::ci_halfwidth(&lams, cfg.lyapunov.ci_level),
        g_average: stats::mean(&gs),
        rectangle_lambda: Some(control.lambda_hat),
    };
    let json_path = dir.join(LYAPUNOV_JSON);
    write_json(&json_path, &summary).map_err(io_err(&json_path))?;
    Ok(vec![LYAPUNOV_CSV, LYAPUNOV_JSON])
}

/// Eigenpairs of the configured truncated cusp.
pub fn solve_spectrum(cfg: &RunConfig, k: usize) -> Result<(MappedGrid, Vec<EigenPair>), SpectralError> {
    let s = &cfg.spectral;
    let grid = MappedGrid::cusp(domain(cfg), s.l, s.nx, s.nu, s.stretch_factor)?;
    let op = assemble(&grid)?;
    let pairs = smallest_eigenpairs(&op, k, &EigenOptions { seed: cfg.seed, ..EigenOptions::default() })?;
    Ok((grid, pairs))
}

/// Localization diagnostics of one eigenpair.
pub fn localization_row(pair: &EigenPair, grid: &MappedGrid) -> (LocalizationRow, Vec<DecayPoint>) {
    let xi = marginal_density(pair, grid);
    let report = verify_diff_inequality(&xi, pair.ell, 0.05);
    let profile = decay_profile(&xi).unwrap_or_default();
    let tail = tail_window(&profile);
    let gammas: Vec<f64> = tail.iter().map(|p| p.gamma_hat).collect();
    let row = LocalizationRow {
        index: pair.index,
        ell: pair.ell,
        position: position_expectation(&xi),
        tail_window: (!tail.is_empty()).then(|| (tail[0].x, tail[tail.len() - 1].x)),
        gamma_range: (!gammas.is_empty()).then(|| (gammas[0], gammas[gammas.len() - 1])),
        gamma_increasing: analysis::gamma_increasing(&gammas),
        inequality_checked: report.checked,
        inequality_violations: report.violations.len(),
        position_extended: None,
    };
    (row, profile)
}

fn run_spectrum(cfg: &RunConfig, dir: &Path) -> Result<StageFiles, StageError> {
    let s = &cfg.spectral;
    let (grid, pairs) = solve_spectrum(cfg, s.k)?;
    let eig_rows: Vec<Vec<String>> =
        pairs.iter().map(|p| vec![p.index.to_string(), fmt_f64(p.ell), fmt_f64(p.residual_norm)]).collect();
    let path = dir.join(EIGENVALUES_CSV);
    write_csv(&path, &["j", "ell", "residual"], &eig_rows).map_err(io_err(&path))?;

    let n_loc = s.localization_count.min(pairs.len());
    let mut rows = Vec::new();
    let mut marg_rows = Vec::new();
    for p in &pairs[..n_loc] {
        let (row, profile) = localization_row(p, &grid);
        let xi = marginal_density(p, &grid);
        for (&x, &v) in xi.x.iter().zip(&xi.xi) {
            let g = profile.iter().find(|d| d.x == x).map_or(String::new(), |d| fmt_f64(d.gamma_hat));
            marg_rows.push(vec![p.index.to_string(), fmt_f64(x), fmt_f64(v), g]);
        }
        rows.push(row);
    }
    let path = dir.join(MARGINALS_CSV);
    write_csv(&path, &["j", "x", "xi", "gamma_hat"], &marg_rows).map_err(io_err(&path))?;

    let extended_length = (s.stability_l > 0.0).then_some(s.stability_l);
    if let Some(l2) = extended_length {
        let g2 = grid.extend_to(l2)?;
        let op2 = assemble(&g2)?;
        let p2 = smallest_eigenpairs(&op2, n_loc, &EigenOptions { seed: cfg.seed, ..EigenOptions::default() })?;
        for (row, p) in rows.iter_mut().zip(&p2) {
            row.position_extended = Some(position_expectation(&marginal_density(p, &g2)));
        }
    }

    // diagonal elements of X and of each cut-off, for the analysis stage
    let mut levels: Vec<f64> = cfg.analysis.m_list.clone();
    if !levels.contains(&cfg.analysis.cesaro_m) {
        levels.push(cfg.analysis.cesaro_m);
    }
    let mut diag_rows = Vec::new();
    let xs = analysis::diagonal_elements(&pairs, &grid, &|x| x);
    for (p, v) in pairs.iter().zip(&xs) {
        diag_rows.push(vec![p.index.to_string(), "inf".to_string(), fmt_f64(*v)]);
    }
    for &m in &levels {
        let c = make_cutoff(m)?;
        let vals = analysis::diagonal_elements(&pairs, &grid, &|x| c.eval(x));
        for (p, v) in pairs.iter().zip(&vals) {
            diag_rows.push(vec![p.index.to_string(), fmt_f64(m), fmt_f64(*v)]);
        }
    }
    let path = dir.join(DIAGONAL_CSV);
    write_csv(&path, &["j", "m", "value"], &diag_rows).map_err(io_err(&path))?;

    // matrix elements of X between states of equal energy
    let mx = spectral::weighted_mass(&grid, &|x| x);
    let tol = cfg.analysis.degeneracy_tol;
    let mut mat_rows = Vec::new();
    for (a, pa) in pairs.iter().enumerate() {
        for pb in &pairs[a..] {
            if (pb.ell - pa.ell).abs() > tol * pa.ell.max(pb.ell) {
                break;
            }
            mat_rows.push(vec![
                pa.index.to_string(),
                pb.index.to_string(),
                fmt_f64(pa.ell),
                fmt_f64(pb.ell),
                fmt_f64(spectral::pair_expectation(pa, pb, &mx)),
            ]);
        }
    }
    let path = dir.join(MATRIX_CSV);
    write_csv(&path, &["j", "k", "ell_j", "ell_k", "x_jk"], &mat_rows).map_err(io_err(&path))?;

    let summary = SpectralSummary {
        length: s.l,
        extended_length,
        n_pairs: pairs.len(),
        max_residual: pairs.iter().map(|p| p.residual_norm).fold(0.0, f64::max),
        rows,
    };
    let path = dir.join(SPECTRAL_JSON);
    write_json(&path, &summary).map_err(io_err(&path))?;
    Ok(vec![EIGENVALUES_CSV, MARGINALS_CSV, DIAGONAL_CSV, MATRIX_CSV, SPECTRAL_JSON])
}

/// `values[level]` from the diagonal-element table; `m = inf` is `X` itself.
fn load_diagonal(dir: &Path) -> Result<Vec<(f64, Vec<f64>)>, StageError> {
    let path = dir.join(DIAGONAL_CSV);
    let (_, rows) = read_csv(&path).map_err(io_err(&path))?;
    let malformed = |message: String| StageError::Malformed { file: DIAGONAL_CSV.into(), message };
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in rows {
        let [j, m, v] = r.as_slice() else { return Err(malformed("expected 3 columns".into())) };
        let j: usize = j.parse().map_err(|_| malformed(format!("bad index {j:?}")))?;
        let m: f64 = m.parse().map_err(|_| malformed(format!("bad level {m:?}")))?;
        let v: f64 = v.parse().map_err(|_| malformed(format!("bad value {v:?}")))?;
        let slot = match out.iter().position(|(l, _)| *l == m) {
            Some(i) => i,
            None => {
                out.push((m, Vec::new()));
                out.len() - 1
            }
        };
        if out[slot].1.len() + 1 != j {
            return Err(malformed(format!("indices out of order at j = {j}")));
        }
        out[slot].1.push(v);
    }
    Ok(out)
}

pub fn schnirelman_summary(cfg: &RunConfig, diagonal: &[(f64, Vec<f64>)]) -> Result<SchnirelmanSummary, StageError> {
    let d = domain(cfg);
    let find = |m: f64| -> Result<&Vec<f64>, StageError> {
        diagonal.iter().find(|(l, _)| *l == m).map(|(_, v)| v).ok_or_else(|| StageError::Malformed {
            file: DIAGONAL_CSV.into(),
            message: format!("no values for level {m}"),
        })
    };
    let cut = make_cutoff(cfg.analysis.cesaro_m)?;
    let target = cut.liouville_target(&d)?;
    let cesaro = analysis::cesaro_means(find(cfg.analysis.cesaro_m)?);
    let mut levels = Vec::new();
    for &m in &cfg.analysis.m_list {
        let c = make_cutoff(m)?;
        levels.push(SelectionLevel { m, target: c.liouville_target(&d)?, values: find(m)?.clone() });
    }
    let selection = density1_select(&levels, cfg.analysis.slack);
    let xs = find(f64::INFINITY)?;
    let selected_positions = selection.selected.iter().map(|&j| xs[j - 1]).collect();
    Ok(SchnirelmanSummary { m: cfg.analysis.cesaro_m, target, cesaro, selection, selected_positions })
}

fn run_analysis(cfg: &RunConfig, dir: &Path) -> Result<StageFiles, StageError> {
    let needed = [
        (CLASSICAL_JSON, Stage::Classical),
        (LYAPUNOV_JSON, Stage::Lyapunov),
        (SPECTRAL_JSON, Stage::Spectrum),
        (DIAGONAL_CSV, Stage::Spectrum),
    ];
    let missing: Vec<String> =
        needed.iter().filter(|(f, _)| !dir.join(f).is_file()).map(|(f, s)| format!("{f} (stage {s})")).collect();
    if !missing.is_empty() {
        return Err(StageError::Missing(missing));
    }
    let load = |name: &str| dir.join(name);
    let classical: ClassicalSummary = read_json(&load(CLASSICAL_JSON)).map_err(io_err(&load(CLASSICAL_JSON)))?;
    let lyapunov: LyapunovSummary = read_json(&load(LYAPUNOV_JSON)).map_err(io_err(&load(LYAPUNOV_JSON)))?;
    let spectral: SpectralSummary = read_json(&load(SPECTRAL_JSON)).map_err(io_err(&load(SPECTRAL_JSON)))?;
    let diagonal = load_diagonal(dir)?;
    let schnirelman = schnirelman_summary(cfg, &diagonal)?;
    let report =
        comparison_report(cfg.alpha, cfg.seed, Some(classical), Some(lyapunov), Some(spectral), Some(schnirelman))?;

    let path = dir.join(REPORT_JSON);
    write_json(&path, &report).map_err(io_err(&path))?;
    let path = dir.join(REPORT_TXT);
    fs::write(&path, render_text(&report)).map_err(io_err(&path))?;

    let mut plot = Vec::new();
    let mut push = |series: String, x: f64, y: f64| plot.push(vec![series, fmt_f64(x), fmt_f64(y)]);
    for (t, v) in report.classical.horizons.iter().zip(&report.classical.median_average) {
        push("classical_median_x".into(), *t, *v);
    }
    for &(k, v) in &report.schnirelman.cesaro {
        push("cesaro_mean".into(), k as f64, v);
        push("cesaro_target".into(), k as f64, report.schnirelman.target);
    }
    for (n, &x) in report.schnirelman.selected_positions.iter().enumerate() {
        push("selected_position".into(), (n + 1) as f64, x);
    }
    for r in &report.spectral.rows {
        push("position_expectation".into(), r.index as f64, r.position);
        push("eigenvalue".into(), r.index as f64, r.ell);
    }
    let path = dir.join(PLOT_CSV);
    write_csv(&path, &["series", "x", "y"], &plot).map_err(io_err(&path))?;
    Ok(vec![REPORT_JSON, REPORT_TXT, PLOT_CSV])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub files: Vec<String>,
}

/// Runs `stages` in dependency order. Every file written is hashed into the
/// MANIFEST, also when a stage fails.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage]) -> Result<PipelineOutcome, PipelineError> {
    let dir = cfg.output_dir.clone();
    let fail = |stage: Stage| move |source: StageError| PipelineError { stage, source };
    let first = stages.iter().min().copied().unwrap_or(Stage::Classical);
    fs::create_dir_all(&dir).map_err(io_err(&dir)).map_err(fail(first))?;
    let mut manifest = Manifest::load(&dir);
    let mut written: Vec<String> = Vec::new();
    let resolved = dir.join(RESOLVED_CONFIG);
    fs::write(&resolved, serialize_config(cfg)).map_err(io_err(&resolved)).map_err(fail(first))?;
    manifest.record(&dir, RESOLVED_CONFIG).map_err(io_err(&resolved)).map_err(fail(first))?;
    written.push(RESOLVED_CONFIG.into());

    let mut order: Vec<Stage> = stages.to_vec();
    order.sort();
    order.dedup();
    let mut result = Ok(());
    for &stage in &order {
        let out = match stage {
            Stage::Classical => run_classical(cfg, &dir),
            Stage::Lyapunov => run_lyapunov(cfg, &dir),
            Stage::Spectrum => run_spectrum(cfg, &dir),
            Stage::Analysis => run_analysis(cfg, &dir),
        };
        match out {
            Ok(files) => {
                for f in files {
                    let _ = manifest.record(&dir, f);
                    written.push(f.into());
                }
                manifest.set_stage(stage.name(), StageStatus::Complete);
            }
            Err(e) => {
                manifest.set_stage(stage.name(), StageStatus::Failed);
                result = Err(PipelineError { stage, source: e });
                break;
            }
        }
    }
    // files a failed stage left behind are still listed
    for name in [
        CLASSICAL_CSV,
        CLASSICAL_JSON,
        LYAPUNOV_CSV,
        LYAPUNOV_JSON,
        EIGENVALUES_CSV,
        MARGINALS_CSV,
        DIAGONAL_CSV,
        MATRIX_CSV,
        SPECTRAL_JSON,
        REPORT_JSON,
        REPORT_TXT,
        PLOT_CSV,
    ] {
        if dir.join(name).is_file() && !manifest.files.contains_key(name) {
            let _ = manifest.record(&dir, name);
        }
    }
    let path = manifest.save(&dir);
    let stage_for_io = order.last().copied().unwrap_or(first);
    result?;
    path.map_err(io_err(&dir.join(Manifest::NAME))).map_err(fail(stage_for_io))?;
    Ok(PipelineOutcome { output_dir: dir, stages: order, files: written })
}
