//! Cut-off position observables, Cesàro means of their diagonal matrix
//! elements, the finite density-one selection, and the classical-versus-
//! quantum comparison report.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CuspDomain, GeometryError, GrowthClass};
use crate::spectral::{self, EigenPair, MappedGrid};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum AnalysisError {
    #[error("cut-off level must be at least 2, got {0}")]
    BadLevel(f64),
    #[error("Liouville target for level {0} is not finite")]
    Target(f64),
    #[error("quadrature of the target failed: {0}")]
    Quadrature(String),
    #[error("missing upstream artifacts: {}", .0.join(", "))]
    Missing(Vec<String>),
}

impl From<GeometryError> for AnalysisError {
    fn from(e: GeometryError) -> Self {
        AnalysisError::Quadrature(alloc::format!("{e}"))
    }
}

/// Cubic smoothstep `3t² - 2t³`, clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// `X_m(x) = x s(m - x)`: equal to `x` up to `m - 1`, zero from `m` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffObservable {
    pub m: f64,
}

impl CutoffObservable {
    pub fn eval(&self, x: f64) -> f64 {
        x * smoothstep(self.m - x)
    }

    /// Points where the profile is only C¹.
    pub fn kinks(&self) -> [f64; 2] {
        [self.m - 1.0, self.m]
    }

    /// `∫ X_m dν` on the cusp.
    pub fn liouville_target(&self, domain: &CuspDomain) -> Result<f64, AnalysisError> {
        let v = domain.liouville_integral(&|x| self.eval(x), GrowthClass::Bounded)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AnalysisError::Target(self.m))
        }
    }
}

pub fn make_cutoff(m: f64) -> Result<CutoffObservable, AnalysisError> {
    if !(m >= 2.0) || !m.is_finite() {
        return Err(AnalysisError::BadLevel(m));
    }
    Ok(CutoffObservable { m })
}

/// `⟨ψ_j, q ψ_j⟩` for every pair.
pub fn diagonal_elements(pairs: &[EigenPair], grid: &MappedGrid, q: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let mq = spectral::weighted_mass(grid, q);
    pairs.iter().map(|p| spectral::pair_expectation(p, p, &mq)).collect()
}

/// Running means `(1/k') Σ_{j <= k'} v_j`, tagged with `k'`.
pub fn cesaro_means(values: &[f64]) -> Vec<(usize, f64)> {
    let mut acc = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            (i + 1, acc / (i + 1) as f64)
        })
        .collect()
}

/// Cesàro means of `⟨ψ_j, X_m ψ_j⟩` over the first `k` pairs.
pub fn cesaro_matrix_elements(
    pairs: &[EigenPair],
    grid: &MappedGrid,
    cutoff: &CutoffObservable,
    k: usize,
) -> Vec<(usize, f64)> {
    let k = k.min(pairs.len());
    cesaro_means(&diagonal_elements(&pairs[..k], grid, &|x| cutoff.eval(x)))
}

/// Least-squares slope of `ys` against their position.
pub fn trend(ys: &[f64]) -> f64 {
    let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
    stats::slope(&xs, ys)
}

/// One level of the selection: cut-off `m`, its target and the diagonal
/// elements `⟨ψ_j, X_m ψ_j⟩` in eigen-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLevel {
    pub m: f64,
    pub target: f64,
    pub values: Vec<f64>,
}

impl SelectionLevel {
    fn tolerance(&self, slack: f64) -> f64 {
        1.0 / self.m + slack
    }

    fn accepts(&self, j: usize, slack: f64) -> bool {
        (self.values[j] - self.target).abs() <= self.tolerance(slack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infeasibility {
    /// Level at which no threshold could be placed.
    pub m: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density1Selection {
    pub levels: Vec<f64>,
    pub slack: f64,
    /// Zero-based start `p_m` of each block; block `b` is `[p_b, p_{b+1})`
    /// with the last block ending at the number of pairs.
    pub thresholds: Vec<usize>,
    /// Selected one-based eigen-indices, increasing.
    pub selected: Vec<usize>,
    /// Largest `|⟨ψ_j, X_m ψ_j⟩ - target|` among the selected in each block.
    pub block_deviation: Vec<f64>,
    /// `#σ / k`.
    pub density: f64,
    pub infeasible: Option<Infeasibility>,
}

/// Finite version of the recursive construction of a density-one sequence
/// from the per-level good sets `σ^(m) = {j : |⟨ψ_j, X_m ψ_j⟩ - ∫X_m dν| <= 1/m + slack}`.
///
/// `p_1 = 0`; for each later level the threshold `p_m` is the smallest index
/// past `p_{m-1}` such that the previous good set fills at least `1/m` of the
/// block `[p_{m-1}, p_m)` and the current good set fills at least `1 - 1/m`
/// of the remaining indices `[p_m, k)`. When no such index exists, the
/// previous block is extended to the end and the shortfall is reported.
pub fn density1_select(levels: &[SelectionLevel], slack: f64) -> Density1Selection {
    let k = levels.first().map_or(0, |l| l.values.len());
    let good: Vec<Vec<bool>> = levels.iter().map(|l| (0..k).map(|j| l.accepts(j, slack)).collect()).collect();
    // suffix[b][p] = #good[b] in [p, k)
    let suffix: Vec<Vec<usize>> = good
        .iter()
        .map(|g| {
            let mut s = alloc::vec![0usize; k + 1];
            for p in (0..k).rev() {
                s[p] = s[p + 1] + g[p] as usize;
            }
            s
        })
        .collect();
    let mut thresholds = Vec::new();
    let mut infeasible = None;
    if k > 0 && !levels.is_empty() {
        thresholds.push(0);
    }
    for b in 1..levels.len() {
        if k == 0 {
            break;
        }
        let prev = *thresholds.last().unwrap();
        let m = levels[b].m;
        let found = (prev + 1..k).find(|&p| {
            let block = (suffix[b - 1][prev] - suffix[b - 1][p]) as f64 / (p - prev) as f64;
            let tail = suffix[b][p] as f64 / (k - p) as f64;
            block >= 1.0 / m && tail >= 1.0 - 1.0 / m
        });
        match found {
            Some(p) => thresholds.push(p),
            None => {
                infeasible = Some(Infeasibility {
                    m,
                    reason: alloc::format!(
                        "no threshold in ({prev}, {k}) with block density >= 1/{m} and tail density >= 1 - 1/{m}"
                    ),
                });
                break;
            }
        }
    }
    let mut selected = Vec::new();
    let mut block_deviation = Vec::new();
    for (b, &start) in thresholds.iter().enumerate() {
        let end = thresholds.get(b + 1).copied().unwrap_or(k);
        let mut worst = 0.0f64;
        for j in start..end {
            if good[b][j] {
                selected.push(j + 1);
                worst = worst.max((levels[b].values[j] - levels[b].target).abs());
            }
        }
        block_deviation.push(worst);
    }
    let density = if k == 0 { 0.0 } else { selected.len() as f64 / k as f64 };
    Density1Selection {
        levels: levels.iter().map(|l| l.m).collect(),
        slack,
        thresholds,
        selected,
        block_deviation,
        density,
        infeasible,
    }
}

/// A named check with its measured value and verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: String::from(name), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CappedAverage {
    pub cap: f64,
    pub mean: f64,
    pub std_err: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSummary {
    pub n_trajectories: usize,
    pub horizons: Vec<f64>,
    /// Ensemble median of the time average of `x` at each horizon.
    pub median_average: Vec<f64>,
    /// Capped averages at the longest horizon.
    pub capped: Vec<CappedAverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub n_trajectories: usize,
    pub horizon: f64,
    pub lambda_mean: f64,
    pub ci_level: f64,
    pub ci_halfwidth: f64,
    pub g_average: f64,
    pub rectangle_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub index: usize,
    pub ell: f64,
    pub position: f64,
    /// Stretch of x where the tail log-slope is resolved.
    pub tail_window: Option<(f64, f64)>,
    pub gamma_range: Option<(f64, f64)>,
    pub gamma_increasing: bool,
    pub inequality_checked: usize,
    pub inequality_violations: usize,
    /// `⟨X⟩` on the longer truncation, when computed.
    pub position_extended: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub length: f64,
    pub extended_length: Option<f64>,
    pub n_pairs: usize,
    pub max_residual: f64,
    pub rows: Vec<LocalizationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchnirelmanSummary {
    pub m: f64,
    pub target: f64,
    pub cesaro: Vec<(usize, f64)>,
    pub selection: Density1Selection,
    /// `⟨X⟩(ψ_j)` along the selected indices.
    pub selected_positions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub seed: u64,
    pub classical: ClassicalSummary,
    pub lyapunov: LyapunovSummary,
    pub spectral: SpectralSummary,
    pub schnirelman: SchnirelmanSummary,
    pub sections: Vec<Section>,
}

impl ComparisonReport {
    pub fn all_passed(&self) -> bool {
        self.sections.iter().all(|s| s.checks.iter().all(|c| c.passed))
    }
}

/// Heuristic "increasing" for noisy sequences: positive least-squares slope
/// and no backward step larger than `tol` times the range.
fn increasing_within(ys: &[f64], tol: f64) -> bool {
    if ys.len() < 2 {
        return false;
    }
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    trend(ys) > 0.0 && ys.windows(2).all(|w| w[1] >= w[0] - tol * range)
}

pub fn classical_checks(c: &ClassicalSummary) -> Vec<Check> {
    let mut out = Vec::new();
    let strictly = c.median_average.len() >= 2 && c.median_average.windows(2).all(|w| w[1] > w[0]);
    out.push(Check::new(
        "median time average of x strictly increasing in T",
        strictly,
        alloc::format!("{:?}", c.median_average),
    ));
    for cap in &c.capped {
        let z = (cap.mean - cap.target).abs() / cap.std_err;
        out.push(Check::new(
            "capped average matches phase-space integral",
            z <= 3.0,
            alloc::format!("cap {}: mean {:.6} target {:.6} ({z:.2} standard errors)", cap.cap, cap.mean, cap.target),
        ));
    }
    out
}

pub fn lyapunov_checks(l: &LyapunovSummary) -> Vec<Check> {
    let mut out = Vec::new();
    let lower = l.lambda_mean - l.ci_halfwidth;
    out.push(Check::new(
        "Lyapunov exponent confidence interval above zero",
        lower > 0.0,
        alloc::format!("{:.5} +- {:.5} ({}%)", l.lambda_mean, l.ci_halfwidth, l.ci_level * 100.0),
    ));
    let rel = (l.lambda_mean - l.g_average).abs() / l.lambda_mean.abs();
    out.push(Check::new(
        "exponent agrees with time average of g",
        rel < 0.02,
        alloc::format!("time average of g {:.5}, relative difference {rel:.2e}", l.g_average),
    ));
    if let Some(r) = l.rectangle_lambda {
        out.push(Check::new("rectangle control exponent", r.abs() < 0.01, alloc::format!("{r:.2e}")));
    }
    out
}

pub fn spectral_checks(s: &SpectralSummary) -> Vec<Check> {
    let mut out = Vec::new();
    let bad_gamma: Vec<usize> = s.rows.iter().filter(|r| !r.gamma_increasing).map(|r| r.index).collect();
    out.push(Check::new(
        "tail log-slope increasing",
        bad_gamma.is_empty(),
        alloc::format!("{} rows, not increasing for {:?}", s.rows.len(), bad_gamma),
    ));
    let violations: usize = s.rows.iter().map(|r| r.inequality_violations).sum();
    let checked: usize = s.rows.iter().map(|r| r.inequality_checked).sum();
    out.push(Check::new(
        "second-order tail inequality",
        violations == 0 && checked > 0,
        alloc::format!("{violations} violations in {checked} checked nodes"),
    ));
    let mut worst: Option<f64> = None;
    for r in &s.rows {
        if let Some(e) = r.position_extended {
            let rel = (e - r.position).abs() / r.position.abs();
            worst = Some(worst.map_or(rel, |w: f64| w.max(rel)));
        }
    }
    if let Some(w) = worst {
        out.push(Check::new(
            "position expectation stable under longer truncation",
            w <= 1e-4 && s.rows.iter().all(|r| r.position.is_finite()),
            alloc::format!("worst relative change {w:.2e}"),
        ));
    }
    out
}

pub fn schnirelman_checks(s: &SchnirelmanSummary) -> Vec<Check> {
    let mut out = Vec::new();
    let n = s.cesaro.len();
    let tail = &s.cesaro[n.saturating_sub(50)..];
    let dist: Vec<f64> = tail.iter().map(|&(_, v)| (v - s.target).abs()).collect();
    let last = dist.last().copied().unwrap_or(f64::INFINITY);
    out.push(Check::new(
        "Cesaro distance to target non-increasing over the last 50 indices",
        dist.len() >= 2 && trend(&dist) <= 0.0,
        alloc::format!("slope {:.3e}", trend(&dist)),
    ));
    out.push(Check::new(
        "final Cesaro mean within 15% of target",
        last <= 0.15 * s.target.abs(),
        alloc::format!("mean {:.6} target {:.6}", tail.last().map_or(f64::NAN, |t| t.1), s.target),
    ));
    out.push(Check::new(
        "density-one selection density at least 0.8",
        s.selection.density >= 0.8,
        alloc::format!("density {:.4}", s.selection.density),
    ));
    out.push(Check::new(
        "position expectation non-decreasing in trend along the selection",
        s.selected_positions.len() >= 2 && trend(&s.selected_positions) >= 0.0,
        alloc::format!("slope {:.3e}", trend(&s.selected_positions)),
    ));
    out
}

/// Gathers the four summaries and evaluates their checks. Any missing input
/// is listed by stage name.
pub fn comparison_report(
    alpha: f64,
    seed: u64,
    classical: Option<ClassicalSummary>,
    lyapunov: Option<LyapunovSummary>,
    spectral: Option<SpectralSummary>,
    schnirelman: Option<SchnirelmanSummary>,
) -> Result<ComparisonReport, AnalysisError> {
    let mut missing = Vec::new();
    if classical.is_none() {
        missing.push(String::from("classical"));
    }
    if lyapunov.is_none() {
        missing.push(String::from("lyapunov"));
    }
    if spectral.as_ref().map_or(true, |s| s.rows.is_empty()) {
        missing.push(String::from("spectrum"));
    }
    if schnirelman.is_none() && !missing.iter().any(|m| m == "spectrum") {
        missing.push(String::from("spectrum"));
    }
    if !missing.is_empty() {
        return Err(AnalysisError::Missing(missing));
    }
    let (classical, lyapunov, spectral, schnirelman) =
        (classical.unwrap(), lyapunov.unwrap(), spectral.unwrap(), schnirelman.unwrap());
    let sections = alloc::vec![
        Section { title: String::from("(a) classical time averages"), checks: classical_checks(&classical) },
        Section { title: String::from("(b) eigenfunction localization"), checks: spectral_checks(&spectral) },
        Section { title: String::from("(c) Cesaro means and density-one selection"), checks: schnirelman_checks(&schnirelman) },
        Section { title: String::from("Lyapunov exponent"), checks: lyapunov_checks(&lyapunov) },
    ];
    Ok(ComparisonReport { alpha, seed, classical, lyapunov, spectral, schnirelman, sections })
}

/// `true` when `gamma` is increasing up to a small relative jitter.
pub fn gamma_increasing(gamma: &[f64]) -> bool {
    increasing_within(gamma, 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn cutoff_examples() {
        let x5 = make_cutoff(5.0).unwrap();
        assert_eq!(x5.eval(3.0), 3.0);
        assert_eq!(x5.eval(5.5), 0.0);
        assert!((x5.eval(4.5) - 2.25).abs() < 1e-15);
        assert!(make_cutoff(1.5).is_err());
    }

    proptest! {
        #[test]
        fn cutoff_is_monotone_in_m(m1 in 2.0f64..20.0, dm in 0.0f64..10.0, x in 0.0f64..40.0) {
            let a = make_cutoff(m1).unwrap().eval(x);
            let b = make_cutoff(m1 + dm).unwrap().eval(x);
            prop_assert!(0.0 <= a && a <= b + 1e-15 && b <= x);
        }

        #[test]
        fn synthetic_outliers_bound_density(k in 20usize..300, frac in 0.0f64..0.3, seed in any::<u64>()) {
            let mut rng = crate::rng::Stream::new(seed, 0);
            let outlier: Vec<bool> = (0..k).map(|_| rng.uniform() < frac).collect();
            let n_out = outlier.iter().filter(|&&o| o).count();
            let levels: Vec<SelectionLevel> = [2.0, 3.0, 4.0, 5.0]
                .iter()
                .map(|&m| SelectionLevel { m, target: 1.0, values: outlier.iter().map(|&o| if o { 5.0 } else { 1.0 }).collect() })
                .collect();
            let sel = density1_select(&levels, 0.1);
            let eps = n_out as f64 / k as f64;
            prop_assert!(sel.density >= 1.0 - eps - 1.0 / k as f64 || sel.infeasible.is_some());
            prop_assert!(sel.selected.iter().all(|&j| !outlier[j - 1]));
            prop_assert!(sel.selected.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn ideal_data_selects_everything() {
        let levels: Vec<SelectionLevel> =
            [2.0, 3.0, 4.0, 5.0].iter().map(|&m| SelectionLevel { m, target: 0.7, values: vec![0.7; 50] }).collect();
        let sel = density1_select(&levels, 0.1);
        assert_eq!(sel.selected, (1..=50).collect::<Vec<_>>());
        assert_eq!(sel.density, 1.0);
        assert!(sel.infeasible.is_none());
        assert_eq!(sel.thresholds, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sparse_outliers_are_excluded_exactly() {
        let k = 200;
        let outliers = [6usize, 17, 40, 41, 99, 150, 188];
        let values: Vec<f64> = (1..=k).map(|j| if outliers.contains(&j) { 3.0 } else { 1.0 + 0.01 * (j as f64).sin() }).collect();
        let levels: Vec<SelectionLevel> =
            [2.0, 3.0, 4.0, 5.0].iter().map(|&m| SelectionLevel { m, target: 1.0, values: values.clone() }).collect();
        let sel = density1_select(&levels, 0.1);
        let expected: Vec<usize> = (1..=k).filter(|j| !outliers.contains(j)).collect();
        assert_eq!(sel.selected, expected);
        assert!((sel.density - (k - outliers.len()) as f64 / k as f64).abs() < 1e-15);
    }

    #[test]
    fn infeasible_levels_are_reported() {
        // the level-3 good set is empty: no threshold can be placed
        let levels = vec![
            SelectionLevel { m: 2.0, target: 0.0, values: vec![0.0; 30] },
            SelectionLevel { m: 3.0, target: 0.0, values: vec![9.0; 30] },
        ];
        let sel = density1_select(&levels, 0.1);
        assert_eq!(sel.thresholds, vec![0]);
        assert_eq!(sel.selected.len(), 30);
        assert_eq!(sel.infeasible.as_ref().unwrap().m, 3.0);
    }

    #[test]
    fn cesaro_of_constants() {
        assert!(cesaro_means(&[0.0; 7]).iter().all(|&(_, v)| v == 0.0));
        let ones = cesaro_means(&[1.0; 9]);
        assert!(ones.iter().all(|&(_, v)| v == 1.0));
        assert_eq!(ones.last().unwrap().0, 9);
    }

    #[test]
    fn report_lists_missing_spectrum() {
        let err = comparison_report(2.0, 1, None, None, None, None).unwrap_err();
        match err {
            AnalysisError::Missing(m) => {
                assert!(m.iter().any(|s| s == "spectrum"));
                assert!(m.iter().any(|s| s == "classical"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn cutoff_target_below_full_integral() {
        let d = CuspDomain::new(2.0).unwrap();
        let t5 = make_cutoff(5.0).unwrap().liouville_target(&d).unwrap();
        let t2 = make_cutoff(2.0).unwrap().liouville_target(&d).unwrap();
        // X_m = x on [0, m-1] gives a lower bound: ln m - (m-1)/m
        assert!(t5 > 5f64.ln() - 0.8 && t5 < 6f64.ln());
        assert!(t2 < t5);
    }
}
