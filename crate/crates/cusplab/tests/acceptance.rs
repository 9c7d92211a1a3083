//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Run all with `cargo test -p cusplab --test acceptance`; pass criterion
//! numbers as arguments to run a subset. Failures only set the exit status
//! when `CUSPLAB_ACCEPTANCE_STRICT=1`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use cusplab::config::RunConfig;
use cusplab::pipeline::{
    classical_summary, classical_trajectory, localization_row, lyapunov_trajectory, rectangle_control,
    run_pipeline, schnirelman_summary, solve_spectrum, Stage,
};
use cusplab_core::analysis::{self, make_cutoff, schnirelman_checks};
use cusplab_core::dynamics::{next_collision, reflect, sample_initial, LineElement, Table};
use cusplab_core::lyapunov::{det, free_matrix, g_observable, mat_mul, step_matrix, Mat2};
use cusplab_core::math::angle_diff;
use cusplab_core::rng::Stream;
use cusplab_core::spectral::{
    assemble, marginal_density, position_expectation, smallest_eigenpairs, EigenOptions, MappedGrid,
};
use cusplab_core::{stats, CuspDomain, Rectangle};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Unit square, 256 x 256 interior nodes, against `π²(m² + n²)`.
fn rectangle_oracle() -> Outcome {
    let t = Instant::now();
    let grid = MappedGrid::rectangle(Rectangle::new(1.0, 1.0).unwrap(), 256, 256).unwrap();
    let op = assemble(&grid).unwrap();
    let pairs = match smallest_eigenpairs(&op, 10, &EigenOptions::default()) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("solver error: {e}")),
    };
    let elapsed = t.elapsed();
    let mut exact: Vec<f64> = (1..=10).flat_map(|m| (1..=10).map(move |n| PI * PI * (m * m + n * n) as f64)).collect();
    exact.sort_by(f64::total_cmp);
    let worst = pairs.iter().zip(&exact).map(|(p, e)| ((p.ell - e) / e).abs()).fold(0.0, f64::max);
    outcome(
        worst < 0.01 && elapsed < Duration::from_secs(120),
        format!("worst relative error {worst:.2e}, {:.1} s", secs(elapsed)),
    )
}

/// A million reflections on the alpha = 2 cusp. The simulator stores the
/// direction as an angle; each outgoing direction is compared with the mirror
/// image of the incoming one. A Cartesian velocity carried through the
/// reflection law without renormalization is reported alongside.
fn speed_conservation() -> Outcome {
    let table: Table = CuspDomain::new(2.0).unwrap().into();
    let mut z = LineElement::new(0.4, 0.3, 0.9);
    let (mut vx, mut vy) = z.velocity();
    let (mut worst_speed, mut worst_mirror) = (0.0f64, 0.0f64);
    let mut n = 0u64;
    let mut rng = Stream::new(77, 0);
    while n < 1_000_000 {
        let next = next_collision(&table, &z).and_then(|ev| reflect(&table, &ev).map(|out| (ev, out)));
        let Ok((ev, out)) = next else {
            z = sample_initial(&table, 50.0, &mut rng).state;
            (vx, vy) = z.velocity();
            continue;
        };
        let nrm = ev.point.inward_normal;
        let (ix, iy) = z.velocity();
        let k = 2.0 * (ix * nrm[0] + iy * nrm[1]);
        let (c, s) = out.velocity();
        worst_mirror = worst_mirror.max((c - (ix - k * nrm[0])).abs().max((s - (iy - k * nrm[1])).abs()));
        worst_speed = worst_speed.max(((c * c + s * s).sqrt() - 1.0).abs());

        let k = 2.0 * (vx * nrm[0] + vy * nrm[1]) / (nrm[0] * nrm[0] + nrm[1] * nrm[1]);
        vx -= k * nrm[0];
        vy -= k * nrm[1];
        z = out;
        n += 1;
    }
    let carried = ((vx * vx + vy * vy).sqrt() - 1.0).abs();
    outcome(
        worst_speed < 1e-12 && worst_mirror < 1e-12,
        format!(
            "{n} reflections: |v| drift {worst_speed:.2e}, worst mirror mismatch {worst_mirror:.2e}, \
             unrenormalized Cartesian velocity drift {carried:.2e}"
        ),
    )
}

/// `∫ min(x, m) f dx / Area` for `f = (x+1)^-2` is `ln(1 + m)`.
fn capped_target_alpha2(m: f64) -> f64 {
    (1.0 + m).ln()
}

fn classical_divergence() -> Outcome {
    let t = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.classical.n_trajectories = 100;
    cfg.classical.horizons = vec![1e3, 1e4, 1e5, 1e6];
    cfg.classical.truncation_caps = vec![2.0, 5.0];
    let runs: Result<Vec<_>, _> = (0..100).map(|i| classical_trajectory(&cfg, i)).collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("{e}")),
    };
    let summary = classical_summary(&cfg, &runs).unwrap();
    let med = &summary.median_average;
    let increasing = med.windows(2).all(|w| w[1] > w[0]);
    let mut ok = increasing;
    let mut detail = format!("medians {:?}", med.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    for cap in &summary.capped {
        let target = capped_target_alpha2(cap.cap);
        let z = (cap.mean - target).abs() / cap.std_err;
        ok &= z <= 3.0;
        detail.push_str(&format!("; cap {}: {:.5} vs {:.5} ({z:.2} s.e.)", cap.cap, cap.mean, target));
    }
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    detail.push_str(&format!("; {:.0} s", secs(elapsed)));
    outcome(ok, detail)
}

fn lyapunov_positive() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.lyapunov.n_trajectories = 100;
    cfg.lyapunov.t = 1e5;
    let runs: Result<Vec<_>, _> = (0..100).map(|i| lyapunov_trajectory(&cfg, i)).collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("{e}")),
    };
    let lams: Vec<f64> = runs.iter().map(|r| r.lambda_hat).collect();
    let gs: Vec<f64> = runs.iter().map(|r| r.g_average).collect();
    let lam = stats::mean(&lams);
    let g = stats::mean(&gs);
    let half = stats::ci_halfwidth(&lams, 0.99);
    let rel = (lam - g).abs() / lam;
    let rect = rectangle_control(&cfg).map(|r| r.lambda_hat).unwrap_or(f64::NAN);

    // g sampled directly at Liouville-distributed points, as a consistency check
    let table: Table = CuspDomain::new(2.0).unwrap().into();
    let mut rng = Stream::new(1234, 0);
    let mut samples = Vec::new();
    while samples.len() < 1000 {
        let z = sample_initial(&table, 50.0, &mut rng).state;
        if let Ok(v) = g_observable(&table, &z) {
            samples.push(v);
        }
    }
    let (gp, gp_se) = (stats::mean(&samples), stats::std_err(&samples));
    let phase_ok = (gp - lam).abs() <= 3.0 * gp_se;
    outcome(
        lam - half > 0.0 && rel < 0.02 && rect.abs() < 0.01 && phase_ok,
        format!(
            "lambda {lam:.5} +- {half:.5} (99%), time average of g {g:.5} (rel {rel:.1e}), \
             sampled phase average of g {gp:.4} +- {gp_se:.4}, unit square {rect:.2e}"
        ),
    )
}

fn flow_for(table: &Table, z: LineElement, t: f64, n: usize) -> Option<(f64, f64, f64)> {
    let mut z = z;
    let mut left = t;
    let mut count = 0;
    loop {
        let ev = next_collision(table, &z).ok()?;
        if ev.free_path_tau >= left {
            let (c, s) = z.velocity();
            return (count == n).then(|| (z.x + left * c, z.y + left * s, z.theta));
        }
        left -= ev.free_path_tau;
        z = reflect(table, &ev).ok()?;
        count += 1;
    }
}

fn frob(m: &Mat2) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn tangent_oracle() -> Outcome {
    let table: Table = CuspDomain::new(2.0).unwrap().into();
    let mut rng = Stream::new(555, 0);
    let h = 1e-7;
    let (mut worst_rel, mut worst_step_det, mut worst_fd_det) = (0.0f64, 0.0f64, 0.0f64);
    let mut tested = 0;
    while tested < 100 {
        let start = sample_initial(&table, 6.0, &mut rng).state;
        let mut z = start;
        let mut m: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
        let mut time = 0.0;
        let mut ok = true;
        for _ in 0..3 {
            let Ok(ev) = next_collision(&table, &z) else { ok = false; break };
            if ev.incidence_sin < 0.05 {
                ok = false;
                break;
            }
            let step = step_matrix(ev.free_path_tau, ev.point.curvature, ev.incidence_sin);
            worst_step_det = worst_step_det.max((det(&step).abs() - 1.0).abs());
            m = mat_mul(&step, &m);
            time += ev.free_path_tau;
            let Ok(next) = reflect(&table, &ev) else { ok = false; break };
            z = next;
        }
        if !ok {
            continue;
        }
        let Ok(last) = next_collision(&table, &z) else { continue };
        let tail = 0.5 * last.free_path_tau;
        m = mat_mul(&free_matrix(tail), &m);
        time += tail;

        let Some((xr, yr, thr)) = flow_for(&table, start, time, 3) else { continue };
        let (c, s) = start.velocity();
        let mut fd: Mat2 = [[0.0; 2]; 2];
        let mut good = true;
        for col in 0..2 {
            let mut img = [[0.0; 2]; 2];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let d = sign * h;
                let p = if col == 0 {
                    LineElement::new(start.x - d * s, start.y + d * c, start.theta)
                } else {
                    LineElement::new(start.x, start.y, start.theta + d)
                };
                let Some((x, y, th)) = flow_for(&table, p, time, 3) else { good = false; break };
                img[k] = [(x - xr) * -thr.sin() + (y - yr) * thr.cos(), angle_diff(th, thr)];
            }
            if !good {
                break;
            }
            fd[0][col] = (img[0][0] - img[1][0]) / (2.0 * h);
            fd[1][col] = (img[0][1] - img[1][1]) / (2.0 * h);
        }
        if !good {
            continue;
        }
        let diff = [[fd[0][0] - m[0][0], fd[0][1] - m[0][1]], [fd[1][0] - m[1][0], fd[1][1] - m[1][1]]];
        worst_rel = worst_rel.max(frob(&diff) / frob(&m));
        worst_fd_det = worst_fd_det.max((det(&fd).abs() - 1.0).abs());
        tested += 1;
    }
    outcome(
        worst_rel < 1e-4 && worst_step_det < 1e-8,
        format!(
            "{tested} segments: worst relative error {worst_rel:.2e}, step |det|-1 {worst_step_det:.1e}, \
             finite-difference |det|-1 {worst_fd_det:.1e}"
        ),
    )
}

fn localization() -> Outcome {
    let cfg = RunConfig::default();
    let (grid, pairs) = match solve_spectrum(&cfg, 20) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("{e}")),
    };
    let long = grid.extend_to(30.0).unwrap();
    let op = assemble(&long).unwrap();
    let pairs30 = smallest_eigenpairs(&op, 20, &EigenOptions { seed: cfg.seed, ..EigenOptions::default() }).unwrap();
    let mut bad_gamma = Vec::new();
    let (mut checked, mut violations) = (0, 0);
    let mut worst_shift: f64 = 0.0;
    for (p, q) in pairs.iter().zip(&pairs30) {
        let (row, _) = localization_row(p, &grid);
        if !row.gamma_increasing {
            bad_gamma.push(p.index);
        }
        checked += row.inequality_checked;
        violations += row.inequality_violations;
        let x30 = position_expectation(&marginal_density(q, &long));
        if !(row.position.is_finite() && x30.is_finite()) {
            worst_shift = f64::INFINITY;
        }
        worst_shift = worst_shift.max(((x30 - row.position) / row.position).abs());
    }
    outcome(
        bad_gamma.is_empty() && violations == 0 && checked > 0 && worst_shift <= 1e-4,
        format!(
            "j = 1..{}: gamma not increasing for {bad_gamma:?}; {violations} violations in {checked} nodes; \
             worst <X> change under L 20 -> 30 {worst_shift:.1e}",
            pairs.len()
        ),
    )
}

/// Composite Simpson for the cut-off target, independent of the library
/// quadrature: `∫ x s(5 - x) (x+1)^-2 dx` on `[0, 5]`.
fn cutoff_target_alpha2(m: f64) -> f64 {
    let smooth = |t: f64| {
        let t = t.clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    };
    let g = |x: f64| x * smooth(m - x) / ((x + 1.0) * (x + 1.0));
    let n = 20000;
    let h = m / n as f64;
    let mut s = g(0.0) + g(m);
    for i in 1..n {
        s += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn schnirelman() -> Outcome {
    let t = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.spectral.k = 200;
    let (grid, pairs) = match solve_spectrum(&cfg, 200) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("{e}")),
    };
    let mut diagonal = vec![(f64::INFINITY, analysis::diagonal_elements(&pairs, &grid, &|x| x))];
    for &m in &cfg.analysis.m_list {
        let c = make_cutoff(m).unwrap();
        diagonal.push((m, analysis::diagonal_elements(&pairs, &grid, &|x| c.eval(x))));
    }
    let summary = schnirelman_summary(&cfg, &diagonal).unwrap();
    let oracle = cutoff_target_alpha2(5.0);
    let target_ok = ((summary.target - oracle) / oracle).abs() < 1e-8;
    let checks = schnirelman_checks(&summary);
    let elapsed = t.elapsed();
    let mut detail: Vec<String> =
        checks.iter().map(|c| format!("{} {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail)).collect();
    detail.push(format!("target {:.6} (oracle {oracle:.6}), {:.0} s", summary.target, secs(elapsed)));
    outcome(
        target_ok && checks.iter().all(|c| c.passed) && elapsed < Duration::from_secs(1800),
        detail.join("; "),
    )
}

fn reproducibility() -> Outcome {
    let base = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = RunConfig::default();
        cfg.output_dir = base.path().join(run);
        if let Err(e) = run_pipeline(&cfg, &Stage::ALL) {
            return outcome(false, format!("run {run}: {e}"));
        }
        reports.push(std::fs::read(cfg.output_dir.join("report.json")).unwrap());
    }
    let same = reports[0] == reports[1];
    outcome(same, format!("report.json {} bytes, identical: {same}", reports[0].len()))
}

fn main() {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().unwrap();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("rectangle spectral oracle", rectangle_oracle),
        ("speed conservation", speed_conservation),
        ("classical divergence and capped averages", classical_divergence),
        ("positive Lyapunov exponent", lyapunov_positive),
        ("tangent map against finite differences", tangent_oracle),
        ("super-exponential localization", localization),
        ("Cesaro trend and density-one selection", schnirelman),
        ("reproducible report", reproducibility),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let verdict = if result.passed { "PASS" } else { "FAIL" };
        failed += !result.passed as usize;
        println!("criterion {id}: {verdict} {name} ({}) [{:.1} s]", result.detail, secs(t.elapsed()));
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var_os("CUSPLAB_ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        std::process::exit(1);
    }
}
