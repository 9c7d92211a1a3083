//! Plain-text rendering of the comparison report.

use std::fmt::Write as _;

use cusplab_core::analysis::ComparisonReport;

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render_text(r: &ComparisonReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "cusp billiard report: alpha = {}, seed = {}", r.alpha, r.seed);
    let _ = writeln!(s);

    let c = &r.classical;
    let _ = writeln!(s, "Classical time averages of x ({} trajectories)", c.n_trajectories);
    let _ = writeln!(s, "  {:>12}  {:>14}", "T", "median avg x");
    for (t, m) in c.horizons.iter().zip(&c.median_average) {
        let _ = writeln!(s, "  {t:>12.4e}  {m:>14.6}");
    }
    for cap in &c.capped {
        let _ = writeln!(
            s,
            "  min(x,{}): mean {:.6} +- {:.6} (1 s.e.), phase-space value {:.6}",
            cap.cap, cap.mean, cap.std_err, cap.target
        );
    }
    let _ = writeln!(s);

    let l = &r.lyapunov;
    let _ = writeln!(
        s,
        "Lyapunov exponent ({} trajectories, T = {:e}): {:.5} +- {:.5} at {}%; time average of g {:.5}",
        l.n_trajectories,
        l.horizon,
        l.lambda_mean,
        l.ci_halfwidth,
        l.ci_level * 100.0,
        l.g_average
    );
    if let Some(rect) = l.rectangle_lambda {
        let _ = writeln!(s, "  unit square control: {rect:.3e}");
    }
    let _ = writeln!(s);

    let sp = &r.spectral;
    let _ = writeln!(s, "Localization (L = {}, {} eigenpairs, max residual {:.1e})", sp.length, sp.n_pairs, sp.max_residual);
    let _ = writeln!(
        s,
        "  {:>4} {:>12} {:>10} {:>10} {:>17} {:>17} {:>9}",
        "j", "ell", "<X>", "<X> long", "tail window", "gamma range", "ineq"
    );
    let pair = |p: Option<(f64, f64)>| p.map_or("-".to_string(), |(a, b)| format!("{a:.3}..{b:.3}"));
    for row in &sp.rows {
        let _ = writeln!(
            s,
            "  {:>4} {:>12.4} {:>10.6} {:>10} {:>17} {:>17} {:>4}/{:<4}",
            row.index,
            row.ell,
            row.position,
            row.position_extended.map_or("-".to_string(), |v| format!("{v:.6}")),
            pair(row.tail_window),
            pair(row.gamma_range),
            row.inequality_violations,
            row.inequality_checked,
        );
    }
    let _ = writeln!(s);

    let sc = &r.schnirelman;
    let last = sc.cesaro.last().copied().unwrap_or((0, f64::NAN));
    let _ = writeln!(
        s,
        "Cesaro mean of X_{} over j <= {}: {:.6}, phase-space value {:.6}",
        sc.m, last.0, last.1, sc.target
    );
    let sel = &sc.selection;
    let _ = writeln!(
        s,
        "Density-one selection: levels {:?}, slack {}, thresholds {:?}, {} selected, density {:.4}",
        sel.levels,
        sel.slack,
        sel.thresholds,
        sel.selected.len(),
        sel.density
    );
    if let Some(inf) = &sel.infeasible {
        let _ = writeln!(s, "  partial at level {}: {}", inf.m, inf.reason);
    }
    let _ = writeln!(s);

    for sec in &r.sections {
        let _ = writeln!(s, "{}", sec.title);
        for ch in &sec.checks {
            let _ = writeln!(s, "  [{}] {}: {}", verdict(ch.passed), ch.name, ch.detail);
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "overall: {}", verdict(r.all_passed()));
    s
}
