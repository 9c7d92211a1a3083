//! Whole-orbit properties of the billiard flow on the cusp.

use std::f64::consts::PI;

use cusplab_core::dynamics::{
    flow, sample_initial, time_averages, truncated_time_average, FlowOptions, LineElement, NoObserver,
    Observable, Table,
};
use cusplab_core::math::angle_diff;
use cusplab_core::rng::Stream;
use cusplab_core::{stats, CuspDomain, GrowthClass};

fn cusp() -> (CuspDomain, Table) {
    let d = CuspDomain::new(2.0).unwrap();
    (d, d.into())
}

#[test]
fn reversed_flow_returns_to_start() {
    let (_, table) = cusp();
    let mut rng = Stream::new(7, 0);
    for _ in 0..50 {
        let z0 = sample_initial(&table, 8.0, &mut rng).state;
        let fwd = flow(&table, &z0, 10.0, &FlowOptions::exact(), NoObserver).unwrap();
        assert!(fwd.singular.is_none());
        let back = flow(&table, &fwd.final_state.reversed(), 10.0, &FlowOptions::exact(), NoObserver).unwrap();
        let z = back.final_state;
        assert!((z.x - z0.x).abs() < 1e-8 && (z.y - z0.y).abs() < 1e-8, "{z:?} vs {z0:?}");
        assert!(angle_diff(z.theta + PI, z0.theta).abs() < 1e-8);
    }
}

#[test]
fn speed_is_conserved_over_many_reflections() {
    let (_, table) = cusp();
    let z0 = LineElement::new(0.4, 0.3, 0.9);
    let stats = flow(&table, &z0, 4e4, &FlowOptions::exact(), NoObserver).unwrap();
    assert!(stats.n_collisions > 100_000);
    assert!(stats.max_speed_drift < 1e-12, "{}", stats.max_speed_drift);
}

/// Liouville-distributed points stay Liouville-distributed: the occupation of
/// a box after flowing matches its measure.
#[test]
fn box_occupation_matches_liouville_measure() {
    let (d, table) = cusp();
    let cutoff = 50.0;
    let (lo, hi) = (0.5, 1.0);
    let in_box = |z: &LineElement| z.x >= lo && z.x <= hi && z.theta.rem_euclid(2.0 * PI) < PI;
    let p = (d.truncated_area(hi) - d.truncated_area(lo)) / d.truncated_area(cutoff) * 0.5;
    let n = 4000;
    let mut rng = Stream::new(11, 3);
    let mut hits = 0;
    let mut hits_before = 0;
    for _ in 0..n {
        let z0 = sample_initial(&table, cutoff, &mut rng).state;
        hits_before += in_box(&z0) as usize;
        let s = flow(&table, &z0, 5.0, &FlowOptions::exact(), NoObserver).unwrap();
        hits += in_box(&s.final_state) as usize;
    }
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for h in [hits_before, hits] {
        let frac = h as f64 / n as f64;
        assert!((frac - p).abs() < 3.0 * se, "fraction {frac}, measure {p}, se {se}");
    }
}

#[test]
fn capped_averages_approach_phase_space_integral() {
    let (d, table) = cusp();
    let target = d.liouville_integral(&|x: f64| x.min(2.0), GrowthClass::Bounded).unwrap();
    let mut avgs = Vec::new();
    for i in 0..24 {
        let mut r = Stream::new(3, i);
        let z0 = sample_initial(&table, 50.0, &mut r).state;
        let (a, s) =
            truncated_time_average(&table, &z0, 2e4, &Observable::X, 2.0, &FlowOptions::deep(10.0, 1e-2)).unwrap();
        assert!(s.singular.is_none());
        avgs.push(a);
    }
    let m = stats::mean(&avgs);
    let se = stats::std_err(&avgs);
    assert!((m - target).abs() < 4.0 * se + 1e-3, "mean {m} target {target} se {se}");
}

#[test]
fn deep_mode_agrees_with_exact_flow_statistically() {
    let (_, table) = cusp();
    let obs = Observable::CappedX(5.0);
    let channels = || vec![(&obs, None)];
    let mut exact = Vec::new();
    let mut deep = Vec::new();
    for i in 0..16 {
        let mut r = Stream::new(99, i);
        let z0 = sample_initial(&table, 50.0, &mut r).state;
        let (e, _) = time_averages(&table, &z0, &[1e4], channels(), &FlowOptions::exact()).unwrap();
        let (a, _) = time_averages(&table, &z0, &[1e4], channels(), &FlowOptions::deep(10.0, 1e-2)).unwrap();
        exact.push(e[0][0]);
        deep.push(a[0][0]);
    }
    let (me, md) = (stats::mean(&exact), stats::mean(&deep));
    let se = (stats::std_err(&exact).powi(2) + stats::std_err(&deep).powi(2)).sqrt();
    assert!((me - md).abs() < 4.0 * se, "exact {me} deep {md} se {se}");
}
