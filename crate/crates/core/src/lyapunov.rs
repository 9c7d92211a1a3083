//! Transverse tangent dynamics of the billiard flow and the top Lyapunov
//! exponent.
//!
//! A perturbation transverse to the orbit is a Jacobi field `(δ, δ')` in the
//! right-handed frame `(v, R₉₀ v)`. Free flight shears it, a reflection flips
//! the frame and adds the curvature kick `2κ/sin φ · δ`. On the dispersing
//! cusp wall the quadrant `δ δ' > 0` is invariant, which is where the unstable
//! direction lives.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    flow, Bounce, DynamicsError, Excursion, FlowObserver, FlowOptions, FreeSegment, LineElement, Singularity,
    Table, TANGENCY_TOL,
};
use crate::geometry::CuspDomain;
use crate::math;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiField {
    pub delta: f64,
    pub delta_prime: f64,
}

impl JacobiField {
    pub fn new(delta: f64, delta_prime: f64) -> Self {
        JacobiField { delta, delta_prime }
    }

    pub fn norm(&self) -> f64 {
        math::hypot(self.delta, self.delta_prime)
    }

    pub fn normalized(&self) -> (Self, f64) {
        let n = self.norm();
        (JacobiField::new(self.delta / n, self.delta_prime / n), n)
    }

    fn apply(&self, m: &Mat2) -> Self {
        JacobiField::new(
            m[0][0] * self.delta + m[0][1] * self.delta_prime,
            m[1][0] * self.delta + m[1][1] * self.delta_prime,
        )
    }
}

/// Row-major 2×2 matrix acting on `(δ, δ')`.
pub type Mat2 = [[f64; 2]; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn propagate_free(j: JacobiField, tau: f64) -> JacobiField {
    JacobiField::new(j.delta + tau * j.delta_prime, j.delta_prime)
}

pub fn propagate_reflection(j: JacobiField, kappa: f64, incidence_sin: f64) -> Result<JacobiField, DynamicsError> {
    if !(incidence_sin >= TANGENCY_TOL) {
        return Err(DynamicsError::Tangential { incidence_sin });
    }
    Ok(JacobiField::new(-j.delta, -(j.delta_prime + 2.0 * kappa / incidence_sin * j.delta)))
}

pub fn free_matrix(tau: f64) -> Mat2 {
    [[1.0, tau], [0.0, 1.0]]
}

pub fn reflection_matrix(kappa: f64, incidence_sin: f64) -> Mat2 {
    [[-1.0, 0.0], [-2.0 * kappa / incidence_sin, -1.0]]
}

/// Flight of length `tau` followed by the reflection that ends it.
pub fn step_matrix(tau: f64, kappa: f64, incidence_sin: f64) -> Mat2 {
    mat_mul(&reflection_matrix(kappa, incidence_sin), &free_matrix(tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda_hat: f64,
    pub n_collisions: u64,
    pub n_excursions: u64,
    pub total_time: f64,
    pub renormalization_log_sum: f64,
    /// `(t, running λ̂)` at dyadic times.
    pub convergence_series: Vec<(f64, f64)>,
    /// Ensemble-based; zero for a single trajectory.
    pub ci_halfwidth: f64,
    /// Time average of the expansion-rate observable `g` along the same orbit.
    pub g_time_average: f64,
    /// Smallest per-segment value of `g` seen along the orbit.
    pub g_min: f64,
    pub singular: Option<Singularity>,
}

/// Logarithmic growth a vector must accumulate along the past orbit before it
/// counts as aligned with the unstable direction.
pub const ALIGN_GROWTH: f64 = 12.0;

/// A field restarted from `(1, 1)/√2` at some past step, with its growth since.
#[derive(Debug, Clone, Copy)]
struct Restart {
    w: JacobiField,
    growth: f64,
}

impl Restart {
    fn fresh() -> Self {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        Restart { w: JacobiField::new(h, h), growth: 0.0 }
    }

    fn advance(&mut self, m: &Mat2) -> f64 {
        let (w, n) = self.w.apply(m).normalized();
        self.w = w;
        let lg = math::ln(n);
        self.growth += lg;
        lg
    }
}

/// Benettin scheme on one vector, plus the per-segment observable `g`.
///
/// `g` is evaluated with a field aligned along the past orbit independently
/// of the Benettin vector: two staggered restarts are kept, and the older one
/// is used once it has grown by [`ALIGN_GROWTH`].
pub struct TangentObserver {
    v: JacobiField,
    log_sum: f64,
    renorm_every_collision: bool,
    elapsed: f64,
    next_dyadic: f64,
    series: Vec<(f64, f64)>,
    active: Restart,
    pending: Restart,
    pending_free: f64,
    g_integral: f64,
    g_min: f64,
}

impl TangentObserver {
    pub fn new(v0: JacobiField, renorm_every_collision: bool) -> Self {
        let (v, _) = v0.normalized();
        TangentObserver {
            v,
            log_sum: 0.0,
            renorm_every_collision,
            elapsed: 0.0,
            next_dyadic: 1.0,
            series: Vec::new(),
            active: Restart::fresh(),
            pending: Restart::fresh(),
            pending_free: 0.0,
            g_integral: 0.0,
            g_min: f64::INFINITY,
        }
    }

    fn renormalize(&mut self, force: bool) {
        let n = self.v.norm();
        if force || self.renorm_every_collision || !(1e-100..=1e100).contains(&n) {
            self.log_sum += math::ln(n);
            self.v = JacobiField::new(self.v.delta / n, self.v.delta_prime / n);
        }
    }

    /// `Σ log` including the current unnormalized vector.
    pub fn log_growth(&self) -> f64 {
        self.log_sum + math::ln(self.v.norm())
    }

    fn record(&mut self) {
        while self.elapsed >= self.next_dyadic {
            self.series.push((self.elapsed, self.log_growth() / self.elapsed));
            self.next_dyadic *= 2.0;
        }
    }

    /// Integrates `g` over a step with transfer matrix `m`.
    fn close_step(&mut self, m: Mat2, duration: f64) {
        let lg = self.active.advance(&m);
        self.pending.advance(&m);
        self.g_integral += lg;
        if duration > 0.0 {
            self.g_min = self.g_min.min(lg / duration);
        }
        if self.pending.growth >= ALIGN_GROWTH {
            self.active = self.pending;
            self.pending = Restart::fresh();
        }
    }

    pub fn into_parts(mut self) -> (f64, Vec<(f64, f64)>, f64, f64) {
        if self.pending_free > 0.0 {
            let m = free_matrix(self.pending_free);
            self.g_integral += math::ln(self.active.w.apply(&m).norm());
        }
        self.renormalize(true);
        if self.elapsed > 0.0 && self.series.last().is_none_or(|&(t, _)| t < self.elapsed) {
            self.series.push((self.elapsed, self.log_sum / self.elapsed));
        }
        (self.log_sum, self.series, self.g_integral, self.g_min)
    }
}

impl FlowObserver for TangentObserver {
    fn free(&mut self, _seg: &FreeSegment, used: f64) {
        self.v = propagate_free(self.v, used);
        self.elapsed += used;
        self.pending_free += used;
    }

    fn bounce(&mut self, b: &Bounce) {
        let kick = 2.0 * b.curvature / b.incidence_sin;
        self.v = JacobiField::new(-self.v.delta, -(self.v.delta_prime + kick * self.v.delta));
        self.renormalize(false);
        let tau = self.pending_free;
        self.pending_free = 0.0;
        self.close_step(step_matrix(tau, b.curvature, b.incidence_sin), tau);
        self.record();
    }

    fn excursion(&mut self, exc: &Excursion<'_>, _domain: &CuspDomain, used: f64) {
        let m = exc.jacobi_matrix(used);
        self.v = self.v.apply(&m);
        self.elapsed += used;
        self.renormalize(false);
        self.close_step(m, used);
        self.record();
    }
}

/// Benettin estimate of the top exponent along the orbit of `z0` up to `t_end`,
/// starting from `v0`; renormalization happens at every collision or only to
/// avoid overflow.
pub fn lyapunov_estimate_from(
    table: &Table,
    z0: &LineElement,
    t_end: f64,
    v0: JacobiField,
    renorm_every_collision: bool,
    options: &FlowOptions,
) -> Result<LyapunovEstimate, DynamicsError> {
    let mut obs = TangentObserver::new(v0, renorm_every_collision);
    let stats = flow(table, z0, t_end, options, &mut obs)?;
    let (log_sum, series, g_int, g_min) = obs.into_parts();
    let t = stats.total_time;
    Ok(LyapunovEstimate {
        lambda_hat: if t > 0.0 { log_sum / t } else { 0.0 },
        n_collisions: stats.n_collisions,
        n_excursions: stats.n_excursions,
        total_time: t,
        renormalization_log_sum: log_sum,
        convergence_series: series,
        ci_halfwidth: 0.0,
        g_time_average: if t > 0.0 { g_int / t } else { 0.0 },
        g_min,
        singular: stats.singular,
    })
}

/// As [`lyapunov_estimate_from`] with a random unit initial field.
pub fn lyapunov_estimate(
    table: &Table,
    z0: &LineElement,
    t_end: f64,
    renorm_every_collision: bool,
    options: &FlowOptions,
    rng: &mut Stream,
) -> Result<LyapunovEstimate, DynamicsError> {
    let a = rng.uniform_in(0.0, core::f64::consts::TAU);
    let v0 = JacobiField::new(math::cos(a), math::sin(a));
    lyapunov_estimate_from(table, z0, t_end, v0, renorm_every_collision, options)
}

/// Gram-Schmidt renormalized pair of fields; the exponents should sum to zero.
struct FrameObserver {
    a: JacobiField,
    b: JacobiField,
    sums: [f64; 2],
}

impl FrameObserver {
    fn orthonormalize(&mut self) {
        let (a, na) = self.a.normalized();
        let proj = a.delta * self.b.delta + a.delta_prime * self.b.delta_prime;
        let b = JacobiField::new(self.b.delta - proj * a.delta, self.b.delta_prime - proj * a.delta_prime);
        let (b, nb) = b.normalized();
        self.sums[0] += math::ln(na);
        self.sums[1] += math::ln(nb);
        self.a = a;
        self.b = b;
    }
}

impl FlowObserver for FrameObserver {
    fn free(&mut self, _seg: &FreeSegment, used: f64) {
        self.a = propagate_free(self.a, used);
        self.b = propagate_free(self.b, used);
    }
    fn bounce(&mut self, b: &Bounce) {
        let m = reflection_matrix(b.curvature, b.incidence_sin);
        self.a = self.a.apply(&m);
        self.b = self.b.apply(&m);
        self.orthonormalize();
    }
    fn excursion(&mut self, exc: &Excursion<'_>, _d: &CuspDomain, used: f64) {
        let m = exc.jacobi_matrix(used);
        self.a = self.a.apply(&m);
        self.b = self.b.apply(&m);
        self.orthonormalize();
    }
}

/// Both exponents of a random orthonormal frame.
pub fn two_frame_exponents(
    table: &Table,
    z0: &LineElement,
    t_end: f64,
    options: &FlowOptions,
    rng: &mut Stream,
) -> Result<[f64; 2], DynamicsError> {
    let a = rng.uniform_in(0.0, core::f64::consts::TAU);
    let mut obs = FrameObserver {
        a: JacobiField::new(math::cos(a), math::sin(a)),
        b: JacobiField::new(-math::sin(a), math::cos(a)),
        sums: [0.0; 2],
    };
    let stats = flow(table, z0, t_end, options, &mut obs)?;
    obs.orthonormalize();
    let t = stats.total_time;
    Ok([obs.sums[0] / t, obs.sums[1] / t])
}

#[derive(Debug, Clone, Copy)]
struct Step {
    tau: f64,
    kappa: f64,
    sin: f64,
}

#[derive(Default)]
struct StepRecorder {
    steps: Vec<Step>,
    limit: usize,
    pending: f64,
    first_free: Option<f64>,
}

impl FlowObserver for StepRecorder {
    fn free(&mut self, seg: &FreeSegment, used: f64) {
        if self.first_free.is_none() {
            self.first_free = Some(seg.tau);
        }
        self.pending += used;
    }
    fn bounce(&mut self, b: &Bounce) {
        if self.steps.len() < self.limit {
            self.steps.push(Step { tau: self.pending, kappa: b.curvature, sin: b.incidence_sin });
        }
        self.pending = 0.0;
    }
}

fn record_steps(table: &Table, z: &LineElement, count: usize) -> Result<StepRecorder, DynamicsError> {
    // Long enough for `count` bounces in any region the exact flow visits.
    let mut rec = StepRecorder { limit: count, ..Default::default() };
    let mut horizon = 8.0;
    loop {
        rec.steps.clear();
        rec.pending = 0.0;
        rec.first_free = None;
        let stats = flow(table, z, horizon, &FlowOptions::exact(), &mut rec)?;
        if let Some(s) = stats.singular {
            return Err(s.error);
        }
        if rec.steps.len() >= count {
            return Ok(rec);
        }
        horizon *= 4.0;
        if horizon > 1e7 {
            return Err(DynamicsError::EscapeGuard);
        }
    }
}

/// The expansion rate `g` at `z`: the logarithmic growth, per unit time, of
/// an unstable-aligned field across the segment through `z` and the
/// reflection ending it. The field is aligned along the backward orbit until
/// it has grown by [`ALIGN_GROWTH`].
pub fn g_observable(table: &Table, z: &LineElement) -> Result<f64, DynamicsError> {
    let fwd = record_steps(table, z, 1)?;
    let next = fwd.steps[0];
    let mut count = 64;
    loop {
        let back = record_steps(table, &z.reversed(), count + 1)?;
        let tau = back.steps[0].tau + next.tau;
        // forward order: the oldest backward collision first
        let mut r = Restart::fresh();
        for k in (1..back.steps.len()).rev() {
            let hit = back.steps[k - 1];
            r.advance(&step_matrix(back.steps[k].tau, hit.kappa, hit.sin));
        }
        if r.growth >= ALIGN_GROWTH || count >= 1 << 20 {
            let grown = r.w.apply(&step_matrix(tau, next.kappa, next.sin)).norm();
            return Ok(math::ln(grown) / tau);
        }
        count *= 4;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_examples() {
        let j = JacobiField::new(0.3, -0.7);
        assert_eq!(propagate_free(j, 0.0), j);
        assert_eq!(propagate_free(JacobiField::new(0.0, 1.0), 2.0), JacobiField::new(2.0, 1.0));
    }

    #[test]
    fn reflection_examples() {
        let j = JacobiField::new(0.6, 0.8);
        let r = propagate_reflection(j, 0.0, 0.37).unwrap();
        assert_eq!(r.norm(), j.norm());
        let kappa = 0.375 * (1.0f64 + 0.0625).powf(-1.5);
        let r = propagate_reflection(JacobiField::new(1.0, 0.0), kappa, 1.0).unwrap();
        assert_eq!(r.delta, -1.0);
        assert!((r.delta_prime + 2.0 * kappa).abs() < 1e-16);
        let mut last = 0.0;
        for k in 1..=9 {
            let s = 10f64.powi(-k);
            let n = propagate_reflection(JacobiField::new(1.0, 0.0), kappa, s.max(1e-9)).unwrap().norm();
            assert!(n > last);
            last = n;
        }
        assert!(propagate_reflection(j, kappa, 1e-10).is_err());
    }

    #[test]
    fn step_matrices_are_unimodular() {
        let m = step_matrix(0.7, 2.3, 0.1);
        assert!((det(&m) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rectangle_exponent_vanishes() {
        let t: Table = crate::geometry::Rectangle::new(1.0, 1.0).unwrap().into();
        let z = LineElement::new(0.3, 0.4, 0.9);
        let est = lyapunov_estimate_from(&t, &z, 1e4, JacobiField::new(0.0, 1.0), true, &FlowOptions::exact()).unwrap();
        assert!(est.lambda_hat.abs() < 2e-3, "{}", est.lambda_hat);
        assert!((est.lambda_hat - est.renormalization_log_sum / est.total_time).abs() == 0.0);
    }

    #[test]
    fn renormalization_does_not_change_the_estimate() {
        let t: Table = CuspDomain::new(2.0).unwrap().into();
        let z = LineElement::new(0.3, 0.4, 0.9);
        let v = JacobiField::new(1.0, 0.5);
        let a = lyapunov_estimate_from(&t, &z, 200.0, v, true, &FlowOptions::exact()).unwrap();
        let b = lyapunov_estimate_from(&t, &z, 200.0, v, false, &FlowOptions::exact()).unwrap();
        assert!((a.lambda_hat - b.lambda_hat).abs() < 1e-12);
        assert!(a.lambda_hat > 0.0);
    }

    #[test]
    fn g_is_constant_along_a_segment() {
        let t: Table = CuspDomain::new(2.0).unwrap().into();
        let z = LineElement::new(0.3, 0.2, 0.4);
        let ev = crate::dynamics::next_collision(&t, &z).unwrap();
        let (c, s) = z.velocity();
        let z2 = LineElement::new(z.x + 0.5 * ev.free_path_tau * c, z.y + 0.5 * ev.free_path_tau * s, z.theta);
        let g1 = g_observable(&t, &z).unwrap();
        let g2 = g_observable(&t, &z2).unwrap();
        assert!(g1 > 0.0);
        assert!((g1 - g2).abs() < 1e-10, "{g1} {g2}");
    }
}
