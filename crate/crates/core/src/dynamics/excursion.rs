//! Adiabatic stepping through deep cusp excursions.
//!
//! Far down the cusp a particle bounces between the x-axis and the curve
//! thousands of times while its horizontal motion changes slowly. The product
//! `J = |v_y| f(x)` is an adiabatic invariant there, so `v_x² = 1 - (J/f(x))²`
//! determines the horizontal motion and the turning point `f(x_t) = J`. An
//! excursion from `x0` to `x_t` and back is integrated in the variable `q` with
//! `x = x_t - (x_t - x0) q²`, which removes the square-root singularity of
//! `dt/dx` at the turning point.

use crate::geometry::CuspDomain;
use crate::math;
use crate::quad::GaussLegendre;

/// Largest RK4 step in accumulated transverse phase `∫ Ω dt`.
const JACOBI_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionState {
    pub x: f64,
    pub y: f64,
    pub c: f64,
    pub s: f64,
}

#[derive(Debug, Clone)]
pub struct Excursion<'a> {
    alpha: f64,
    x0: f64,
    vx0: f64,
    j: f64,
    xt: f64,
    depth: f64,
    half_time: f64,
    half_phase: f64,
    rule: &'a GaussLegendre,
}

impl<'a> Excursion<'a> {
    /// Excursion entered at `(x0, 0)` with velocity `(vx, vy)`, `vx > 0`.
    pub fn new(domain: &CuspDomain, x0: f64, vx: f64, vy: f64, rule: &'a GaussLegendre) -> Self {
        let alpha = domain.alpha();
        let j = vy.abs() * domain.f(x0);
        let xt = domain.f_inverse(j).max(x0);
        let mut e = Excursion {
            alpha,
            x0,
            vx0: vx,
            j,
            xt,
            depth: xt - x0,
            half_time: 0.0,
            half_phase: 0.0,
            rule,
        };
        e.half_time = e.integrate(|q| e.dtdq(q), 0.0, 1.0, &[]);
        e.half_phase = e.integrate(|q| e.phase_rate(q), 0.0, 1.0, &[]);
        e
    }

    pub fn entry_x(&self) -> f64 {
        self.x0
    }

    pub fn turning_point(&self) -> f64 {
        self.xt
    }

    pub fn invariant(&self) -> f64 {
        self.j
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.half_time
    }

    /// Approximate number of wall bounces replaced by this excursion.
    pub fn bounce_count(&self) -> u64 {
        (2.0 * self.half_phase) as u64
    }

    #[inline]
    fn x_of(&self, q: f64) -> f64 {
        self.xt - self.depth * q * q
    }

    /// `1 - (J/f)²`, accurate close to the turning point.
    #[inline]
    fn vx2(&self, q: f64) -> f64 {
        let r = self.depth * q * q / (self.xt + 1.0);
        -math::exp_m1(2.0 * self.alpha * math::ln_1p(-r))
    }

    #[inline]
    fn dtdq(&self, q: f64) -> f64 {
        if self.depth == 0.0 {
            return 0.0;
        }
        if q < 1e-100 {
            return 2.0 * math::sqrt(self.depth * (self.xt + 1.0) / (2.0 * self.alpha));
        }
        2.0 * self.depth * q / math::sqrt(self.vx2(q))
    }

    /// `dφ/dq` where `φ` counts strip-width traversals.
    #[inline]
    fn phase_rate(&self, q: f64) -> f64 {
        let b = self.x_of(q) + 1.0;
        // |v_y|/f = J/f² = J b^{2α}
        self.j * math::powf(b, 2.0 * self.alpha) * self.dtdq(q)
    }

    #[inline]
    fn omega2(&self, q: f64) -> f64 {
        let b = self.x_of(q) + 1.0;
        let a = self.alpha;
        let fp = a * math::powf(b, -a - 1.0);
        let w = 1.0 + fp * fp;
        a * (a + 1.0) / (b * b * w * math::sqrt(w))
    }

    fn q_of_x(&self, x: f64) -> Option<f64> {
        if self.depth > 0.0 && x > self.x0 && x < self.xt {
            Some(math::sqrt((self.xt - x) / self.depth))
        } else {
            None
        }
    }

    fn integrate<F: Fn(f64) -> f64>(&self, h: F, q0: f64, q1: f64, kinks: &[f64]) -> f64 {
        if q1 <= q0 {
            return 0.0;
        }
        let mut cuts = [0.0f64; 8];
        let mut n = 0;
        for &k in kinks {
            if let Some(q) = self.q_of_x(k) {
                if q > q0 && q < q1 && n < cuts.len() {
                    cuts[n] = q;
                    n += 1;
                }
            }
        }
        cuts[..n].sort_by(|a, b| a.total_cmp(b));
        let mut total = 0.0;
        let mut lo = q0;
        for &q in &cuts[..n] {
            total += self.rule.integrate(&h, lo, q);
            lo = q;
        }
        total + self.rule.integrate(&h, lo, q1)
    }

    /// Splits elapsed time `s` into (outbound leg finished, q reached).
    fn locate(&self, s: f64) -> (bool, f64) {
        let s = s.clamp(0.0, self.duration());
        if s <= self.half_time {
            // ∫_q^1 dt/dq = s
            (false, self.invert(|q| self.integrate(|u| self.dtdq(u), q, 1.0, &[]) - s))
        } else {
            let r = s - self.half_time;
            (true, self.invert(|q| r - self.integrate(|u| self.dtdq(u), 0.0, q, &[])))
        }
    }

    /// Root in `[0, 1]` of a decreasing function, by safeguarded Newton.
    fn invert<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut q = 0.5;
        for _ in 0..100 {
            let v = g(q);
            if v > 0.0 {
                lo = q;
            } else {
                hi = q;
            }
            let d = -self.dtdq(q);
            let mut next = q - v / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - q).abs() < 1e-15 || hi - lo < 1e-15 {
                return next;
            }
            q = next;
        }
        0.5 * (lo + hi)
    }

    /// `∫ obs(x(t)) dt` over the first `upto` time units; `kinks` lists the
    /// abscissae where `obs` is not smooth.
    pub fn integrate_obs(&self, obs: &dyn Fn(f64) -> f64, kinks: &[f64], upto: f64) -> f64 {
        let h = |q: f64| obs(self.x_of(q)) * self.dtdq(q);
        if upto >= self.duration() {
            return 2.0 * self.integrate(h, 0.0, 1.0, kinks);
        }
        let (out, q) = self.locate(upto);
        if out {
            self.integrate(&h, 0.0, 1.0, kinks) + self.integrate(&h, 0.0, q, kinks)
        } else {
            self.integrate(&h, q, 1.0, kinks)
        }
    }

    /// `∫ x(t) dt` over the first `upto` time units.
    pub fn integrate_x(&self, upto: f64) -> f64 {
        self.integrate_obs(&|x| x, &[], upto)
    }

    fn place(&self, x: f64, phase: f64, outward: bool, vx: f64, f: f64) -> ExcursionState {
        let n = math::floor(phase);
        let fr = (phase - n).clamp(1e-9, 1.0 - 1e-9);
        let vy = (self.j / f).min(1.0);
        let vx = if outward { -vx } else { vx };
        let (y, s) = if (n as u64) % 2 == 0 { (f * fr, vy) } else { (f * (1.0 - fr), -vy) };
        let r = math::sqrt(vx * vx + s * s);
        ExcursionState { x, y, c: vx / r, s: s / r }
    }

    /// Phase point at time `upto` after entry (the exit state when `upto` is
    /// the full duration).
    pub fn state_at(&self, domain: &CuspDomain, upto: f64) -> ExcursionState {
        if upto >= self.duration() {
            return self.exit_state(domain);
        }
        let (out, q) = self.locate(upto);
        let x = self.x_of(q);
        let phase = if out {
            self.half_phase + self.integrate(|u| self.phase_rate(u), 0.0, q, &[])
        } else {
            self.integrate(|u| self.phase_rate(u), q, 1.0, &[])
        };
        self.place(x, phase, out, math::sqrt(self.vx2(q).max(0.0)), domain.f(x))
    }

    pub fn exit_state(&self, domain: &CuspDomain) -> ExcursionState {
        self.place(self.x0, 2.0 * self.half_phase, true, self.vx0, domain.f(self.x0))
    }

    /// Transfer matrix of the averaged Jacobi equation `δ'' = (κ/f) δ` over
    /// the first `upto` time units, acting on `(δ, δ')`.
    pub fn jacobi_matrix(&self, upto: f64) -> [[f64; 2]; 2] {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        if self.depth == 0.0 {
            return id;
        }
        let rot = |q: f64| math::sqrt(self.omega2(q)) * self.dtdq(q);
        let full = upto >= self.duration();
        let (out, q_end) = if full { (true, 1.0) } else { self.locate(upto) };
        let inward_end = if out { 0.0 } else { q_end };
        let mut m = id;
        let phase_in = self.integrate(rot, inward_end, 1.0, &[]);
        m = self.rk4(m, 1.0, inward_end, phase_in);
        if out {
            let phase_out = self.integrate(rot, 0.0, q_end, &[]);
            m = self.rk4(m, 0.0, q_end, phase_out);
        }
        m
    }

    fn rk4(&self, m: [[f64; 2]; 2], q0: f64, q1: f64, phase: f64) -> [[f64; 2]; 2] {
        if q0 == q1 {
            return m;
        }
        let steps = (math::ceil(phase / JACOBI_STEP) as usize).clamp(16, 1 << 16);
        let h = (q1 - q0) / steps as f64;
        let sign = if q1 > q0 { 1.0 } else { -1.0 };
        let deriv = |q: f64, y: &[[f64; 2]; 2]| -> [[f64; 2]; 2] {
            let rate = sign * self.dtdq(q);
            let w2 = self.omega2(q);
            // d(δ, δ')/dt = (δ', Ω² δ), applied columnwise
            [
                [rate * y[1][0], rate * y[1][1]],
                [rate * w2 * y[0][0], rate * w2 * y[0][1]],
            ]
        };
        let axpy = |y: &[[f64; 2]; 2], k: &[[f64; 2]; 2], a: f64| -> [[f64; 2]; 2] {
            [
                [y[0][0] + a * k[0][0], y[0][1] + a * k[0][1]],
                [y[1][0] + a * k[1][0], y[1][1] + a * k[1][1]],
            ]
        };
        let mut y = m;
        let mut q = q0;
        for _ in 0..steps {
            let k1 = deriv(q, &y);
            let k2 = deriv(q + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
            let k3 = deriv(q + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
            let k4 = deriv(q + h, &axpy(&y, &k3, h));
            for r in 0..2 {
                for c in 0..2 {
                    y[r][c] += h / 6.0 * (k1[r][c] + 2.0 * k2[r][c] + 2.0 * k3[r][c] + k4[r][c]);
                }
            }
            q += h;
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (CuspDomain, GaussLegendre) {
        (CuspDomain::new(2.0).unwrap(), GaussLegendre::new(48))
    }

    #[test]
    fn duration_matches_direct_quadrature() {
        let (d, rule) = setup();
        let (x0, th) = (15.0f64, 1.2f64);
        let e = Excursion::new(&d, x0, th.cos(), th.sin(), &rule);
        // independent route: ∫ dx / v_x on a graded grid plus the analytic turning-point piece
        let j = th.sin() * d.f(x0);
        let xt = (1.0 / j).sqrt() - 1.0;
        assert!((e.turning_point() - xt).abs() < 1e-9 * xt);
        let vx = |x: f64| (1.0 - (j * (x + 1.0) * (x + 1.0)).powi(2)).max(0.0).sqrt();
        let n = 200_000;
        let mut half = 0.0;
        for k in 0..n {
            // x = xt - (xt - x0)(1 - u)^2 clusters nodes at the turning point
            let u0 = k as f64 / n as f64;
            let u1 = (k + 1) as f64 / n as f64;
            let xa = xt - (xt - x0) * (1.0 - u0).powi(2);
            let xb = xt - (xt - x0) * (1.0 - u1).powi(2);
            let xm = 0.5 * (xa + xb);
            half += (xb - xa) / vx(xm);
        }
        assert!((e.duration() - 2.0 * half).abs() < 1e-4 * e.duration(), "{} vs {}", e.duration(), 2.0 * half);
    }

    #[test]
    fn partial_integrals_are_consistent() {
        let (d, rule) = setup();
        let e = Excursion::new(&d, 12.0, 0.6, 0.8, &rule);
        let t = e.duration();
        assert!((e.integrate_obs(&|_| 1.0, &[], 0.3 * t) - 0.3 * t).abs() < 1e-9 * t);
        assert!((e.integrate_obs(&|_| 1.0, &[], 0.8 * t) - 0.8 * t).abs() < 1e-9 * t);
        let full = e.integrate_x(t);
        let split = e.integrate_x(0.5 * t);
        assert!((full - 2.0 * split).abs() < 1e-9 * full);
        let mid = e.state_at(&d, 0.5 * t);
        assert!((mid.x - e.turning_point()).abs() < 1e-6 * e.turning_point());
        let exit = e.exit_state(&d);
        assert_eq!(exit.x, 12.0);
        assert!(exit.c < 0.0 && exit.y > 0.0 && exit.y < d.f(12.0));
        assert!((exit.c.hypot(exit.s) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_matrix_is_unimodular() {
        let (d, rule) = setup();
        let e = Excursion::new(&d, 20.0, 0.5, 0.866, &rule);
        let m = e.jacobi_matrix(e.duration());
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        assert!((det - 1.0).abs() < 1e-8, "{det}");
        assert!(m[0][0] > 1.0 && m[1][1] > 1.0);
    }
}
