//! Ray casting against the table walls.

use crate::geometry::{CuspDomain, Rectangle, Wall};
use crate::math;

use super::{DynamicsError, Table, T_MAX};

/// A ray from `(x, y)` with unit direction `(c, s)`; `wall` is the wall the
/// base point lies on, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub x: f64,
    pub y: f64,
    pub c: f64,
    pub s: f64,
    pub wall: Option<Wall>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub wall: Wall,
    pub normal: [f64; 2],
    pub curvature: f64,
}

pub(crate) fn cast(table: &Table, ray: &Ray) -> Result<Hit, DynamicsError> {
    match table {
        Table::Cusp(d) => cast_cusp(d, ray),
        Table::Rectangle(r) => cast_rectangle(r, ray),
    }
}

fn flat_hit(t: f64, x: f64, y: f64, wall: Wall) -> Hit {
    let normal = match wall {
        Wall::XAxis => [0.0, 1.0],
        Wall::YAxis => [1.0, 0.0],
        Wall::Right => [-1.0, 0.0],
        Wall::Top | Wall::Curve => [0.0, -1.0],
    };
    Hit { t, x, y, wall, normal, curvature: 0.0 }
}

fn cast_rectangle(r: &Rectangle, ray: &Ray) -> Result<Hit, DynamicsError> {
    let Ray { x, y, c, s, wall } = *ray;
    let mut best: Option<Hit> = None;
    let mut consider = |t: f64, w: Wall| {
        if wall != Some(w) && t >= 0.0 && best.is_none_or(|b| t < b.t) {
            let (hx, hy) = match w {
                Wall::XAxis => (x + t * c, 0.0),
                Wall::Top => (x + t * c, r.height),
                Wall::YAxis => (0.0, y + t * s),
                _ => (r.width, y + t * s),
            };
            best = Some(flat_hit(t, hx, hy, w));
        }
    };
    if s < 0.0 {
        consider(-y / s, Wall::XAxis);
    } else if s > 0.0 {
        consider((r.height - y) / s, Wall::Top);
    }
    if c < 0.0 {
        consider(-x / c, Wall::YAxis);
    } else if c > 0.0 {
        consider((r.width - x) / c, Wall::Right);
    }
    match best {
        Some(h) if h.t < T_MAX => Ok(h),
        _ => Err(DynamicsError::EscapeGuard),
    }
}

fn cast_cusp(d: &CuspDomain, ray: &Ray) -> Result<Hit, DynamicsError> {
    let Ray { x, y, c, s, wall } = *ray;
    let mut flat: Option<Hit> = None;
    let mut consider = |t: f64, w: Wall, hx: f64, hy: f64| {
        if wall != Some(w) && t >= 0.0 && flat.is_none_or(|b| t < b.t) {
            flat = Some(flat_hit(t, hx, hy, w));
        }
    };
    if s < 0.0 {
        let t = -y / s;
        consider(t, Wall::XAxis, x + t * c, 0.0);
    }
    if c < 0.0 {
        let t = -x / c;
        consider(t, Wall::YAxis, 0.0, y + t * s);
    }
    if let (Some(l), true) = (d.truncation(), c > 0.0) {
        let t = (l - x) / c;
        consider(t, Wall::Right, l, y + t * s);
    }
    if wall != Some(Wall::Curve) {
        let t_flat = flat.map_or(f64::INFINITY, |h| h.t);
        if let Some(t) = curve_root(d, x, y, c, s, t_flat) {
            let hx = x + t * c;
            let e = d.boundary_eval_unchecked(hx);
            let n = math::sqrt(1.0 + e.f_prime * e.f_prime);
            return Ok(Hit {
                t,
                x: hx,
                y: e.f,
                wall: Wall::Curve,
                normal: [e.f_prime / n, -1.0 / n],
                curvature: e.kappa,
            });
        }
    }
    match flat {
        Some(h) if h.t < T_MAX => Ok(h),
        _ => Err(DynamicsError::EscapeGuard),
    }
}

/// Smallest `t` in `(0, t_flat)` with `y + t s = f(x + t c)`, if any.
///
/// `g(t) = y + t s - f(x + t c)` is concave, so on `[0, t*]` (up to its
/// maximiser) it is increasing and has at most one root there; past `t*` it
/// only decreases.
fn curve_root(d: &CuspDomain, x: f64, y: f64, c: f64, s: f64, t_flat: f64) -> Option<f64> {
    let alpha = d.alpha();
    let g = |t: f64| y + t * s - d.f(x + t * c);
    let t_star = if c > 0.0 {
        if s >= 0.0 {
            f64::INFINITY
        } else {
            let xs = math::powf(alpha * c / -s, 1.0 / (alpha + 1.0)) - 1.0;
            if xs <= x {
                return None;
            }
            (xs - x) / c
        }
    } else if c < 0.0 {
        if s <= 0.0 {
            return None;
        }
        let xs = math::powf(alpha * -c / s, 1.0 / (alpha + 1.0)) - 1.0;
        if xs >= x {
            return None;
        }
        (x - xs) / -c
    } else if s > 0.0 {
        f64::INFINITY
    } else {
        return None;
    };
    let mut hi = t_star.min(t_flat);
    if !hi.is_finite() {
        // c >= 0 and s > 0: the ray height passes the profile by the time the
        // profile has dropped to y, or by doubling from the strip height.
        hi = if c > 0.0 && y > 0.0 {
            (d.f_inverse(y) - x) / c
        } else {
            d.f(x) / s
        };
        hi = hi.max(1e-300);
        let mut guard = 0;
        while g(hi) <= 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 200 || hi > T_MAX {
                return None;
            }
        }
    } else if g(hi) <= 0.0 {
        return None;
    }
    Some(solve_increasing(d, x, y, c, s, 0.0, hi))
}

/// Root of the concave, increasing `g` on `[lo, hi]` with `g(lo) < 0 < g(hi)`.
///
/// Newton from the left stays below the root for a concave function; steps
/// that leave the bracket or stall fall back to bisection.
fn solve_increasing(d: &CuspDomain, x: f64, y: f64, c: f64, s: f64, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let mut t = lo;
    for _ in 0..200 {
        let xt = x + t * c;
        let (f, fp) = d.f_and_slope(xt);
        let gv = y + t * s - f;
        if gv == 0.0 {
            return t;
        }
        if gv < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let gp = s - fp * c;
        let mut next = if gp > 0.0 { t - gv / gp } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE) || hi - lo <= 2.0 * f64::EPSILON * hi {
            return next;
        }
        t = next;
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_brackets_the_sign_change() {
        let d = CuspDomain::new(2.0).unwrap();
        let mut rng = crate::rng::Stream::new(3, 1);
        for _ in 0..2000 {
            let x = rng.uniform_in(0.0, 30.0);
            let y = rng.uniform() * d.f(x);
            let th = rng.uniform_in(0.0, core::f64::consts::TAU);
            let ray = Ray { x, y, c: th.cos(), s: th.sin(), wall: None };
            let h = cast(&Table::Cusp(d), &ray).unwrap();
            // no earlier sign change on a fine sample of the ray
            for k in 1..200 {
                let t = h.t * k as f64 / 200.0;
                let px = x + t * ray.c;
                let py = y + t * ray.s;
                assert!(px >= -1e-12 && py >= -1e-12 && py <= d.f(px.max(0.0)) + 1e-12);
            }
            if h.wall == Wall::Curve {
                let g = y + h.t * ray.s - d.f(x + h.t * ray.c);
                assert!(g.abs() < 1e-13, "{g}");
            }
        }
    }

    #[test]
    fn rectangle_walls() {
        let r = Rectangle::new(2.0, 1.0).unwrap();
        let ray = Ray { x: 1.0, y: 0.5, c: 1.0, s: 0.0, wall: None };
        let h = cast(&Table::Rectangle(r), &ray).unwrap();
        assert_eq!(h.wall, Wall::Right);
        assert_eq!(h.t, 1.0);
    }
}
