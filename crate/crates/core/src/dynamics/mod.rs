//! The billiard flow on `Q × S¹`: collisions, specular reflection, the
//! Poincaré map, and time averages along orbits.

mod collision;
mod excursion;
mod flow;
mod observe;
mod sample;

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Containment, CuspDomain, Rectangle, Wall, BOUNDARY_TOL};
use crate::math;

pub use collision::{Hit, Ray};
pub use excursion::Excursion;
pub use flow::{flow, Bounce, DeepMode, FlowObserver, FlowOptions, FreeSegment, NoObserver, Singularity, TrajectoryStats};
pub use observe::{
    time_average, time_averages, truncated_time_average, Observable, TimeAverager,
};
pub use sample::{sample_initial, SampledStart};

/// Incidence sines below this are treated as tangential.
pub const TANGENCY_TOL: f64 = 1e-9;
/// Collision points within this distance of a vertex are corner hits.
pub const CORNER_TOL: f64 = 1e-12;
/// Free paths longer than this abort with [`DynamicsError::EscapeGuard`].
pub const T_MAX: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize, Deserialize)]
pub enum DynamicsError {
    #[error("no boundary intersection before t = {T_MAX:e}")]
    EscapeGuard,
    #[error("tangential collision (incidence sine {incidence_sin:e})")]
    Tangential { incidence_sin: f64 },
    #[error("collision at the corner ({x}, {y})")]
    Corner { x: f64, y: f64 },
    #[error("line element ({x}, {y}, {theta}) is not a valid state")]
    InvalidState { x: f64, y: f64, theta: f64 },
    #[error("deep-cusp stepping needs an observable that depends on x only")]
    DeepModeNeedsXObservable,
}

/// A phase point `(x, y, θ)` with unit speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineElement {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl LineElement {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        LineElement { x, y, theta: math::wrap_angle(theta) }
    }

    pub fn from_velocity(x: f64, y: f64, c: f64, s: f64) -> Self {
        LineElement::new(x, y, math::atan2(s, c))
    }

    pub fn velocity(&self) -> (f64, f64) {
        (math::cos(self.theta), math::sin(self.theta))
    }

    /// Same base point, velocity reversed.
    pub fn reversed(&self) -> Self {
        LineElement::new(self.x, self.y, self.theta + PI)
    }
}

/// A billiard table: the cusp, or the rectangular control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Table {
    Cusp(CuspDomain),
    Rectangle(Rectangle),
}

impl From<CuspDomain> for Table {
    fn from(d: CuspDomain) -> Self {
        Table::Cusp(d)
    }
}

impl From<Rectangle> for Table {
    fn from(r: Rectangle) -> Self {
        Table::Rectangle(r)
    }
}

impl Table {
    pub fn contains(&self, p: [f64; 2]) -> Containment {
        match self {
            Table::Cusp(d) => d.contains(p),
            Table::Rectangle(r) => r.contains(p),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Table::Cusp(d) => match d.truncation() {
                Some(l) => d.truncated_area(l),
                None => d.area(),
            },
            Table::Rectangle(r) => r.area(),
        }
    }

    /// Inward unit normal of `wall` at `(x, y)`.
    pub fn normal(&self, wall: Wall, x: f64) -> [f64; 2] {
        match (self, wall) {
            (_, Wall::XAxis) => [0.0, 1.0],
            (_, Wall::YAxis) => [1.0, 0.0],
            (_, Wall::Right) => [-1.0, 0.0],
            (_, Wall::Top) => [0.0, -1.0],
            (Table::Cusp(d), Wall::Curve) => {
                let (_, fp) = d.f_and_slope(x);
                let n = math::sqrt(1.0 + fp * fp);
                [fp / n, -1.0 / n]
            }
            (Table::Rectangle(_), Wall::Curve) => [0.0, -1.0],
        }
    }

    pub fn curvature(&self, wall: Wall, x: f64) -> f64 {
        match (self, wall) {
            (Table::Cusp(d), Wall::Curve) => d.boundary_eval_unchecked(x).kappa,
            _ => 0.0,
        }
    }

    fn is_corner(&self, x: f64, y: f64) -> bool {
        let near = |cx: f64, cy: f64| math::hypot(x - cx, y - cy) <= CORNER_TOL;
        match self {
            Table::Cusp(d) => {
                near(0.0, 0.0)
                    || near(0.0, 1.0)
                    || d.truncation().is_some_and(|l| near(l, 0.0) || near(l, d.f(l)))
            }
            Table::Rectangle(r) => {
                near(0.0, 0.0) || near(r.width, 0.0) || near(0.0, r.height) || near(r.width, r.height)
            }
        }
    }

    /// The wall a boundary point sits on, choosing among coincident walls the
    /// one the direction `(c, s)` leaves through.
    fn wall_at(&self, x: f64, y: f64, c: f64, s: f64) -> Option<Wall> {
        let tol = BOUNDARY_TOL;
        let mut candidates: [Option<Wall>; 3] = [None; 3];
        let mut k = 0;
        let mut push = |w: Wall| {
            if k < 3 {
                candidates[k] = Some(w);
                k += 1;
            }
        };
        match self {
            Table::Cusp(d) => {
                if y.abs() <= tol {
                    push(Wall::XAxis);
                }
                if x.abs() <= tol {
                    push(Wall::YAxis);
                }
                if (y - d.f(x.max(0.0))).abs() <= tol {
                    push(Wall::Curve);
                }
                if d.truncation().is_some_and(|l| (x - l).abs() <= tol) {
                    push(Wall::Right);
                }
            }
            Table::Rectangle(r) => {
                if y.abs() <= tol {
                    push(Wall::XAxis);
                }
                if x.abs() <= tol {
                    push(Wall::YAxis);
                }
                if (y - r.height).abs() <= tol {
                    push(Wall::Top);
                }
                if (x - r.width).abs() <= tol {
                    push(Wall::Right);
                }
            }
        }
        let mut best = None;
        let mut best_dot = f64::NEG_INFINITY;
        for w in candidates.into_iter().flatten() {
            let n = self.normal(w, x.max(0.0));
            let dot = c * n[0] + s * n[1];
            if dot > best_dot {
                best_dot = dot;
                best = Some(w);
            }
        }
        best
    }
}

/// One boundary collision with its reflection data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub point: crate::geometry::BoundaryPoint,
    pub incoming_theta: f64,
    pub outgoing_theta: f64,
    pub free_path_tau: f64,
    pub incidence_sin: f64,
}

impl CollisionEvent {
    /// The reflected line element, based at the collision point.
    pub fn outgoing(&self) -> LineElement {
        LineElement::new(self.point.position[0], self.point.position[1], self.outgoing_theta)
    }
}

fn checked_state(table: &Table, z: &LineElement) -> Result<(Ray, f64, f64), DynamicsError> {
    let invalid = DynamicsError::InvalidState { x: z.x, y: z.y, theta: z.theta };
    if !z.theta.is_finite() {
        return Err(invalid);
    }
    let (c, s) = z.velocity();
    let wall = match table.contains([z.x, z.y]) {
        Containment::Exterior => return Err(invalid),
        Containment::Interior => None,
        Containment::Boundary => {
            let w = table.wall_at(z.x, z.y, c, s).ok_or(invalid)?;
            let n = table.normal(w, z.x.max(0.0));
            let dot = c * n[0] + s * n[1];
            if dot.abs() < TANGENCY_TOL {
                return Err(DynamicsError::Tangential { incidence_sin: dot.abs() });
            }
            if dot < 0.0 {
                return Err(invalid);
            }
            Some(w)
        }
    };
    Ok((Ray { x: z.x, y: z.y, c, s, wall }, c, s))
}

/// The first boundary intersection of the ray from `z`, with the reflected
/// direction.
pub fn next_collision(table: &Table, z: &LineElement) -> Result<CollisionEvent, DynamicsError> {
    let (ray, c, s) = checked_state(table, z)?;
    let hit = collision::cast(table, &ray)?;
    let n = hit.normal;
    let dot = c * n[0] + s * n[1];
    let incidence_sin = dot.abs();
    if incidence_sin < TANGENCY_TOL {
        return Err(DynamicsError::Tangential { incidence_sin });
    }
    let (c2, s2) = specular(c, s, n);
    let coord = match hit.wall {
        Wall::YAxis | Wall::Right => hit.y,
        _ => hit.x,
    };
    Ok(CollisionEvent {
        point: crate::geometry::BoundaryPoint {
            wall: hit.wall,
            position: [hit.x, hit.y],
            inward_normal: n,
            curvature: hit.curvature,
            arclength_like_coord: coord,
        },
        incoming_theta: z.theta,
        outgoing_theta: math::wrap_angle(math::atan2(s2, c2)),
        free_path_tau: hit.t,
        incidence_sin,
    })
}

/// Applies the reflection of `event`; corner hits are rejected.
pub fn reflect(table: &Table, event: &CollisionEvent) -> Result<LineElement, DynamicsError> {
    let [x, y] = event.point.position;
    if event.incidence_sin < TANGENCY_TOL {
        return Err(DynamicsError::Tangential { incidence_sin: event.incidence_sin });
    }
    if table.is_corner(x, y) {
        return Err(DynamicsError::Corner { x, y });
    }
    Ok(event.outgoing())
}

/// The billiard map: from an inward boundary line element to the next one.
pub fn poincare_step(table: &Table, z: &LineElement) -> Result<LineElement, DynamicsError> {
    let ev = next_collision(table, z)?;
    reflect(table, &ev)
}

/// Mirror image of `(c, s)` in the line with unit normal `n`, renormalized.
#[inline]
pub(crate) fn specular(c: f64, s: f64, n: [f64; 2]) -> (f64, f64) {
    let dot = c * n[0] + s * n[1];
    let c2 = c - 2.0 * dot * n[0];
    let s2 = s - 2.0 * dot * n[1];
    let r = math::sqrt(c2 * c2 + s2 * s2);
    (c2 / r, s2 / r)
}
