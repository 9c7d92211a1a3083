//! The flow loop: free flights, reflections, and optional deep-cusp
//! excursions, reported to an observer.

use serde::{Deserialize, Serialize};

use crate::geometry::{CuspDomain, Wall};
use crate::math;
use crate::quad::GaussLegendre;

use super::collision::{cast, Ray};
use super::excursion::Excursion;
use super::{checked_state, specular, DynamicsError, LineElement, Table, TANGENCY_TOL};

/// A straight flight from `(x, y)` in direction `(c, s)` lasting `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSegment {
    pub x: f64,
    pub y: f64,
    pub c: f64,
    pub s: f64,
    pub tau: f64,
}

/// A reflection: incoming direction, outgoing direction and wall data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounce {
    pub x: f64,
    pub y: f64,
    pub wall: Wall,
    pub curvature: f64,
    pub incidence_sin: f64,
    pub tau: f64,
    pub incoming: (f64, f64),
    pub outgoing: (f64, f64),
}

/// Callbacks invoked along a trajectory. `used` is the part of a segment
/// inside the requested horizon.
pub trait FlowObserver {
    fn free(&mut self, _seg: &FreeSegment, _used: f64) {}
    fn bounce(&mut self, _bounce: &Bounce) {}
    fn excursion(&mut self, _exc: &Excursion<'_>, _domain: &CuspDomain, _used: f64) {}
}

pub struct NoObserver;

impl FlowObserver for NoObserver {}

impl<A: FlowObserver, B: FlowObserver> FlowObserver for (A, B) {
    fn free(&mut self, seg: &FreeSegment, used: f64) {
        self.0.free(seg, used);
        self.1.free(seg, used);
    }
    fn bounce(&mut self, b: &Bounce) {
        self.0.bounce(b);
        self.1.bounce(b);
    }
    fn excursion(&mut self, e: &Excursion<'_>, d: &CuspDomain, used: f64) {
        self.0.excursion(e, d, used);
        self.1.excursion(e, d, used);
    }
}

impl<O: FlowObserver + ?Sized> FlowObserver for &mut O {
    fn free(&mut self, seg: &FreeSegment, used: f64) {
        (**self).free(seg, used);
    }
    fn bounce(&mut self, b: &Bounce) {
        (**self).bounce(b);
    }
    fn excursion(&mut self, e: &Excursion<'_>, d: &CuspDomain, used: f64) {
        (**self).excursion(e, d, used);
    }
}

/// Deep-cusp stepping: entered at an x-axis bounce with `x > x_deep`, moving
/// down the cusp, when the relative change of the strip width per crossing
/// `2|f'| v_x / |v_y|` is below `eps`.
#[derive(Debug, Clone)]
pub struct DeepMode {
    pub x_deep: f64,
    pub eps: f64,
    rule: GaussLegendre,
}

impl DeepMode {
    pub fn new(x_deep: f64, eps: f64) -> Self {
        DeepMode { x_deep, eps, rule: GaussLegendre::new(48) }
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }
}

#[derive(Debug, Clone, Default)]
pub struct FlowOptions {
    pub deep: Option<DeepMode>,
}

impl FlowOptions {
    pub fn exact() -> Self {
        FlowOptions { deep: None }
    }

    pub fn deep(x_deep: f64, eps: f64) -> Self {
        FlowOptions { deep: Some(DeepMode::new(x_deep, eps)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub error: DynamicsError,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub total_time: f64,
    /// Reflections simulated one by one.
    pub n_collisions: u64,
    pub n_excursions: u64,
    /// Bounces covered by excursions (estimated from the crossing count).
    pub excursion_bounces: u64,
    pub running_time_integral_of_obs: f64,
    pub renormalization_log_sum: f64,
    pub rng_seed: u64,
    pub singular: Option<Singularity>,
    pub final_state: LineElement,
    /// Largest `| |v| - 1 |` seen after a reflection.
    pub max_speed_drift: f64,
    pub max_x: f64,
}

/// Flows `z0` for time `t_end`, reporting every segment to `observer`.
///
/// Tangential and corner collisions end the trajectory early with
/// [`TrajectoryStats::singular`] set.
pub fn flow<O: FlowObserver>(
    table: &Table,
    z0: &LineElement,
    t_end: f64,
    options: &FlowOptions,
    mut observer: O,
) -> Result<TrajectoryStats, DynamicsError> {
    let (mut ray, _, _) = checked_state(table, z0)?;
    let mut stats = TrajectoryStats {
        total_time: 0.0,
        n_collisions: 0,
        n_excursions: 0,
        excursion_bounces: 0,
        running_time_integral_of_obs: 0.0,
        renormalization_log_sum: 0.0,
        rng_seed: 0,
        singular: None,
        final_state: *z0,
        max_speed_drift: 0.0,
        max_x: z0.x,
    };
    let cusp = match table {
        Table::Cusp(d) if d.truncation().is_none() => Some(d),
        _ => None,
    };
    let deep = options.deep.as_ref().filter(|_| cusp.is_some());
    let mut time = 0.0;
    let end_state = |r: &Ray| LineElement::from_velocity(r.x, r.y, r.c, r.s);
    while time < t_end {
        let hit = match cast(table, &ray) {
            Ok(h) => h,
            Err(error) => {
                stats.singular = Some(Singularity { error, time });
                break;
            }
        };
        let seg = FreeSegment { x: ray.x, y: ray.y, c: ray.c, s: ray.s, tau: hit.t };
        let remaining = t_end - time;
        if hit.t >= remaining {
            observer.free(&seg, remaining);
            ray.x += remaining * ray.c;
            ray.y += remaining * ray.s;
            ray.wall = None;
            time = t_end;
            stats.max_x = stats.max_x.max(ray.x);
            break;
        }
        observer.free(&seg, hit.t);
        time += hit.t;
        let n = hit.normal;
        let incidence_sin = (ray.c * n[0] + ray.s * n[1]).abs();
        if incidence_sin < TANGENCY_TOL {
            ray.x = hit.x;
            ray.y = hit.y;
            stats.singular = Some(Singularity { error: DynamicsError::Tangential { incidence_sin }, time });
            break;
        }
        if table.is_corner(hit.x, hit.y) {
            ray.x = hit.x;
            ray.y = hit.y;
            stats.singular = Some(Singularity { error: DynamicsError::Corner { x: hit.x, y: hit.y }, time });
            break;
        }
        let (c2, s2) = specular(ray.c, ray.s, n);
        stats.n_collisions += 1;
        stats.max_speed_drift = stats.max_speed_drift.max((math::hypot(c2, s2) - 1.0).abs());
        stats.max_x = stats.max_x.max(hit.x);
        observer.bounce(&Bounce {
            x: hit.x,
            y: hit.y,
            wall: hit.wall,
            curvature: hit.curvature,
            incidence_sin,
            tau: hit.t,
            incoming: (ray.c, ray.s),
            outgoing: (c2, s2),
        });
        ray = Ray { x: hit.x, y: hit.y, c: c2, s: s2, wall: Some(hit.wall) };

        if let (Some(dm), Some(d), Wall::XAxis) = (deep, cusp, hit.wall) {
            if ray.x > dm.x_deep && ray.c > 0.0 {
                let (_, fp) = d.f_and_slope(ray.x);
                if 2.0 * fp.abs() * ray.c < dm.eps * ray.s {
                    let exc = Excursion::new(d, ray.x, ray.c, ray.s, dm.rule());
                    let remaining = t_end - time;
                    stats.max_x = stats.max_x.max(exc.turning_point());
                    stats.n_excursions += 1;
                    if exc.duration() >= remaining {
                        observer.excursion(&exc, d, remaining);
                        let st = exc.state_at(d, remaining);
                        time = t_end;
                        ray = Ray { x: st.x, y: st.y, c: st.c, s: st.s, wall: None };
                        stats.excursion_bounces += (exc.bounce_count() as f64 * remaining / exc.duration()) as u64;
                        break;
                    }
                    observer.excursion(&exc, d, exc.duration());
                    time += exc.duration();
                    stats.excursion_bounces += exc.bounce_count();
                    let st = exc.exit_state(d);
                    ray = Ray { x: st.x, y: st.y, c: st.c, s: st.s, wall: None };
                }
            }
        }
    }
    stats.total_time = time;
    stats.final_state = end_state(&ray);
    Ok(stats)
}
