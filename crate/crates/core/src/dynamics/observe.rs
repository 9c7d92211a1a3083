//! Phase-space observables and their time averages along orbits.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::CuspDomain;
use crate::math;
use crate::quad::gauss5;

use super::excursion::Excursion;
use super::flow::{flow, FlowObserver, FlowOptions, FreeSegment, TrajectoryStats};
use super::{DynamicsError, LineElement, Table};

type XFn = dyn Fn(f64) -> f64 + Send + Sync;
type PhaseFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// A function on `Q × S¹`.
pub enum Observable {
    Constant(f64),
    /// The coordinate `x`.
    X,
    /// `min(x, m)`.
    CappedX(f64),
    /// A function of `x` that is smooth away from the listed abscissae.
    OfX { f: Box<XFn>, kinks: Vec<f64> },
    /// A general function of `(x, y, θ)`.
    General(Box<PhaseFn>),
}

impl core::fmt::Debug for Observable {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Observable::Constant(c) => write!(f, "Constant({c})"),
            Observable::X => f.write_str("X"),
            Observable::CappedX(m) => write!(f, "CappedX({m})"),
            Observable::OfX { kinks, .. } => write!(f, "OfX(kinks: {kinks:?})"),
            Observable::General(_) => f.write_str("General"),
        }
    }
}

impl Observable {
    pub fn of_x<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F, kinks: &[f64]) -> Self {
        Observable::OfX { f: Box::new(f), kinks: kinks.to_vec() }
    }

    pub fn general<F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Observable::General(Box::new(f))
    }

    pub fn depends_on_x_only(&self) -> bool {
        !matches!(self, Observable::General(_))
    }

    pub fn eval(&self, x: f64, y: f64, theta: f64) -> f64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::X => x,
            Observable::CappedX(m) => x.min(*m),
            Observable::OfX { f, .. } => f(x),
            Observable::General(f) => f(x, y, theta),
        }
    }

    fn eval_capped(&self, x: f64, y: f64, theta: f64, cap: Option<f64>) -> f64 {
        let v = self.eval(x, y, theta);
        match cap {
            Some(m) => v.min(m),
            None => v,
        }
    }

    /// `∫_0^len obs(x + t c, y + t s, θ) dt`, optionally capped at `cap`.
    pub fn free_integral(&self, seg: &FreeSegment, len: f64, cap: Option<f64>) -> f64 {
        let FreeSegment { x, y, c, s, .. } = *seg;
        match (self, cap) {
            (Observable::Constant(v), _) => cap.map_or(*v, |m| v.min(m)) * len,
            (Observable::X, None) => len * x + 0.5 * len * len * c,
            (Observable::X, Some(m)) => capped_linear(x, c, len, m),
            (Observable::CappedX(m0), _) => capped_linear(x, c, len, cap.map_or(*m0, |m| m.min(*m0))),
            (Observable::OfX { f, kinks }, _) => {
                let g = |t: f64| {
                    let v = f(x + t * c);
                    cap.map_or(v, |m| v.min(m))
                };
                let mut cuts = [0.0f64; 8];
                let mut n = 0;
                if c != 0.0 {
                    for &k in kinks {
                        let t = (k - x) / c;
                        if t > 0.0 && t < len && n < cuts.len() {
                            cuts[n] = t;
                            n += 1;
                        }
                    }
                }
                cuts[..n].sort_by(|a, b| a.total_cmp(b));
                let mut total = 0.0;
                let mut lo = 0.0;
                for &t in &cuts[..n] {
                    total += gauss5(g, lo, t);
                    lo = t;
                }
                total + gauss5(g, lo, len)
            }
            (Observable::General(_), _) => {
                let theta = math::atan2(s, c);
                gauss5(|t| self.eval_capped(x + t * c, y + t * s, theta, cap), 0.0, len)
            }
        }
    }

    /// `∫ obs dt` over the first `len` time units of an excursion, or `None`
    /// for observables that depend on more than `x`.
    pub fn excursion_integral(&self, exc: &Excursion<'_>, len: f64, cap: Option<f64>) -> Option<f64> {
        Some(match (self, cap) {
            (Observable::Constant(v), _) => cap.map_or(*v, |m| v.min(m)) * len.min(exc.duration()),
            (Observable::X, None) => exc.integrate_x(len),
            (Observable::X, Some(m)) => capped_excursion(exc, len, m),
            (Observable::CappedX(m0), _) => capped_excursion(exc, len, cap.map_or(*m0, |m| m.min(*m0))),
            (Observable::OfX { f, kinks }, None) => exc.integrate_obs(&**f, kinks, len),
            (Observable::OfX { f, kinks }, Some(m)) => exc.integrate_obs(&|x| f(x).min(m), kinks, len),
            (Observable::General(_), _) => return None,
        })
    }
}

fn capped_excursion(exc: &Excursion<'_>, len: f64, m: f64) -> f64 {
    if m <= exc.entry_x() {
        m * len.min(exc.duration())
    } else {
        exc.integrate_obs(&|x| x.min(m), &[m], len)
    }
}

/// `∫_0^len min(x + c t, m) dt`.
fn capped_linear(x: f64, c: f64, len: f64, m: f64) -> f64 {
    let lin = |a: f64, b: f64| (b - a) * x + 0.5 * (b * b - a * a) * c;
    if c == 0.0 {
        return x.min(m) * len;
    }
    let tc = (m - x) / c;
    if !(tc > 0.0 && tc < len) {
        // no crossing: decide by the midpoint
        return if x + 0.5 * len * c <= m { lin(0.0, len) } else { m * len };
    }
    if c > 0.0 {
        lin(0.0, tc) + m * (len - tc)
    } else {
        m * tc + lin(tc, len)
    }
}

/// Accumulates time integrals of several observables and records them at
/// increasing checkpoint times.
pub struct TimeAverager<'o> {
    channels: Vec<(&'o Observable, Option<f64>)>,
    checkpoints: Vec<f64>,
    next: usize,
    elapsed: f64,
    running: Vec<f64>,
    recorded: Vec<Vec<f64>>,
    unsupported: bool,
}

impl<'o> TimeAverager<'o> {
    /// `channels` pairs each observable with an optional cap `m` (averaging
    /// `min(obs, m)`); `checkpoints` must be increasing.
    pub fn new(channels: Vec<(&'o Observable, Option<f64>)>, checkpoints: &[f64]) -> Self {
        let n = channels.len();
        TimeAverager {
            channels,
            checkpoints: checkpoints.to_vec(),
            next: 0,
            elapsed: 0.0,
            running: vec![0.0; n],
            recorded: Vec::new(),
            unsupported: false,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Integrals so far, one per channel.
    pub fn integrals(&self) -> &[f64] {
        &self.running
    }

    /// Averages at each reached checkpoint: `result[k][i]` for checkpoint `k`
    /// and channel `i`.
    pub fn averages(&self) -> Vec<Vec<f64>> {
        self.recorded
            .iter()
            .zip(&self.checkpoints)
            .map(|(row, &t)| row.iter().map(|v| v / t).collect())
            .collect()
    }

    /// Averages over the time elapsed so far.
    pub fn current_averages(&self) -> Vec<f64> {
        if self.elapsed == 0.0 {
            return vec![0.0; self.running.len()];
        }
        self.running.iter().map(|v| v / self.elapsed).collect()
    }

    fn add<F: Fn(&Observable, Option<f64>, f64, f64) -> Option<f64>>(&mut self, used: f64, part: F) {
        let mut offset = 0.0;
        while self.next < self.checkpoints.len() && self.elapsed + (used - offset) >= self.checkpoints[self.next] {
            let len = (self.checkpoints[self.next] - self.elapsed).max(0.0);
            for (i, (o, cap)) in self.channels.iter().enumerate() {
                match part(o, *cap, offset, offset + len) {
                    Some(v) => self.running[i] += v,
                    None => self.unsupported = true,
                }
            }
            offset += len;
            self.elapsed = self.checkpoints[self.next];
            self.recorded.push(self.running.clone());
            self.next += 1;
        }
        if used > offset {
            for (i, (o, cap)) in self.channels.iter().enumerate() {
                match part(o, *cap, offset, used) {
                    Some(v) => self.running[i] += v,
                    None => self.unsupported = true,
                }
            }
            self.elapsed += used - offset;
        }
    }
}

impl FlowObserver for TimeAverager<'_> {
    fn free(&mut self, seg: &FreeSegment, used: f64) {
        self.add(used, |o, cap, a, b| {
            let shifted = FreeSegment { x: seg.x + a * seg.c, y: seg.y + a * seg.s, tau: seg.tau - a, ..*seg };
            Some(o.free_integral(&shifted, b - a, cap))
        });
    }

    fn excursion(&mut self, exc: &Excursion<'_>, _domain: &CuspDomain, used: f64) {
        self.add(used, |o, cap, a, b| {
            let hi = o.excursion_integral(exc, b, cap)?;
            let lo = if a > 0.0 { o.excursion_integral(exc, a, cap)? } else { 0.0 };
            Some(hi - lo)
        });
    }
}

/// Averages over several horizons along one orbit: `result[k][i]` is the
/// average of channel `i` up to `horizons[k]`. On early termination only the
/// reached horizons are present.
pub fn time_averages(
    table: &Table,
    z0: &LineElement,
    horizons: &[f64],
    channels: Vec<(&Observable, Option<f64>)>,
    options: &FlowOptions,
) -> Result<(Vec<Vec<f64>>, TrajectoryStats), DynamicsError> {
    if options.deep.is_some() && channels.iter().any(|(o, _)| !o.depends_on_x_only()) {
        return Err(DynamicsError::DeepModeNeedsXObservable);
    }
    let t_end = horizons.last().copied().unwrap_or(0.0);
    let mut avg = TimeAverager::new(channels, horizons);
    let stats = flow(table, z0, t_end, options, &mut avg)?;
    Ok((avg.averages(), stats))
}

fn single(
    table: &Table,
    z0: &LineElement,
    t_end: f64,
    obs: &Observable,
    cap: Option<f64>,
    options: &FlowOptions,
) -> Result<(f64, TrajectoryStats), DynamicsError> {
    if options.deep.is_some() && !obs.depends_on_x_only() {
        return Err(DynamicsError::DeepModeNeedsXObservable);
    }
    let mut avg = TimeAverager::new(vec![(obs, cap)], &[]);
    let mut stats = flow(table, z0, t_end, options, &mut avg)?;
    stats.running_time_integral_of_obs = avg.integrals()[0];
    let value = if t_end == 0.0 {
        obs.eval_capped(z0.x, z0.y, z0.theta, cap)
    } else {
        avg.current_averages()[0]
    };
    Ok((value, stats))
}

/// `(1/T) ∫_0^T obs(φ^t z0) dt`, over the achieved horizon if the orbit
/// terminates early.
pub fn time_average(
    table: &Table,
    z0: &LineElement,
    t_end: f64,
    obs: &Observable,
    options: &FlowOptions,
) -> Result<(f64, TrajectoryStats), DynamicsError> {
    single(table, z0, t_end, obs, None, options)
}

/// Time average of `min(obs, m)`.
pub fn truncated_time_average(
    table: &Table,
    z0: &LineElement,
    t_end: f64,
    obs: &Observable,
    cap_m: f64,
    options: &FlowOptions,
) -> Result<(f64, TrajectoryStats), DynamicsError> {
    single(table, z0, t_end, obs, Some(cap_m), options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capped_linear_matches_quadrature() {
        for &(x, c, len, m) in &[(1.0, 0.5, 4.0, 2.0), (3.0, -0.7, 5.0, 2.0), (0.5, 0.0, 1.0, 0.2), (4.0, 0.3, 1.0, 2.0)] {
            let n = 100_000;
            let h = len / n as f64;
            let q: f64 = (0..n).map(|k| (x + (k as f64 + 0.5) * h * c).min(m) * h).sum();
            assert!((capped_linear(x, c, len, m) - q).abs() < 1e-8, "{x} {c} {len} {m}");
        }
    }

    #[test]
    fn averages_of_simple_observables() {
        let t: Table = CuspDomain::new(2.0).unwrap().into();
        let z = LineElement::new(0.4, 0.3, 0.7);
        let opts = FlowOptions::exact();
        let (one, _) = time_average(&t, &z, 50.0, &Observable::Constant(1.0), &opts).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
        let (x, _) = time_average(&t, &z, 50.0, &Observable::X, &opts).unwrap();
        let (xc, _) = truncated_time_average(&t, &z, 50.0, &Observable::X, 0.5, &opts).unwrap();
        let (xl, _) = truncated_time_average(&t, &z, 50.0, &Observable::X, 1e9, &opts).unwrap();
        assert!(xc <= 0.5 + 1e-15 && xc <= x);
        assert!((xl - x).abs() < 1e-12 * x);
        let (g, _) = time_average(&t, &z, 50.0, &Observable::general(|x, _, _| x), &opts).unwrap();
        assert!((g - x).abs() < 1e-10 * x);
    }

    #[test]
    fn checkpoints_split_segments() {
        let t: Table = CuspDomain::new(2.0).unwrap().into();
        let z = LineElement::new(0.4, 0.3, 0.7);
        let opts = FlowOptions::exact();
        let x = Observable::X;
        let (rows, _) = time_averages(&t, &z, &[3.0, 10.0, 40.0], vec![(&x, None), (&x, Some(1.0))], &opts).unwrap();
        for (k, &h) in [3.0, 10.0, 40.0].iter().enumerate() {
            let (a, _) = time_average(&t, &z, h, &x, &opts).unwrap();
            let (b, _) = truncated_time_average(&t, &z, h, &x, 1.0, &opts).unwrap();
            assert!((rows[k][0] - a).abs() < 1e-12 * a);
            assert!((rows[k][1] - b).abs() < 1e-12 * b);
        }
    }
}
