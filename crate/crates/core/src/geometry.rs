//! The cusp domain `Q = {x > 0, 0 < y < (x+1)^-alpha}` and the rectangular
//! control table.

use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::quad;

/// Distance within which a point counts as lying on a wall.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("alpha must be in (1,2], got {0}")]
    AlphaOutOfRange(f64),
    #[error("truncation length must be positive and finite, got {0}")]
    BadTruncation(f64),
    #[error("boundary is only defined for x >= 0, got x = {0}")]
    NegativeAbscissa(f64),
    #[error("rectangle sides must be positive and finite, got {0} x {1}")]
    BadRectangle(f64, f64),
    #[error("quadrature did not converge on [{lo}, {hi}] (error estimate {error:e})")]
    QuadratureFailed { lo: f64, hi: f64, error: f64 },
    #[error("tail of the integrand neither converged nor diverged after {octaves} octaves")]
    TailUndecided { octaves: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wall {
    XAxis,
    YAxis,
    Curve,
    /// Top side of a rectangle (`y = b`).
    Top,
    /// Right side of a rectangle, or the artificial wall `x = L` of a truncated cusp.
    Right,
}

impl fmt::Display for Wall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Wall::XAxis => "X_AXIS",
            Wall::YAxis => "Y_AXIS",
            Wall::Curve => "CURVE",
            Wall::Top => "TOP",
            Wall::Right => "RIGHT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Containment {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub wall: Wall,
    pub position: [f64; 2],
    pub inward_normal: [f64; 2],
    /// Zero on flat walls, `f''/(1+f'^2)^{3/2}` on the curve.
    pub curvature: f64,
    /// `x` on the curve and the x-axis, `y` on the y-axis.
    pub arclength_like_coord: f64,
}

/// Profile values at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEval {
    pub f: f64,
    pub f_prime: f64,
    pub f_second: f64,
    pub kappa: f64,
}

/// How fast an observable may grow as `x → ∞`; unbounded classes allow a
/// divergence certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthClass {
    Bounded,
    Polynomial,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspDomain {
    alpha: f64,
    truncation: Option<f64>,
}

impl CuspDomain {
    pub fn new(alpha: f64) -> Result<Self, GeometryError> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(GeometryError::AlphaOutOfRange(alpha));
        }
        Ok(CuspDomain { alpha, truncation: None })
    }

    /// The same cusp cut off by a wall at `x = length`.
    pub fn truncated(self, length: f64) -> Result<Self, GeometryError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(GeometryError::BadTruncation(length));
        }
        Ok(CuspDomain { truncation: Some(length), ..self })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    /// `f(x) = (x+1)^-alpha`, without argument checks.
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        let b = x + 1.0;
        if self.alpha == 2.0 {
            1.0 / (b * b)
        } else {
            math::powf(b, -self.alpha)
        }
    }

    /// `(f(x), f'(x))`, without argument checks.
    #[inline]
    pub fn f_and_slope(&self, x: f64) -> (f64, f64) {
        let b = x + 1.0;
        let f = if self.alpha == 2.0 { 1.0 / (b * b) } else { math::powf(b, -self.alpha) };
        (f, -self.alpha * f / b)
    }

    /// Inverse of the profile: the abscissa where `f(x) = h`, for `0 < h <= 1`.
    pub fn f_inverse(&self, h: f64) -> f64 {
        if self.alpha == 2.0 {
            1.0 / math::sqrt(h) - 1.0
        } else {
            math::powf(h, -1.0 / self.alpha) - 1.0
        }
    }

    pub fn boundary_eval(&self, x: f64) -> Result<BoundaryEval, GeometryError> {
        if !(x >= 0.0) {
            return Err(GeometryError::NegativeAbscissa(x));
        }
        Ok(self.boundary_eval_unchecked(x))
    }

    #[inline]
    pub fn boundary_eval_unchecked(&self, x: f64) -> BoundaryEval {
        let b = x + 1.0;
        let a = self.alpha;
        let (f, f_prime) = self.f_and_slope(x);
        let f_second = a * (a + 1.0) * f / (b * b);
        let q = 1.0 + f_prime * f_prime;
        let kappa = f_second / (q * math::sqrt(q));
        BoundaryEval { f, f_prime, f_second, kappa }
    }

    /// Boundary point on the given wall at coordinate `coord` (see
    /// [`BoundaryPoint::arclength_like_coord`]).
    pub fn boundary_point(&self, wall: Wall, coord: f64) -> Result<BoundaryPoint, GeometryError> {
        match wall {
            Wall::Curve => {
                let e = self.boundary_eval(coord)?;
                let norm = math::sqrt(1.0 + e.f_prime * e.f_prime);
                Ok(BoundaryPoint {
                    wall,
                    position: [coord, e.f],
                    inward_normal: [e.f_prime / norm, -1.0 / norm],
                    curvature: e.kappa,
                    arclength_like_coord: coord,
                })
            }
            Wall::XAxis => Ok(BoundaryPoint {
                wall,
                position: [coord, 0.0],
                inward_normal: [0.0, 1.0],
                curvature: 0.0,
                arclength_like_coord: coord,
            }),
            Wall::YAxis => Ok(BoundaryPoint {
                wall,
                position: [0.0, coord],
                inward_normal: [1.0, 0.0],
                curvature: 0.0,
                arclength_like_coord: coord,
            }),
            Wall::Right | Wall::Top => {
                let length = self.truncation.unwrap_or(f64::INFINITY);
                Ok(BoundaryPoint {
                    wall: Wall::Right,
                    position: [length, coord],
                    inward_normal: [-1.0, 0.0],
                    curvature: 0.0,
                    arclength_like_coord: coord,
                })
            }
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> Containment {
        let [x, y] = p;
        let tol = BOUNDARY_TOL;
        if !(x.is_finite() && y.is_finite()) || x < -tol || y < -tol {
            return Containment::Exterior;
        }
        if let Some(length) = self.truncation {
            if x > length + tol {
                return Containment::Exterior;
            }
        }
        let fx = self.f(x.max(0.0));
        if y > fx + tol {
            return Containment::Exterior;
        }
        let on_right = self.truncation.is_some_and(|l| x >= l - tol);
        if x <= tol || y <= tol || (y - fx).abs() <= tol || on_right {
            Containment::Boundary
        } else {
            Containment::Interior
        }
    }

    /// Area of the full (untruncated) cusp, `1/(alpha-1)`.
    pub fn area(&self) -> f64 {
        1.0 / (self.alpha - 1.0)
    }

    /// Area of `Q ∩ {x < length}`.
    pub fn truncated_area(&self, length: f64) -> f64 {
        -math::exp_m1((1.0 - self.alpha) * math::ln_1p(length)) / (self.alpha - 1.0)
    }

    /// `∫ obs dν` over the full cusp for an observable depending on `x` only,
    /// or `+∞` when the tail diverges.
    ///
    /// The half-line is split into `[0,1]` and dyadic octaves `[2^k, 2^{k+1}]`.
    /// Five consecutive non-decreasing positive octave integrals certify
    /// divergence (unbounded growth classes only); a geometric tail is
    /// extrapolated once the octave ratio has settled.
    pub fn liouville_integral(
        &self,
        obs: &dyn Fn(f64) -> f64,
        growth: GrowthClass,
    ) -> Result<f64, GeometryError> {
        const MAX_OCTAVE: u32 = 64;
        let integrand = |x: f64| obs(x) * self.f(x);
        let piece = |lo: f64, hi: f64| -> Result<f64, GeometryError> {
            let q = quad::adaptive(integrand, lo, hi, 1e-300, 1e-14);
            if !q.value.is_finite() {
                return Ok(q.value);
            }
            if !q.converged && q.error > 1e-10 * q.value.abs().max(1e-300) {
                return Err(GeometryError::QuadratureFailed { lo, hi, error: q.error });
            }
            Ok(q.value)
        };
        let mut total = piece(0.0, 1.0)?;
        let mut prev: Option<f64> = None;
        let mut prev_ratio: Option<f64> = None;
        let mut run = 0u32;
        let mut lo = 1.0f64;
        for k in 0..=MAX_OCTAVE {
            let hi = 2.0 * lo;
            let part = piece(lo, hi)?;
            if !part.is_finite() {
                return if growth == GrowthClass::Bounded {
                    Err(GeometryError::TailUndecided { octaves: k })
                } else {
                    Ok(f64::INFINITY)
                };
            }
            total += part;
            if let Some(p) = prev {
                if part > 0.0 && part >= p {
                    run += 1;
                } else {
                    run = 0;
                }
            }
            if run >= 5 && growth != GrowthClass::Bounded {
                return Ok(f64::INFINITY);
            }
            if k >= 3 && part.abs() <= 1e-17 * total.abs() {
                return Ok(total / self.area());
            }
            if k >= 8 && part == 0.0 && prev == Some(0.0) && total == 0.0 {
                return Ok(0.0);
            }
            let ratio = match prev {
                Some(p) if p > 0.0 && part > 0.0 => Some(part / p),
                _ => None,
            };
            if k == MAX_OCTAVE {
                if let Some(r) = ratio {
                    if r < 1.0 {
                        total += part * r / (1.0 - r);
                        return Ok(total / self.area());
                    }
                }
                return Err(GeometryError::TailUndecided { octaves: k });
            }
            if let (Some(r), Some(rp)) = (ratio, prev_ratio) {
                if k >= 12 && r < 1.0 && (r - rp).abs() <= 1e-15 {
                    total += part * r / (1.0 - r);
                    return Ok(total / self.area());
                }
            }
            prev_ratio = ratio;
            prev = Some(part);
            lo = hi;
        }
        Err(GeometryError::TailUndecided { octaves: MAX_OCTAVE })
    }
}

/// Axis-aligned rectangle `(0,a) × (0,b)`: the integrable control table and
/// the separable spectral oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub width: f64,
    pub height: f64,
}

impl Rectangle {
    pub fn new(width: f64, height: f64) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(GeometryError::BadRectangle(width, height));
        }
        Ok(Rectangle { width, height })
    }

    pub fn contains(&self, p: [f64; 2]) -> Containment {
        let [x, y] = p;
        let tol = BOUNDARY_TOL;
        if !(x.is_finite() && y.is_finite())
            || x < -tol
            || y < -tol
            || x > self.width + tol
            || y > self.height + tol
        {
            return Containment::Exterior;
        }
        if x <= tol || y <= tol || x >= self.width - tol || y >= self.height - tol {
            Containment::Boundary
        } else {
            Containment::Interior
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Exact Dirichlet eigenvalue `π²(m²/a² + n²/b²)`.
    pub fn dirichlet_eigenvalue(&self, m: u32, n: u32) -> f64 {
        let pi2 = core::f64::consts::PI * core::f64::consts::PI;
        let (m, n) = (m as f64, n as f64);
        pi2 * (m * m / (self.width * self.width) + n * n / (self.height * self.height))
    }

    /// The `count` smallest exact Dirichlet eigenvalues, ascending.
    pub fn dirichlet_spectrum(&self, count: usize) -> alloc::vec::Vec<f64> {
        let mut v = alloc::vec::Vec::new();
        let lim = (count as u32 + 2) * 2;
        for m in 1..=lim {
            for n in 1..=lim {
                v.push(self.dirichlet_eigenvalue(m, n));
            }
        }
        v.sort_by(|a, b| a.total_cmp(b));
        v.truncate(count);
        v
    }
}
