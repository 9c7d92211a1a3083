//! Position marginals `ξ_j(x) = ∫ |ψ_j(x, y)|² dy` and the diagnostics built
//! on them: tail log-slopes, the second-order differential inequality past
//! the turning point, position expectations and degenerate time averages.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::quad::{self, GAUSS3_NODES, GAUSS3_WEIGHTS};

use super::banded::Banded;
use super::grid::{MappedGrid, Profile};
use super::{EigenPair, SpectralError};

/// Values of `ξ` below this are treated as discretization noise.
pub const FLOOR: f64 = 1e-13;
/// Second differences are only trusted where `ξ` exceeds this.
pub const SECOND_DIFF_FLOOR: f64 = 1e-10;

/// Marginal of one eigenfunction on the x-nodes of its grid.
///
/// Besides the nodal values it keeps the exact u-integrals of `ψ²` at each
/// node and of the products of neighbouring columns, so that `∫ g(x) ξ dx`
/// can be evaluated with the same quadrature as the mass matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDensity {
    pub index: usize,
    pub ell: f64,
    pub profile: Profile,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    column_sq: Vec<f64>,
    column_cross: Vec<f64>,
}

/// `∫₀¹ a b du` for piecewise-linear columns on the nodes `u`.
fn column_product(u: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..u.len() - 1 {
        let h = u[k + 1] - u[k];
        s += h / 6.0 * (2.0 * a[k] * b[k] + a[k] * b[k + 1] + a[k + 1] * b[k] + 2.0 * a[k + 1] * b[k + 1]);
    }
    s
}

pub fn marginal_density(pair: &EigenPair, grid: &MappedGrid) -> MarginalDensity {
    let nx = grid.nx();
    let nu = grid.nu();
    let columns: Vec<Vec<f64>> = (0..nx + 2)
        .map(|i| {
            let mut c = vec![0.0; nu + 2];
            if i >= 1 && i <= nx {
                for k in 1..=nu {
                    c[k] = pair.psi[grid.index(i, k)];
                }
            }
            c
        })
        .collect();
    let column_sq: Vec<f64> = columns.iter().map(|c| column_product(&grid.u, c, c)).collect();
    let column_cross: Vec<f64> = columns.windows(2).map(|w| column_product(&grid.u, &w[0], &w[1])).collect();
    let xi = grid.x.iter().zip(&column_sq).map(|(&x, &a)| grid.profile.f(x) * a).collect();
    MarginalDensity { index: pair.index, ell: pair.ell, profile: grid.profile, x: grid.x.clone(), xi, column_sq, column_cross }
}

impl MarginalDensity {
    /// A marginal given only by nodal samples, interpolated linearly in `x`.
    /// Meant for synthetic inputs.
    pub fn from_samples(index: usize, ell: f64, profile: Profile, x: Vec<f64>, xi: Vec<f64>) -> Self {
        assert_eq!(x.len(), xi.len());
        let column_sq: Vec<f64> = x.iter().zip(&xi).map(|(&x, &v)| v / profile.f(x)).collect();
        let column_cross = column_sq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        MarginalDensity { index, ell, profile, x, xi, column_sq, column_cross }
    }

    /// `∫ g(x) ξ(x) dx` over the grid.
    pub fn integrate(&self, g: &dyn Fn(f64) -> f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.x.len() - 1 {
            let (x0, x1) = (self.x[i], self.x[i + 1]);
            let h = x1 - x0;
            let (a, b, c) = (self.column_sq[i], self.column_cross[i], self.column_sq[i + 1]);
            for (t, w) in GAUSS3_NODES.iter().zip(&GAUSS3_WEIGHTS) {
                let t = 0.5 * (t + 1.0);
                let x = x0 + h * t;
                let q = (1.0 - t) * (1.0 - t) * a + 2.0 * t * (1.0 - t) * b + t * t * c;
                s += 0.5 * w * h * g(x) * self.profile.f(x) * q;
            }
        }
        s
    }

    pub fn total_mass(&self) -> f64 {
        self.integrate(&|_| 1.0)
    }

    /// `(π / f(x))² - ℓ`: positive past the turning point of the lowest
    /// transverse mode.
    pub fn transverse_gap(&self, x: f64) -> f64 {
        let r = PI / self.profile.f(x);
        r * r - self.ell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub x: f64,
    /// `-d log ξ / dx`.
    pub gamma_hat: f64,
    /// Past the turning point `(π/f)² > ℓ`.
    pub in_tail: bool,
}

/// Three-point derivative on a nonuniform stencil at the middle node.
fn derivative3(x: [f64; 3], y: [f64; 3]) -> f64 {
    let h0 = x[1] - x[0];
    let h1 = x[2] - x[1];
    (-h1 / (h0 * (h0 + h1))) * y[0] + ((h1 - h0) / (h0 * h1)) * y[1] + (h0 / (h1 * (h0 + h1))) * y[2]
}

fn second_derivative3(x: [f64; 3], y: [f64; 3]) -> f64 {
    let h0 = x[1] - x[0];
    let h1 = x[2] - x[1];
    2.0 * ((y[2] - y[1]) / h1 - (y[1] - y[0]) / h0) / (h0 + h1)
}

/// Local decay rate at interior nodes whose stencil lies above [`FLOOR`].
pub fn decay_profile(xi: &MarginalDensity) -> Result<Vec<DecayPoint>, SpectralError> {
    let mut out = Vec::new();
    for i in 1..xi.x.len().saturating_sub(1) {
        let y = [xi.xi[i - 1], xi.xi[i], xi.xi[i + 1]];
        if y.iter().any(|&v| !(v > FLOOR)) {
            continue;
        }
        let x = [xi.x[i - 1], xi.x[i], xi.x[i + 1]];
        let g = -derivative3(x, y.map(math::ln));
        out.push(DecayPoint { x: x[1], gamma_hat: g, in_tail: xi.transverse_gap(x[1]) > 0.0 });
    }
    if out.is_empty() {
        return Err(SpectralError::EmptyWindow { length: xi.x.last().copied().unwrap_or(0.0) });
    }
    Ok(out)
}

/// The tail part of a decay profile: past the turning point and before the
/// first drop to the noise floor.
pub fn tail_window(profile: &[DecayPoint]) -> &[DecayPoint] {
    let Some(start) = profile.iter().position(|p| p.in_tail) else { return &profile[..0] };
    let mut end = start;
    while end + 1 < profile.len() && profile[end + 1].in_tail {
        end += 1;
    }
    &profile[start..=end]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: f64,
    pub xi_second: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub tolerance: f64,
    /// Nodes where the inequality was tested.
    pub checked: usize,
    /// First and last tested abscissa.
    pub window: Option<(f64, f64)>,
    pub violations: Vec<Violation>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `ξ'' >= 2 [(π/f)² - ℓ] ξ (1 - tol)` past the turning point.
pub fn verify_diff_inequality(xi: &MarginalDensity, ell: f64, tol: f64) -> InequalityReport {
    let mut checked = 0;
    let mut window: Option<(f64, f64)> = None;
    let mut violations = Vec::new();
    for i in 1..xi.x.len().saturating_sub(1) {
        let y = [xi.xi[i - 1], xi.xi[i], xi.xi[i + 1]];
        if y.iter().any(|&v| !(v > SECOND_DIFF_FLOOR)) {
            continue;
        }
        let x = [xi.x[i - 1], xi.x[i], xi.x[i + 1]];
        let r = PI / xi.profile.f(x[1]);
        let gap = r * r - ell;
        if gap <= 0.0 {
            continue;
        }
        checked += 1;
        window = Some(match window {
            None => (x[1], x[1]),
            Some((a, _)) => (a, x[1]),
        });
        let second = second_derivative3(x, y);
        let bound = 2.0 * gap * y[1] * (1.0 - tol);
        if second < bound {
            violations.push(Violation { x: x[1], xi_second: second, bound });
        }
    }
    InequalityReport { tolerance: tol, checked, window, violations }
}

/// `⟨X⟩ = ∫ x ξ(x) dx`.
pub fn position_expectation(xi: &MarginalDensity) -> f64 {
    xi.integrate(&|x| x)
}

/// `⟨ψ_j, q ψ_k⟩` for the weighted mass matrix `mq` of a multiplier `q(x)`.
pub fn pair_expectation(a: &EigenPair, b: &EigenPair, mq: &Banded) -> f64 {
    mq.quadratic_form(&a.psi, &b.psi)
}

/// All matrix elements `⟨ψ_j, q ψ_k⟩` among `pairs`.
pub fn matrix_elements(pairs: &[EigenPair], mq: &Banded) -> Vec<Vec<f64>> {
    let n = pairs.first().map_or(0, |p| p.psi.len());
    let images: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| {
            let mut y = vec![0.0; n];
            mq.mul_vec(&p.psi, &mut y);
            y
        })
        .collect();
    pairs
        .iter()
        .map(|p| images.iter().map(|img| p.psi.iter().zip(img).map(|(a, b)| a * b).sum()).collect())
        .collect()
}

/// Long-time average of `⟨ψ(t), X ψ(t)⟩` for `ψ(0) = Σ a_j ψ_j`: the double
/// sum of `conj(a_j) a_k ⟨ψ_j, X ψ_k⟩` over pairs with `ℓ_j = ℓ_k` up to a
/// relative `degeneracy_tol`.
pub fn heisenberg_time_average(
    coeffs: &[(usize, Complex<f64>)],
    pairs: &[EigenPair],
    mx: &Banded,
    degeneracy_tol: f64,
) -> Result<f64, SpectralError> {
    let norm: f64 = coeffs.iter().map(|(_, a)| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(SpectralError::NotNormalized(norm));
    }
    let lookup = |j: usize| -> Result<&EigenPair, SpectralError> {
        pairs
            .iter()
            .find(|p| p.index == j)
            .ok_or(SpectralError::IndexOutOfRange { index: j, available: pairs.len() })
    };
    let mut total = Complex::new(0.0, 0.0);
    for &(j, aj) in coeffs {
        let pj = lookup(j)?;
        for &(k, ak) in coeffs {
            let pk = lookup(k)?;
            let scale = pj.ell.abs().max(pk.ell.abs());
            if (pj.ell - pk.ell).abs() <= degeneracy_tol * scale {
                total += aj.conj() * ak * pair_expectation(pj, pk, mx);
            }
        }
    }
    Ok(total.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylPoint {
    pub index: usize,
    pub ell: f64,
    /// `N(ℓ) / (|Q_L| ℓ / 4π)`.
    pub area_ratio: f64,
    /// `N(ℓ)` over the transverse-channel count, see [`channel_count`].
    pub channel_ratio: f64,
}

/// Semiclassical count of Dirichlet modes below `ell` in the thin-channel
/// picture: transverse mode `n` contributes `(1/π) ∫ √(ℓ - (nπ/f)²)₊ dx`
/// minus a quarter for the wall at `x = 0`.
pub fn channel_count(profile: &Profile, length: f64, ell: f64) -> f64 {
    let root = math::sqrt(ell.max(0.0));
    let mut total = 0.0;
    let mut n = 1u32;
    loop {
        let kn = n as f64 * PI;
        if kn / profile.f(0.0) >= root {
            break;
        }
        let end = match profile {
            Profile::Cusp(d) => d.f_inverse(kn / root).min(length),
            Profile::Constant(_) => length,
        };
        let integrand = |x: f64| {
            let r = kn / profile.f(x);
            math::sqrt((ell - r * r).max(0.0))
        };
        let q = quad::adaptive(integrand, 0.0, end, 1e-10, 1e-10);
        total += q.value / PI - 0.25;
        n += 1;
    }
    total
}

/// Counting-function ratios at each computed eigenvalue.
pub fn weyl_ratios(pairs: &[EigenPair], grid: &MappedGrid) -> Vec<WeylPoint> {
    let area = match grid.profile {
        Profile::Cusp(d) => d.truncated_area(grid.length),
        Profile::Constant(b) => b * grid.length,
    };
    pairs
        .iter()
        .map(|p| {
            let n = p.index as f64;
            let weyl = area * p.ell / (4.0 * PI);
            WeylPoint {
                index: p.index,
                ell: p.ell,
                area_ratio: n / weyl,
                channel_ratio: n / channel_count(&grid.profile, grid.length, p.ell),
            }
        })
        .collect()
}
