//! Bilinear finite elements for `-Δ` with Dirichlet conditions in mapped
//! coordinates.
//!
//! With `y = u f(x)` a function `ψ(x, y) = φ(x, u)` has
//! `∂_x ψ = φ_x - u (f'/f) φ_u`, `∂_y ψ = φ_u / f` and `dx dy = f dx du`.

use crate::quad::{GAUSS3_NODES, GAUSS3_WEIGHTS};

use super::banded::Banded;
use super::grid::MappedGrid;
use super::{SparseOperator, SpectralError};

/// Gauss points and weights on `[0, 1]`.
fn gauss01() -> ([f64; 3], [f64; 3]) {
    let mut p = [0.0; 3];
    let mut w = [0.0; 3];
    for i in 0..3 {
        p[i] = 0.5 * (GAUSS3_NODES[i] + 1.0);
        w[i] = 0.5 * GAUSS3_WEIGHTS[i];
    }
    (p, w)
}

/// Visits each cell with its local-to-global map (`None` for boundary
/// nodes) and the 4 × 4 element contributions produced by `local`.
fn assemble_with<F>(grid: &MappedGrid, targets: &mut [&mut Banded], mut local: F)
where
    F: FnMut(f64, f64, f64, f64, &mut [[[f64; 4]; 4]]),
{
    let nx = grid.nx();
    let nu = grid.nu();
    let mut buf = alloc::vec![[[0.0f64; 4]; 4]; targets.len()];
    for i in 0..=nx {
        let (x0, x1) = (grid.x[i], grid.x[i + 1]);
        for k in 0..=nu {
            let (u0, u1) = (grid.u[k], grid.u[k + 1]);
            for b in buf.iter_mut() {
                *b = [[0.0; 4]; 4];
            }
            local(x0, x1, u0, u1, &mut buf);
            // local node order: (i,k), (i+1,k), (i,k+1), (i+1,k+1)
            let nodes = [(i, k), (i + 1, k), (i, k + 1), (i + 1, k + 1)];
            let glob = nodes.map(|(a, c)| {
                if a >= 1 && a <= nx && c >= 1 && c <= nu {
                    Some(grid.index(a, c))
                } else {
                    None
                }
            });
            for (t, target) in targets.iter_mut().enumerate() {
                for p in 0..4 {
                    let Some(gp) = glob[p] else { continue };
                    for q in 0..=p {
                        let Some(gq) = glob[q] else { continue };
                        target.add(gp, gq, buf[t][p][q]);
                    }
                }
            }
        }
    }
}

/// Shape functions and their `(ξ, η)` derivatives at a reference point.
#[inline]
fn shapes(xi: f64, eta: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let n = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), (1.0 - xi) * eta, xi * eta];
    let dxi = [-(1.0 - eta), 1.0 - eta, -eta, eta];
    let deta = [-(1.0 - xi), -xi, 1.0 - xi, xi];
    (n, dxi, deta)
}

/// Stiffness `A` and mass `M` of the Dirichlet problem `A v = ℓ M v`.
pub fn assemble(grid: &MappedGrid) -> Result<SparseOperator, SpectralError> {
    let n = grid.dim();
    let w = grid.nu() + 1;
    let mut a = Banded::zeros(n, w);
    let mut m = Banded::zeros(n, w);
    let (gp, gw) = gauss01();
    let profile = grid.profile;
    {
        let mut targets = [&mut a, &mut m];
        assemble_with(grid, &mut targets, |x0, x1, u0, u1, out| {
            let (hx, hu) = (x1 - x0, u1 - u0);
            for (ia, &xa) in gp.iter().enumerate() {
                let x = x0 + hx * xa;
                let (f, fp) = profile.eval(x);
                let ratio = fp / f;
                for (ib, &eb) in gp.iter().enumerate() {
                    let u = u0 + hu * eb;
                    let wt = gw[ia] * gw[ib] * f * hx * hu;
                    let (sh, dxi, deta) = shapes(xa, eb);
                    let mut gx = [0.0; 4];
                    let mut gy = [0.0; 4];
                    for p in 0..4 {
                        let phx = dxi[p] / hx;
                        let phu = deta[p] / hu;
                        gx[p] = phx - u * ratio * phu;
                        gy[p] = phu / f;
                    }
                    for p in 0..4 {
                        for q in 0..=p {
                            out[0][p][q] += wt * (gx[p] * gx[q] + gy[p] * gy[q]);
                            out[1][p][q] += wt * sh[p] * sh[q];
                        }
                    }
                }
            }
        });
    }
    if m.cholesky().is_none() {
        return Err(SpectralError::Assembly("mass matrix is not positive definite"));
    }
    Ok(SparseOperator { dim: n, stiffness: a, mass: m })
}

/// Mass matrix weighted by a function of `x`: `∫ q(x) φ χ dx dy`.
pub fn weighted_mass(grid: &MappedGrid, q: &dyn Fn(f64) -> f64) -> Banded {
    let n = grid.dim();
    let mut mw = Banded::zeros(n, grid.nu() + 1);
    let (gp, gw) = gauss01();
    let profile = grid.profile;
    {
        let mut targets = [&mut mw];
        assemble_with(grid, &mut targets, |x0, x1, u0, u1, out| {
            let (hx, hu) = (x1 - x0, u1 - u0);
            for (ia, &xa) in gp.iter().enumerate() {
                let x = x0 + hx * xa;
                let qf = q(x) * profile.f(x);
                for (ib, &eb) in gp.iter().enumerate() {
                    let wt = gw[ia] * gw[ib] * qf * hx * hu;
                    let (sh, _, _) = shapes(xa, eb);
                    for p in 0..4 {
                        for r in 0..=p {
                            out[0][p][r] += wt * sh[p] * sh[r];
                        }
                    }
                }
            }
        });
    }
    mw
}
