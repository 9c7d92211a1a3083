//! Boundary-fitted grids in the mapped coordinates `(x, u = y/f(x))`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{CuspDomain, Rectangle};
use crate::math;

use super::SpectralError;

/// Height profile of the table: the cusp, or a constant (rectangle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Cusp(CuspDomain),
    Constant(f64),
}

impl Profile {
    /// `(f(x), f'(x))`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match self {
            Profile::Cusp(d) => d.f_and_slope(x),
            Profile::Constant(b) => (*b, 0.0),
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}

/// Tensor grid on `[0, L] × [0, 1]`, nodes including the boundary; the
/// unknowns are the `nx × nu` interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedGrid {
    pub profile: Profile,
    pub length: f64,
    /// `nx + 2` abscissae from 0 to `length`.
    pub x: Vec<f64>,
    /// `nu + 2` uniform mapped heights from 0 to 1.
    pub u: Vec<f64>,
}

fn uniform(n_cells: usize, length: f64) -> Vec<f64> {
    (0..=n_cells).map(|i| length * i as f64 / n_cells as f64).collect()
}

/// Nodes of `n_cells` cells on `[0, length]` whose widths grow geometrically
/// with `h_last / h_first = stretch`.
fn geometric(n_cells: usize, length: f64, stretch: f64) -> Vec<f64> {
    if n_cells < 2 || (stretch - 1.0).abs() < 1e-12 {
        return uniform(n_cells, length);
    }
    let r = math::powf(stretch, 1.0 / (n_cells - 1) as f64);
    let h0 = length * (r - 1.0) / (math::powf(r, n_cells as f64) - 1.0);
    let mut x = Vec::with_capacity(n_cells + 1);
    let mut acc = 0.0;
    let mut h = h0;
    x.push(0.0);
    for _ in 1..n_cells {
        acc += h;
        x.push(acc);
        h *= r;
    }
    x.push(length);
    x
}

impl MappedGrid {
    /// Grid on the cusp truncated at `length`, with `nx × nu` interior nodes.
    pub fn cusp(domain: CuspDomain, length: f64, nx: usize, nu: usize, stretch: f64) -> Result<Self, SpectralError> {
        if !(length >= 5.0 && length.is_finite()) {
            return Err(SpectralError::BadGrid("truncation length must be at least 5"));
        }
        if nx < 8 || nu < 8 {
            return Err(SpectralError::BadGrid("grids need at least 8 interior nodes per direction"));
        }
        if !(stretch >= 1.0 && stretch.is_finite()) {
            return Err(SpectralError::BadGrid("stretch factor must be finite and at least 1"));
        }
        Ok(MappedGrid { profile: Profile::Cusp(domain), length, x: geometric(nx + 1, length, stretch), u: uniform(nu + 1, 1.0) })
    }

    /// Uniform grid on a rectangle.
    pub fn rectangle(rect: Rectangle, nx: usize, nu: usize) -> Result<Self, SpectralError> {
        if nx < 8 || nu < 8 {
            return Err(SpectralError::BadGrid("grids need at least 8 interior nodes per direction"));
        }
        Ok(MappedGrid {
            profile: Profile::Constant(rect.height),
            length: rect.width,
            x: uniform(nx + 1, rect.width),
            u: uniform(nu + 1, 1.0),
        })
    }

    pub fn nx(&self) -> usize {
        self.x.len() - 2
    }

    pub fn nu(&self) -> usize {
        self.u.len() - 2
    }

    pub fn dim(&self) -> usize {
        self.nx() * self.nu()
    }

    /// Unknown index of interior node `(i, k)`, `1 <= i <= nx`, `1 <= k <= nu`.
    #[inline]
    pub fn index(&self, i: usize, k: usize) -> usize {
        (i - 1) * self.nu() + (k - 1)
    }

    /// `h_last / h_first` of the x-grid.
    pub fn stretch_factor(&self) -> f64 {
        let n = self.x.len();
        (self.x[n - 1] - self.x[n - 2]) / (self.x[1] - self.x[0])
    }

    /// The same grid continued past `length` to `new_length`: every existing
    /// node is kept and cell widths keep growing by the same ratio, so the
    /// discrete spaces are nested.
    pub fn extend_to(&self, new_length: f64) -> Result<Self, SpectralError> {
        if !(new_length > self.length) {
            return Err(SpectralError::BadGrid("extension must increase the length"));
        }
        let n = self.x.len();
        let h_last = self.x[n - 1] - self.x[n - 2];
        let r = if n >= 3 { h_last / (self.x[n - 2] - self.x[n - 3]) } else { 1.0 };
        let mut x = self.x.clone();
        let mut h = h_last * r;
        let mut acc = self.length;
        while acc + h < new_length {
            acc += h;
            x.push(acc);
            h *= r;
        }
        let last_gap = new_length - acc;
        if x.len() > n && last_gap < 0.3 * (h / r) {
            x.pop();
        }
        x.push(new_length);
        Ok(MappedGrid { x, length: new_length, ..self.clone() })
    }

    /// Physical position of node `(i, k)`.
    pub fn position(&self, i: usize, k: usize) -> (f64, f64) {
        let x = self.x[i];
        (x, self.u[k] * self.profile.f(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_grid_matches_stretch() {
        let d = CuspDomain::new(2.0).unwrap();
        let g = MappedGrid::cusp(d, 20.0, 99, 10, 30.0).unwrap();
        assert_eq!(g.x.len(), 101);
        assert!((g.stretch_factor() - 30.0).abs() < 1e-8);
        assert!((g.x[100] - 20.0).abs() < 1e-15);
        assert!(g.x.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn extension_keeps_nodes() {
        let d = CuspDomain::new(2.0).unwrap();
        let g = MappedGrid::cusp(d, 20.0, 60, 10, 20.0).unwrap();
        let e = g.extend_to(30.0).unwrap();
        assert_eq!(&e.x[..g.x.len() - 1], &g.x[..g.x.len() - 1]);
        assert!(e.x.contains(&20.0));
        assert_eq!(*e.x.last().unwrap(), 30.0);
        assert!(e.x.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_small_grids() {
        let d = CuspDomain::new(2.0).unwrap();
        assert!(MappedGrid::cusp(d, 20.0, 7, 10, 1.0).is_err());
        assert!(MappedGrid::cusp(d, 4.0, 10, 10, 1.0).is_err());
    }
}
