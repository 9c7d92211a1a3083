//! Dirichlet eigenpairs of `-Δ` on the truncated cusp and localization
//! diagnostics of their position marginals.
//!
//! The domain is mapped to a rectangle by `u = y / f(x)`, discretized with
//! bilinear elements and solved as the generalized problem `A v = ℓ M v`.

mod assemble;
mod banded;
mod diagnostics;
mod eigen;
mod grid;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::{assemble, weighted_mass};
pub use banded::{Banded, BandedCholesky};
pub use diagnostics::{
    channel_count, decay_profile, heisenberg_time_average, marginal_density, matrix_elements, pair_expectation,
    position_expectation, tail_window, verify_diff_inequality, weyl_ratios, DecayPoint, InequalityReport, MarginalDensity,
    Violation, WeylPoint, FLOOR, SECOND_DIFF_FLOOR,
};
pub use eigen::{smallest_eigenpairs, EigenOptions};
pub use grid::{MappedGrid, Profile};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    BadGrid(&'static str),
    #[error("assembly failed: {0}")]
    Assembly(&'static str),
    #[error("invalid request: {0}")]
    BadRequest(&'static str),
    #[error("eigensolver did not converge for {requested} pairs (basis {basis}, worst residual {worst_residual:e})")]
    NonConvergence { requested: usize, basis: usize, worst_residual: f64, residuals: Vec<f64> },
    #[error("no reliable tail window below x = {length}; increase the truncation length")]
    EmptyWindow { length: f64 },
    #[error("eigen-index {index} was not computed (have {available})")]
    IndexOutOfRange { index: usize, available: usize },
    #[error("coefficients are not normalized: sum |a|^2 = {0}")]
    NotNormalized(f64),
}

/// Stiffness `A` and mass `M` over the interior nodes of a [`MappedGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub dim: usize,
    pub stiffness: Banded,
    pub mass: Banded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    /// One-based eigen-index.
    pub index: usize,
    pub ell: f64,
    /// Nodal values on the interior nodes, `ψᵀ M ψ = 1`.
    pub psi: Vec<f64>,
    pub residual_norm: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rectangle;
    use alloc::vec;
    use core::f64::consts::PI;
    use nalgebra::Complex;

    fn unit_square(n: usize, k: usize) -> (MappedGrid, Vec<EigenPair>) {
        let g = MappedGrid::rectangle(Rectangle::new(1.0, 1.0).unwrap(), n, n).unwrap();
        let op = assemble(&g).unwrap();
        let pairs = smallest_eigenpairs(&op, k, &EigenOptions::default()).unwrap();
        (g, pairs)
    }

    #[test]
    fn rectangle_spectrum_matches_closed_form() {
        let (_, pairs) = unit_square(48, 10);
        let exact = Rectangle::new(1.0, 1.0).unwrap().dirichlet_spectrum(10);
        for (p, e) in pairs.iter().zip(&exact) {
            assert!(((p.ell - e) / e).abs() < 0.01, "{} vs {e}", p.ell);
        }
        assert!((pairs[0].ell - 2.0 * PI * PI).abs() < 0.01 * 2.0 * PI * PI);
    }

    #[test]
    fn degenerate_pair_is_resolved() {
        let (_, pairs) = unit_square(24, 4);
        let (a, b) = (pairs[1].ell, pairs[2].ell);
        assert!((a - b).abs() <= 1e-9 * a);
        assert!(pairs[3].ell > b * 1.2);
    }

    #[test]
    fn pairs_are_orthonormal_and_accurate() {
        let g = MappedGrid::rectangle(Rectangle::new(2.0, 1.0).unwrap(), 30, 16).unwrap();
        let op = assemble(&g).unwrap();
        let pairs = smallest_eigenpairs(&op, 12, &EigenOptions::default()).unwrap();
        for (i, p) in pairs.iter().enumerate() {
            assert!(p.residual_norm <= 1e-8);
            assert_eq!(p.index, i + 1);
            for q in &pairs[..=i] {
                let ip = op.mass.quadratic_form(&p.psi, &q.psi);
                let want = if p.index == q.index { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "{} {} {ip}", p.index, q.index);
            }
        }
        assert!(pairs.windows(2).all(|w| w[0].ell <= w[1].ell));
    }

    #[test]
    fn assembly_and_solve_are_deterministic() {
        let (g1, p1) = unit_square(16, 5);
        let (g2, p2) = unit_square(16, 5);
        assert_eq!(assemble(&g1).unwrap(), assemble(&g2).unwrap());
        assert_eq!(p1, p2);
    }

    #[test]
    fn operators_are_symmetric() {
        let g = MappedGrid::cusp(crate::CuspDomain::new(1.5).unwrap(), 6.0, 12, 8, 3.0).unwrap();
        let op = assemble(&g).unwrap();
        for i in 0..op.dim {
            for j in 0..op.dim {
                assert_eq!(op.stiffness.get(i, j), op.stiffness.get(j, i));
            }
        }
        assert!(op.stiffness.cholesky().is_some());
    }

    #[test]
    fn ground_state_marginal_and_position() {
        let (g, pairs) = unit_square(64, 1);
        let xi = marginal_density(&pairs[0], &g);
        assert!((xi.total_mass() - 1.0).abs() < 1e-10);
        assert!(xi.xi.iter().all(|&v| v >= -1e-12));
        for (&x, &v) in xi.x.iter().zip(&xi.xi) {
            let s = (PI * x).sin();
            assert!((v - 2.0 * s * s).abs() < 2e-3, "x={x}: {v}");
        }
        assert!((position_expectation(&xi) - 0.5).abs() < 1e-10);
        let report = verify_diff_inequality(&xi, pairs[0].ell, 0.05);
        assert_eq!(report.checked, 0);
        assert!(report.passed());
    }

    #[test]
    fn heisenberg_average_reduces_to_expectations() {
        let (g, pairs) = unit_square(24, 4);
        let mx = weighted_mass(&g, &|x| x);
        let one = heisenberg_time_average(&[(1, Complex::new(1.0, 0.0))], &pairs, &mx, 1e-6).unwrap();
        let x1 = position_expectation(&marginal_density(&pairs[0], &g));
        assert!((one - x1).abs() < 1e-12);
        // different energies: no cross terms
        let c = Complex::new(0.6, 0.0);
        let d = Complex::new(0.0, 0.8);
        let two = heisenberg_time_average(&[(1, c), (4, d)], &pairs, &mx, 1e-6).unwrap();
        let x4 = pair_expectation(&pairs[3], &pairs[3], &mx);
        assert!((two - (0.36 * x1 + 0.64 * x4)).abs() < 1e-12);
        assert!(matches!(
            heisenberg_time_average(&[(7, Complex::new(1.0, 0.0))], &pairs, &mx, 1e-6),
            Err(SpectralError::IndexOutOfRange { index: 7, .. })
        ));
        assert!(heisenberg_time_average(&[(1, c)], &pairs, &mx, 1e-6).is_err());
    }

    #[test]
    fn heisenberg_average_keeps_degenerate_cross_terms() {
        let (g, pairs) = unit_square(24, 3);
        // x² is not diagonal in the computed (rotated) basis of the pair
        let mq = weighted_mass(&g, &|x| x * x);
        let a = Complex::new(0.6, 0.0);
        let b = Complex::new(0.48, -0.64);
        let got = heisenberg_time_average(&[(2, a), (3, b)], &pairs, &mq, 1e-6).unwrap();
        let n = pairs[0].psi.len();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for i in 0..n {
            re[i] = a.re * pairs[1].psi[i] + b.re * pairs[2].psi[i];
            im[i] = a.im * pairs[1].psi[i] + b.im * pairs[2].psi[i];
        }
        let direct = mq.quadratic_form(&re, &re) + mq.quadratic_form(&im, &im);
        assert!((got - direct).abs() < 1e-12);
        let diag = 0.36 * pair_expectation(&pairs[1], &pairs[1], &mq) + 0.64 * pair_expectation(&pairs[2], &pairs[2], &mq);
        let cross = pair_expectation(&pairs[1], &pairs[2], &mq);
        assert!(cross.abs() > 1e-3, "basis happened to be separable");
        assert!((got - diag - 2.0 * (a.conj() * b).re * cross).abs() < 1e-12);
        // closed-form trace over the degenerate subspace: sine integrals of x²
        let trace = pair_expectation(&pairs[1], &pairs[1], &mq) + pair_expectation(&pairs[2], &pairs[2], &mq);
        let exact = (1.0 / 3.0 - 1.0 / (2.0 * PI * PI)) + (1.0 / 3.0 - 1.0 / (8.0 * PI * PI));
        assert!((trace - exact).abs() < 2e-3, "{trace} vs {exact}");
    }

    #[test]
    fn decay_profile_of_an_exponential() {
        let x: Vec<f64> = (0..=60).map(|i| 0.1 * i as f64 * (1.0 + 0.01 * i as f64)).collect();
        let xi: Vec<f64> = x.iter().map(|&x| (-3.0 * x).exp()).collect();
        let m = MarginalDensity::from_samples(1, 1.0, Profile::Constant(1.0), x, xi);
        let prof = decay_profile(&m).unwrap();
        assert_eq!(prof.len(), 59);
        assert!(prof.iter().all(|p| (p.gamma_hat - 3.0).abs() < 1e-6));
    }

    #[test]
    fn decay_profile_rejects_noise() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = MarginalDensity::from_samples(1, 1.0, Profile::Constant(1.0), x, vec![1e-14; 10]);
        assert!(matches!(decay_profile(&m), Err(SpectralError::EmptyWindow { .. })));
    }

    #[test]
    fn inequality_flags_slow_decay() {
        let d = crate::CuspDomain::new(2.0).unwrap();
        let x: Vec<f64> = (0..=40).map(|i| 0.1 * i as f64).collect();
        let xi: Vec<f64> = x.iter().map(|&x| (-x).exp()).collect();
        let m = MarginalDensity::from_samples(1, 20.0, Profile::Cusp(d), x, xi);
        let report = verify_diff_inequality(&m, 20.0, 0.05);
        assert!(report.checked > 30);
        // only the few nodes right at the turning point escape
        assert!(report.violations.len() + 3 >= report.checked);
        assert!(!report.passed());
    }
}
