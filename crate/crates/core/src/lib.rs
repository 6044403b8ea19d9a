//! Numerical evaluation of magnetic Sobolev energies.
//!
//! The crate computes the local magnetic energy `∫ |∇u − iAu|_p^p`, the
//! mollified nonlocal energies built from the phase-corrected comparison
//! `Ψ_u(x, y) = e^{i(x−y)·A((x+y)/2)} u(y)`, the thresholded functionals
//! `J_δ`, their pointwise densities, and the sphere constants `Q_{N,p}`.
//! The [`studies`] module sweeps the concentration parameters and compares the
//! extrapolated limits against `p·Q_{N,p}` (resp. `Q_{N,p}`) times the local
//! energy.
//!
//! All sums go through [`quadrature::pairwise_sum`] in node-index order, so
//! results do not depend on the size of the rayon pool they run in.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fields;
pub mod functionals;
pub mod kernels;
pub mod quadrature;
pub mod studies;

pub use error::{Error, Result};
pub use fields::{
    catalog, lp_modulus, magnetic_gradient, psi, CatalogObject, ComplexVector, ScalarField,
    VectorPotential, MAX_DIM,
};
pub use functionals::EnergyValue;
pub use kernels::{Mollifier, QConstant, Regime};
pub use num_complex::Complex64;
pub use quadrature::{BoxGrid, BoxRule, McSampler, QuadConfig, RadialGrid, SphereRule};
pub use studies::{StudyKind, StudyReport, Verdict};

/// `|S^{N−1}|`, the surface measure of the unit sphere in `R^N`.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        n => {
            // |S^{n-1}| = 2π/(n-2) |S^{n-3}|
            2.0 * std::f64::consts::PI / (n as f64 - 2.0) * sphere_area(n - 2)
        }
    }
}
