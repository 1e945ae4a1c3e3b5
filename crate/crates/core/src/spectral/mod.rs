//! Fourier-side operators on the unit sphere: grids, fields, the step
//! operator S_r, the multiplier F, subspace projectors and norm estimates.

pub mod field;
pub mod grid;
pub mod norm;
pub mod operator;
pub mod projectors;

pub use field::{grid_csv, point_mass_field, restrict, restrict_points, SphericalField};
pub use grid::{gauss_legendre, real_spherical_harmonics, SphereGrid};
pub use norm::{block_norm, norm_decay, operator_norm, spectral_gap_probe, step_norm, GapRow, NormEstimate, NormOptions};
pub use operator::{apply_s_r, f_at_points, f_profile, f_value, propagate, propagate_with, Propagation, StepOperator, OVERFLOW_TOL};
pub use projectors::{build_projectors, ProjectorSet, Subspace};

/// Grid for dimension `d` at the given resolution (nodes on S^1, degree on S^2).
pub fn build_grid(d: usize, resolution: usize) -> crate::Result<SphereGrid> {
    SphereGrid::new(d, resolution)
}
