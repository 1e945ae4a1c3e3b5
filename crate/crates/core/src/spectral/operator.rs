//! The averaged step operator S_r on fields over the sphere.
//!
//! S_r φ(ξ) = Σ w e(r⟨ξ, v⟩) φ(θ⁻¹ξ). Atoms are grouped by rotation, so the
//! operator is Σ_θ M_θ · R_θ with one multiplier per distinct rotation.
//! R_θ is exact pointwise for θ = I and band-limited interpolation otherwise.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::field::SphericalField;
use super::grid::{RotAction, SphereGrid};
use crate::error::{check_dim, Error, Result};
use crate::group::RotationGroupModel;
use crate::isometry::Rotation;
use crate::measure::AtomicIsometryMeasure;
use crate::walker::e_phase;

/// Band energy fraction above which interpolation is considered lossy.
pub const OVERFLOW_TOL: f64 = 1e-6;

const SAME_ROTATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Term {
    rotation: Rotation,
    action: Option<RotAction>,
    multiplier: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct StepOperator {
    grid: Arc<SphereGrid>,
    r: f64,
    terms: Vec<Term>,
}

impl StepOperator {
    pub fn new(mu: &AtomicIsometryMeasure, r: f64, grid: Arc<SphereGrid>) -> Result<Self> {
        check_dim(grid.dim(), mu.dim())?;
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter { name: "r", reason: format!("must be finite and non-negative, got {r}") });
        }
        let n = grid.len();
        let mut terms: Vec<Term> = Vec::new();
        for atom in mu.atoms() {
            let theta = &atom.isometry.theta;
            let idx = match terms.iter().position(|t| t.rotation.distance(theta) <= SAME_ROTATION_TOL) {
                Some(i) => i,
                None => {
                    let action = if theta.is_identity(0.0) { None } else { Some(grid.rotation_action(theta)?) };
                    terms.push(Term { rotation: theta.clone(), action, multiplier: vec![Complex64::new(0.0, 0.0); n] });
                    terms.len() - 1
                }
            };
            let v = &atom.isometry.v;
            let mult = &mut terms[idx].multiplier;
            for (i, m) in mult.iter_mut().enumerate() {
                let t: f64 = grid.node(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                *m += e_phase(r * t) * atom.weight;
            }
        }
        Ok(StepOperator { grid, r, terms })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    /// True when some atom rotates, so fields pass through the band.
    pub fn interpolates(&self) -> bool {
        self.terms.iter().any(|t| t.action.is_some())
    }

    fn rotate(&self, action: &RotAction, coeffs: &[Complex64], adjoint: bool) -> Vec<Complex64> {
        let c = if adjoint { action.apply_adjoint(coeffs) } else { action.apply(coeffs) };
        self.grid.synthesize(&c)
    }

    pub fn apply_values(&self, f: &[Complex64]) -> Vec<Complex64> {
        let coeffs = if self.interpolates() { Some(self.grid.analyze(f)) } else { None };
        let parts: Vec<Vec<Complex64>> = self
            .terms
            .par_iter()
            .map(|t| {
                let rotated;
                let src = match &t.action {
                    None => f,
                    Some(a) => {
                        rotated = self.rotate(a, coeffs.as_ref().expect("analyzed"), false);
                        &rotated[..]
                    }
                };
                src.iter().zip(&t.multiplier).map(|(x, m)| x * m).collect()
            })
            .collect();
        sum_parts(parts, f.len())
    }

    /// Exact adjoint for the weighted inner product of the grid.
    pub fn apply_adjoint_values(&self, f: &[Complex64]) -> Vec<Complex64> {
        let parts: Vec<Vec<Complex64>> = self
            .terms
            .par_iter()
            .map(|t| {
                let g: Vec<Complex64> = f.iter().zip(&t.multiplier).map(|(x, m)| x * m.conj()).collect();
                match &t.action {
                    None => g,
                    Some(a) => self.rotate(a, &self.grid.analyze(&g), true),
                }
            })
            .collect();
        sum_parts(parts, f.len())
    }

    pub fn apply(&self, field: &SphericalField) -> SphericalField {
        SphericalField::new(self.grid.clone(), self.apply_values(&field.values))
    }

    pub fn apply_adjoint(&self, field: &SphericalField) -> SphericalField {
        SphericalField::new(self.grid.clone(), self.apply_adjoint_values(&field.values))
    }

    /// Like [`Self::apply`] but refuses fields that the band cannot carry.
    pub fn apply_strict(&self, field: &SphericalField) -> Result<SphericalField> {
        if self.interpolates() {
            let ratio = field.band_residual();
            if ratio > OVERFLOW_TOL {
                return Err(Error::InterpolationOverflow { ratio });
            }
        }
        Ok(self.apply(field))
    }

    /// Number of distinct rotations among the atoms.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }
}

fn sum_parts(parts: Vec<Vec<Complex64>>, n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for p in parts {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    out
}

/// S_r applied once.
pub fn apply_s_r(mu: &AtomicIsometryMeasure, r: f64, field: &SphericalField) -> Result<SphericalField> {
    Ok(StepOperator::new(mu, r, field.grid.clone())?.apply(field))
}

/// Result of repeated application.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub field: SphericalField,
    /// ‖S_r^k ψ₀‖ for k = 0..=l.
    pub norms: Vec<f64>,
    /// Largest band residual seen before an interpolating step.
    pub max_residual: f64,
}

/// S_r^l ψ₀. In strict mode an interpolation overflow aborts the run.
pub fn propagate(mu: &AtomicIsometryMeasure, r: f64, psi0: &SphericalField, l: usize, strict: bool) -> Result<Propagation> {
    let op = StepOperator::new(mu, r, psi0.grid.clone())?;
    propagate_with(&op, psi0, l, strict)
}

pub fn propagate_with(op: &StepOperator, psi0: &SphericalField, l: usize, strict: bool) -> Result<Propagation> {
    let mut field = psi0.clone();
    let mut norms = vec![field.norm()];
    let mut max_residual: f64 = 0.0;
    for _ in 0..l {
        if op.interpolates() {
            let ratio = field.band_residual();
            max_residual = max_residual.max(ratio);
            if strict && ratio > OVERFLOW_TOL {
                return Err(Error::InterpolationOverflow { ratio });
            }
        }
        field = op.apply(&field);
        norms.push(field.norm());
    }
    Ok(Propagation { field, norms, max_residual })
}

/// F(ξ) = avg_σ Σ w e(r⟨σξ, v⟩) at one point.
pub fn f_value(mu: &AtomicIsometryMeasure, haar: &RotationGroupModel, r: f64, xi: &[f64]) -> Complex64 {
    let d = xi.len();
    let mut total = Complex64::new(0.0, 0.0);
    let mut sx = vec![0.0; d];
    for sigma in haar.elements() {
        let s = sigma.matrix();
        for (i, o) in sx.iter_mut().enumerate() {
            *o = (0..d).map(|j| s[(i, j)] * xi[j]).sum();
        }
        for a in mu.atoms() {
            let t: f64 = sx.iter().zip(a.isometry.v.iter()).map(|(p, q)| p * q).sum();
            total += e_phase(r * t) * a.weight;
        }
    }
    total / haar.len() as f64
}

/// F at every node of the grid.
pub fn f_profile(mu: &AtomicIsometryMeasure, haar: &RotationGroupModel, r: f64, grid: Arc<SphereGrid>) -> Result<SphericalField> {
    check_dim(grid.dim(), mu.dim())?;
    check_dim(grid.dim(), haar.dim())?;
    let values = (0..grid.len()).into_par_iter().map(|i| f_value(mu, haar, r, grid.node(i))).collect();
    Ok(SphericalField::new(grid, values))
}

/// F at arbitrary unit vectors.
pub fn f_at_points(mu: &AtomicIsometryMeasure, haar: &RotationGroupModel, r: f64, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    for p in points {
        check_dim(mu.dim(), p.len())?;
    }
    Ok(points.par_iter().map(|p| f_value(mu, haar, r, p)).collect())
}
