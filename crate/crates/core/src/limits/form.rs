//! Limit-law parameters: the quadratic form Δ, its θ₀-symmetrization Δ₀,
//! and the drift v₀ with the recentered measure.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::{HaarOptions, RotationGroupModel};
use crate::isometry::{Isometry, Rotation};
use crate::measure::AtomicIsometryMeasure;

/// λ_min > PD_REL_TOL · λ_max counts as positive definite.
pub const PD_REL_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ORBIT: usize = 4096;
/// 2π²: Δ(ξ,ξ) = 2π² E⟨σξ, v⟩² under e(x) = e^{−2πix}.
pub const TWO_PI_SQ: f64 = 2.0 * PI * PI;

const FIXED_SPACE_TOL: f64 = 1e-9;

/// Δ(ξ, ξ) = ξᵀ M ξ with M symmetric positive semidefinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidParameter { name: "form", reason: format!("not symmetric (defect {asym:.3e})") });
        }
        let m = (&m + m.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues.first().is_some_and(|&l| l < -1e-10 * scale) {
            return Err(Error::InvalidParameter { name: "form", reason: format!("negative eigenvalue {:.3e}", eigenvalues[0]) });
        }
        Ok(QuadraticForm { matrix: m, eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        let x = DVector::from_column_slice(xi);
        (x.transpose() * &self.matrix * &x)[(0, 0)]
    }

    pub fn is_positive_definite(&self) -> bool {
        let max = self.eigenvalues.last().copied().unwrap_or(0.0);
        max > 0.0 && self.eigenvalues[0] > PD_REL_TOL * max
    }

    pub fn require_positive_definite(&self) -> Result<&Self> {
        if self.is_positive_definite() {
            Ok(self)
        } else {
            Err(Error::DegenerateForm {
                min_eig: self.eigenvalues[0],
                max_eig: self.eigenvalues.last().copied().unwrap_or(0.0),
            })
        }
    }

    /// Covariance per step of the matching Gaussian: M / (2π²).
    pub fn step_covariance(&self) -> DMatrix<f64> {
        &self.matrix / TWO_PI_SQ
    }

    /// Largest ‖σᵀMσ − M‖ over the group model.
    pub fn invariance_defect(&self, group: &RotationGroupModel) -> f64 {
        group.invariance_defect(&self.matrix)
    }
}

/// M = 2π² · avg_σ Σ w (σᵀv)(σᵀv)ᵀ. The Haar average is the exact projection
/// onto K-invariant matrices (iterated for sampled models).
pub fn compute_delta(mu: &AtomicIsometryMeasure, haar: &RotationGroupModel) -> Result<QuadraticForm> {
    check_dim(mu.dim(), haar.dim())?;
    let second = mu.translation_second_moment() * TWO_PI_SQ;
    QuadraticForm::new(haar.project_invariant_matrix(&second))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Symmetrized {
    pub form: QuadraticForm,
    /// Order of θ₀ when it closes within the orbit budget.
    pub orbit_order: Option<usize>,
    /// max |θ₀ᵀ Δ₀ θ₀ − Δ₀|.
    pub residual: f64,
}

/// Δ₀ = average of θ₀^{−j} Δ θ₀^{j}: exact over a finite orbit, otherwise a
/// Cesàro mean of `max_orbit` terms.
pub fn symmetrize_delta(delta: &QuadraticForm, theta0: &Rotation, max_orbit: usize) -> Result<Symmetrized> {
    check_dim(delta.dim(), theta0.dim())?;
    if max_orbit == 0 {
        return Err(Error::InvalidParameter { name: "max_orbit", reason: "must be at least 1".into() });
    }
    let d = delta.dim();
    let t = theta0.matrix();
    let mut power = DMatrix::<f64>::identity(d, d);
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let mut order = None;
    let mut terms = 0;
    for j in 0..max_orbit {
        if j > 0 && (&power - DMatrix::<f64>::identity(d, d)).amax() <= 1e-9 {
            order = Some(j);
            break;
        }
        acc += power.transpose() * delta.matrix() * &power;
        terms += 1;
        power = t * power;
    }
    let avg = acc / terms as f64;
    let avg = (&avg + avg.transpose()) * 0.5;
    let residual = (t.transpose() * &avg * t - &avg).amax();
    Ok(Symmetrized { form: QuadraticForm::new(avg)?, orbit_order: order, residual })
}

#[derive(Clone, Debug)]
pub struct Drift {
    /// Per-step drift, lying in the common fixed space of the rotations.
    pub v0: DVector<f64>,
    /// Origin of the centered coordinates.
    pub origin: DVector<f64>,
    /// μ in centered coordinates with the drift removed; satisfies (C).
    pub centered: AtomicIsometryMeasure,
}

/// Splits the barycenter into the part in W (the space fixed by every
/// rotation of μ), which is the drift, and the part removed by moving the
/// origin: (I − T)x = b − v₀ solved on W^⊥.
pub fn drift(mu: &AtomicIsometryMeasure) -> Result<Drift> {
    let d = mu.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut stacked = DMatrix::<f64>::zeros(d * mu.len(), d);
    for (i, a) in mu.atoms().iter().enumerate() {
        stacked.view_mut((i * d, 0), (d, d)).copy_from(&(a.isometry.theta.matrix() - &eye));
    }
    let svd = stacked.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let mut proj_w = DMatrix::<f64>::zeros(d, d);
    for k in 0..d {
        if svd.singular_values[k] <= FIXED_SPACE_TOL {
            let row = vt.row(k).transpose();
            proj_w += &row * row.transpose();
        }
    }
    let b = mu.barycenter();
    let v0 = &proj_w * &b;
    let a = &eye - mu.mean_rotation();
    let rhs = &b - &v0;
    let origin = a
        .pseudo_inverse(FIXED_SPACE_TOL)
        .map_err(|e| Error::InvalidMeasure(format!("pseudo-inverse failed: {e}")))?
        * rhs;
    let origin = &origin - &proj_w * &origin;
    let shifted = mu.conjugate_by(&Isometry::translation(origin.clone()))?;
    let atoms = shifted
        .atoms()
        .iter()
        .map(|at| (Isometry::new(at.isometry.theta.clone(), &at.isometry.v - &v0).expect("same dimension"), at.weight))
        .collect();
    let centered = AtomicIsometryMeasure::new(atoms)?;
    Ok(Drift { v0, origin, centered })
}

/// Everything the limit laws need about μ.
#[derive(Clone, Debug)]
pub struct LimitParameters {
    pub drift: Drift,
    pub group: RotationGroupModel,
    pub delta: QuadraticForm,
    pub delta0: Symmetrized,
}

impl LimitParameters {
    pub fn dim(&self) -> usize {
        self.delta.dim()
    }

    /// Δ₀ / (2π²): limiting covariance per step.
    pub fn step_covariance(&self) -> DMatrix<f64> {
        self.delta0.form.step_covariance()
    }

    /// E of the centered walk Y_l − origin − l v₀ started from `x0`.
    pub fn centered_mean(&self, x0: &[f64], l: usize) -> DVector<f64> {
        let start = DVector::from_column_slice(x0) - &self.drift.origin;
        crate::walker::exact_means(&self.drift.centered, start.as_slice(), &[l]).remove(0)
    }

    /// Maps a point of the original walk at step l to centered coordinates.
    pub fn to_centered(&self, y: &[f64], l: usize, out: &mut [f64]) {
        for k in 0..out.len() {
            out[k] = y[k] - self.drift.origin[k] - l as f64 * self.drift.v0[k];
        }
    }
}

pub fn limit_parameters(mu: &AtomicIsometryMeasure, opts: &HaarOptions) -> Result<LimitParameters> {
    limit_parameters_with(mu, |gens| RotationGroupModel::with_options(gens, opts))
}

/// As [`limit_parameters`], with K modeled by `build_group` applied to the
/// rotation generators of the centered measure.
pub fn limit_parameters_with(
    mu: &AtomicIsometryMeasure,
    build_group: impl FnOnce(&[Rotation]) -> Result<RotationGroupModel>,
) -> Result<LimitParameters> {
    let drift = drift(mu)?;
    let group = build_group(&drift.centered.rotation_generators())?;
    check_dim(mu.dim(), group.dim())?;
    let delta = compute_delta(&drift.centered, &group)?;
    let delta0 = symmetrize_delta(&delta, drift.centered.theta0(), DEFAULT_MAX_ORBIT)?;
    Ok(LimitParameters { drift, group, delta, delta0 })
}
