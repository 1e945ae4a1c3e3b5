//! Euclidean isometries `x -> v + θx` stored as a dense orthogonal matrix plus
//! a translation vector.
//!
//! Products follow the semidirect rule `(v1, θ1)(v2, θ2) = (v1 + θ1 v2, θ1 θ2)`,
//! so `compose(g, h)` applies `h` first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Orthogonality defect accepted without touching the matrix.
pub const ORTHO_TOL: f64 = 1e-12;
/// Largest defect that is silently repaired by polar re-orthonormalization
/// (covers rotation matrices typed with ~7 significant digits).
pub const REPAIR_TOL: f64 = 1e-6;

/// An element of O(d).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    m: DMatrix<f64>,
}

fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    let g = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Nearest orthogonal matrix (polar factor U Vᵀ).
fn polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

impl Rotation {
    /// Validates orthogonality; small drift (below [`REPAIR_TOL`]) is repaired.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotOrthogonal { defect: f64::INFINITY });
        }
        let defect = orthogonality_defect(&m);
        if defect <= ORTHO_TOL {
            Ok(Rotation { m })
        } else if defect <= REPAIR_TOL {
            Ok(Rotation { m: polar(&m) })
        } else {
            Err(Error::NotOrthogonal { defect })
        }
    }

    /// Row-major entries.
    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        check_dim(d * d, entries.len())?;
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn identity(d: usize) -> Self {
        Rotation { m: DMatrix::identity(d, d) }
    }

    /// Counter-clockwise rotation of the plane by `angle` radians.
    pub fn planar(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation { m: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) }
    }

    /// Reflection of the plane across the line through the origin at angle `beta`.
    pub fn planar_reflection(beta: f64) -> Self {
        let (s, c) = (2.0 * beta).sin_cos();
        Rotation { m: DMatrix::from_row_slice(2, 2, &[c, s, s, -c]) }
    }

    /// Rotation of R³ about `axis` by `angle` (Rodrigues).
    pub fn about_axis(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Rotation {
            m: DMatrix::from_row_slice(
                3,
                3,
                &[
                    t * x * x + c,
                    t * x * y - s * z,
                    t * x * z + s * y,
                    t * x * y + s * z,
                    t * y * y + c,
                    t * y * z - s * x,
                    t * x * z - s * y,
                    t * y * z + s * x,
                    t * z * z + c,
                ],
            ),
        }
    }

    /// Embeds a planar rotation acting on coordinates `(i, j)` of R^d.
    pub fn givens(d: usize, i: usize, j: usize, angle: f64) -> Self {
        let mut m = DMatrix::identity(d, d);
        let (s, c) = angle.sin_cos();
        m[(i, i)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
        m[(j, j)] = c;
        Rotation { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn determinant(&self) -> f64 {
        self.m.determinant()
    }

    pub fn defect(&self) -> f64 {
        orthogonality_defect(&self.m)
    }

    pub fn inverse(&self) -> Rotation {
        Rotation { m: self.m.transpose() }
    }

    /// `self · other`, re-orthonormalized if rounding drift exceeds [`ORTHO_TOL`].
    pub fn mul(&self, other: &Rotation) -> Result<Rotation> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::mul_unchecked(self, other))
    }

    pub(crate) fn mul_unchecked(a: &Rotation, b: &Rotation) -> Rotation {
        let m = &a.m * &b.m;
        if orthogonality_defect(&m) > ORTHO_TOL {
            Rotation { m: polar(&m) }
        } else {
            Rotation { m }
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(&self.m * x)
    }

    /// Max-norm distance between the matrices.
    pub fn distance(&self, other: &Rotation) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.distance(&Rotation::identity(self.dim())) <= tol
    }

    /// Row-major entries, the order used by measure files and canonical sorting.
    pub fn row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }
}

/// An isometry `x -> v + θx` of R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub theta: Rotation,
    pub v: DVector<f64>,
}

impl Isometry {
    pub fn new(theta: Rotation, v: DVector<f64>) -> Result<Self> {
        check_dim(theta.dim(), v.len())?;
        Ok(Isometry { theta, v })
    }

    pub fn identity(d: usize) -> Self {
        Isometry { theta: Rotation::identity(d), v: DVector::zeros(d) }
    }

    pub fn translation(v: DVector<f64>) -> Self {
        Isometry { theta: Rotation::identity(v.len()), v }
    }

    pub fn from_parts(theta: Rotation, v: &[f64]) -> Result<Self> {
        Self::new(theta, DVector::from_column_slice(v))
    }

    pub fn linear(theta: Rotation) -> Self {
        let d = theta.dim();
        Isometry { theta, v: DVector::zeros(d) }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn rotation(&self) -> &Rotation {
        &self.theta
    }

    pub fn translation_part(&self) -> &DVector<f64> {
        &self.v
    }

    /// `self ∘ other`: `(v1 + θ1 v2, θ1 θ2)`.
    pub fn compose(&self, other: &Isometry) -> Result<Isometry> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.compose_unchecked(other))
    }

    pub(crate) fn compose_unchecked(&self, other: &Isometry) -> Isometry {
        Isometry {
            theta: Rotation::mul_unchecked(&self.theta, &other.theta),
            v: &self.v + self.theta.matrix() * &other.v,
        }
    }

    /// `(-θᵀv, θᵀ)`.
    pub fn invert(&self) -> Isometry {
        let inv = self.theta.inverse();
        let v = -(inv.matrix() * &self.v);
        Isometry { theta: inv, v }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.v + self.theta.matrix() * x
    }

    /// `h⁻¹ ∘ self ∘ h`: the same map written in the coordinates `z = h⁻¹(y)`.
    pub fn conjugate_by(&self, h: &Isometry) -> Result<Isometry> {
        check_dim(self.dim(), h.dim())?;
        Ok(h.invert().compose_unchecked(&self.compose_unchecked(h)))
    }

    /// Max-norm distance over rotation and translation entries.
    pub fn distance(&self, other: &Isometry) -> f64 {
        let dv = self
            .v
            .iter()
            .zip(other.v.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        dv.max(self.theta.distance(&other.theta))
    }

    /// Lexicographic key: rotation entries (row-major) then translation.
    pub(crate) fn sort_key(&self) -> Vec<f64> {
        let mut key = self.theta.row_major();
        key.extend(self.v.iter().copied());
        key
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn e(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn translations_add() {
        let g = Isometry::translation(e(2, 0));
        let h = Isometry::translation(e(2, 1));
        let gh = g.compose(&h).unwrap();
        assert!(gh.theta.is_identity(0.0));
        assert!(close(&gh.v, &DVector::from_vec(vec![1.0, 1.0]), 0.0));
    }

    #[test]
    fn rotation_then_translation_formula() {
        let g = Isometry::linear(Rotation::planar(FRAC_PI_2));
        let h = Isometry::translation(e(2, 0));
        let gh = g.compose(&h).unwrap();
        assert!(close(&gh.v, &e(2, 1), 1e-15));
        assert!(gh.theta.distance(&Rotation::planar(FRAC_PI_2)) < 1e-15);
    }

    #[test]
    fn invert_examples() {
        let g = Isometry::translation(e(2, 0));
        assert!(close(&g.invert().v, &(-e(2, 0)), 0.0));

        let g = Isometry::new(Rotation::planar(FRAC_PI_2), e(2, 0)).unwrap();
        let inv = g.invert();
        let expected_theta = Rotation::planar(-FRAC_PI_2);
        assert!(inv.theta.distance(&expected_theta) < 1e-15);
        let expected_v = -(expected_theta.matrix() * e(2, 0));
        assert!(close(&inv.v, &expected_v, 1e-15));
        assert!(g.compose(&inv).unwrap().distance(&Isometry::identity(2)) < 1e-12);

        let id = Isometry::identity(3);
        assert_eq!(id.invert().distance(&id), 0.0);
    }

    #[test]
    fn apply_examples() {
        let g = Isometry::translation(e(2, 0));
        assert!(close(&g.apply(&DVector::zeros(2)).unwrap(), &e(2, 0), 0.0));

        // rotation by π about the point (1, 0)
        let g = Isometry::new(Rotation::planar(PI), DVector::from_vec(vec![2.0, 0.0])).unwrap();
        let fixed = g.apply(&e(2, 0)).unwrap();
        assert!(close(&fixed, &e(2, 0), 1e-15));
    }

    #[test]
    fn dimension_errors() {
        let g = Isometry::identity(2);
        let h = Isometry::identity(3);
        assert!(matches!(g.compose(&h), Err(Error::DimensionMismatch { .. })));
        assert!(g.apply(&DVector::zeros(3)).is_err());
        assert!(Isometry::new(Rotation::identity(2), DVector::zeros(3)).is_err());
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::from_row_slice(2, &[1.0, 0.1, 0.0, 1.0]).is_err());
        // eight significant digits: repaired
        let r = Rotation::from_row_slice(2, &[0.70710678, -0.70710678, 0.70710678, 0.70710678]).unwrap();
        assert!(r.defect() <= ORTHO_TOL);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let refl = Rotation::planar_reflection(0.3);
        assert!((refl.determinant() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn long_products_stay_orthogonal() {
        let step = Rotation::about_axis([1.0, 2.0, 0.5], 0.7);
        let mut acc = Rotation::identity(3);
        for _ in 0..10_000 {
            acc = acc.mul(&step).unwrap();
        }
        assert!(acc.defect() <= ORTHO_TOL);
    }

    fn random_rotation(d: usize, angles: &[f64]) -> Rotation {
        let mut acc = Rotation::identity(d);
        let mut k = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                acc = acc.mul(&Rotation::givens(d, i, j, angles[k % angles.len()])).unwrap();
                k += 1;
            }
        }
        acc
    }

    fn random_isometry(d: usize, angles: &[f64], v: &[f64]) -> Isometry {
        Isometry::from_parts(random_rotation(d, angles), &v[..d]).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn group_axioms(
            d in 2usize..=4,
            a1 in prop::collection::vec(-PI..PI, 6),
            a2 in prop::collection::vec(-PI..PI, 6),
            v1 in prop::collection::vec(-5.0f64..5.0, 4),
            v2 in prop::collection::vec(-5.0f64..5.0, 4),
            x in prop::collection::vec(-5.0f64..5.0, 4),
            y in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let g = random_isometry(d, &a1, &v1);
            let h = random_isometry(d, &a2, &v2);
            let x = DVector::from_column_slice(&x[..d]);
            let y = DVector::from_column_slice(&y[..d]);
            let lhs = g.compose(&h).unwrap().apply(&x).unwrap();
            let rhs = g.apply(&h.apply(&x).unwrap()).unwrap();
            prop_assert!(close(&lhs, &rhs, 1e-12));
            prop_assert!(g.compose(&g.invert()).unwrap().distance(&Isometry::identity(d)) <= 1e-12);
            let dist = (&x - &y).norm();
            let img = (g.apply(&x).unwrap() - g.apply(&y).unwrap()).norm();
            prop_assert!((dist - img).abs() <= 1e-12);
        }
    }
}
