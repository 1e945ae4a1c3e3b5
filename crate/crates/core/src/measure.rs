//! Finitely supported probability measures on Isom(R^d).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::isometry::{Isometry, Rotation};

/// Atoms closer than this (max norm over all entries) are merged.
pub const MERGE_TOL: f64 = 1e-9;
pub const DEFAULT_ATOM_CAP: usize = 1_000_000;
const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Smallest singular value of I − T below which the fixed point is not unique.
pub const FIXED_POINT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Atom {
    pub isometry: Isometry,
    pub weight: f64,
}

/// μ = Σ w_i δ_{γ_i}; atoms are merged and kept in canonical order
/// (lexicographic in rotation entries, then translation entries).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomicIsometryMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

/// Merges items whose keys agree within `tol` in max norm, then sorts the
/// survivors lexicographically. Returns (representative index, total weight).
pub(crate) fn merge_by_key(keys: &[Vec<f64>], weights: &[f64], tol: f64) -> Vec<(usize, f64)> {
    if keys.is_empty() {
        return Vec::new();
    }
    let len = keys[0].len();
    // fixed positive projection weights summing to 1: |p(a) - p(b)| <= max|a - b|
    let coef: Vec<f64> = (0..len).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let total: f64 = coef.iter().sum();
    let proj = |k: &[f64]| k.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>() / total;

    let mut order: Vec<(f64, usize)> = keys.iter().enumerate().map(|(i, k)| (proj(k), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut reps: Vec<(f64, usize, f64)> = Vec::new();
    for &(p, i) in &order {
        let mut target = None;
        for (j, rep) in reps.iter().enumerate().rev() {
            if p - rep.0 > tol {
                break;
            }
            let close = keys[rep.1].iter().zip(&keys[i]).all(|(a, b)| (a - b).abs() <= tol);
            if close {
                target = Some(j);
                break;
            }
        }
        match target {
            Some(j) => reps[j].2 += weights[i],
            None => reps.push((p, i, weights[i])),
        }
    }
    let mut out: Vec<(usize, f64)> = reps.into_iter().map(|(_, i, w)| (i, w)).collect();
    out.sort_by(|a, b| {
        keys[a.0]
            .iter()
            .zip(&keys[b.0])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

impl AtomicIsometryMeasure {
    /// Weights must be positive and sum to 1 within 1e-12.
    pub fn new(atoms: Vec<(Isometry, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Self::build(atoms)
    }

    /// Rescales positive weights to total mass 1.
    pub fn normalized(atoms: Vec<(Isometry, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMeasure(format!("total mass {total}")));
        }
        Self::build(atoms.into_iter().map(|(g, w)| (g, w / total)).collect())
    }

    pub fn dirac(g: Isometry) -> Self {
        AtomicIsometryMeasure { dim: g.dim(), atoms: vec![Atom { isometry: g, weight: 1.0 }] }
    }

    fn build(atoms: Vec<(Isometry, f64)>) -> Result<Self> {
        let first = atoms.first().ok_or_else(|| Error::InvalidMeasure("no atoms".into()))?;
        let dim = first.0.dim();
        for (g, w) in &atoms {
            check_dim(dim, g.dim())?;
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
            }
        }
        Ok(Self::from_merged(dim, atoms))
    }

    fn from_merged(dim: usize, atoms: Vec<(Isometry, f64)>) -> Self {
        let keys: Vec<Vec<f64>> = atoms.iter().map(|(g, _)| g.sort_key()).collect();
        let weights: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        let merged = merge_by_key(&keys, &weights, MERGE_TOL);
        let atoms = merged
            .into_iter()
            .map(|(i, w)| Atom { isometry: atoms[i].0.clone(), weight: w })
            .collect();
        AtomicIsometryMeasure { dim, atoms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// μ * ν: law of g·h with g ~ μ, h ~ ν independent.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.convolve_capped(other, DEFAULT_ATOM_CAP)
    }

    pub fn convolve_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let count = self.len().saturating_mul(other.len());
        if count > cap {
            return Err(Error::AtomExplosion { count, cap });
        }
        let mut atoms = Vec::with_capacity(count);
        for a in &self.atoms {
            for b in &other.atoms {
                atoms.push((a.isometry.compose_unchecked(&b.isometry), a.weight * b.weight));
            }
        }
        Ok(Self::from_merged(self.dim, atoms))
    }

    /// μ^{*(k)}; k = 0 gives δ_identity.
    pub fn power(&self, k: usize, cap: usize) -> Result<Self> {
        let mut acc = Self::dirac(Isometry::identity(self.dim));
        for _ in 0..k {
            acc = acc.convolve_capped(self, cap)?;
        }
        Ok(acc)
    }

    /// μ̃: pushforward under inversion.
    pub fn reverse(&self) -> Self {
        let atoms = self.atoms.iter().map(|a| (a.isometry.invert(), a.weight)).collect();
        Self::from_merged(self.dim, atoms)
    }

    /// μ̃ * μ.
    pub fn symmetrize(&self) -> Result<Self> {
        self.reverse().convolve(self)
    }

    /// θ(μ), merged at [`MERGE_TOL`].
    pub fn rotation_marginal(&self) -> Vec<(Rotation, f64)> {
        let keys: Vec<Vec<f64>> = self.atoms.iter().map(|a| a.isometry.theta.row_major()).collect();
        let weights: Vec<f64> = self.atoms.iter().map(|a| a.weight).collect();
        merge_by_key(&keys, &weights, MERGE_TOL)
            .into_iter()
            .map(|(i, w)| (self.atoms[i].isometry.theta.clone(), w))
            .collect()
    }

    /// ∫ |v(γ)|^order dμ(γ).
    pub fn moment(&self, order: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                if order == 0.0 {
                    a.weight
                } else {
                    a.weight * a.isometry.v.norm().powf(order)
                }
            })
            .sum()
    }

    /// ∫ γ(0) dμ.
    pub fn barycenter(&self) -> DVector<f64> {
        self.atoms.iter().fold(DVector::zeros(self.dim), |acc, a| acc + &a.isometry.v * a.weight)
    }

    /// T = ∫ θ(γ) dμ.
    pub fn mean_rotation(&self) -> DMatrix<f64> {
        self.atoms
            .iter()
            .fold(DMatrix::zeros(self.dim, self.dim), |acc, a| acc + a.isometry.theta.matrix() * a.weight)
    }

    /// Second moment matrix ∫ v vᵀ dμ of the translation parts.
    pub fn translation_second_moment(&self) -> DMatrix<f64> {
        self.atoms.iter().fold(DMatrix::zeros(self.dim, self.dim), |acc, a| {
            acc + &a.isometry.v * a.isometry.v.transpose() * a.weight
        })
    }

    /// Every atom rewritten as h⁻¹ γ h.
    pub fn conjugate_by(&self, h: &Isometry) -> Result<Self> {
        check_dim(self.dim, h.dim())?;
        let hinv = h.invert();
        let atoms = self
            .atoms
            .iter()
            .map(|a| (hinv.compose_unchecked(&a.isometry.compose_unchecked(h)), a.weight))
            .collect();
        Ok(Self::from_merged(self.dim, atoms))
    }

    /// Unique x with ∫γ(x)dμ = x, and μ rewritten with x as the origin, so
    /// that the result satisfies condition (C).
    pub fn center(&self) -> Result<(Self, DVector<f64>)> {
        let a = DMatrix::<f64>::identity(self.dim, self.dim) - self.mean_rotation();
        let sigma_min = a.clone().svd(false, false).singular_values.min();
        if sigma_min < FIXED_POINT_TOL {
            return Err(Error::NonUniqueFixedPoint { sigma_min });
        }
        let x = a
            .lu()
            .solve(&self.barycenter())
            .ok_or(Error::NonUniqueFixedPoint { sigma_min })?;
        let centered = self.conjugate_by(&Isometry::translation(x.clone()))?;
        Ok((centered, x))
    }

    /// Atom-set equality within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim
            && self.len() == other.len()
            && self.atoms.iter().all(|a| {
                other
                    .atoms
                    .iter()
                    .any(|b| a.isometry.distance(&b.isometry) <= tol && (a.weight - b.weight).abs() <= tol)
            })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.approx_eq(&self.reverse(), tol)
    }

    /// Distinct rotations θ(g)⁻¹θ(h) over atom pairs: generators of K.
    pub fn rotation_generators(&self) -> Vec<Rotation> {
        let rots: Vec<Rotation> = self.rotation_marginal().into_iter().map(|(r, _)| r).collect();
        let mut out: Vec<Rotation> = Vec::new();
        for a in &rots {
            for b in &rots {
                let g = Rotation::mul_unchecked(&a.inverse(), b);
                if !out.iter().any(|o| o.distance(&g) <= MERGE_TOL) {
                    out.push(g);
                }
            }
        }
        out
    }

    /// Rotation part of the first atom in canonical order.
    pub fn theta0(&self) -> &Rotation {
        &self.atoms[0].isometry.theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn t(v: &[f64]) -> Isometry {
        Isometry::translation(DVector::from_column_slice(v))
    }

    fn mu_t() -> AtomicIsometryMeasure {
        AtomicIsometryMeasure::new(vec![(t(&[1.0, 0.0]), 0.5), (t(&[-1.0, 0.0]), 0.5)]).unwrap()
    }

    fn translation_weights(m: &AtomicIsometryMeasure) -> Vec<(f64, f64)> {
        m.atoms().iter().map(|a| (a.isometry.v[0], a.weight)).collect()
    }

    #[test]
    fn dirac_convolution() {
        let g = Isometry::new(Rotation::planar(0.4), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let h = Isometry::new(Rotation::planar(-1.3), DVector::from_vec(vec![0.5, -1.0])).unwrap();
        let c = AtomicIsometryMeasure::dirac(g.clone()).convolve(&AtomicIsometryMeasure::dirac(h.clone())).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.atoms()[0].isometry.distance(&g.compose(&h).unwrap()) < 1e-15);
    }

    #[test]
    fn binomial_convolution() {
        let m = mu_t();
        let c = m.convolve(&m).unwrap();
        assert_eq!(translation_weights(&c), vec![(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
    }

    #[test]
    fn identity_is_neutral() {
        let m = mu_t();
        let c = m.convolve(&AtomicIsometryMeasure::dirac(Isometry::identity(2))).unwrap();
        assert!(c.approx_eq(&m, 0.0));
    }

    #[test]
    fn reverse_examples() {
        let m = mu_t();
        assert!(m.reverse().approx_eq(&m, 0.0));
        let g = Isometry::new(Rotation::planar(FRAC_PI_2), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let r = AtomicIsometryMeasure::dirac(g.clone()).reverse();
        let rm = Rotation::planar(-FRAC_PI_2);
        let expected = Isometry::new(rm.clone(), -(rm.matrix() * DVector::from_vec(vec![1.0, 0.0]))).unwrap();
        assert!(r.atoms()[0].isometry.distance(&expected) < 1e-15);
    }

    #[test]
    fn symmetrize_examples() {
        let g = Isometry::new(Rotation::planar(0.7), DVector::from_vec(vec![1.0, 3.0])).unwrap();
        let s = AtomicIsometryMeasure::dirac(g).symmetrize().unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.atoms()[0].isometry.distance(&Isometry::identity(2)) < 1e-12);
        let s = mu_t().symmetrize().unwrap();
        assert_eq!(translation_weights(&s), vec![(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
    }

    #[test]
    fn rotation_marginal_examples() {
        let m = mu_t();
        let marg = m.rotation_marginal();
        assert_eq!(marg.len(), 1);
        assert!(marg[0].0.is_identity(0.0) && marg[0].1 == 1.0);
        let r = Rotation::planar(FRAC_PI_2);
        let m = AtomicIsometryMeasure::new(vec![
            (Isometry::new(r.clone(), DVector::from_vec(vec![1.0, 0.0])).unwrap(), 0.5),
            (Isometry::new(r.clone(), DVector::from_vec(vec![0.0, 1.0])).unwrap(), 0.5),
        ])
        .unwrap();
        let marg = m.rotation_marginal();
        assert_eq!(marg.len(), 1);
        assert!(marg[0].0.distance(&r) < 1e-15);
        assert!((marg[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        assert!((mu_t().moment(2.0) - 1.0).abs() < 1e-15);
        assert_eq!(mu_t().moment(0.0), 1.0);
        let m = AtomicIsometryMeasure::dirac(t(&[3.0, 0.0]));
        assert!((m.moment(3.0) - 27.0).abs() < 1e-12);
    }

    #[test]
    fn center_examples() {
        let m = mu_t();
        assert!(matches!(m.center(), Err(Error::NonUniqueFixedPoint { .. })));

        let g = Isometry::new(Rotation::planar(PI), DVector::from_vec(vec![2.0, 0.0])).unwrap();
        let (c, x) = AtomicIsometryMeasure::dirac(g).center().unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 0.0])).amax() < 1e-15);
        assert!(c.barycenter().amax() < 1e-10);

        // already centered: fixed point 0 and unchanged
        let r = Rotation::planar(2.0 * PI / 3.0);
        let atoms = (0..3)
            .map(|k| {
                let rk = Rotation::planar(2.0 * PI * k as f64 / 3.0);
                (Isometry::new(r.clone(), rk.matrix() * DVector::from_vec(vec![1.0, 0.0])).unwrap(), 1.0 / 3.0)
            })
            .collect();
        let m = AtomicIsometryMeasure::normalized(atoms).unwrap();
        let (c, x) = m.center().unwrap();
        assert!(x.amax() < 1e-15);
        assert!(c.approx_eq(&m, 1e-15));
    }

    #[test]
    fn invalid_measures() {
        assert!(AtomicIsometryMeasure::new(vec![(t(&[1.0]), 0.5)]).is_err());
        assert!(AtomicIsometryMeasure::new(vec![(t(&[1.0]), 1.5), (t(&[0.0]), -0.5)]).is_err());
        assert!(AtomicIsometryMeasure::new(vec![]).is_err());
        assert!(AtomicIsometryMeasure::new(vec![(t(&[1.0]), 0.5), (t(&[1.0, 0.0]), 0.5)]).is_err());
    }

    #[test]
    fn near_duplicates_merge() {
        let m = AtomicIsometryMeasure::new(vec![(t(&[1.0, 0.0]), 0.5), (t(&[1.0 + 1e-12, 0.0]), 0.5)]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].weight, 1.0);
    }

    #[test]
    fn atom_explosion() {
        let m = mu_t();
        assert!(matches!(m.power(4, 6), Err(Error::AtomExplosion { .. })));
    }

    fn small_measure() -> impl Strategy<Value = AtomicIsometryMeasure> {
        prop::collection::vec((-PI..PI, -2.0f64..2.0, -2.0f64..2.0, 0.1f64..1.0), 1..=3).prop_map(|atoms| {
            AtomicIsometryMeasure::normalized(
                atoms
                    .into_iter()
                    .map(|(a, x, y, w)| (Isometry::new(Rotation::planar(a), DVector::from_vec(vec![x, y])).unwrap(), w))
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn convolution_is_associative(a in small_measure(), b in small_measure(), c in small_measure()) {
            let left = a.convolve(&b).unwrap().convolve(&c).unwrap();
            let right = a.convolve(&b.convolve(&c).unwrap()).unwrap();
            prop_assert!(left.approx_eq(&right, 1e-12));
        }

        #[test]
        fn reverse_is_weight_preserving_involution(a in small_measure()) {
            let r = a.reverse();
            prop_assert!((r.total_mass() - 1.0).abs() < 1e-12);
            prop_assert!(r.reverse().approx_eq(&a, 1e-12));
        }

        #[test]
        fn symmetrization_is_symmetric(a in small_measure()) {
            let s = a.symmetrize().unwrap();
            prop_assert!(s.is_symmetric(1e-12));
            let marg = s.rotation_marginal();
            prop_assert!((marg.iter().map(|m| m.1).sum::<f64>() - 1.0).abs() < 1e-12);
            for (rot, _) in &marg {
                let found = a.atoms().iter().any(|g| a.atoms().iter().any(|h| {
                    g.isometry.theta.inverse().mul(&h.isometry.theta).unwrap().distance(rot) <= 1e-9
                }));
                prop_assert!(found);
            }
        }

        #[test]
        fn centering_gives_condition_c(a in small_measure()) {
            if let Ok((c, _)) = a.center() {
                prop_assert!(c.barycenter().amax() <= 1e-9);
            }
        }

        #[test]
        fn second_moment_grows_linearly(a in small_measure(), l in 1usize..=6) {
            if let Ok((c, _)) = a.center() {
                let p = c.power(l, 1_000_000).unwrap();
                let expected = l as f64 * c.moment(2.0);
                prop_assert!((p.moment(2.0) - expected).abs() <= 1e-10 * (1.0 + expected));
            }
        }
    }
}
