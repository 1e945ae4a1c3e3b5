//! Discrete models of the compact rotation group K and its Haar measure.
//!
//! A finite group is enumerated exactly; any other closed group is represented
//! by random words in its generators, which equidistribute towards Haar
//! measure as the word length grows.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::isometry::Rotation;
use crate::rng;

/// Max-norm tolerance under which two group elements are identified.
pub const DEDUP_TOL: f64 = 1e-9;
pub const DEFAULT_WORD_LENGTH: usize = 64;
pub const DEFAULT_MAX_ORDER: usize = 4096;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum GroupKind {
    Finite {
        generators: Vec<Rotation>,
    },
    Ergodic {
        generators: Vec<Rotation>,
        word_length: usize,
        sample_count: usize,
        seed: u64,
    },
}

/// Elements (finite kind) or Haar samples (ergodic kind), uniformly weighted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationGroupModel {
    kind: GroupKind,
    dim: usize,
    elements: Vec<Rotation>,
}

fn common_dim(generators: &[Rotation]) -> Result<usize> {
    let first = generators.first().ok_or(Error::EmptyGenerators)?;
    let d = first.dim();
    for g in generators {
        check_dim(d, g.dim())?;
    }
    Ok(d)
}

fn position(elements: &[Rotation], r: &Rotation, tol: f64) -> Option<usize> {
    elements.iter().position(|e| e.distance(r) <= tol)
}

/// Enumerates the group generated by `generators`, failing once more than
/// `max_order` distinct elements have appeared.
pub fn close_finite_group(generators: &[Rotation], max_order: usize) -> Result<RotationGroupModel> {
    if max_order == 0 {
        return Err(Error::InvalidParameter { name: "max_order", reason: "must be at least 1".into() });
    }
    let d = common_dim(generators)?;
    let mut elements = vec![Rotation::identity(d)];
    let mut frontier = 0;
    while frontier < elements.len() {
        let current = elements[frontier].clone();
        frontier += 1;
        for g in generators {
            let p = Rotation::mul_unchecked(g, &current);
            if position(&elements, &p, DEDUP_TOL).is_none() {
                elements.push(p);
                if elements.len() > max_order {
                    return Err(Error::GroupNotFinite { max_order });
                }
            }
        }
    }
    Ok(RotationGroupModel {
        kind: GroupKind::Finite { generators: generators.to_vec() },
        dim: d,
        elements,
    })
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

/// Haar samples as random words of `word_length` letters drawn uniformly from
/// the generators, their inverses and the identity.
pub fn ergodic_haar(
    generators: &[Rotation],
    word_length: usize,
    samples: usize,
    seed: u64,
) -> Result<RotationGroupModel> {
    if word_length == 0 {
        return Err(Error::InvalidParameter { name: "word_length", reason: "must be at least 1".into() });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "must be at least 1".into() });
    }
    let d = common_dim(generators)?;
    let mut letters: Vec<Vec<f64>> = Vec::with_capacity(2 * generators.len() + 1);
    for g in generators {
        letters.push(g.row_major());
        letters.push(g.inverse().row_major());
    }
    letters.push(Rotation::identity(d).row_major());

    let mut elements = Vec::with_capacity(samples);
    let mut acc = vec![0.0; d * d];
    let mut tmp = vec![0.0; d * d];
    for s in 0..samples {
        let mut rng = rng::stream(seed, s as u64);
        acc.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..d {
            acc[i * d + i] = 1.0;
        }
        for step in 0..word_length {
            let letter = &letters[rng.gen_range(0..letters.len())];
            matmul_into(letter, &acc, &mut tmp, d);
            std::mem::swap(&mut acc, &mut tmp);
            if step % 256 == 255 {
                // rounding drift; Rotation::new repairs it
                acc = Rotation::new(DMatrix::from_row_slice(d, d, &acc))?.row_major();
            }
        }
        elements.push(Rotation::new(DMatrix::from_row_slice(d, d, &acc))?);
    }
    Ok(RotationGroupModel {
        kind: GroupKind::Ergodic {
            generators: generators.to_vec(),
            word_length,
            sample_count: samples,
            seed,
        },
        dim: d,
        elements,
    })
}

/// How to build a group model from generators: exact closure up to
/// `max_order` elements, otherwise `samples` words of `word_length` letters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaarOptions {
    pub max_order: usize,
    pub word_length: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for HaarOptions {
    fn default() -> Self {
        HaarOptions { max_order: DEFAULT_MAX_ORDER, word_length: DEFAULT_WORD_LENGTH, samples: 4096, seed: 0 }
    }
}

impl RotationGroupModel {
    pub fn trivial(d: usize) -> Self {
        RotationGroupModel {
            kind: GroupKind::Finite { generators: vec![Rotation::identity(d)] },
            dim: d,
            elements: vec![Rotation::identity(d)],
        }
    }

    /// Exact enumeration when the closure has at most `max_order` elements,
    /// otherwise the ergodic word model.
    pub fn from_generators(
        generators: &[Rotation],
        max_order: usize,
        word_length: usize,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        match close_finite_group(generators, max_order) {
            Ok(model) => Ok(model),
            Err(Error::GroupNotFinite { .. }) => ergodic_haar(generators, word_length, samples, seed),
            Err(e) => Err(e),
        }
    }

    pub fn with_options(generators: &[Rotation], opts: &HaarOptions) -> Result<Self> {
        Self::from_generators(generators, opts.max_order, opts.word_length, opts.samples, opts.seed)
    }

    /// Model of K, the closed group generated by θ(g)⁻¹θ(h) for atoms g, h of μ.
    pub fn for_measure(mu: &crate::measure::AtomicIsometryMeasure, opts: &HaarOptions) -> Result<Self> {
        Self::with_options(&mu.rotation_generators(), opts)
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.kind, GroupKind::Finite { .. })
    }

    pub fn generators(&self) -> &[Rotation] {
        match &self.kind {
            GroupKind::Finite { generators } | GroupKind::Ergodic { generators, .. } => generators,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[Rotation] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Uniform average of `f` over the elements.
    pub fn average<F: Fn(&Rotation) -> f64>(&self, f: F) -> f64 {
        self.elements.iter().map(f).sum::<f64>() / self.elements.len() as f64
    }

    /// Mean of σv over the model.
    pub fn average_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(v.len());
        for s in &self.elements {
            acc += s.matrix() * v;
        }
        acc / self.elements.len() as f64
    }

    /// Mean of σᵀ M σ over the model (one pass).
    pub fn average_conjugation(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(m.nrows(), m.ncols());
        for s in &self.elements {
            let sm = s.matrix();
            acc += sm.transpose() * m * sm;
        }
        acc / self.elements.len() as f64
    }

    /// Projection of a matrix onto the K-invariant matrices.
    ///
    /// Finite models need a single pass. For word samples the one-pass average
    /// carries O(1/√samples) noise on the non-invariant part; repeating the
    /// average (equivalently, averaging over longer words) shrinks it
    /// geometrically while invariant matrices are fixed exactly.
    pub fn project_invariant_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut cur = self.average_conjugation(m);
        if self.is_finite() {
            return cur;
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        for _ in 0..64 {
            let next = self.average_conjugation(&cur);
            let change = (&next - &cur).amax();
            cur = next;
            if change <= 1e-15 * scale {
                break;
            }
        }
        cur
    }

    /// Largest ‖σᵀMσ − M‖ (max norm) over the model elements.
    pub fn invariance_defect(&self, m: &DMatrix<f64>) -> f64 {
        self.elements
            .iter()
            .map(|s| (s.matrix().transpose() * m * s.matrix() - m).amax())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn golden_angle() -> f64 {
        2.0 * PI * (5f64.sqrt() - 1.0) / 2.0
    }

    #[test]
    fn cyclic_group_of_order_four() {
        let g = close_finite_group(&[Rotation::planar(FRAC_PI_2)], 8).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.is_finite());
        assert!(g.elements().iter().any(|e| e.is_identity(1e-12)));
    }

    #[test]
    fn identity_generates_trivial_group() {
        let g = close_finite_group(&[Rotation::identity(3)], 1).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn irrational_rotation_does_not_close() {
        let r = close_finite_group(&[Rotation::planar(golden_angle())], 64);
        assert!(matches!(r, Err(Error::GroupNotFinite { max_order: 64 })));
    }

    #[test]
    fn finite_group_is_closed_under_products_and_inverses() {
        let gens = [Rotation::about_axis([0.0, 0.0, 1.0], FRAC_PI_2), Rotation::about_axis([1.0, 0.0, 0.0], FRAC_PI_2)];
        let g = close_finite_group(&gens, 100).unwrap();
        assert_eq!(g.len(), 24); // rotation group of the cube
        for a in g.elements() {
            assert!(position(g.elements(), &a.inverse(), DEDUP_TOL).is_some());
            for b in g.elements() {
                assert!(position(g.elements(), &a.mul(b).unwrap(), DEDUP_TOL).is_some());
            }
        }
    }

    #[test]
    fn finite_average_is_exactly_invariant() {
        let g = close_finite_group(&[Rotation::planar(2.0 * PI / 3.0)], 10).unwrap();
        let f = |r: &Rotation| {
            let x = r.matrix() * DVector::from_vec(vec![0.3, -1.1]);
            (2.0 * x[0]).sin() + x[1].powi(3)
        };
        let base = g.average(f);
        for s in g.elements() {
            let shifted = g.average(|r| f(&s.mul(r).unwrap()));
            assert!((shifted - base).abs() <= 1e-12);
        }
        assert_eq!(g.average(|_| 1.0), 1.0);
    }

    #[test]
    fn empty_generators_rejected() {
        assert!(matches!(ergodic_haar(&[], 4, 4, 0), Err(Error::EmptyGenerators)));
        assert!(matches!(close_finite_group(&[], 4), Err(Error::EmptyGenerators)));
    }

    #[test]
    fn ergodic_identity_samples_are_identity() {
        let g = ergodic_haar(&[Rotation::identity(2)], 16, 32, 1).unwrap();
        assert!(g.elements().iter().all(|e| e.is_identity(1e-15)));
    }

    #[test]
    fn ergodic_c4_is_uniform() {
        let g = ergodic_haar(&[Rotation::planar(FRAC_PI_2)], 64, 4096, 11).unwrap();
        let targets: Vec<Rotation> = (0..4).map(|k| Rotation::planar(k as f64 * FRAC_PI_2)).collect();
        let mut counts = [0usize; 4];
        for e in g.elements() {
            let k = position(&targets, e, 1e-9).expect("element of C4");
            counts[k] += 1;
        }
        let n = g.len() as f64;
        let se = (0.25 * 0.75 / n).sqrt();
        for c in counts {
            assert!((c as f64 / n - 0.25).abs() <= 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn ergodic_irrational_rotation_averages_vectors_to_zero() {
        let g = ergodic_haar(&[Rotation::planar(golden_angle())], 64, 8192, 5).unwrap();
        let avg = g.average_vector(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(avg.norm() <= 0.05, "{}", avg.norm());
    }

    #[test]
    fn ergodic_is_deterministic() {
        let a = ergodic_haar(&[Rotation::planar(0.3)], 32, 16, 99).unwrap();
        let b = ergodic_haar(&[Rotation::planar(0.3)], 32, 16, 99).unwrap();
        assert_eq!(a.elements(), b.elements());
    }

    #[test]
    fn vector_average_is_approximately_idempotent() {
        let g = ergodic_haar(&[Rotation::planar(golden_angle())], 64, 4096, 3).unwrap();
        let v = DVector::from_vec(vec![0.6, -0.8]);
        let once = g.average_vector(&v);
        let twice = g.average_vector(&once);
        // standard error of a mean of unit vectors over n samples
        let se = (1.0 / g.len() as f64).sqrt();
        assert!((&twice - &once).norm() <= 2.0 * se);
    }

    #[test]
    fn invariant_projection_of_matrices() {
        let g = ergodic_haar(&[Rotation::planar(golden_angle())], 256, 2048, 8).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 1.0]);
        let p = g.project_invariant_matrix(&m);
        // SO(2)-invariant symmetric matrices are multiples of I; trace is kept
        assert!((p[(0, 0)] - 2.0).abs() < 1e-9 && (p[(1, 1)] - 2.0).abs() < 1e-9);
        assert!(p[(0, 1)].abs() < 1e-9);
        assert!(g.invariance_defect(&p) < 1e-8);
    }
}
