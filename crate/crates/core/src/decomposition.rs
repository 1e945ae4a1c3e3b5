//! Orthogonal splitting of R^d into subspaces invariant under a set of
//! rotations, each labelled trivial / abelian / other.
//!
//! Invariant subspaces are read off from eigenspaces of random symmetric
//! elements of the commutant. The commutant is computed as the null space of
//! `X -> (R X - X R)` over the generators, which equals the image of the Haar
//! averaging map `M -> ∫ σᵀ M σ` without sampling error.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::isometry::Rotation;
use crate::rng;

/// Relative eigenvalue gap below which eigenspaces are merged.
pub const EIGEN_GAP: f64 = 1e-6;
const NULL_TOL: f64 = 1e-9;
const PROBES: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockClass {
    /// Every generator acts as the identity.
    Trivial,
    /// Restricted generators commute pairwise.
    Abelian,
    Other,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantBlock {
    /// d × k matrix with orthonormal columns.
    pub basis: DMatrix<f64>,
    pub class: BlockClass,
}

impl InvariantBlock {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantSplit {
    pub blocks: Vec<InvariantBlock>,
}

impl InvariantSplit {
    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(InvariantBlock::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.dims().iter().sum()
    }

    pub fn classes(&self) -> Vec<BlockClass> {
        self.blocks.iter().map(|b| b.class).collect()
    }
}

/// Orthonormal basis of the null space of `a` (right singular vectors with
/// singular value below `tol * max(1, σ_max)`).
fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // pad to at least n rows so the thin SVD returns all n right vectors
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t");
    let smax = svd.singular_values.max().max(1.0);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol * smax)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the orthogonal complement of the column span of `b`.
fn complement(b: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    if b.ncols() == 0 {
        return DMatrix::identity(d, d);
    }
    null_space(&b.transpose(), NULL_TOL)
}

fn random_symmetric(c: usize, seed: u64, probe: u64) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, probe);
    let mut m = DMatrix::zeros(c, c);
    for i in 0..c {
        for j in i..c {
            let x: f64 = rng.gen_range(-1.0..1.0);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

fn split_block(block: &DMatrix<f64>, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let restricted = block.transpose() * x * block;
    let eig = restricted.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = x.amax().max(1e-300);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(last)
                if (eig.eigenvalues[i] - eig.eigenvalues[*last.last().unwrap()]).abs() <= EIGEN_GAP * scale =>
            {
                last.push(i)
            }
            _ => clusters.push(vec![i]),
        }
    }
    clusters
        .into_iter()
        .map(|idx| {
            let cols: Vec<DVector<f64>> = idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
            block * DMatrix::from_columns(&cols)
        })
        .collect()
}

fn classify(basis: &DMatrix<f64>, generators: &[Rotation], tol: f64) -> BlockClass {
    let restricted: Vec<DMatrix<f64>> =
        generators.iter().map(|g| basis.transpose() * g.matrix() * basis).collect();
    let k = basis.ncols();
    let identity = DMatrix::<f64>::identity(k, k);
    if restricted.iter().all(|r| (r - &identity).amax() <= tol) {
        return BlockClass::Trivial;
    }
    for (i, a) in restricted.iter().enumerate() {
        for b in &restricted[i + 1..] {
            if (a * b - b * a).amax() > tol {
                return BlockClass::Other;
            }
        }
    }
    BlockClass::Abelian
}

/// Splits R^d into generator-invariant blocks. `tol` bounds the invariance
/// residual ‖(I − BBᵀ) R B‖ accepted for every block and generator; it is also
/// the commutation tolerance used for classification.
pub fn invariant_decomposition(generators: &[Rotation], tol: f64, seed: u64) -> Result<InvariantSplit> {
    let first = generators.first().ok_or(Error::EmptyGenerators)?;
    let d = first.dim();
    for g in generators {
        check_dim(d, g.dim())?;
    }

    // common fixed space
    let mut stacked = DMatrix::zeros(d * generators.len(), d);
    for (k, g) in generators.iter().enumerate() {
        let diff = g.matrix() - DMatrix::<f64>::identity(d, d);
        stacked.view_mut((k * d, 0), (d, d)).copy_from(&diff);
    }
    let fixed = null_space(&stacked, NULL_TOL);
    let rest = complement(&fixed, d);

    let mut blocks = Vec::new();
    if fixed.ncols() > 0 {
        blocks.push(InvariantBlock { basis: fixed, class: BlockClass::Trivial });
    }

    let c = rest.ncols();
    if c > 0 {
        // commutant of the restricted action, as a subspace of vec(c×c)
        let restricted: Vec<DMatrix<f64>> = generators.iter().map(|g| rest.transpose() * g.matrix() * &rest).collect();
        let mut lin = DMatrix::zeros(c * c * restricted.len(), c * c);
        for (k, r) in restricted.iter().enumerate() {
            // vec(RX − XR) = (I ⊗ R − Rᵀ ⊗ I) vec X, column-major vec
            let id = DMatrix::<f64>::identity(c, c);
            let op = id.kronecker(r) - r.transpose().kronecker(&id);
            lin.view_mut((k * c * c, 0), (c * c, c * c)).copy_from(&op);
        }
        let commutant = null_space(&lin, NULL_TOL);

        let mut parts = vec![DMatrix::<f64>::identity(c, c)];
        for probe in 0..PROBES {
            let m = random_symmetric(c, seed, probe);
            let vec_m = DVector::from_column_slice(m.as_slice());
            let projected = &commutant * (commutant.transpose() * vec_m);
            let x = DMatrix::from_column_slice(c, c, projected.as_slice());
            let x = (&x + x.transpose()) * 0.5;
            parts = parts.iter().flat_map(|p| split_block(p, &x)).collect();
        }
        for p in parts {
            let basis = &rest * p;
            let class = classify(&basis, generators, tol);
            blocks.push(InvariantBlock { basis, class });
        }
    }

    for b in &blocks {
        let proj = b.projector();
        let resid = DMatrix::<f64>::identity(d, d) - &proj;
        for g in generators {
            let r = (&resid * g.matrix() * &b.basis).amax();
            if r > tol {
                return Err(Error::NotInvariant { residual: r, tol });
            }
        }
    }
    Ok(InvariantSplit { blocks })
}
