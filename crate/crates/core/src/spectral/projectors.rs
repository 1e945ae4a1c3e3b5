//! Projectors onto H₀, H₁, H₂, H₃ and the remainder.
//!
//! H₀ is the K-invariant part of the band: the common fixed space of the
//! generator actions, which is the range of Haar averaging. H_k is the span of
//! degree-k monomials times H₀ with H₀..H_{k−1} removed. Everything is kept as
//! orthonormal columns in coefficient space; P_∞ = I − ΣP_i on node values.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::field::SphericalField;
use super::grid::SphereGrid;
use crate::error::{check_dim, Error, Result};
use crate::group::RotationGroupModel;

/// Singular values below this (relative to unit-norm inputs) count as zero.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subspace {
    H(usize),
    Rest,
}

impl Subspace {
    pub const ALL: [Subspace; 5] = [Subspace::H(0), Subspace::H(1), Subspace::H(2), Subspace::H(3), Subspace::Rest];
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subspace::H(k) => write!(f, "{k}"),
            Subspace::Rest => write!(f, "inf"),
        }
    }
}

impl FromStr for Subspace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "∞" => Ok(Subspace::Rest),
            t => match t.parse::<usize>() {
                Ok(k) if k <= 3 => Ok(Subspace::H(k)),
                _ => Err(Error::InvalidParameter { name: "subspace", reason: format!("expected 0..3 or inf, got `{s}`") }),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProjectorSet {
    grid: Arc<SphereGrid>,
    bases: Vec<DMatrix<Complex64>>,
}

fn monomials(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; d];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[i] = e;
            rec(i + 1, left - e, cur, out);
        }
    }
    rec(0, k, &mut cur, &mut out);
    out
}

/// Orthonormal basis of the column span of `v` above the rank tolerance.
fn range_basis(v: &DMatrix<Complex64>, scale: f64) -> DMatrix<Complex64> {
    let m = v.nrows();
    if v.ncols() == 0 {
        return DMatrix::zeros(m, 0);
    }
    let gram = v * v.adjoint();
    let eig = gram.symmetric_eigen();
    let cut = (RANK_TOL * scale).powi(2);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > cut).collect();
    let mut q = DMatrix::zeros(m, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        q.set_column(c, &eig.eigenvectors.column(i));
    }
    q
}

fn remove_span(v: &mut DMatrix<Complex64>, q: &DMatrix<Complex64>) {
    if q.ncols() > 0 {
        let proj = q * (q.adjoint() * &*v);
        *v -= proj;
    }
}

fn reorthonormalize(q: DMatrix<Complex64>, previous: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    if q.ncols() == 0 {
        return q;
    }
    let mut q = q;
    for p in previous {
        remove_span(&mut q, p);
    }
    q.qr().q()
}

impl ProjectorSet {
    pub fn new(grid: Arc<SphereGrid>, haar: &RotationGroupModel) -> Result<Self> {
        check_dim(grid.dim(), haar.dim())?;
        let m = grid.band_dim();
        // H₀: common null space of (A_g − I) over generators
        let mut defect = DMatrix::<Complex64>::zeros(m, m);
        for g in haar.generators() {
            let a = grid.rotation_action(g)?.to_matrix(m) - DMatrix::<Complex64>::identity(m, m);
            defect += a.adjoint() * a;
        }
        let eig = defect.symmetric_eigen();
        let cut = RANK_TOL * RANK_TOL * haar.generators().len().max(1) as f64;
        let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] <= cut).collect();
        if keep.is_empty() {
            return Err(Error::RankDeficiency { degree: 0, found: 0, expected: 1 });
        }
        let mut h0 = DMatrix::zeros(m, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            h0.set_column(c, &eig.eigenvectors.column(i));
        }
        let h0 = h0.qr().q();
        let h0_fields: Vec<Vec<Complex64>> = (0..h0.ncols())
            .map(|c| grid.synthesize(h0.column(c).as_slice()))
            .collect();

        let mut bases = vec![h0];
        for k in 1..=3 {
            let monos = monomials(grid.dim(), k);
            let mut v = DMatrix::<Complex64>::zeros(m, monos.len() * h0_fields.len());
            let mut col = 0;
            for e in &monos {
                let p: Vec<f64> = (0..grid.len())
                    .map(|i| grid.node(i).iter().zip(e).map(|(x, &p)| x.powi(p as i32)).product())
                    .collect();
                for h in &h0_fields {
                    let prod: Vec<Complex64> = h.iter().zip(&p).map(|(a, b)| a * *b).collect();
                    v.set_column(col, &nalgebra::DVector::from_vec(grid.analyze(&prod)));
                    col += 1;
                }
            }
            for q in &bases {
                remove_span(&mut v, q);
            }
            for q in &bases {
                remove_span(&mut v, q);
            }
            let q = reorthonormalize(range_basis(&v, 1.0), &bases);
            bases.push(q);
        }
        Ok(ProjectorSet { grid, bases })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Dimensions of H₀..H₃ inside the band.
    pub fn dims(&self) -> [usize; 4] {
        [self.bases[0].ncols(), self.bases[1].ncols(), self.bases[2].ncols(), self.bases[3].ncols()]
    }

    /// Coefficient-space orthonormal basis of H_k.
    pub fn basis(&self, k: usize) -> &DMatrix<Complex64> {
        &self.bases[k]
    }

    /// Basis fields of H_k at the nodes.
    pub fn basis_fields(&self, k: usize) -> Vec<SphericalField> {
        let b = &self.bases[k];
        (0..b.ncols())
            .map(|c| SphericalField::new(self.grid.clone(), self.grid.synthesize(b.column(c).as_slice())))
            .collect()
    }

    fn project_band(&self, k: usize, coeffs: &[Complex64]) -> Vec<Complex64> {
        let q = &self.bases[k];
        if q.ncols() == 0 {
            return vec![Complex64::new(0.0, 0.0); coeffs.len()];
        }
        let c = nalgebra::DVector::from_column_slice(coeffs);
        let p = q * (q.adjoint() * c);
        p.as_slice().to_vec()
    }

    pub fn project_values(&self, s: Subspace, f: &[Complex64]) -> Vec<Complex64> {
        let coeffs = self.grid.analyze(f);
        match s {
            Subspace::H(k) => self.grid.synthesize(&self.project_band(k, &coeffs)),
            Subspace::Rest => {
                let mut total = vec![Complex64::new(0.0, 0.0); coeffs.len()];
                for k in 0..4 {
                    for (t, x) in total.iter_mut().zip(self.project_band(k, &coeffs)) {
                        *t += x;
                    }
                }
                let low = self.grid.synthesize(&total);
                f.iter().zip(low).map(|(a, b)| a - b).collect()
            }
        }
    }

    pub fn project(&self, s: Subspace, field: &SphericalField) -> SphericalField {
        SphericalField::new(self.grid.clone(), self.project_values(s, &field.values))
    }
}

/// Projectors for the closure model `haar` on `grid`.
pub fn build_projectors(grid: Arc<SphereGrid>, haar: &RotationGroupModel) -> Result<ProjectorSet> {
    ProjectorSet::new(grid, haar)
}
