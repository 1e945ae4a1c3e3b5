//! Executable versions of the walk's standing hypotheses.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decomposition::{invariant_decomposition, BlockClass};
use crate::error::{check_dim, Error, Result};
use crate::group::RotationGroupModel;
use crate::measure::{merge_by_key, AtomicIsometryMeasure, MERGE_TOL};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// Barycenter of the images of the origin is the origin.
    C,
    /// Every vector is reversed by some element of K.
    E,
    /// K has no fixed vectors and no abelian blocks (numerical diagnostic).
    SsrDiagnostic,
    AlmostNondegenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub status: Status,
    /// Offending vector, point or normal direction; empty when the condition holds.
    pub witness: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    pub detail: String,
}

impl ConditionReport {
    fn new(condition: Condition, status: Status, witness: Vec<f64>, detail: String) -> Self {
        ConditionReport { condition, status, witness, params: BTreeMap::new(), detail }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }
}

pub fn check_condition_c(mu: &AtomicIsometryMeasure, tol: f64) -> ConditionReport {
    let b = mu.barycenter();
    let norm = b.norm();
    if norm <= tol {
        ConditionReport::new(Condition::C, Status::Holds, Vec::new(), format!("|barycenter| = {norm:.3e}"))
    } else {
        ConditionReport::new(Condition::C, Status::Fails, b.as_slice().to_vec(), format!("|barycenter| = {norm:.3e}"))
    }
    .with("tol", tol)
}

fn random_unit(d: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, index);
    loop {
        let v = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut r));
        let n: f64 = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Searches the group model for θ with |θv + v| ≤ tol on random unit probes.
/// A missing witness only proves failure when the model is exact.
pub fn check_condition_e(
    mu: &AtomicIsometryMeasure,
    group: &RotationGroupModel,
    probe_count: usize,
    tol: f64,
    seed: u64,
) -> Result<ConditionReport> {
    check_dim(mu.dim(), group.dim())?;
    let d = mu.dim();
    let mut worst = 0.0f64;
    for p in 0..probe_count as u64 {
        let v = random_unit(d, seed, p);
        let best = group
            .elements()
            .iter()
            .map(|s| (s.matrix() * &v + &v).norm())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
        if best > tol {
            let status = if group.is_finite() { Status::Fails } else { Status::Inconclusive };
            let detail = format!("probe {p}: min |θv + v| = {best:.3e} over {} elements", group.len());
            return Ok(ConditionReport::new(Condition::E, status, v.as_slice().to_vec(), detail)
                .with("tol", tol)
                .with("probes", probe_count as f64));
        }
    }
    Ok(ConditionReport::new(Condition::E, Status::Holds, Vec::new(), format!("worst residual {worst:.3e}"))
        .with("tol", tol)
        .with("probes", probe_count as f64))
}

/// Fixed vectors or abelian blocks of the closure generators rule out the
/// semisimple case; "holds" means every block was classified as other.
pub fn check_ssr_diagnostic(group: &RotationGroupModel, tol: f64, seed: u64) -> Result<ConditionReport> {
    let split = invariant_decomposition(group.generators(), tol, seed)?;
    let dims = split.dims().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("+");
    if let Some(b) = split.blocks.iter().find(|b| b.class == BlockClass::Trivial) {
        let w = b.basis.column(0).iter().copied().collect();
        return Ok(ConditionReport::new(
            Condition::SsrDiagnostic,
            Status::Fails,
            w,
            format!("fixed subspace of dimension {} (blocks {dims})", b.dim()),
        )
        .with("tol", tol));
    }
    if split.blocks.iter().any(|b| b.class == BlockClass::Abelian) {
        return Ok(ConditionReport::new(
            Condition::SsrDiagnostic,
            Status::Inconclusive,
            Vec::new(),
            format!("abelian block present (blocks {dims})"),
        )
        .with("tol", tol));
    }
    Ok(ConditionReport::new(Condition::SsrDiagnostic, Status::Holds, Vec::new(), format!("blocks {dims}")).with("tol", tol))
}

/// Affine rank of a point cloud and the singular vector of the weakest direction.
fn affine_rank(points: &[DVector<f64>]) -> (usize, DVector<f64>) {
    let d = points[0].len();
    let n = points.len();
    let mean = points.iter().fold(DVector::zeros(d), |a, p| a + p) / n as f64;
    let rows = n.max(d);
    let mut m = DMatrix::zeros(rows, d);
    for (i, p) in points.iter().enumerate() {
        m.row_mut(i).copy_from(&(p - &mean).transpose());
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let thresh = 1e-9 * smax;
    let rank = if smax == 0.0 { 0 } else { sv.iter().filter(|s| **s > thresh).count() };
    let imin = sv.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    (rank, vt.row(imin).transpose())
}

/// For each k ≤ k_max, checks that {γ(x) : γ ∈ supp μ^{*k}} affinely spans
/// R^d for every test point. `cap` bounds the number of image points.
pub fn check_almost_nondegenerate(
    mu: &AtomicIsometryMeasure,
    test_points: &[DVector<f64>],
    k_max: usize,
    cap: usize,
) -> Result<ConditionReport> {
    if k_max == 0 {
        return Err(Error::InvalidParameter { name: "k_max", reason: "must be at least 1".into() });
    }
    let d = mu.dim();
    let default_points = [DVector::zeros(d)];
    let points = if test_points.is_empty() { &default_points[..] } else { test_points };
    for p in points {
        check_dim(d, p.len())?;
    }
    let mut clouds: Vec<Vec<DVector<f64>>> = points.iter().map(|p| vec![p.clone()]).collect();
    let mut last_witness = (Vec::new(), 0usize);
    for k in 1..=k_max {
        let mut all_full = true;
        for (pi, cloud) in clouds.iter_mut().enumerate() {
            let count = cloud.len().saturating_mul(mu.len());
            if count > cap {
                return Err(Error::AtomExplosion { count, cap });
            }
            let mut next = Vec::with_capacity(count);
            for y in cloud.iter() {
                for a in mu.atoms() {
                    next.push(a.isometry.apply_unchecked(y));
                }
            }
            let keys: Vec<Vec<f64>> = next.iter().map(|p| p.as_slice().to_vec()).collect();
            let weights = vec![1.0; keys.len()];
            *cloud = merge_by_key(&keys, &weights, MERGE_TOL).into_iter().map(|(i, _)| next[i].clone()).collect();
            let (rank, normal) = if cloud.len() < 2 { (0, DVector::zeros(d)) } else { affine_rank(cloud) };
            if rank < d {
                all_full = false;
                last_witness = (points[pi].as_slice().iter().chain(normal.as_slice()).copied().collect(), rank);
            }
        }
        if all_full {
            return Ok(ConditionReport::new(
                Condition::AlmostNondegenerate,
                Status::Holds,
                Vec::new(),
                format!("full affine rank at level k = {k}"),
            )
            .with("level", k as f64)
            .with("k_max", k_max as f64));
        }
    }
    Ok(ConditionReport::new(
        Condition::AlmostNondegenerate,
        Status::Fails,
        last_witness.0,
        format!("affine rank {} < {d} up to k = {k_max} (witness: test point, then normal direction)", last_witness.1),
    )
    .with("k_max", k_max as f64))
}
