//! Largest singular values by Golub–Kahan–Lanczos bidiagonalization.
//!
//! Both Lanczos bases are fully reorthogonalized in the weighted inner
//! product of the grid, so the process terminates exactly once the Krylov
//! space is exhausted. The top singular value of the bidiagonal matrix is
//! computed by bisection on its Golub–Kahan tridiagonal form.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::SphericalField;
use super::grid::SphereGrid;
use super::operator::StepOperator;
use super::projectors::{ProjectorSet, Subspace};
use crate::error::Result;
use crate::measure::AtomicIsometryMeasure;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub max_iter: usize,
    /// Relative change of the estimate counted as stagnation.
    pub tol: f64,
    /// Consecutive stagnant iterations required to stop early.
    pub patience: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { max_iter: 5000, tol: 1e-14, patience: 8, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Band residual of the maximizing input, when it was formed.
    pub band_residual: f64,
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn reorthogonalize(grid: &SphereGrid, x: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = grid.inner(x, b);
            axpy(x, -c, b);
        }
    }
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with zero diagonal
/// and off-diagonal `e`, by Sturm-sequence bisection.
fn top_eigenvalue_zero_diag(e: &[f64]) -> f64 {
    let n = e.len() + 1;
    let bound = e.iter().map(|x| x.abs()).fold(0.0, f64::max) * 2.0;
    if bound == 0.0 {
        return 0.0;
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = -x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let qq = if q == 0.0 { f64::MIN_POSITIVE } else { q };
            q = -x - e[i - 1] * e[i - 1] / qq;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let (mut lo, mut hi) = (0.0, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) < n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn top_singular(alphas: &[f64], betas: &[f64]) -> f64 {
    // Golub–Kahan tridiagonal: α₀, β₀, α₁, β₁, ..., α_{k−1}
    let mut e = Vec::with_capacity(2 * alphas.len());
    for (i, a) in alphas.iter().enumerate() {
        e.push(*a);
        if i + 1 < alphas.len() {
            e.push(betas[i]);
        }
    }
    top_eigenvalue_zero_diag(&e)
}

/// ‖A‖ for an operator on node values given with its adjoint.
pub fn operator_norm(
    grid: &SphereGrid,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    adjoint: impl Fn(&[Complex64]) -> Vec<Complex64>,
    opts: &NormOptions,
) -> NormEstimate {
    let n = grid.len();
    let limit = opts.max_iter.min(n).max(1);
    let mut g = rng::stream(opts.seed, 0x6b6c);
    let mut v: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(g.sample(rand_distr::StandardNormal), g.sample(rand_distr::StandardNormal))).collect();
    let nv = grid.norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let tiny = 1e-14;
    let mut vs: Vec<Vec<Complex64>> = vec![v];
    let mut us: Vec<Vec<Complex64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut estimate = 0.0;
    let mut stagnant = 0;
    let mut converged = false;
    let mut scale = 0.0f64;

    for k in 0..limit {
        let mut u = apply(&vs[k]);
        if k > 0 {
            axpy(&mut u, Complex64::new(-betas[k - 1], 0.0), &us[k - 1]);
        }
        reorthogonalize(grid, &mut u, &us);
        let alpha = grid.norm(&u);
        scale = scale.max(alpha);
        if alpha <= tiny * scale.max(1.0) {
            converged = true;
            if k > 0 {
                // the last column of B is (β_{k−1}, 0)
                let mut a = alphas.clone();
                a.push(0.0);
                estimate = top_singular(&a, &betas);
            }
            break;
        }
        u.iter_mut().for_each(|x| *x /= alpha);
        alphas.push(alpha);
        let mut w = adjoint(&u);
        axpy(&mut w, Complex64::new(-alpha, 0.0), &vs[k]);
        us.push(u);
        reorthogonalize(grid, &mut w, &vs);
        let beta = grid.norm(&w);
        let next = top_singular(&alphas, &betas);
        if k > 0 && (next - estimate).abs() <= opts.tol * next {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        estimate = next;
        if beta <= tiny * scale.max(1.0) || k + 1 == n {
            converged = true;
            break;
        }
        if stagnant >= opts.patience {
            converged = true;
            break;
        }
        w.iter_mut().for_each(|x| *x /= beta);
        betas.push(beta);
        vs.push(w);
    }

    // maximizing input: top right singular vector of the bidiagonal matrix
    let k = alphas.len();
    let mut band_residual = 0.0;
    if k > 0 {
        let mut b = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            b[(i, i)] = alphas[i];
            if i + 1 < k {
                b[(i, i + 1)] = betas[i];
            }
        }
        let svd = b.svd(false, true);
        if let Some(vt) = svd.v_t {
            let top = (0..k).max_by(|&a, &c| svd.singular_values[a].total_cmp(&svd.singular_values[c])).unwrap_or(0);
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..k {
                axpy(&mut x, Complex64::new(vt[(top, j)], 0.0), &vs[j]);
            }
            band_residual = grid.band_residual(&x);
        }
    }
    NormEstimate { value: estimate, converged, iterations: alphas.len(), band_residual }
}

/// ‖S_r‖ on the grid.
pub fn step_norm(op: &StepOperator, opts: &NormOptions) -> NormEstimate {
    operator_norm(op.grid(), |x| op.apply_values(x), |x| op.apply_adjoint_values(x), opts)
}

/// ‖P_i S_r P_j‖.
pub fn block_norm(op: &StepOperator, projectors: &ProjectorSet, i: Subspace, j: Subspace, opts: &NormOptions) -> NormEstimate {
    operator_norm(
        op.grid(),
        |x| projectors.project_values(i, &op.apply_values(&projectors.project_values(j, x))),
        |x| projectors.project_values(j, &op.apply_adjoint_values(&projectors.project_values(i, x))),
        opts,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub r: f64,
    pub norm: NormEstimate,
}

/// ‖S_r‖ for each radius; meaningful as a gap only for almost
/// non-degenerate measures.
pub fn spectral_gap_probe(mu: &AtomicIsometryMeasure, r_grid: &[f64], grid: Arc<SphereGrid>, opts: &NormOptions) -> Result<Vec<GapRow>> {
    r_grid
        .iter()
        .map(|&r| {
            let op = StepOperator::new(mu, r, grid.clone())?;
            Ok(GapRow { r, norm: step_norm(&op, opts) })
        })
        .collect()
}

/// Field norms ‖S_r^k ψ‖ up to `l`, for decay checks.
pub fn norm_decay(op: &StepOperator, psi: &SphericalField, l: usize) -> Vec<f64> {
    let mut f = psi.clone();
    let mut out = vec![f.norm()];
    for _ in 0..l {
        f = op.apply(&f);
        out.push(f.norm());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::group::{HaarOptions, RotationGroupModel};
    use crate::report::log_log_fit;
    use crate::spectral::projectors::build_projectors;

    fn circle(n: usize) -> Arc<SphereGrid> {
        Arc::new(SphereGrid::new(2, n).unwrap())
    }

    #[test]
    fn bisection_matches_dense_svd() {
        let alphas = [1.0, 0.7, 0.3, 1.2];
        let betas = [0.5, 0.1, 0.9];
        let mut b = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            b[(i, i)] = alphas[i];
            if i < 3 {
                b[(i, i + 1)] = betas[i];
            }
        }
        let s = b.singular_values().max();
        assert!((top_singular(&alphas, &betas) - s).abs() < 1e-14);
    }

    #[test]
    fn diagonal_operator_norm_is_exact() {
        let g = circle(64);
        let d: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 / 64.0 - 0.3).collect();
        let top = d.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let est = operator_norm(
            &g,
            |x| x.iter().zip(&d).map(|(a, b)| a * *b).collect(),
            |x| x.iter().zip(&d).map(|(a, b)| a * *b).collect(),
            &NormOptions::default(),
        );
        assert!(est.converged);
        assert!((est.value - top).abs() < 1e-12, "{} {} {}", est.value, top, est.iterations);
    }

    #[test]
    fn line_lattice_has_no_gap_at_dual_radius() {
        let g = circle(256);
        let rows = spectral_gap_probe(&catalog::line_lattice(), &[1.0], g, &NormOptions::default()).unwrap();
        assert!((rows[0].norm.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_radius_dense_group_norm_is_one() {
        let g = circle(128);
        let rows = spectral_gap_probe(&catalog::rotation_rich(), &[0.0], g, &NormOptions::default()).unwrap();
        assert!((rows[0].norm.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_structure_at_zero_and_small_radius() {
        let g = circle(128);
        let mu = catalog::rotation_rich();
        let k = RotationGroupModel::for_measure(&mu, &HaarOptions::default()).unwrap();
        let p = build_projectors(g.clone(), &k).unwrap();
        let opts = NormOptions::default();
        let op0 = StepOperator::new(&mu, 0.0, g.clone()).unwrap();
        for i in Subspace::ALL {
            for j in Subspace::ALL {
                if i != j {
                    assert!(block_norm(&op0, &p, i, j, &opts).value < 1e-9, "{i} {j}");
                }
            }
        }
        let rs = [1e-3, 1e-2, 1e-1];
        let mut off = Vec::new();
        let mut deficit = Vec::new();
        for &r in &rs {
            let op = StepOperator::new(&mu, r, g.clone()).unwrap();
            off.push(block_norm(&op, &p, Subspace::H(1), Subspace::H(0), &opts).value);
            deficit.push(1.0 - block_norm(&op, &p, Subspace::H(0), Subspace::H(0), &opts).value);
        }
        let (s_off, _, _) = log_log_fit(&rs, &off).unwrap();
        let (s_def, _, _) = log_log_fit(&rs, &deficit).unwrap();
        assert!(s_off >= 1.8, "{s_off}");
        assert!((s_def - 2.0).abs() <= 0.2, "{s_def}");
    }
}
