//! Quadrature grids on S^1 and S^2 with a band-limited function space.
//!
//! S^1: n equispaced nodes, band |k| ≤ (n−1)/2 of e^{ikφ} (the Nyquist mode
//! of even n is dropped so that rotations and reflections act unitarily).
//! S^2: Gauss–Legendre in cos θ times equispaced azimuth, band = real
//! spherical harmonics of degree ≤ L, exact for products of band functions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::isometry::Rotation;

/// Minimum degree of polynomial exactness any grid must provide.
pub const MIN_EXACT_DEGREE: usize = 8;

#[derive(Clone)]
pub(crate) enum Band {
    Circle { kmax: usize, fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>> },
    Sphere { lmax: usize, basis: DMatrix<f64> },
}

#[derive(Clone)]
pub struct SphereGrid {
    d: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    exact_degree: usize,
    pub(crate) band: Band,
}

impl fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid")
            .field("d", &self.d)
            .field("nodes", &self.len())
            .field("band_dim", &self.band_dim())
            .field("exact_degree", &self.exact_degree)
            .finish()
    }
}

/// How a rotation acts on band coefficients of f ↦ f∘θ⁻¹.
#[derive(Clone, Debug)]
pub(crate) enum RotAction {
    /// out[perm[k]] = phase[k] · in[k]
    Monomial { perm: Vec<usize>, phase: Vec<Complex64> },
    Dense(DMatrix<f64>),
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 0 {
                break;
            }
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Real spherical harmonics of degree ≤ lmax at a unit vector, orthonormal
/// for the normalized surface measure. Order: l, then m = 0, (1,c), (1,s), ...
pub fn real_spherical_harmonics(lmax: usize, p: &[f64]) -> Vec<f64> {
    let (x, y, z) = (p[0], p[1], p[2]);
    let ct = z.clamp(-1.0, 1.0);
    let st = (x * x + y * y).sqrt();
    let phi = y.atan2(x);
    let size = lmax + 1;
    // fully normalized associated Legendre functions pbar[l][m]
    let mut pbar = vec![vec![0.0; size]; size];
    pbar[0][0] = 1.0;
    for m in 1..=lmax {
        let f = if m == 1 { 3.0f64.sqrt() } else { ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() };
        pbar[m][m] = f * st * pbar[m - 1][m - 1];
    }
    for m in 0..lmax {
        pbar[m + 1][m] = ((2 * m + 3) as f64).sqrt() * ct * pbar[m][m];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((2.0 * lf - 1.0) * (2.0 * lf + 1.0) / ((lf - mf) * (lf + mf))).sqrt();
            let b = ((2.0 * lf + 1.0) * (lf + mf - 1.0) * (lf - mf - 1.0) / ((lf - mf) * (lf + mf) * (2.0 * lf - 3.0))).sqrt();
            pbar[l][m] = a * ct * pbar[l - 1][m] - b * pbar[l - 2][m];
        }
    }
    let mut out = Vec::with_capacity(size * size);
    for l in 0..=lmax {
        out.push(pbar[l][0]);
        for m in 1..=l {
            let (s, c) = (m as f64 * phi).sin_cos();
            out.push(pbar[l][m] * c);
            out.push(pbar[l][m] * s);
        }
    }
    out
}

impl SphereGrid {
    /// d = 2: `resolution` equispaced nodes. d = 3: `resolution` is the
    /// harmonic degree L (L + 1 Gauss–Legendre rings of 2L + 2 nodes).
    pub fn new(d: usize, resolution: usize) -> Result<Self> {
        match d {
            2 => Self::circle(resolution),
            3 => Self::sphere(resolution),
            other => Err(Error::UnsupportedDimension(other)),
        }
    }

    fn circle(n: usize) -> Result<Self> {
        if n < 2 * MIN_EXACT_DEGREE + 1 {
            return Err(Error::GridTooCoarse(format!("{n} circle nodes; need at least {}", 2 * MIN_EXACT_DEGREE + 1)));
        }
        let mut nodes = Vec::with_capacity(2 * n);
        for j in 0..n {
            let (s, c) = (2.0 * PI * j as f64 / n as f64).sin_cos();
            nodes.push(c);
            nodes.push(s);
        }
        let mut planner = FftPlanner::new();
        Ok(SphereGrid {
            d: 2,
            nodes,
            weights: vec![1.0 / n as f64; n],
            exact_degree: n - 1,
            band: Band::Circle { kmax: (n - 1) / 2, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) },
        })
    }

    fn sphere(lmax: usize) -> Result<Self> {
        if lmax < MIN_EXACT_DEGREE / 2 {
            return Err(Error::GridTooCoarse(format!("degree {lmax}; need at least {}", MIN_EXACT_DEGREE / 2)));
        }
        let nt = lmax + 1;
        let np = 2 * lmax + 2;
        let (zs, ws) = gauss_legendre(nt);
        let mut nodes = Vec::with_capacity(3 * nt * np);
        let mut weights = Vec::with_capacity(nt * np);
        for (z, w) in zs.iter().zip(&ws) {
            let st = (1.0 - z * z).max(0.0).sqrt();
            for j in 0..np {
                let (s, c) = (2.0 * PI * j as f64 / np as f64).sin_cos();
                nodes.extend_from_slice(&[st * c, st * s, *z]);
                weights.push(w / (2.0 * np as f64));
            }
        }
        let n = weights.len();
        let m = (lmax + 1) * (lmax + 1);
        let mut basis = DMatrix::zeros(n, m);
        for i in 0..n {
            let y = real_spherical_harmonics(lmax, &nodes[3 * i..3 * i + 3]);
            for (a, v) in y.into_iter().enumerate() {
                basis[(i, a)] = v;
            }
        }
        Ok(SphereGrid {
            d: 3,
            nodes,
            weights,
            exact_degree: (2 * nt - 1).min(np - 1),
            band: Band::Sphere { lmax, basis },
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.d..(i + 1) * self.d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polynomials of total degree up to this are integrated exactly.
    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    /// Number of band basis functions.
    pub fn band_dim(&self) -> usize {
        match &self.band {
            Band::Circle { kmax, .. } => 2 * kmax + 1,
            Band::Sphere { basis, .. } => basis.ncols(),
        }
    }

    /// Highest frequency (d = 2) or harmonic degree (d = 3) in the band.
    pub fn band_limit(&self) -> usize {
        match &self.band {
            Band::Circle { kmax, .. } => *kmax,
            Band::Sphere { lmax, .. } => *lmax,
        }
    }

    pub fn integrate(&self, values: &[Complex64]) -> Complex64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * *w).sum()
    }

    pub fn integrate_real(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// ⟨a, b⟩ = Σ w a conj(b).
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y.conj() * *w).sum()
    }

    pub fn norm(&self, a: &[Complex64]) -> f64 {
        a.iter().zip(&self.weights).map(|(x, w)| x.norm_sqr() * w).sum::<f64>().sqrt()
    }

    /// Band coefficients; the weighted adjoint of [`Self::synthesize`].
    pub fn analyze(&self, values: &[Complex64]) -> Vec<Complex64> {
        match &self.band {
            Band::Circle { kmax, fwd, .. } => {
                let n = values.len();
                let mut buf = values.to_vec();
                fwd.process(&mut buf);
                let k = *kmax as isize;
                (-k..=k).map(|j| buf[j.rem_euclid(n as isize) as usize] / n as f64).collect()
            }
            Band::Sphere { basis, .. } => {
                let m = basis.ncols();
                let mut out = vec![Complex64::new(0.0, 0.0); m];
                for (i, (v, w)) in values.iter().zip(&self.weights).enumerate() {
                    let vw = v * *w;
                    for (a, o) in out.iter_mut().enumerate() {
                        *o += vw * basis[(i, a)];
                    }
                }
                out
            }
        }
    }

    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        match &self.band {
            Band::Circle { kmax, inv, .. } => {
                let n = self.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                let k = *kmax as isize;
                for (j, c) in (-k..=k).zip(coeffs) {
                    buf[j.rem_euclid(n as isize) as usize] = *c;
                }
                inv.process(&mut buf);
                buf
            }
            Band::Sphere { basis, .. } => {
                let n = self.len();
                let mut out = vec![Complex64::new(0.0, 0.0); n];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = Complex64::new(0.0, 0.0);
                    for (a, c) in coeffs.iter().enumerate() {
                        s += c * basis[(i, a)];
                    }
                    *o = s;
                }
                out
            }
        }
    }

    /// Band projection at the nodes.
    pub fn band_project(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.synthesize(&self.analyze(values))
    }

    /// Fraction of ‖f‖² outside the safely resolved band: above 3/4 of the
    /// maximal frequency on S^1, outside degree L on S^2.
    pub fn band_residual(&self, values: &[Complex64]) -> f64 {
        let total: f64 = values.iter().zip(&self.weights).map(|(v, w)| v.norm_sqr() * w).sum();
        if total == 0.0 {
            return 0.0;
        }
        match &self.band {
            Band::Circle { kmax, fwd, .. } => {
                let n = values.len();
                let mut buf = values.to_vec();
                fwd.process(&mut buf);
                let guard = (3 * kmax) / 4;
                let high: f64 = buf
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| {
                        let k = if *j <= n / 2 { *j } else { n - *j };
                        k > guard
                    })
                    .map(|(_, c)| c.norm_sqr())
                    .sum::<f64>()
                    / (n as f64 * n as f64);
                high / total
            }
            Band::Sphere { .. } => {
                let c = self.analyze(values);
                let inside: f64 = c.iter().map(|x| x.norm_sqr()).sum();
                ((total - inside) / total).max(0.0)
            }
        }
    }

    pub(crate) fn rotation_action(&self, theta: &Rotation) -> Result<RotAction> {
        crate::error::check_dim(self.d, theta.dim())?;
        let m = theta.matrix();
        match &self.band {
            Band::Circle { kmax, .. } => {
                let k = *kmax as isize;
                let size = 2 * *kmax + 1;
                let angle = m[(1, 0)].atan2(m[(0, 0)]);
                let mut perm = vec![0; size];
                let mut phase = vec![Complex64::new(0.0, 0.0); size];
                let reflect = theta.determinant() < 0.0;
                for (idx, j) in (-k..=k).enumerate() {
                    if reflect {
                        // θ maps angle φ to angle − φ; f(θ⁻¹ξ) = Σ c_j e^{ij(angle − φ)}
                        perm[idx] = (-j + k) as usize;
                        phase[idx] = Complex64::from_polar(1.0, j as f64 * angle);
                    } else {
                        perm[idx] = idx;
                        phase[idx] = Complex64::from_polar(1.0, -(j as f64) * angle);
                    }
                }
                Ok(RotAction::Monomial { perm, phase })
            }
            Band::Sphere { lmax, basis } => {
                let n = self.len();
                let inv = theta.inverse();
                let mut rotated = DMatrix::zeros(n, basis.ncols());
                for i in 0..n {
                    let p = inv.matrix() * nalgebra::DVector::from_column_slice(self.node(i));
                    let y = real_spherical_harmonics(*lmax, p.as_slice());
                    for (a, v) in y.into_iter().enumerate() {
                        rotated[(i, a)] = v;
                    }
                }
                let mut wb = basis.clone();
                for i in 0..n {
                    wb.row_mut(i).scale_mut(self.weights[i]);
                }
                Ok(RotAction::Dense(wb.transpose() * rotated))
            }
        }
    }
}

impl RotAction {
    pub(crate) fn apply(&self, c: &[Complex64]) -> Vec<Complex64> {
        match self {
            RotAction::Monomial { perm, phase } => {
                let mut out = vec![Complex64::new(0.0, 0.0); c.len()];
                for k in 0..c.len() {
                    out[perm[k]] = phase[k] * c[k];
                }
                out
            }
            RotAction::Dense(m) => dense_apply(m, c, false),
        }
    }

    pub(crate) fn apply_adjoint(&self, c: &[Complex64]) -> Vec<Complex64> {
        match self {
            RotAction::Monomial { perm, phase } => (0..c.len()).map(|k| phase[k].conj() * c[perm[k]]).collect(),
            RotAction::Dense(m) => dense_apply(m, c, true),
        }
    }

    /// Dense complex matrix of the action.
    pub(crate) fn to_matrix(&self, size: usize) -> DMatrix<Complex64> {
        match self {
            RotAction::Monomial { perm, phase } => {
                let mut out = DMatrix::zeros(size, size);
                for k in 0..size {
                    out[(perm[k], k)] = phase[k];
                }
                out
            }
            RotAction::Dense(m) => m.map(|x| Complex64::new(x, 0.0)),
        }
    }
}

fn dense_apply(m: &DMatrix<f64>, c: &[Complex64], transpose: bool) -> Vec<Complex64> {
    let n = m.nrows();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = Complex64::new(0.0, 0.0);
        for (j, x) in c.iter().enumerate() {
            let a = if transpose { m[(j, i)] } else { m[(i, j)] };
            s += x * a;
        }
        *o = s;
    }
    out
}
