//! Real-space Gaussian matching e^{−lΔ(ξ,ξ)}, and the smooth bump test
//! functions used by the local limit checks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::form::QuadraticForm;
use crate::error::{check_dim, Error, Result};
use crate::spectral::gauss_legendre;
use crate::walker::e_phase;

/// Density C l^{−d/2} exp(−(x−y₀)ᵀ A (x−y₀) / l) with A = π² M⁻¹ and
/// C = π^{d/2} / √det M, the inverse Fourier transform of e(⟨ξ,y₀⟩)e^{−lξᵀMξ}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw {
    pub normalizer: f64,
    pub inverse_form: DMatrix<f64>,
    pub center: DVector<f64>,
    pub scale: f64,
    form: DMatrix<f64>,
}

pub fn gaussian_from_delta(delta0: &QuadraticForm, l: f64, y0: &[f64]) -> Result<GaussianLaw> {
    delta0.require_positive_definite()?;
    check_dim(delta0.dim(), y0.len())?;
    if !(l > 0.0) {
        return Err(Error::InvalidParameter { name: "l", reason: format!("must be positive, got {l}") });
    }
    let m = delta0.matrix().clone();
    let d = m.nrows() as f64;
    let det = m.determinant();
    let inv = m.clone().try_inverse().ok_or(Error::DegenerateForm { min_eig: 0.0, max_eig: m.amax() })?;
    Ok(GaussianLaw {
        normalizer: PI.powf(d / 2.0) / det.sqrt(),
        inverse_form: inv * (PI * PI),
        center: DVector::from_column_slice(y0),
        scale: l,
        form: m,
    })
}

impl GaussianLaw {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let z = DVector::from_column_slice(x) - &self.center;
        let q = (z.transpose() * &self.inverse_form * &z)[(0, 0)];
        self.normalizer * self.scale.powf(-(self.dim() as f64) / 2.0) * (-q / self.scale).exp()
    }

    /// l · M / (2π²).
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.form * (self.scale / (2.0 * PI * PI))
    }

    pub fn charfn(&self, xi: &[f64]) -> Complex64 {
        let x = DVector::from_column_slice(xi);
        let q = (x.transpose() * &self.form * &x)[(0, 0)];
        e_phase(x.dot(&self.center)) * (-self.scale * q).exp()
    }

    /// Standard deviation along the widest principal axis.
    pub fn max_std(&self) -> f64 {
        self.covariance().symmetric_eigen().eigenvalues.max().max(0.0).sqrt()
    }
}

/// f(x) = amplitude · exp(1 − 1/(1 − |x − c|²/ρ²)) inside the ball, else 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

/// ∫_{|x|<1} exp(1 − 1/(1 − |x|²)) dx in dimension d, by Gauss–Legendre in
/// the radius.
pub fn unit_bump_integral(d: usize) -> f64 {
    let (x, w) = gauss_legendre(160);
    let radial: f64 = x
        .iter()
        .zip(&w)
        .map(|(t, wt)| {
            let s = 0.5 * (t + 1.0);
            let v = if s < 1.0 { (1.0 - 1.0 / (1.0 - s * s)).exp() } else { 0.0 };
            0.5 * wt * v * s.powi(d as i32 - 1)
        })
        .sum();
    sphere_area(d) * radial
}

/// Surface area of S^{d−1}.
pub fn sphere_area(d: usize) -> f64 {
    // 2π^{d/2} / Γ(d/2) via the recursion A_{d+2} = 2π A_d / d
    let mut a = if d % 2 == 0 { 2.0 * PI } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 1 };
    while k < d {
        a *= 2.0 * PI / k as f64;
        k += 2;
    }
    a
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter { name: "radius", reason: format!("must be positive, got {radius}") });
        }
        Ok(Bump { center, radius, amplitude: 1.0 })
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.amplitude *= a;
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (a, c) in x.iter().zip(&self.center) {
            let t = (a - c) / self.radius;
            s += t * t;
        }
        if s >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }

    pub fn integral(&self) -> f64 {
        self.amplitude * self.radius.powi(self.dim() as i32) * unit_bump_integral(self.dim())
    }

    /// ∫ f g by a tensor Gauss–Legendre rule on the bump's bounding cube.
    pub fn integrate_against(&self, g: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let d = self.dim();
        let per_axis = match d {
            1 => 400,
            2 => 96,
            3 => 40,
            4 => 20,
            _ => return Err(Error::UnsupportedDimension(d)),
        };
        let (x, w) = gauss_legendre(per_axis);
        let mut idx = vec![0usize; d];
        let mut p = vec![0.0; d];
        let mut total = 0.0;
        loop {
            let mut wt = 1.0;
            for k in 0..d {
                p[k] = self.center[k] + self.radius * x[idx[k]];
                wt *= w[idx[k]] * self.radius;
            }
            let f = self.eval(&p);
            if f != 0.0 {
                total += wt * f * g(&p);
            }
            let mut k = 0;
            loop {
                if k == d {
                    return Ok(total);
                }
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi_sq_identity() -> QuadraticForm {
        QuadraticForm::new(DMatrix::<f64>::identity(2, 2) * (PI * PI)).unwrap()
    }

    #[test]
    fn density_matches_riemann_inversion() {
        // p(x) = ∫ e^{−lξᵀMξ} e(−⟨x,ξ⟩) dξ, summed on a fine grid
        let m = QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[9.0, 2.0, 2.0, 5.0])).unwrap();
        let l = 3.0;
        let law = gaussian_from_delta(&m, l, &[0.0, 0.0]).unwrap();
        let h = 0.004;
        let k = 300;
        for x in [[0.0, 0.0], [0.3, -0.2], [1.0, 0.5]] {
            let mut acc = 0.0;
            for i in -k..=k {
                for j in -k..=k {
                    let xi = [i as f64 * h, j as f64 * h];
                    let q = m.eval(&xi);
                    acc += (-l * q).exp() * (2.0 * PI * (x[0] * xi[0] + x[1] * xi[1])).cos();
                }
            }
            acc *= h * h;
            assert!((acc - law.density(&x)).abs() < 1e-6, "{acc} {}", law.density(&x));
        }
    }

    #[test]
    fn closed_form_for_pi_squared_identity() {
        let law = gaussian_from_delta(&pi_sq_identity(), 7.0, &[0.0, 0.0]).unwrap();
        let x = [0.5f64, 1.5];
        let expect = (1.0 / (PI * 7.0)) * (-(x[0] * x[0] + x[1] * x[1]) / 7.0).exp();
        assert!((law.density(&x) - expect).abs() < 1e-15);
        assert!((law.covariance() - DMatrix::<f64>::identity(2, 2) * 3.5).amax() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let m = QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 2.0])).unwrap();
        let law = gaussian_from_delta(&m, 10.0, &[1.0, -2.0]).unwrap();
        let box_half = 8.0 * law.max_std();
        let n = 400;
        let h = 2.0 * box_half / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [1.0 - box_half + (i as f64 + 0.5) * h, -2.0 - box_half + (j as f64 + 0.5) * h];
                total += law.density(&x);
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_forms_are_rejected() {
        let m = QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(gaussian_from_delta(&m, 1.0, &[0.0, 0.0]), Err(Error::DegenerateForm { .. })));
    }

    #[test]
    fn bump_integrals() {
        // one-dimensional integral by a fine midpoint rule
        let n = 200_000;
        let h = 2.0 / n as f64;
        let mid: f64 = (0..n)
            .map(|i| {
                let x = -1.0 + (i as f64 + 0.5) * h;
                (1.0 - 1.0 / (1.0 - x * x)).exp()
            })
            .sum::<f64>()
            * h;
        assert!((unit_bump_integral(1) - mid).abs() < 1e-10);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        let b = Bump::new(vec![0.5, -0.5], 2.0).unwrap();
        let cube = b.integrate_against(|_| 1.0).unwrap();
        assert!((cube - b.integral()).abs() < 1e-8 * b.integral());
        assert_eq!(b.clone().scaled(2.0).integral(), 2.0 * b.integral());
        let b3 = Bump::new(vec![0.0; 3], 1.0).unwrap();
        assert!((b3.integrate_against(|_| 1.0).unwrap() / b3.integral() - 1.0).abs() < 1e-6);
    }
}
