//! Complex fields sampled at the nodes of a sphere grid.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use super::grid::SphereGrid;
use crate::error::{check_dim, Result};
use crate::rng;
use crate::walker::e_phase;

#[derive(Clone, Debug)]
pub struct SphericalField {
    pub grid: Arc<SphereGrid>,
    pub values: Vec<Complex64>,
}

impl SphericalField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<Complex64>) -> Self {
        assert_eq!(grid.len(), values.len(), "one value per node");
        SphericalField { grid, values }
    }

    pub fn constant(grid: Arc<SphereGrid>, c: Complex64) -> Self {
        let n = grid.len();
        SphericalField { grid, values: vec![c; n] }
    }

    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        SphericalField { grid, values }
    }

    /// Independent standard complex Gaussian values.
    pub fn random(grid: Arc<SphereGrid>, seed: u64) -> Self {
        let mut g = rng::stream(seed, 0);
        let values = (0..grid.len())
            .map(|_| Complex64::new(g.sample(rand_distr::StandardNormal), g.sample(rand_distr::StandardNormal)))
            .collect();
        SphericalField { grid, values }
    }

    /// Random field inside the band (and below its guard frequency on S^1).
    pub fn random_band_limited(grid: Arc<SphereGrid>, seed: u64) -> Self {
        let mut g = rng::stream(seed, 1);
        let m = grid.band_dim();
        let keep = match grid.dim() {
            2 => {
                let kmax = grid.band_limit();
                let guard = (3 * kmax) / 4;
                (0..m).map(|i| (i as isize - kmax as isize).unsigned_abs() <= guard).collect::<Vec<_>>()
            }
            _ => vec![true; m],
        };
        let coeffs: Vec<Complex64> = keep
            .iter()
            .map(|k| {
                if *k {
                    Complex64::new(g.gen::<f64>() - 0.5, g.gen::<f64>() - 0.5)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let values = grid.synthesize(&coeffs);
        SphericalField { grid, values }
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn inner(&self, other: &SphericalField) -> Complex64 {
        self.grid.inner(&self.values, &other.values)
    }

    pub fn integral(&self) -> Complex64 {
        self.grid.integrate(&self.values)
    }

    /// Weighted L² distance.
    pub fn distance(&self, other: &SphericalField) -> f64 {
        let diff: Vec<Complex64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        self.grid.norm(&diff)
    }

    pub fn band_residual(&self) -> f64 {
        self.grid.band_residual(&self.values)
    }

    /// CSV: node_index, coordinates, re, im.
    pub fn to_csv(&self) -> String {
        let d = self.grid.dim();
        let mut out = String::from("node_index");
        for k in 0..d {
            let _ = write!(out, ",x{}", k + 1);
        }
        out.push_str(",re,im\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = write!(out, "{i}");
            for x in self.grid.node(i) {
                let _ = write!(out, ",{x:?}");
            }
            let _ = writeln!(out, ",{:?},{:?}", v.re, v.im);
        }
        out
    }
}

/// Node coordinates and weights as CSV.
pub fn grid_csv(grid: &SphereGrid) -> String {
    let mut out = String::new();
    for k in 0..grid.dim() {
        let _ = write!(out, "x{},", k + 1);
    }
    out.push_str("weight\n");
    for i in 0..grid.len() {
        for x in grid.node(i) {
            let _ = write!(out, "{x:?},");
        }
        let _ = writeln!(out, "{:?}", grid.weights()[i]);
    }
    out
}

/// ξ ↦ f(rξ) on the grid.
pub fn restrict(f: impl Fn(&[f64]) -> Complex64, r: f64, grid: Arc<SphereGrid>) -> SphericalField {
    let mut p = vec![0.0; grid.dim()];
    let values = (0..grid.len())
        .map(|i| {
            for (a, b) in p.iter_mut().zip(grid.node(i)) {
                *a = r * b;
            }
            f(&p)
        })
        .collect();
    SphericalField { grid, values }
}

/// Restricted Fourier transform of δ_{x₀}: ξ ↦ e(r⟨x₀, ξ⟩).
pub fn point_mass_field(x0: &[f64], r: f64, grid: Arc<SphereGrid>) -> Result<SphericalField> {
    check_dim(grid.dim(), x0.len())?;
    Ok(restrict(|p| e_phase(p.iter().zip(x0).map(|(a, b)| a * b).sum()), r, grid))
}

/// Restricted Fourier transform of a finitely supported law.
pub fn restrict_points(points: &[(nalgebra::DVector<f64>, f64)], r: f64, grid: Arc<SphereGrid>) -> SphericalField {
    restrict(|p| crate::walker::charfn_of_points(points, p), r, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restriction_examples() {
        let g = Arc::new(SphereGrid::new(2, 256).unwrap());
        let f = point_mass_field(&[0.0, 0.0], 0.7, g.clone()).unwrap();
        assert!(f.values.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let f = restrict(|p| Complex64::new(p[0] + 3.0, 0.0), 0.0, g.clone());
        assert!(f.values.iter().all(|v| v.re == 3.0));
        let f = point_mass_field(&[1.0, 0.0], 0.25, g.clone()).unwrap();
        assert!((f.values[0] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_shapes() {
        let g = Arc::new(SphereGrid::new(3, 4).unwrap());
        let f = SphericalField::constant(g.clone(), Complex64::new(1.0, 0.0));
        let csv = f.to_csv();
        assert!(csv.starts_with("node_index,x1,x2,x3,re,im\n"));
        assert_eq!(csv.lines().count(), g.len() + 1);
        assert_eq!(grid_csv(&g).lines().count(), g.len() + 1);
    }

    #[test]
    fn band_limited_fields_have_no_residual() {
        for (d, res) in [(2, 128), (3, 6)] {
            let g = Arc::new(SphereGrid::new(d, res).unwrap());
            let f = SphericalField::random_band_limited(g.clone(), 3);
            assert!(f.band_residual() < 1e-20);
            assert!(f.norm() > 0.1);
            let rough = SphericalField::random(g, 3);
            assert!(rough.band_residual() > 1e-3);
        }
    }
}
