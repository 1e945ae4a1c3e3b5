//! Named driving measures used by the examples, the CLI and the test suites.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::isometry::{Isometry, Rotation};
use crate::measure::AtomicIsometryMeasure;

/// 2π(√5 − 1)/2: rotation by this angle generates a dense subgroup of SO(2).
pub const GOLDEN_ANGLE: f64 = 2.0 * PI * 0.618_033_988_749_894_8;

pub const NAMES: &[&str] = &["square_lattice", "line_lattice", "rotation_rich", "c3_asymmetric", "c3_symmetric"];

fn atom(angle: f64, v: [f64; 2]) -> Isometry {
    Isometry::new(Rotation::planar(angle), DVector::from_column_slice(&v)).expect("planar isometry")
}

/// ±e₁, ±e₂ translations with weight ¼ each.
pub fn square_lattice() -> AtomicIsometryMeasure {
    AtomicIsometryMeasure::new(vec![
        (atom(0.0, [1.0, 0.0]), 0.25),
        (atom(0.0, [-1.0, 0.0]), 0.25),
        (atom(0.0, [0.0, 1.0]), 0.25),
        (atom(0.0, [0.0, -1.0]), 0.25),
    ])
    .expect("valid measure")
}

/// ±e₁ translations with weight ½ each: supported on a line.
pub fn line_lattice() -> AtomicIsometryMeasure {
    AtomicIsometryMeasure::new(vec![(atom(0.0, [1.0, 0.0]), 0.5), (atom(0.0, [-1.0, 0.0]), 0.5)]).expect("valid measure")
}

/// Three planar atoms whose rotation parts generate a dense subgroup of
/// SO(2); recentered at its fixed point.
pub fn rotation_rich() -> AtomicIsometryMeasure {
    let mu = AtomicIsometryMeasure::normalized(vec![
        (atom(GOLDEN_ANGLE, [0.5, 0.0]), 1.0),
        (atom(-GOLDEN_ANGLE, [0.0, 0.5]), 1.0),
        (atom(0.0, [-0.3, -0.4]), 1.0),
    ])
    .expect("valid measure");
    mu.center().expect("fixed point is unique").0
}

/// Rotations in C₃ with unrelated translations and weights; no reversing
/// element, so odd moments survive averaging. Recentered.
pub fn c3_asymmetric() -> AtomicIsometryMeasure {
    let w = 2.0 * PI / 3.0;
    let mu = AtomicIsometryMeasure::new(vec![
        (atom(0.0, [1.0, 0.0]), 0.4),
        (atom(w, [0.3, 0.8]), 0.35),
        (atom(2.0 * w, [-0.6, 0.2]), 0.25),
    ])
    .expect("valid measure");
    mu.center().expect("fixed point is unique").0
}

/// Symmetric measure with rotations in C₃: atoms come in inverse pairs. Two
/// translation pairs with incommensurate lengths keep the generated group
/// from being a wallpaper group, so the walk is not confined to a lattice.
pub fn c3_symmetric() -> AtomicIsometryMeasure {
    let g = atom(2.0 * PI / 3.0, [0.9, 0.2]);
    let h = atom(0.0, [0.1, 0.7]);
    let k = atom(0.0, [0.5 * 2f64.sqrt(), -0.3 * 3f64.sqrt()]);
    let mu = AtomicIsometryMeasure::normalized(vec![
        (g.invert(), 1.0),
        (g, 1.0),
        (h.invert(), 1.0),
        (h, 1.0),
        (k.invert(), 1.0),
        (k, 1.0),
    ])
    .expect("valid measure");
    mu.center().expect("fixed point is unique").0
}

pub fn by_name(name: &str) -> Result<AtomicIsometryMeasure> {
    match name {
        "square_lattice" => Ok(square_lattice()),
        "line_lattice" => Ok(line_lattice()),
        "rotation_rich" => Ok(rotation_rich()),
        "c3_asymmetric" => Ok(c3_asymmetric()),
        "c3_symmetric" => Ok(c3_symmetric()),
        other => Err(Error::InvalidParameter {
            name: "preset",
            reason: format!("unknown measure `{other}` (known: {})", NAMES.join(", ")),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{check_condition_c, check_condition_e, Status};
    use crate::group::{HaarOptions, RotationGroupModel};

    #[test]
    fn presets_are_centered_where_promised() {
        for name in ["square_lattice", "line_lattice", "rotation_rich", "c3_asymmetric", "c3_symmetric"] {
            let mu = by_name(name).unwrap();
            assert_eq!(check_condition_c(&mu, 1e-12).status, Status::Holds, "{name}");
        }
        assert!(by_name("nope").is_err());
    }

    #[test]
    fn group_structure() {
        let opts = HaarOptions::default();
        let k = RotationGroupModel::for_measure(&c3_asymmetric(), &opts).unwrap();
        assert!(k.is_finite());
        assert_eq!(k.len(), 3);
        assert_eq!(check_condition_e(&c3_asymmetric(), &k, 8, 1e-9, 0).unwrap().status, Status::Fails);
        let k = RotationGroupModel::for_measure(&rotation_rich(), &opts).unwrap();
        assert!(!k.is_finite());
        assert!(c3_symmetric().is_symmetric(1e-12));
        assert!(!c3_asymmetric().is_symmetric(1e-6));
    }
}
