//! Rotation helpers: Euler angles in arbitrary Tait-Bryan order and the
//! continuous 6D parameterization (first two matrix columns).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }

    fn from_index(i: usize) -> Axis {
        match i {
            0 => Axis::X,
            1 => Axis::Y,
            _ => Axis::Z,
        }
    }
}

/// Rotation about a single principal axis, angle in radians.
pub fn axis_rotation(axis: Axis, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    }
}

/// Compose `R = R_a(θ1) · R_b(θ2) · R_c(θ3)` for channel order `(a, b, c)`,
/// angles in degrees. This is the BVH convention: the first listed channel
/// is the outermost rotation.
pub fn euler_to_matrix(order: [Axis; 3], degrees: [f64; 3]) -> Matrix3<f64> {
    order
        .iter()
        .zip(degrees.iter())
        .fold(Matrix3::identity(), |acc, (&axis, &deg)| {
            acc * axis_rotation(axis, deg.to_radians())
        })
}

/// Inverse of [`euler_to_matrix`] for any permutation of the three axes.
/// Returns degrees; the middle angle lies in [-90, 90].
pub fn matrix_to_euler(order: [Axis; 3], r: &Matrix3<f64>) -> [f64; 3] {
    let (a, b, c) = (order[0].index(), order[1].index(), order[2].index());
    // +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
    let e = if (b + 3 - a) % 3 == 1 { 1.0 } else { -1.0 };
    let sin_mid = (e * r[(a, c)]).clamp(-1.0, 1.0);
    let mid = sin_mid.asin();
    let (first, last) = if sin_mid.abs() < 1.0 - 1e-12 {
        (
            (-e * r[(b, c)]).atan2(r[(c, c)]),
            (-e * r[(a, b)]).atan2(r[(a, a)]),
        )
    } else {
        // Gimbal lock: fold everything into the first angle.
        let first_rot = r * axis_rotation(order[1], mid).transpose();
        ((e * first_rot[(c, b)]).atan2(first_rot[(b, b)]), 0.0)
    };
    [first.to_degrees(), mid.to_degrees(), last.to_degrees()]
}

/// Parse an axis order like "ZXY".
pub fn parse_order(s: &str) -> Option<[Axis; 3]> {
    let mut out = [Axis::X; 3];
    let bytes = s.as_bytes();
    if bytes.len() != 3 {
        return None;
    }
    let mut seen = [false; 3];
    for (slot, ch) in out.iter_mut().zip(bytes) {
        let i = match ch.to_ascii_uppercase() {
            b'X' => 0,
            b'Y' => 1,
            b'Z' => 2,
            _ => return None,
        };
        if seen[i] {
            return None;
        }
        seen[i] = true;
        *slot = Axis::from_index(i);
    }
    Some(out)
}

/// First two columns of the rotation matrix, concatenated.
pub fn rotation_to_6d(r: &Matrix3<f64>) -> [f64; 6] {
    [
        r[(0, 0)],
        r[(1, 0)],
        r[(2, 0)],
        r[(0, 1)],
        r[(1, 1)],
        r[(2, 1)],
    ]
}

/// Gram-Schmidt orthonormalization of the two 3-vector halves, completed by
/// a cross product.
pub fn rotation_from_6d(v: &[f64; 6]) -> Result<Matrix3<f64>> {
    let a = Vector3::new(v[0], v[1], v[2]);
    let b = Vector3::new(v[3], v[4], v[5]);
    let na = a.norm();
    if !(na > 1e-12) {
        return Err(Error::DegenerateRotation);
    }
    let c1 = a / na;
    let b_perp = b - c1 * c1.dot(&b);
    let nb = b_perp.norm();
    if !(nb > 1e-9 * b.norm().max(1e-300)) || !(nb > 1e-12) {
        return Err(Error::DegenerateRotation);
    }
    let c2 = b_perp / nb;
    let c3 = c1.cross(&c2);
    Ok(Matrix3::from_columns(&[c1, c2, c3]))
}
