//! Shared numeric helpers: dB conversions, quaternion rotation and its
//! Jacobian, angle conventions.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Quaternion stored as `[w, x, y, z]`.
pub type Quat = [f64; 4];

pub const QUAT_IDENTITY: Quat = [1.0, 0.0, 0.0, 0.0];

/// `10·log10(p)` for a strictly positive linear power ratio.
pub fn db_from_linear(p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!(
            "linear power must be positive and finite, got {p}"
        )));
    }
    Ok(10.0 * p.log10())
}

pub fn linear_from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Free-space path gain `20·log10(λ / (4π d))` in dB (negative for d > λ/4π).
pub fn fspl_gain_db(wavelength_m: f64, distance_m: f64) -> f64 {
    20.0 * (wavelength_m / (4.0 * std::f64::consts::PI * distance_m)).log10()
}

pub fn wavelength_from_carrier(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// No-signal floor used when thresholding spectra: −160 dB for sub-6 GHz
/// carriers and −190 dB for mmWave.
pub fn default_floor_db(carrier_hz: f64) -> f64 {
    if carrier_hz >= 30e9 {
        -190.0
    } else {
        -160.0
    }
}

pub fn quat_norm(q: &Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

pub fn quat_normalize(q: &Quat) -> Quat {
    let n = quat_norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Quaternion for a rotation of `angle` radians about `axis`.
pub fn quat_from_axis_angle(axis: &Vec3, angle: f64) -> Quat {
    let a = axis.normalize();
    let (s, c) = (0.5 * angle).sin_cos();
    [c, a.x * s, a.y * s, a.z * s]
}

/// Hamilton product `a ⊗ b` (apply `b` first, then `a`).
pub fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    let [aw, ax, ay, az] = *a;
    let [bw, bx, by, bz] = *b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

/// Rotation matrix of the normalized quaternion.
pub fn rotation_matrix(q: &Quat) -> Matrix3<f64> {
    let [w, x, y, z] = quat_normalize(q);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn rotate(q: &Quat, v: &Vec3) -> Vec3 {
    rotation_matrix(q) * v
}

/// Rotation matrix whose columns are the given orthonormal axes, as a quaternion.
pub fn quat_from_matrix(m: &Matrix3<f64>) -> Quat {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
    let uq = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    let c = uq.quaternion().coords;
    // nalgebra stores [i, j, k, w]
    quat_normalize(&[c[3], c[0], c[1], c[2]])
}

/// Back-propagates `dL/dR` (gradient w.r.t. each entry of the rotation matrix)
/// to the raw, possibly unnormalized quaternion components.
pub fn rotation_backward(q: &Quat, grad_r: &Matrix3<f64>) -> Quat {
    let norm = quat_norm(q);
    let [w, x, y, z] = quat_normalize(q);
    let g = grad_r;
    let dot = |m: [[f64; 3]; 3]| -> f64 {
        let mut s = 0.0;
        for (r, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                s += g[(r, c)] * v;
            }
        }
        s
    };
    let dw = dot([
        [0.0, -2.0 * z, 2.0 * y],
        [2.0 * z, 0.0, -2.0 * x],
        [-2.0 * y, 2.0 * x, 0.0],
    ]);
    let dx = dot([
        [0.0, 2.0 * y, 2.0 * z],
        [2.0 * y, -4.0 * x, -2.0 * w],
        [2.0 * z, 2.0 * w, -4.0 * x],
    ]);
    let dy = dot([
        [-4.0 * y, 2.0 * x, 2.0 * w],
        [2.0 * x, 0.0, 2.0 * z],
        [-2.0 * w, 2.0 * z, -4.0 * y],
    ]);
    let dz = dot([
        [-4.0 * z, -2.0 * w, 2.0 * x],
        [2.0 * w, -4.0 * z, 2.0 * y],
        [2.0 * x, 2.0 * y, 0.0],
    ]);
    let gh = [dw, dx, dy, dz];
    let qh = [w, x, y, z];
    let proj: f64 = gh.iter().zip(qh.iter()).map(|(a, b)| a * b).sum();
    [
        (gh[0] - proj * qh[0]) / norm,
        (gh[1] - proj * qh[1]) / norm,
        (gh[2] - proj * qh[2]) / norm,
        (gh[3] - proj * qh[3]) / norm,
    ]
}

/// World-frame spherical angles `(azimuth, zenith)` of a direction: azimuth
/// counter-clockwise from +x about +z in `[-π, π)`, zenith from +z in `[0, π]`.
pub fn direction_angles(d: &Vec3) -> (f64, f64) {
    let n = d.norm();
    let az = d.y.atan2(d.x);
    let az = if az >= std::f64::consts::PI {
        az - 2.0 * std::f64::consts::PI
    } else {
        az
    };
    let zen = (d.z / n).clamp(-1.0, 1.0).acos();
    (az, zen)
}

pub fn direction_from_angles(az: f64, zen: f64) -> Vec3 {
    let (sz, cz) = zen.sin_cos();
    let (sa, ca) = az.sin_cos();
    Vec3::new(sz * ca, sz * sa, cz)
}

/// Angle between two directions (radians), robust near 0 and π.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.cross(b).norm();
    let d = a.dot(b);
    c.atan2(d)
}

/// Mirror `v` about the plane with unit normal `n`.
pub fn reflect(v: &Vec3, n: &Vec3) -> Vec3 {
    v - 2.0 * v.dot(n) * n
}

/// Sign with `sign0(0) = 0`, the L1 subgradient choice at a perfect fit.
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
