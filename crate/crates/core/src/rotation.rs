//! 3D rotations in ZYZ Euler angles.
//!
//! `EulerZYZ { alpha, beta, gamma }` denotes the active rotation
//! `Rz(α) · Ry(β) · Rz(γ)`. Rotating a function `f` by `R` means
//! `(R f)(x) = f(R⁻¹ x)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerZYZ {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl EulerZYZ {
    /// Builds a rotation, wrapping `α, γ` into `[0, 2π)` and clamping `β` to `[0, π]`.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha: wrap_angle(alpha), beta: beta.clamp(0.0, PI), gamma: wrap_angle(gamma) }
    }

    pub fn identity() -> Self {
        Self { alpha: 0.0, beta: 0.0, gamma: 0.0 }
    }

    pub fn matrix(&self) -> Mat3 {
        mat_mul(&mat_mul(&rot_z(self.alpha), &rot_y(self.beta)), &rot_z(self.gamma))
    }

    /// Recovers ZYZ angles from a rotation matrix. At the gimbal-lock poles
    /// (`β ∈ {0, π}`) the whole in-plane angle is assigned to `α`.
    pub fn from_matrix(m: &Mat3) -> Self {
        let cb = m[2][2].clamp(-1.0, 1.0);
        let beta = cb.acos();
        let sb = (m[0][2].powi(2) + m[1][2].powi(2)).sqrt();
        if sb > 1e-12 {
            let alpha = m[1][2].atan2(m[0][2]);
            let gamma = m[2][1].atan2(-m[2][0]);
            Self::new(alpha, beta, gamma)
        } else if cb > 0.0 {
            // Rz(α+γ)
            Self::new(m[1][0].atan2(m[0][0]), 0.0, 0.0)
        } else {
            // Rz(α) Ry(π) Rz(γ) = Ry(π) Rz(γ-α); put everything into α with γ = 0.
            Self::new((-m[1][0]).atan2(-m[0][0]), PI, 0.0)
        }
    }

    /// `Rz(−γ) Ry(−β) Rz(−α)`, rewritten with `Ry(−β) = Rz(π) Ry(β) Rz(−π)`.
    pub fn inverse(&self) -> Self {
        Self::new(PI - self.gamma, self.beta, -PI - self.alpha)
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_matrix(&mat_mul(&self.matrix(), &other.matrix()))
    }

    /// Rotation angle (geodesic distance to the identity) in radians.
    pub fn angle(&self) -> f64 {
        let m = self.matrix();
        let tr = m[0][0] + m[1][1] + m[2][2];
        ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Geodesic distance between two rotations.
    pub fn distance(&self, other: &Self) -> f64 {
        self.inverse().compose(other).angle()
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.matrix(), v)
    }

    /// Haar-uniform random rotation via a uniformly distributed unit quaternion.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        // Shoemake's subgroup algorithm.
        let u1: f64 = rng.random();
        let u2: f64 = rng.random::<f64>() * TAU;
        let u3: f64 = rng.random::<f64>() * TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = [a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos()];
        Self::from_matrix(&quat_to_matrix(q))
    }
}

impl Default for EulerZYZ {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rotation matrix of a unit quaternion `(x, y, z, w)`.
pub fn quat_to_matrix(q: [f64; 4]) -> Mat3 {
    let [x, y, z, w] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rot_z(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub fn rot_y(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Spherical angles `(α, β)` (azimuth, polar) of a nonzero vector.
pub fn to_spherical(v: [f64; 3]) -> (f64, f64) {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let beta = (v[2] / r).clamp(-1.0, 1.0).acos();
    let alpha = v[1].atan2(v[0]).rem_euclid(TAU);
    (alpha, beta)
}
