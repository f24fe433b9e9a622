//! Minimal quaternion arithmetic for the SU(2) system.

use std::ops::{Add, Mul, Neg, Sub};

use crate::linalg::{Mat, Vector};

/// `w + x i + y j + z k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const ONE: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quat = Quat::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quat = Quat::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quat = Quat::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Imaginary unit `e_1 = i`, `e_2 = j`, `e_3 = k` for `index` 0, 1, 2.
    pub fn unit(index: usize) -> Self {
        match index {
            0 => Quat::I,
            1 => Quat::J,
            2 => Quat::K,
            _ => panic!("imaginary unit index {index} out of range"),
        }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Quat::new(v[0], v[1], v[2], v[3])
    }

    pub fn from_vector(v: &Vector) -> Self {
        Quat::from_slice(v.as_slice())
    }

    pub fn to_vector(self) -> Vector {
        Vector::from_vec(vec![self.w, self.x, self.y, self.z])
    }

    pub fn imag(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn conj(self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sq(self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn inverse(self) -> Self {
        self.conj().scale(1.0 / self.norm_sq())
    }

    /// Matrix of `q -> self * q` on `(w, x, y, z)`.
    pub fn left_matrix(self) -> Mat {
        let Quat { w, x, y, z } = self;
        Mat::from_row_slice(
            4,
            4,
            &[w, -x, -y, -z, x, w, -z, y, y, z, w, -x, z, -y, x, w],
        )
    }

    /// Matrix of `q -> q * self` on `(w, x, y, z)`.
    pub fn right_matrix(self) -> Mat {
        let Quat { w, x, y, z } = self;
        Mat::from_row_slice(
            4,
            4,
            &[w, -x, -y, -z, x, w, z, -y, y, -z, w, x, z, y, -x, w],
        )
    }
}

impl Add for Quat {
    type Output = Quat;
    fn add(self, o: Quat) -> Quat {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quat {
    type Output = Quat;
    fn sub(self, o: Quat) -> Quat {
        Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        self.scale(-1.0)
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Quat, Quat) {
        (Quat::new(0.3, -1.2, 0.5, 2.0), Quat::new(-0.7, 0.4, 1.1, -0.2))
    }

    #[test]
    fn hamilton_units() {
        assert_eq!(Quat::I * Quat::J, Quat::K);
        assert_eq!(Quat::J * Quat::K, Quat::I);
        assert_eq!(Quat::K * Quat::I, Quat::J);
        assert_eq!(Quat::I * Quat::I, -Quat::ONE);
    }

    #[test]
    fn multiplication_matrices_match_product() {
        let (p, q) = sample();
        let pq = (p * q).to_vector();
        assert!((p.left_matrix() * q.to_vector() - &pq).amax() < 1e-14);
        assert!((q.right_matrix() * p.to_vector() - &pq).amax() < 1e-14);
    }

    #[test]
    fn inverse_and_norm() {
        let (p, q) = sample();
        let one = p * p.inverse();
        assert!((one - Quat::ONE).norm() < 1e-14);
        assert!(((p * q).norm() - p.norm() * q.norm()).abs() < 1e-13);
    }
}
