//! Group charts: coordinates on the structure group, multiplication law,
//! structure constants and the translation matrices.
//!
//! Conventions. With `e_α` the Lie algebra basis and `[e_α, e_β] = c^γ_αβ e_γ`:
//! `u` is the left-trivialised derivative, `g⁻¹ ∂_ν g = e_μ u^μ_ν`, and `ū` the
//! right-trivialised one, `(∂_ν g) g⁻¹ = e_μ ū^μ_ν`. `v = u⁻¹`, `v̄ = ū⁻¹`, and
//! `ρ = ū v` is the adjoint matrix, `g e_α g⁻¹ = e_μ ρ^μ_α`.

use std::f64::consts::PI;
use std::fmt::Debug;

use crate::error::{LprError, Result};
use crate::linalg::{fd_jacobian, inverse_checked, Mat, Tensor3, Vector};
use crate::quaternion::Quat;

/// Step for finite-difference translation matrices.
pub const TRANSLATION_FD_STEP: f64 = 1e-6;

pub trait GroupChart: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn identity(&self) -> Vector {
        Vector::zeros(self.dim())
    }

    /// Whether `a` lies in the chart domain.
    fn contains(&self, a: &Vector) -> bool;

    /// Coordinates of `g(a) g(b)`.
    fn multiply(&self, a: &Vector, b: &Vector) -> Result<Vector>;

    fn inverse(&self, a: &Vector) -> Result<Vector>;

    /// `c[γ][α][β] = c^γ_αβ`.
    fn structure_constants(&self) -> &Tensor3;

    fn u(&self, a: &Vector) -> Result<Mat> {
        let ainv = self.inverse(a)?;
        fd_jacobian(|b| self.multiply(&ainv, b), a, TRANSLATION_FD_STEP)
    }

    fn u_bar(&self, a: &Vector) -> Result<Mat> {
        let ainv = self.inverse(a)?;
        fd_jacobian(|b| self.multiply(b, &ainv), a, TRANSLATION_FD_STEP)
    }

    fn v(&self, a: &Vector) -> Result<Mat> {
        inverse_checked(&self.u(a)?, "translation matrix u")
    }

    fn v_bar(&self, a: &Vector) -> Result<Mat> {
        inverse_checked(&self.u_bar(a)?, "translation matrix u_bar")
    }

    /// `ρ(a) = ū(a) v(a)`.
    fn adjoint(&self, a: &Vector) -> Result<Mat> {
        Ok(self.u_bar(a)? * self.v(a)?)
    }

    /// `ρ̄(a) = ρ(a)⁻¹ = u(a) v̄(a)`.
    fn adjoint_inv(&self, a: &Vector) -> Result<Mat> {
        Ok(self.u(a)? * self.v_bar(a)?)
    }

    /// Representative of `a` inside the chart, for coordinates that may
    /// wrap (angles). Identity unless overridden.
    fn canonicalize(&self, a: &Vector) -> Vector {
        a.clone()
    }

    /// Chart distance `|a⁻¹ b|`, falling back to the coordinate difference.
    fn distance(&self, a: &Vector, b: &Vector) -> f64 {
        match self.inverse(a).and_then(|ai| self.multiply(&ai, b)) {
            Ok(d) => d.amax(),
            Err(_) => (a - b).amax(),
        }
    }

    fn ensure_contains(&self, a: &Vector) -> Result<()> {
        if a.len() != self.dim() {
            return Err(LprError::Dimension(format!(
                "{} coordinates have length {}, expected {}",
                self.name(),
                a.len(),
                self.dim()
            )));
        }
        if self.contains(a) {
            Ok(())
        } else {
            Err(LprError::Domain(format!(
                "{:?} outside the {} chart",
                a.as_slice(),
                self.name()
            )))
        }
    }
}

/// `(ad_α)^μ_γ = c^μ_αγ`.
pub fn ad_matrix(c: &Tensor3, alpha: usize) -> Mat {
    let n = c.dims()[0];
    Mat::from_fn(n, n, |mu, gamma| c.get(mu, alpha, gamma))
}

/// `Σ_α ξ^α ad_α`.
pub fn ad_of(c: &Tensor3, xi: &Vector) -> Mat {
    let n = c.dims()[0];
    let mut m = Mat::zeros(n, n);
    for (alpha, &x) in xi.iter().enumerate() {
        if x != 0.0 {
            m += ad_matrix(c, alpha) * x;
        }
    }
    m
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// SO(2) in the angle chart.
#[derive(Debug, Clone)]
pub struct So2Chart {
    c: Tensor3,
}

impl Default for So2Chart {
    fn default() -> Self {
        So2Chart {
            c: Tensor3::zeros(1, 1, 1),
        }
    }
}

impl GroupChart for So2Chart {
    fn name(&self) -> &str {
        "SO(2)"
    }

    fn dim(&self) -> usize {
        1
    }

    fn contains(&self, a: &Vector) -> bool {
        a.len() == 1 && a[0].is_finite() && a[0].abs() < PI
    }

    fn multiply(&self, a: &Vector, b: &Vector) -> Result<Vector> {
        self.ensure_contains(a)?;
        self.ensure_contains(b)?;
        Ok(Vector::from_element(1, wrap_angle(a[0] + b[0])))
    }

    fn canonicalize(&self, a: &Vector) -> Vector {
        Vector::from_element(1, wrap_angle(a[0]))
    }

    fn inverse(&self, a: &Vector) -> Result<Vector> {
        self.ensure_contains(a)?;
        Ok(-a)
    }

    fn structure_constants(&self) -> &Tensor3 {
        &self.c
    }

    fn u(&self, a: &Vector) -> Result<Mat> {
        self.ensure_contains(a)?;
        Ok(Mat::identity(1, 1))
    }

    fn u_bar(&self, a: &Vector) -> Result<Mat> {
        self.u(a)
    }

    fn v(&self, a: &Vector) -> Result<Mat> {
        self.u(a)
    }

    fn v_bar(&self, a: &Vector) -> Result<Mat> {
        self.u(a)
    }

    fn adjoint(&self, a: &Vector) -> Result<Mat> {
        self.u(a)
    }

    fn adjoint_inv(&self, a: &Vector) -> Result<Mat> {
        self.u(a)
    }
}

/// Radius of the exponential-coordinate ball used for SU(2).
pub const SU2_CHART_RADIUS: f64 = 0.9 * PI;

/// SU(2) as unit quaternions in exponential coordinates:
/// `g(a) = cos|a| + sin|a| â·(i, j, k)`, basis `e = (i, j, k)`,
/// so `c^γ_αβ = 2 ε_αβγ`.
#[derive(Debug, Clone)]
pub struct Su2Chart {
    c: Tensor3,
}

impl Default for Su2Chart {
    fn default() -> Self {
        let mut c = Tensor3::zeros(3, 3, 3);
        for (a, b, g) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            c.set(g, a, b, 2.0);
            c.set(g, b, a, -2.0);
        }
        Su2Chart { c }
    }
}

fn cross_matrix(w: &[f64; 3]) -> Mat {
    Mat::from_row_slice(3, 3, &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0])
}

/// Coefficients `(sin φ/φ, (1 - cos φ)/φ², (φ - sin φ)/φ³)` with series near 0.
fn rodrigues_coefficients(phi: f64) -> (f64, f64, f64) {
    if phi < 1e-4 {
        let p2 = phi * phi;
        (1.0 - p2 / 6.0, 0.5 - p2 / 24.0, 1.0 / 6.0 - p2 / 120.0)
    } else {
        let (s, c) = phi.sin_cos();
        (s / phi, (1.0 - c) / (phi * phi), (phi - s) / (phi * phi * phi))
    }
}

impl Su2Chart {
    pub fn exp(a: &Vector) -> Quat {
        let n = a.norm();
        if n == 0.0 {
            return Quat::ONE;
        }
        let s = n.sin() / n;
        Quat::new(n.cos(), a[0] * s, a[1] * s, a[2] * s)
    }

    /// Principal logarithm of a unit quaternion.
    pub fn log(q: Quat) -> Vector {
        let im = q.imag();
        let vn = (im[0] * im[0] + im[1] * im[1] + im[2] * im[2]).sqrt();
        let theta = vn.atan2(q.w);
        let factor = if vn < 1e-12 {
            // θ/|v| -> 1/w as |v| -> 0 with w > 0
            1.0 / q.w
        } else {
            theta / vn
        };
        Vector::from_vec(vec![im[0] * factor, im[1] * factor, im[2] * factor])
    }

    fn ad_generator(a: &Vector) -> Mat {
        cross_matrix(&[2.0 * a[0], 2.0 * a[1], 2.0 * a[2]])
    }
}

impl GroupChart for Su2Chart {
    fn name(&self) -> &str {
        "SU(2)"
    }

    fn dim(&self) -> usize {
        3
    }

    fn contains(&self, a: &Vector) -> bool {
        a.len() == 3 && a.iter().all(|x| x.is_finite()) && a.norm() < SU2_CHART_RADIUS
    }

    fn multiply(&self, a: &Vector, b: &Vector) -> Result<Vector> {
        self.ensure_contains(a)?;
        self.ensure_contains(b)?;
        let q = Self::exp(a) * Self::exp(b);
        let out = Self::log(q.scale(1.0 / q.norm()));
        self.ensure_contains(&out)?;
        Ok(out)
    }

    fn inverse(&self, a: &Vector) -> Result<Vector> {
        self.ensure_contains(a)?;
        Ok(-a)
    }

    fn structure_constants(&self) -> &Tensor3 {
        &self.c
    }

    fn u(&self, a: &Vector) -> Result<Mat> {
        self.ensure_contains(a)?;
        let s = Self::ad_generator(a);
        let (_, c1, c2) = rodrigues_coefficients(2.0 * a.norm());
        Ok(Mat::identity(3, 3) - &s * c1 + &s * &s * c2)
    }

    fn u_bar(&self, a: &Vector) -> Result<Mat> {
        self.ensure_contains(a)?;
        let s = Self::ad_generator(a);
        let (_, c1, c2) = rodrigues_coefficients(2.0 * a.norm());
        Ok(Mat::identity(3, 3) + &s * c1 + &s * &s * c2)
    }

    fn adjoint(&self, a: &Vector) -> Result<Mat> {
        self.ensure_contains(a)?;
        let s = Self::ad_generator(a);
        let (c0, c1, _) = rodrigues_coefficients(2.0 * a.norm());
        Ok(Mat::identity(3, 3) + &s * c0 + &s * &s * c1)
    }

    fn adjoint_inv(&self, a: &Vector) -> Result<Mat> {
        Ok(self.adjoint(a)?.transpose())
    }
}
