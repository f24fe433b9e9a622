//! Gauge surface, slice chart `(Q*, f̃, a)` and the projectors `N`, `P⊥`.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::ops::SubAssign;

use serde::{Deserialize, Serialize};

use crate::action::{GroupAction, DERIVATIVE_FD_STEP};
use crate::error::{LprError, Result};
use crate::linalg::{fd_matrix_partials, inverse_checked, max_abs_vec, Mat, Vector};
use crate::system::MechanicalSystem;

/// Residual accepted after a full Newton solve.
pub const SLICE_SOLVE_TOL: f64 = 1e-10;
/// Residual accepted for points along a trajectory.
pub const SLICE_TRAJECTORY_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 10;

pub trait GaugeSurface: Send + Sync + Debug {
    /// Number of gauge conditions; equals the group dimension.
    fn dim(&self) -> usize;

    fn chi(&self, q: &Vector) -> Vector;

    /// `χ^μ_C`, an `N_G × N_P` matrix.
    fn gradient(&self, q: &Vector) -> Mat;

    /// `χ^μ_{C,D}`; entry `[μ]` is symmetric `N_P × N_P`.
    fn hessians(&self, q: &Vector) -> Result<Vec<Mat>> {
        let parts = fd_matrix_partials(|x| Ok(self.gradient(x)), q, DERIVATIVE_FD_STEP)?;
        let (ng, np) = (self.dim(), q.len());
        Ok((0..ng)
            .map(|mu| Mat::from_fn(np, np, |c, d| parts[d][(mu, c)]))
            .collect())
    }

    /// Selects one connected sheet of `χ = 0` when the zero set has several.
    fn on_branch(&self, _q: &Vector) -> bool {
        true
    }
}

/// `χ = Q² - β (Q¹)²`; the slice is the sheet with `Q¹ > 0`.
#[derive(Debug, Clone, Default)]
pub struct So2Gauge {
    pub curvature: f64,
}

impl GaugeSurface for So2Gauge {
    fn dim(&self) -> usize {
        1
    }

    fn chi(&self, q: &Vector) -> Vector {
        Vector::from_element(1, q[1] - self.curvature * q[0] * q[0])
    }

    fn gradient(&self, q: &Vector) -> Mat {
        Mat::from_row_slice(1, 2, &[-2.0 * self.curvature * q[0], 1.0])
    }

    fn hessians(&self, _q: &Vector) -> Result<Vec<Mat>> {
        Ok(vec![Mat::from_row_slice(
            2,
            2,
            &[-2.0 * self.curvature, 0.0, 0.0, 0.0],
        )])
    }

    fn on_branch(&self, q: &Vector) -> bool {
        q[0] > 0.0
    }
}

/// `χ = (Q¹ - β (Q⁰)², Q², Q³)`; the slice is the sheet with `Q⁰ > 0`.
#[derive(Debug, Clone, Default)]
pub struct Su2Gauge {
    pub curvature: f64,
}

impl GaugeSurface for Su2Gauge {
    fn dim(&self) -> usize {
        3
    }

    fn chi(&self, q: &Vector) -> Vector {
        Vector::from_vec(vec![q[1] - self.curvature * q[0] * q[0], q[2], q[3]])
    }

    fn gradient(&self, q: &Vector) -> Mat {
        let mut g = Mat::zeros(3, 4);
        g[(0, 0)] = -2.0 * self.curvature * q[0];
        g[(0, 1)] = 1.0;
        g[(1, 2)] = 1.0;
        g[(2, 3)] = 1.0;
        g
    }

    fn hessians(&self, _q: &Vector) -> Result<Vec<Mat>> {
        let mut h0 = Mat::zeros(4, 4);
        h0[(0, 0)] = -2.0 * self.curvature;
        Ok(vec![h0, Mat::zeros(4, 4), Mat::zeros(4, 4)])
    }

    fn on_branch(&self, q: &Vector) -> bool {
        q[0] > 0.0
    }
}

/// Adapted coordinates: `Q*` on the slice, `f̃`, and group coordinates `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePoint {
    pub q_star: Vector,
    pub f_tilde: Vector,
    pub a: Vector,
}

/// `Φ^β_μ = χ^β_A K^A_μ`.
pub fn faddeev_popov(sys: &MechanicalSystem, q: &Vector) -> Result<Mat> {
    Ok(sys.gauge.gradient(q) * sys.action.killing_p(q)?)
}

fn newton_from(
    sys: &MechanicalSystem,
    q: &Vector,
    start: &Vector,
) -> Result<(Vector, f64)> {
    let group = sys.action.group();
    let residual_at = |a: &Vector| -> Result<(Vector, Vector)> {
        let q_star = sys.action.act_p(q, &group.inverse(a)?)?;
        let chi = sys.gauge.chi(&q_star);
        Ok((q_star, chi))
    };
    let scale = q.norm().max(1.0);
    let mut a = start.clone();
    let (mut q_star, mut chi) = residual_at(&a)?;
    let mut res = max_abs_vec(&chi);
    for iter in 0..NEWTON_MAX_ITER {
        if res <= 1e-14 * scale {
            return Ok((a, res));
        }
        let fp = faddeev_popov(sys, &q_star)?;
        let fp_inv = inverse_checked(&fp, "Faddeev-Popov matrix in gauge solve")?;
        let step = group.v_bar(&a)? * fp_inv * &chi;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial = &a + &step * lambda;
            if group.contains(&trial) {
                if let Ok((qs, c)) = residual_at(&trial) {
                    let r = max_abs_vec(&c);
                    if r < res || (r <= SLICE_SOLVE_TOL * scale && r <= res * 1.000001) {
                        a = trial;
                        q_star = qs;
                        chi = c;
                        res = r;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if res <= SLICE_SOLVE_TOL * scale {
                return Ok((a, res));
            }
            return Err(LprError::GaugeNonConvergence {
                residual: res,
                iterations: iter + 1,
            });
        }
    }
    if res <= SLICE_SOLVE_TOL * scale {
        Ok((a, res))
    } else {
        Err(LprError::GaugeNonConvergence {
            residual: res,
            iterations: NEWTON_MAX_ITER,
        })
    }
}

/// Deterministic fallback seeds along the chart axes.
fn fallback_seeds(ng: usize) -> Vec<Vector> {
    let mut seeds = Vec::new();
    for radius in [PI / 4.0, PI / 2.0, 3.0 * PI / 4.0] {
        for axis in 0..ng {
            for sign in [1.0, -1.0] {
                let mut s = Vector::zeros(ng);
                s[axis] = sign * radius;
                seeds.push(s);
            }
        }
    }
    seeds
}

/// Solves `χ(F(Q, a⁻¹)) = 0` for `a` with damped Newton steps. Starts from
/// `guess` (or the identity) and falls back to a fixed seed list when that
/// start diverges or lands on the wrong sheet.
pub fn solve_group_coordinate(
    sys: &MechanicalSystem,
    q: &Vector,
    guess: Option<&Vector>,
) -> Result<Vector> {
    let group = sys.action.group();
    let mut starts = Vec::new();
    if let Some(g) = guess {
        starts.push(g.clone());
    }
    starts.push(group.identity());
    starts.extend(fallback_seeds(group.dim()));

    let mut last_err = None;
    for start in &starts {
        if !group.contains(start) {
            continue;
        }
        match newton_from(sys, q, start) {
            Ok((a, _)) => {
                let q_star = sys.action.act_p(q, &group.inverse(&a)?)?;
                if sys.gauge.on_branch(&q_star) {
                    return Ok(a);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| LprError::GaugeNonConvergence {
        residual: f64::NAN,
        iterations: NEWTON_MAX_ITER,
    }))
}

/// `(Q, f) -> (Q*, f̃, a)` with `Q* = F(Q, a⁻¹)` and `f̃ = D(a) f`.
pub fn to_bundle(
    sys: &MechanicalSystem,
    q: &Vector,
    f: &Vector,
    guess: Option<&Vector>,
) -> Result<BundlePoint> {
    let a = solve_group_coordinate(sys, q, guess)?;
    let group = sys.action.group();
    let q_star = sys.action.act_p(q, &group.inverse(&a)?)?;
    let f_tilde = sys.action.rep(&a)? * f;
    Ok(BundlePoint { q_star, f_tilde, a })
}

/// `(Q*, f̃, a) -> (F(Q*, a), D̄(a) f̃)`.
pub fn from_bundle(sys: &MechanicalSystem, b: &BundlePoint) -> Result<(Vector, Vector)> {
    sys.action.act(&b.q_star, &b.f_tilde, &b.a)
}

/// Projector data at a point. Matrices act on the combined index `(A, m)`.
#[derive(Debug, Clone)]
pub struct ProjectorSet {
    pub fp: Mat,
    pub fp_inv: Mat,
    /// `Λ^ν_E = (Φ⁻¹)^ν_μ χ^μ_E`, `N_G × N_P`.
    pub lambda: Mat,
    pub n: Mat,
    pub p_perp: Mat,
}

impl ProjectorSet {
    /// Evaluates the projectors without checking `χ(q) = 0`; the formulas are
    /// defined on a neighbourhood of the slice.
    pub fn evaluate(action: &dyn GroupAction, gauge: &dyn GaugeSurface, q: &Vector, f: &Vector) -> Result<Self> {
        let (np, nv) = (action.dim_p(), action.dim_v());
        let k = action.killing_p(q)?;
        let kv = action.killing_v(f);
        let chi_grad = gauge.gradient(q);
        let fp = &chi_grad * &k;
        let fp_inv = inverse_checked(&fp, "Faddeev-Popov matrix")?;
        let lambda = &fp_inv * &chi_grad;

        let mut n = Mat::identity(np + nv, np + nv);
        n.view_mut((0, 0), (np, np)).sub_assign(&(&k * &lambda));
        n.view_mut((np, 0), (nv, np)).sub_assign(&(&kv * &lambda));

        let g = action.metric_p(q);
        let g_inv = inverse_checked(&g, "metric on P")?;
        let gamma = k.transpose() * &g * &k;
        let x = g_inv * chi_grad.transpose() * gamma;
        let m = &chi_grad * &x;
        let m_inv = inverse_checked(&m, "slice normal Gram matrix")?;
        let mut p_perp = Mat::identity(np + nv, np + nv);
        p_perp
            .view_mut((0, 0), (np, np))
            .sub_assign(&(x * m_inv * &chi_grad));

        Ok(ProjectorSet {
            fp,
            fp_inv,
            lambda,
            n,
            p_perp,
        })
    }
}

/// Projectors at a slice point; rejects points off the slice.
pub fn projectors(sys: &MechanicalSystem, q_star: &Vector, f_tilde: &Vector) -> Result<ProjectorSet> {
    let res = max_abs_vec(&sys.gauge.chi(q_star));
    if res > SLICE_TRAJECTORY_TOL * q_star.norm().max(1.0) {
        return Err(LprError::Domain(format!(
            "point {:?} is off the slice (|chi| = {res:.3e})",
            q_star.as_slice()
        )));
    }
    ProjectorSet::evaluate(&*sys.action, &*sys.gauge, q_star, f_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::systems::{builtin, BuiltinKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn so2() -> MechanicalSystem {
        builtin(BuiltinKind::So2Planar).unwrap()
    }

    fn su2() -> MechanicalSystem {
        builtin(BuiltinKind::Su2Quaternion).unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn so2_faddeev_popov_is_minus_r() {
        let fp = faddeev_popov(&so2(), &v(&[2.5, 0.0])).unwrap();
        assert!((fp[(0, 0)] + 2.5).abs() < 1e-15);
    }

    #[test]
    fn su2_faddeev_popov_is_r_identity() {
        let fp = faddeev_popov(&su2(), &v(&[1.7, 0.0, 0.0, 0.0])).unwrap();
        assert!(max_abs(&(fp - Mat::identity(3, 3) * 1.7)) < 1e-15);
    }

    #[test]
    fn on_slice_point_has_identity_coordinate() {
        let sys = su2();
        let a = solve_group_coordinate(&sys, &v(&[0.8, 0.0, 0.0, 0.0]), None).unwrap();
        assert_eq!(a.amax(), 0.0);
    }

    #[test]
    fn so2_group_coordinate_matches_atan2() {
        let sys = so2();
        for q in [v(&[0.0, 1.0]), v(&[0.3, -2.0]), v(&[-1.0, 0.4]), v(&[2.0, 0.1])] {
            let a = solve_group_coordinate(&sys, &q, None).unwrap();
            let expect = -q[1].atan2(q[0]);
            assert!((a[0] - expect).abs() < 1e-10, "{q:?}: {} vs {expect}", a[0]);
        }
    }

    #[test]
    fn su2_group_coordinate_matches_normalisation() {
        let sys = su2();
        let q = v(&[0.5, -0.7, 0.2, 0.9]);
        let a = solve_group_coordinate(&sys, &q, None).unwrap();
        let unit = crate::quaternion::Quat::from_vector(&q).scale(1.0 / q.norm());
        let expect = crate::group::Su2Chart::log(unit);
        assert!((a - expect).amax() < 1e-10);
    }

    #[test]
    fn so2_from_bundle_example() {
        let b = BundlePoint {
            q_star: v(&[2.0, 0.0]),
            f_tilde: v(&[0.0, 0.0]),
            a: v(&[std::f64::consts::FRAC_PI_2]),
        };
        let (q, _) = from_bundle(&so2(), &b).unwrap();
        assert!((q - v(&[0.0, -2.0])).amax() < 1e-15);
    }

    #[test]
    fn so2_projectors_at_axis() {
        let p = projectors(&so2(), &v(&[1.3, 0.0]), &v(&[0.2, -0.4])).unwrap();
        let expect = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(max_abs(&(p.n.view((0, 0), (2, 2)) - &expect)) < 1e-15);
        assert!(max_abs(&(p.p_perp.view((0, 0), (2, 2)) - &expect)) < 1e-15);
    }

    #[test]
    fn off_slice_projectors_rejected() {
        assert!(projectors(&so2(), &v(&[1.0, 0.5]), &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn round_trip_and_gauge_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sys in [so2(), su2()] {
            let (np, nv, ng) = sys.dims();
            for _ in 0..100 {
                let b0 = sys.random_bundle_point(&mut rng);
                let (q, f) = from_bundle(&sys, &b0).unwrap();
                let b = to_bundle(&sys, &q, &f, None).unwrap();
                let (q2, f2) = from_bundle(&sys, &b).unwrap();
                assert!((q2 - &q).amax() < 1e-10 && (f2 - &f).amax() < 1e-10);
                assert!(max_abs_vec(&sys.gauge.chi(&b.q_star)) < 1e-10);
                assert_eq!((b.q_star.len(), b.f_tilde.len(), b.a.len()), (np, nv, ng));
            }
            for _ in 0..50 {
                let b0 = sys.random_bundle_point(&mut rng);
                let (q, f) = from_bundle(&sys, &b0).unwrap();
                let g = Vector::from_fn(ng, |_, _| rng.random_range(-0.5..0.5));
                let (qg, fg) = sys.action.act(&q, &f, &g).unwrap();
                let b1 = to_bundle(&sys, &q, &f, None).unwrap();
                let b2 = to_bundle(&sys, &qg, &fg, None).unwrap();
                assert!((&b1.q_star - &b2.q_star).amax() < 1e-10);
                assert!((&b1.f_tilde - &b2.f_tilde).amax() < 1e-10);
                let shifted = sys.action.group().multiply(&b1.a, &g).unwrap();
                assert!((shifted - &b2.a).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn curved_gauge_hessian_matches_fd() {
        #[derive(Debug)]
        struct FdHessian(Su2Gauge);
        impl GaugeSurface for FdHessian {
            fn dim(&self) -> usize {
                3
            }
            fn chi(&self, q: &Vector) -> Vector {
                self.0.chi(q)
            }
            fn gradient(&self, q: &Vector) -> Mat {
                self.0.gradient(q)
            }
        }
        let g = Su2Gauge { curvature: 0.4 };
        let q = v(&[0.9, 0.3, -0.2, 0.1]);
        let a = g.hessians(&q).unwrap();
        let b = FdHessian(g.clone()).hessians(&q).unwrap();
        for mu in 0..3 {
            assert!(max_abs(&(&a[mu] - &b[mu])) < 1e-9);
        }
    }
}
