//! Right actions of a group chart on the configuration space `P` and the
//! linear space `V`, with metrics and Killing fields.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::Result;
use crate::group::{GroupChart, So2Chart, Su2Chart};
use crate::linalg::{fd_jacobian, fd_matrix_partials, Mat, Vector};
use crate::quaternion::Quat;

/// Step for finite-difference derivative fallbacks of actions and gauges.
pub const DERIVATIVE_FD_STEP: f64 = 1e-5;

pub trait GroupAction: Send + Sync + Debug {
    fn group(&self) -> &dyn GroupChart;

    fn dim_p(&self) -> usize;

    fn dim_v(&self) -> usize;

    fn dim_g(&self) -> usize {
        self.group().dim()
    }

    /// `F(Q, g)`.
    fn act_p(&self, q: &Vector, g: &Vector) -> Result<Vector>;

    /// `D̄(g) = D(g⁻¹)`, acting on `V`.
    fn rep_inv(&self, g: &Vector) -> Result<Mat>;

    /// `(J̄_α)^n_m`, one matrix per algebra direction.
    fn generators(&self) -> &[Mat];

    /// `G_AB(Q)`.
    fn metric_p(&self, q: &Vector) -> Mat;

    /// Constant `G_mn`.
    fn metric_v(&self) -> &Mat;

    /// `D(g)`.
    fn rep(&self, g: &Vector) -> Result<Mat> {
        self.rep_inv(&self.group().inverse(g)?)
    }

    /// `F^A_B(Q, g) = ∂F^A/∂Q^B`.
    fn act_p_jacobian(&self, q: &Vector, g: &Vector) -> Result<Mat> {
        fd_jacobian(|x| self.act_p(x, g), q, DERIVATIVE_FD_STEP)
    }

    /// `K^A_α(Q) = ∂F^A(Q, a)/∂a^α` at `a = e`.
    fn killing_p(&self, q: &Vector) -> Result<Mat> {
        let e = self.group().identity();
        fd_jacobian(|a| self.act_p(q, a), &e, DERIVATIVE_FD_STEP)
    }

    /// `K^A_{α,D}`: entry `[D]` is the `N_P × N_G` matrix `∂_D K`.
    fn killing_p_partials(&self, q: &Vector) -> Result<Vec<Mat>> {
        fd_matrix_partials(|x| self.killing_p(x), q, DERIVATIVE_FD_STEP)
    }

    /// `∂_D G_AB`, one matrix per `D`.
    fn metric_p_partials(&self, q: &Vector) -> Result<Vec<Mat>> {
        fd_matrix_partials(|x| Ok(self.metric_p(x)), q, DERIVATIVE_FD_STEP)
    }

    /// `K^n_α(f) = (J̄_α)^n_m f^m` as columns.
    fn killing_v(&self, f: &Vector) -> Mat {
        let gens = self.generators();
        let mut k = Mat::zeros(self.dim_v(), gens.len());
        for (alpha, j) in gens.iter().enumerate() {
            k.set_column(alpha, &(j * f));
        }
        k
    }

    /// `(F(Q, g), D̄(g) f)`.
    fn act(&self, q: &Vector, f: &Vector, g: &Vector) -> Result<(Vector, Vector)> {
        Ok((self.act_p(q, g)?, self.rep_inv(g)? * f))
    }
}

pub type SharedAction = Arc<dyn GroupAction>;

fn rotation(theta: f64) -> Mat {
    let (s, c) = theta.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

/// SO(2) co-rotating on both factors: `F(Q, θ) = R(θ)ᵀ Q`, `D̄(θ) = R(θ)ᵀ`.
/// The metric on `P` is conformally flat, `G = (1 + ε|Q|²) I`.
#[derive(Debug, Clone)]
pub struct So2PlanarAction {
    chart: So2Chart,
    conformal: f64,
    metric_v: Mat,
    generators: Vec<Mat>,
}

impl So2PlanarAction {
    pub fn new(conformal: f64, metric_v: Mat) -> Self {
        So2PlanarAction {
            chart: So2Chart::default(),
            conformal,
            metric_v,
            generators: vec![Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])],
        }
    }
}

impl Default for So2PlanarAction {
    fn default() -> Self {
        So2PlanarAction::new(0.0, Mat::identity(2, 2))
    }
}

impl GroupAction for So2PlanarAction {
    fn group(&self) -> &dyn GroupChart {
        &self.chart
    }

    fn dim_p(&self) -> usize {
        2
    }

    fn dim_v(&self) -> usize {
        2
    }

    fn act_p(&self, q: &Vector, g: &Vector) -> Result<Vector> {
        Ok(self.act_p_jacobian(q, g)? * q)
    }

    fn act_p_jacobian(&self, _q: &Vector, g: &Vector) -> Result<Mat> {
        self.chart.ensure_contains(g)?;
        Ok(rotation(g[0]).transpose())
    }

    fn rep_inv(&self, g: &Vector) -> Result<Mat> {
        self.chart.ensure_contains(g)?;
        Ok(rotation(g[0]).transpose())
    }

    fn generators(&self) -> &[Mat] {
        &self.generators
    }

    fn metric_p(&self, q: &Vector) -> Mat {
        Mat::identity(2, 2) * (1.0 + self.conformal * q.norm_squared())
    }

    fn metric_v(&self) -> &Mat {
        &self.metric_v
    }

    fn killing_p(&self, q: &Vector) -> Result<Mat> {
        Ok(Mat::from_column_slice(2, 1, &[q[1], -q[0]]))
    }

    fn killing_p_partials(&self, _q: &Vector) -> Result<Vec<Mat>> {
        Ok(vec![
            Mat::from_column_slice(2, 1, &[0.0, -1.0]),
            Mat::from_column_slice(2, 1, &[1.0, 0.0]),
        ])
    }

    fn metric_p_partials(&self, q: &Vector) -> Result<Vec<Mat>> {
        Ok((0..2)
            .map(|d| Mat::identity(2, 2) * (2.0 * self.conformal * q[d]))
            .collect())
    }
}

/// SU(2) acting on `P = H \ {0}` by right multiplication and on `V = H` by
/// left multiplication with `g⁻¹`. Metric on `P` is `(1 + ε|Q|²) I`.
#[derive(Debug, Clone)]
pub struct Su2QuaternionAction {
    chart: Su2Chart,
    conformal: f64,
    metric_v: Mat,
    generators: Vec<Mat>,
}

impl Su2QuaternionAction {
    pub fn new(conformal: f64, metric_v: Mat) -> Self {
        let generators = (0..3).map(|a| -Quat::unit(a).left_matrix()).collect();
        Su2QuaternionAction {
            chart: Su2Chart::default(),
            conformal,
            metric_v,
            generators,
        }
    }
}

impl Default for Su2QuaternionAction {
    fn default() -> Self {
        Su2QuaternionAction::new(0.0, Mat::identity(4, 4))
    }
}

impl GroupAction for Su2QuaternionAction {
    fn group(&self) -> &dyn GroupChart {
        &self.chart
    }

    fn dim_p(&self) -> usize {
        4
    }

    fn dim_v(&self) -> usize {
        4
    }

    fn act_p(&self, q: &Vector, g: &Vector) -> Result<Vector> {
        self.chart.ensure_contains(g)?;
        Ok((Quat::from_vector(q) * Su2Chart::exp(g)).to_vector())
    }

    fn act_p_jacobian(&self, _q: &Vector, g: &Vector) -> Result<Mat> {
        self.chart.ensure_contains(g)?;
        Ok(Su2Chart::exp(g).right_matrix())
    }

    fn rep_inv(&self, g: &Vector) -> Result<Mat> {
        self.chart.ensure_contains(g)?;
        Ok(Su2Chart::exp(g).conj().left_matrix())
    }

    fn generators(&self) -> &[Mat] {
        &self.generators
    }

    fn metric_p(&self, q: &Vector) -> Mat {
        Mat::identity(4, 4) * (1.0 + self.conformal * q.norm_squared())
    }

    fn metric_v(&self) -> &Mat {
        &self.metric_v
    }

    fn killing_p(&self, q: &Vector) -> Result<Mat> {
        let qq = Quat::from_vector(q);
        let mut k = Mat::zeros(4, 3);
        for alpha in 0..3 {
            k.set_column(alpha, &(qq * Quat::unit(alpha)).to_vector());
        }
        Ok(k)
    }

    fn killing_p_partials(&self, _q: &Vector) -> Result<Vec<Mat>> {
        let rights: Vec<Mat> = (0..3).map(|a| Quat::unit(a).right_matrix()).collect();
        Ok((0..4)
            .map(|d| Mat::from_fn(4, 3, |row, alpha| rights[alpha][(row, d)]))
            .collect())
    }

    fn metric_p_partials(&self, q: &Vector) -> Result<Vec<Mat>> {
        Ok((0..4)
            .map(|d| Mat::identity(4, 4) * (2.0 * self.conformal * q[d]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fd_matrix_partials, max_abs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exposes only the required methods so every default runs.
    #[derive(Debug)]
    struct Defaults<A: GroupAction>(A);

    impl<A: GroupAction> GroupAction for Defaults<A> {
        fn group(&self) -> &dyn GroupChart {
            self.0.group()
        }
        fn dim_p(&self) -> usize {
            self.0.dim_p()
        }
        fn dim_v(&self) -> usize {
            self.0.dim_v()
        }
        fn act_p(&self, q: &Vector, g: &Vector) -> Result<Vector> {
            self.0.act_p(q, g)
        }
        fn rep_inv(&self, g: &Vector) -> Result<Mat> {
            self.0.rep_inv(g)
        }
        fn generators(&self) -> &[Mat] {
            self.0.generators()
        }
        fn metric_p(&self, q: &Vector) -> Mat {
            self.0.metric_p(q)
        }
        fn metric_v(&self) -> &Mat {
            self.0.metric_v()
        }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vector {
        Vector::from_fn(n, |_, _| rng.random_range(-s..s))
    }

    fn actions() -> Vec<Box<dyn GroupAction>> {
        vec![
            Box::new(So2PlanarAction::new(0.2, Mat::identity(2, 2))),
            Box::new(Su2QuaternionAction::new(0.2, Mat::identity(4, 4))),
        ]
    }

    #[test]
    fn so2_quarter_turn() {
        let a = So2PlanarAction::default();
        let q = Vector::from_vec(vec![1.0, 0.0]);
        let out = a
            .act_p(&q, &Vector::from_element(1, std::f64::consts::FRAC_PI_2))
            .unwrap();
        assert!((out - Vector::from_vec(vec![0.0, -1.0])).amax() < 1e-15);
    }

    #[test]
    fn so2_killing_field() {
        let a = So2PlanarAction::default();
        let k = a.killing_p(&Vector::from_vec(vec![0.3, -1.7])).unwrap();
        assert_eq!(k.as_slice(), &[-1.7, -0.3]);
        assert_eq!(a.killing_v(&Vector::zeros(2)).amax(), 0.0);
    }

    #[test]
    fn identity_acts_trivially() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for act in actions() {
            let q = rand_vec(&mut rng, act.dim_p(), 2.0);
            let f = rand_vec(&mut rng, act.dim_v(), 2.0);
            let (q2, f2) = act.act(&q, &f, &act.group().identity()).unwrap();
            assert!((q2 - &q).amax() < 1e-15 && (f2 - &f).amax() < 1e-15);
        }
    }

    #[test]
    fn composition_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for act in actions() {
            let ng = act.dim_g();
            for _ in 0..50 {
                let q = rand_vec(&mut rng, act.dim_p(), 2.0);
                let f = rand_vec(&mut rng, act.dim_v(), 2.0);
                let g1 = rand_vec(&mut rng, ng, 0.8);
                let g2 = rand_vec(&mut rng, ng, 0.8);
                let (q1, f1) = act.act(&q, &f, &g1).unwrap();
                let (lq, lf) = act.act(&q1, &f1, &g2).unwrap();
                let g12 = act.group().multiply(&g1, &g2).unwrap();
                let (rq, rf) = act.act(&q, &f, &g12).unwrap();
                assert!((lq - rq).amax() < 1e-12);
                assert!((lf - rf).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for act in actions() {
            let q = rand_vec(&mut rng, act.dim_p(), 2.0);
            let g = rand_vec(&mut rng, act.dim_g(), 0.8);
            let fd = Defaults(&*act);
            assert!(max_abs(&(act.killing_p(&q).unwrap() - fd.killing_p(&q).unwrap())) < 1e-9);
            assert!(
                max_abs(&(act.act_p_jacobian(&q, &g).unwrap() - fd.act_p_jacobian(&q, &g).unwrap()))
                    < 1e-9
            );
            let ka = act.killing_p_partials(&q).unwrap();
            // Nesting two difference quotients loses too many digits; difference
            // the analytic field instead.
            let kf = fd_matrix_partials(|x| act.killing_p(x), &q, DERIVATIVE_FD_STEP).unwrap();
            let ga = act.metric_p_partials(&q).unwrap();
            let gf = fd.metric_p_partials(&q).unwrap();
            for d in 0..act.dim_p() {
                assert!(max_abs(&(&ka[d] - &kf[d])) < 1e-6);
                assert!(max_abs(&(&ga[d] - &gf[d])) < 1e-8);
            }
        }
    }

    #[test]
    fn killing_fd_converges_second_order() {
        let act = Su2QuaternionAction::default();
        let q = Vector::from_vec(vec![0.4, -1.1, 0.8, 0.3]);
        let k = act.killing_p(&q).unwrap();
        let e = act.group().identity();
        let err = |h: f64| max_abs(&(fd_jacobian(|a| act.act_p(&q, a), &e, h).unwrap() - &k));
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn generator_commutators_use_negated_constants() {
        for act in actions() {
            let c = act.group().structure_constants();
            let j = act.generators();
            let n = j.len();
            for a in 0..n {
                for b in 0..n {
                    let comm = &j[a] * &j[b] - &j[b] * &j[a];
                    let mut rhs = Mat::zeros(act.dim_v(), act.dim_v());
                    for g in 0..n {
                        rhs -= &j[g] * c.get(g, a, b);
                    }
                    assert!(max_abs(&(comm - rhs)) < 1e-14);
                }
            }
        }
    }

    impl<A: GroupAction + ?Sized> GroupAction for &A {
        fn group(&self) -> &dyn GroupChart {
            (**self).group()
        }
        fn dim_p(&self) -> usize {
            (**self).dim_p()
        }
        fn dim_v(&self) -> usize {
            (**self).dim_v()
        }
        fn act_p(&self, q: &Vector, g: &Vector) -> Result<Vector> {
            (**self).act_p(q, g)
        }
        fn rep_inv(&self, g: &Vector) -> Result<Mat> {
            (**self).rep_inv(g)
        }
        fn generators(&self) -> &[Mat] {
            (**self).generators()
        }
        fn metric_p(&self, q: &Vector) -> Mat {
            (**self).metric_p(q)
        }
        fn metric_v(&self) -> &Mat {
            (**self).metric_v()
        }
    }
}
