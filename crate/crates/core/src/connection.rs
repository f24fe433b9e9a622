//! Mechanical connection, horizontal projector, horizontal metric, curvature
//! and the structure constants of the horizontal-lift frame.
//!
//! Matrices use the combined index `Ã = (A, m)` of size `N_P + N_V`: rows are
//! upper indices, columns lower ones. `K̃` is `(N_P + N_V) × N_G`, `𝒜` is
//! `N_G × (N_P + N_V)`.

use crate::action::GroupAction;
use crate::error::Result;
use crate::gauge::{BundlePoint, GaugeSurface, ProjectorSet};
use crate::group::GroupChart;
use crate::linalg::{block_diag, inverse_checked, Mat, Tensor3, Vector};
use crate::system::MechanicalSystem;

/// Geometry at a point `(Q, f)` of `P × V`. Nothing here depends on a group
/// element; see [`GeometryCache`] for the tilde quantities.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub np: usize,
    pub nv: usize,
    pub ng: usize,
    pub q: Vector,
    pub f: Vector,
    /// `Ĝ = diag(G_AB, G_mn)`.
    pub g_hat: Mat,
    pub g_hat_inv: Mat,
    pub k_p: Mat,
    pub k_v: Mat,
    pub k_tilde: Mat,
    pub chi_grad: Mat,
    pub proj: ProjectorSet,
    pub gamma: Mat,
    pub gamma_prime: Mat,
    pub d: Mat,
    pub d_inv: Mat,
    /// `𝒜 = d⁻¹ K̃ᵀ Ĝ`.
    pub conn: Mat,
    /// `Π = I - K̃ 𝒜`.
    pub pi: Mat,
    /// `G^H = Πᵀ Ĝ Π`.
    pub gh: Mat,
    /// `Ǧ = N Ĝ⁻¹ Nᵀ`.
    pub gh_pinv: Mat,
}

/// Partial derivative of the point geometry along one ambient coordinate.
#[derive(Debug, Clone)]
pub struct GeometryDerivative {
    pub g_hat: Mat,
    pub k_tilde: Mat,
    pub chi_grad: Mat,
    pub lambda: Mat,
    pub n: Mat,
    pub d: Mat,
    pub conn: Mat,
    pub gh: Mat,
}

impl PointGeometry {
    pub fn evaluate(
        action: &dyn GroupAction,
        gauge: &dyn GaugeSurface,
        q: &Vector,
        f: &Vector,
    ) -> Result<Self> {
        let (np, nv, ng) = (action.dim_p(), action.dim_v(), action.dim_g());
        let g_p = action.metric_p(q);
        let g_v = action.metric_v().clone();
        let g_hat = block_diag(&g_p, &g_v);
        let g_hat_inv = inverse_checked(&g_hat, "metric on P x V")?;
        let k_p = action.killing_p(q)?;
        let k_v = action.killing_v(f);
        let mut k_tilde = Mat::zeros(np + nv, ng);
        k_tilde.view_mut((0, 0), (np, ng)).copy_from(&k_p);
        k_tilde.view_mut((np, 0), (nv, ng)).copy_from(&k_v);
        let chi_grad = gauge.gradient(q);
        let proj = ProjectorSet::evaluate(action, gauge, q, f)?;

        let gamma = k_p.transpose() * &g_p * &k_p;
        let gamma_prime = k_v.transpose() * &g_v * &k_v;
        let d = &gamma + &gamma_prime;
        let d_inv = inverse_checked(&d, "orbit metric d")?;
        let conn = &d_inv * k_tilde.transpose() * &g_hat;
        let pi = Mat::identity(np + nv, np + nv) - &k_tilde * &conn;
        let gh = pi.transpose() * &g_hat * &pi;
        let gh_pinv = &proj.n * &g_hat_inv * proj.n.transpose();

        Ok(PointGeometry {
            np,
            nv,
            ng,
            q: q.clone(),
            f: f.clone(),
            g_hat,
            g_hat_inv,
            k_p,
            k_v,
            k_tilde,
            chi_grad,
            proj,
            gamma,
            gamma_prime,
            d,
            d_inv,
            conn,
            pi,
            gh,
            gh_pinv,
        })
    }

    pub fn at(sys: &MechanicalSystem, q: &Vector, f: &Vector) -> Result<Self> {
        Self::evaluate(&*sys.action, &*sys.gauge, q, f)
    }

    pub fn dim_base(&self) -> usize {
        self.np + self.nv
    }

    /// `[Λ 0]`, the `N_G × (N_P + N_V)` extension of `Λ`.
    pub fn lambda_ext(&self) -> Mat {
        let mut l = Mat::zeros(self.ng, self.np + self.nv);
        l.view_mut((0, 0), (self.ng, self.np))
            .copy_from(&self.proj.lambda);
        l
    }

    /// Analytic partials along every ambient coordinate `(Q^D, f^m)`.
    pub fn partials(
        &self,
        action: &dyn GroupAction,
        gauge: &dyn GaugeSurface,
    ) -> Result<Vec<GeometryDerivative>> {
        let (np, nv, ng) = (self.np, self.nv, self.ng);
        let n = np + nv;
        let dk_p = action.killing_p_partials(&self.q)?;
        let dg_p = action.metric_p_partials(&self.q)?;
        let hess = gauge.hessians(&self.q)?;
        let gens = action.generators();
        let lambda_ext = self.lambda_ext();

        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let mut dg_hat = Mat::zeros(n, n);
            let mut dk = Mat::zeros(n, ng);
            let mut dchi = Mat::zeros(ng, np);
            if j < np {
                dg_hat.view_mut((0, 0), (np, np)).copy_from(&dg_p[j]);
                dk.view_mut((0, 0), (np, ng)).copy_from(&dk_p[j]);
                for (mu, h) in hess.iter().enumerate() {
                    for c in 0..np {
                        dchi[(mu, c)] = h[(c, j)];
                    }
                }
            } else {
                let m = j - np;
                for (alpha, jb) in gens.iter().enumerate() {
                    for row in 0..nv {
                        dk[(np + row, alpha)] = jb[(row, m)];
                    }
                }
            }
            let dk_p_j = dk.view((0, 0), (np, ng)).clone_owned();
            let dfp = &dchi * &self.k_p + &self.chi_grad * &dk_p_j;
            let dfp_inv = -(&self.proj.fp_inv * dfp * &self.proj.fp_inv);
            let dlambda = dfp_inv * &self.chi_grad + &self.proj.fp_inv * &dchi;
            let mut dlambda_ext = Mat::zeros(ng, n);
            dlambda_ext.view_mut((0, 0), (ng, np)).copy_from(&dlambda);
            let dn = -(&dk * &lambda_ext) - &self.k_tilde * &dlambda_ext;

            let kt_g = self.k_tilde.transpose() * &self.g_hat;
            let dd = dk.transpose() * &self.g_hat * &self.k_tilde
                + self.k_tilde.transpose() * &dg_hat * &self.k_tilde
                + &kt_g * &dk;
            let dd_inv = -(&self.d_inv * &dd * &self.d_inv);
            let dconn = &dd_inv * &kt_g
                + &self.d_inv * (dk.transpose() * &self.g_hat + self.k_tilde.transpose() * &dg_hat);
            let dgh = &dg_hat
                - &dg_hat * &self.k_tilde * &self.conn
                - &self.g_hat * &dk * &self.conn
                - &self.g_hat * &self.k_tilde * &dconn;

            out.push(GeometryDerivative {
                g_hat: dg_hat,
                k_tilde: dk,
                chi_grad: dchi,
                lambda: dlambda,
                n: dn,
                d: dd,
                conn: dconn,
                gh: dgh,
            });
        }
        Ok(out)
    }
}

/// Replaces each ambient partial `∂_D` by the slice derivative
/// `∂*_D = (P⊥)^E_D ∂_E`. The `V` block of `P⊥` is the identity.
pub fn project_partials<F>(p_perp: &Mat, partials: &[GeometryDerivative], pick: F) -> Vec<Mat>
where
    F: Fn(&GeometryDerivative) -> &Mat,
{
    let n = partials.len();
    (0..n)
        .map(|j| {
            let mut acc = pick(&partials[0]) * p_perp[(0, j)];
            for (e, part) in partials.iter().enumerate().skip(1) {
                let w = p_perp[(e, j)];
                if w != 0.0 {
                    acc += pick(part) * w;
                }
            }
            acc
        })
        .collect()
}

/// Commutator coefficients of the frame `(H_A, H_m, L_α)`.
#[derive(Debug, Clone)]
pub struct StructureConstants {
    /// `ℂ^T_AB`, dims `(N_P, N_P, N_P)`.
    pub c_t_ab: Tensor3,
    /// `ℂ^p_AB`, dims `(N_V, N_P, N_P)`.
    pub c_p_ab: Tensor3,
    /// `ℂ^α_AB`, dims `(N_G, N_P, N_P)`.
    pub c_alpha_ab: Tensor3,
    /// `ℂ^m_Ap`, dims `(N_V, N_P, N_V)`.
    pub c_m_ap: Tensor3,
    /// `ℂ^α_Ap`, dims `(N_G, N_P, N_V)`.
    pub c_alpha_ap: Tensor3,
    /// `ℂ^α_pq`, dims `(N_G, N_V, N_V)`.
    pub c_alpha_pq: Tensor3,
    /// Untilded curvature `ℱ^α_D̃C̃` on the combined index.
    pub curvature: Tensor3,
    /// `ℱ̃ = ρ̄ ℱ`.
    pub curvature_tilde: Tensor3,
    /// `[H_C̃, H_Ẽ] = ch[T̃][C̃][Ẽ] H_T̃ + cv[α][C̃][Ẽ] L_α`.
    pub ch: Tensor3,
    pub cv: Tensor3,
}

impl StructureConstants {
    pub fn compute(
        geo: &PointGeometry,
        partials: &[GeometryDerivative],
        c: &Tensor3,
        generators: &[Mat],
        rho_bar: &Mat,
    ) -> Self {
        let (np, nv, ng) = (geo.np, geo.nv, geo.ng);
        let n = np + nv;
        let p_perp = &geo.proj.p_perp;
        let lambda = &geo.proj.lambda;
        let nm = &geo.proj.n;

        let dk = project_partials(p_perp, partials, |p| &p.k_tilde);
        let dlambda = project_partials(p_perp, partials, |p| &p.lambda);
        let dconn = project_partials(p_perp, partials, |p| &p.conn);

        let mut curvature = Tensor3::zeros(ng, n, n);
        for alpha in 0..ng {
            for d in 0..n {
                for cc in 0..n {
                    let mut v = dconn[d][(alpha, cc)] - dconn[cc][(alpha, d)];
                    for nu in 0..ng {
                        for sg in 0..ng {
                            let cst = c.get(alpha, nu, sg);
                            if cst != 0.0 {
                                v += cst * geo.conn[(nu, d)] * geo.conn[(sg, cc)];
                            }
                        }
                    }
                    curvature.set(alpha, d, cc, v);
                }
            }
        }
        let mut curvature_tilde = Tensor3::zeros(ng, n, n);
        for alpha in 0..ng {
            for d in 0..n {
                for cc in 0..n {
                    let mut v = 0.0;
                    for beta in 0..ng {
                        v += rho_bar[(alpha, beta)] * curvature.get(beta, d, cc);
                    }
                    curvature_tilde.set(alpha, d, cc, v);
                }
            }
        }

        let mut c_t_ab = Tensor3::zeros(np, np, np);
        for t in 0..np {
            for a in 0..np {
                for b in 0..np {
                    let mut v = 0.0;
                    for g in 0..ng {
                        for r in 0..np {
                            let w = lambda[(g, a)] * nm[(r, b)] - lambda[(g, b)] * nm[(r, a)];
                            v += w * dk[r][(t, g)];
                        }
                    }
                    c_t_ab.set(t, a, b, v);
                }
            }
        }

        let mut c_p_ab = Tensor3::zeros(nv, np, np);
        for p in 0..nv {
            for a in 0..np {
                for b in 0..np {
                    let mut v = 0.0;
                    for alpha in 0..ng {
                        let kp = geo.k_v[(p, alpha)];
                        if kp == 0.0 {
                            continue;
                        }
                        let mut curl = 0.0;
                        for d in 0..np {
                            for r in 0..np {
                                curl += nm[(d, a)]
                                    * nm[(r, b)]
                                    * (dlambda[d][(alpha, r)] - dlambda[r][(alpha, d)]);
                            }
                        }
                        v -= curl * kp;
                    }
                    for sg in 0..ng {
                        for al in 0..ng {
                            for be in 0..ng {
                                let cst = c.get(sg, al, be);
                                if cst != 0.0 {
                                    v -= cst * lambda[(be, a)] * lambda[(al, b)] * geo.k_v[(p, sg)];
                                }
                            }
                        }
                    }
                    c_p_ab.set(p, a, b, v);
                }
            }
        }

        let mut c_alpha_ab = Tensor3::zeros(ng, np, np);
        for alpha in 0..ng {
            for a in 0..np {
                for b in 0..np {
                    let mut v = 0.0;
                    for d in 0..n {
                        for cc in 0..n {
                            v -= nm[(d, a)] * nm[(cc, b)] * curvature_tilde.get(alpha, d, cc);
                        }
                    }
                    c_alpha_ab.set(alpha, a, b, v);
                }
            }
        }

        let mut c_m_ap = Tensor3::zeros(nv, np, nv);
        for m in 0..nv {
            for a in 0..np {
                for p in 0..nv {
                    let mut v = 0.0;
                    for (alpha, jb) in generators.iter().enumerate() {
                        v += jb[(m, p)] * lambda[(alpha, a)];
                    }
                    c_m_ap.set(m, a, p, v);
                }
            }
        }

        let mut c_alpha_ap = Tensor3::zeros(ng, np, nv);
        let mut c_alpha_pq = Tensor3::zeros(ng, nv, nv);
        for alpha in 0..ng {
            for p in 0..nv {
                for a in 0..np {
                    let mut v = 0.0;
                    for e in 0..n {
                        v -= nm[(e, a)] * curvature_tilde.get(alpha, e, np + p);
                    }
                    c_alpha_ap.set(alpha, a, p, v);
                }
                for q in 0..nv {
                    c_alpha_pq.set(alpha, p, q, -curvature_tilde.get(alpha, np + p, np + q));
                }
            }
        }

        let mut ch = Tensor3::zeros(n, n, n);
        let mut cv = Tensor3::zeros(ng, n, n);
        for a in 0..np {
            for b in 0..np {
                for t in 0..np {
                    ch.set(t, a, b, c_t_ab.get(t, a, b));
                }
                for p in 0..nv {
                    ch.set(np + p, a, b, c_p_ab.get(p, a, b));
                }
                for alpha in 0..ng {
                    cv.set(alpha, a, b, c_alpha_ab.get(alpha, a, b));
                }
            }
            for p in 0..nv {
                for m in 0..nv {
                    let v = c_m_ap.get(m, a, p);
                    ch.set(np + m, a, np + p, v);
                    ch.set(np + m, np + p, a, -v);
                }
                for alpha in 0..ng {
                    let v = c_alpha_ap.get(alpha, a, p);
                    cv.set(alpha, a, np + p, v);
                    cv.set(alpha, np + p, a, -v);
                }
            }
        }
        for alpha in 0..ng {
            for p in 0..nv {
                for q in 0..nv {
                    cv.set(alpha, np + p, np + q, c_alpha_pq.get(alpha, p, q));
                }
            }
        }

        StructureConstants {
            c_t_ab,
            c_p_ab,
            c_alpha_ab,
            c_m_ap,
            c_alpha_ap,
            c_alpha_pq,
            curvature,
            curvature_tilde,
            ch,
            cv,
        }
    }
}

/// Everything needed at a bundle point `(Q*, f̃, a)`.
#[derive(Debug, Clone)]
pub struct GeometryCache {
    pub point: BundlePoint,
    pub geo: PointGeometry,
    pub partials: Vec<GeometryDerivative>,
    pub u: Mat,
    pub v: Mat,
    pub u_bar: Mat,
    pub v_bar: Mat,
    pub rho: Mat,
    pub rho_bar: Mat,
    /// `𝒜̃ = ρ̄ 𝒜`.
    pub conn_tilde: Mat,
    /// `d̃ = ρᵀ d ρ`.
    pub d_tilde: Mat,
    pub d_tilde_inv: Mat,
    pub structure: StructureConstants,
}

impl GeometryCache {
    pub fn at(sys: &MechanicalSystem, b: &BundlePoint) -> Result<Self> {
        let action = &*sys.action;
        let group: &dyn GroupChart = action.group();
        let geo = PointGeometry::at(sys, &b.q_star, &b.f_tilde)?;
        let partials = geo.partials(action, &*sys.gauge)?;
        let u = group.u(&b.a)?;
        let v = group.v(&b.a)?;
        let u_bar = group.u_bar(&b.a)?;
        let v_bar = group.v_bar(&b.a)?;
        let rho = group.adjoint(&b.a)?;
        let rho_bar = group.adjoint_inv(&b.a)?;
        let conn_tilde = &rho_bar * &geo.conn;
        let d_tilde = rho.transpose() * &geo.d * &rho;
        let d_tilde_inv = inverse_checked(&d_tilde, "orbit metric d~")?;
        let structure = StructureConstants::compute(
            &geo,
            &partials,
            group.structure_constants(),
            action.generators(),
            &rho_bar,
        );
        Ok(GeometryCache {
            point: b.clone(),
            geo,
            partials,
            u,
            v,
            u_bar,
            v_bar,
            rho,
            rho_bar,
            conn_tilde,
            d_tilde,
            d_tilde_inv,
            structure,
        })
    }

    /// Coordinate components of the frame vector fields in `(Q*, f̃, a)`:
    /// columns `H_Ã` (combined index) followed by `L_α`.
    pub fn frame_matrix(&self) -> Mat {
        let (np, nv, ng) = (self.geo.np, self.geo.nv, self.geo.ng);
        let n = np + nv;
        let mut m = Mat::zeros(n + ng, n + ng);
        let nmat = &self.geo.proj.n;
        m.view_mut((0, 0), (n, n)).copy_from(nmat);
        let a_part = -(&self.v * &self.conn_tilde * nmat);
        m.view_mut((n, 0), (ng, n)).copy_from(&a_part);
        m.view_mut((n, n), (ng, ng)).copy_from(&self.v);
        m
    }

    /// Coordinates-in-`(Q*, f̃, a)` form of the metric, with slice
    /// directions restricted by `P⊥`.
    pub fn bundle_metric(&self) -> Mat {
        let (np, nv, ng) = (self.geo.np, self.geo.nv, self.geo.ng);
        let n = np + nv;
        let g = self.geo.g_hat.view((0, 0), (np, np)).clone_owned();
        let gv = self.geo.g_hat.view((np, np), (nv, nv)).clone_owned();
        let pp = self.geo.proj.p_perp.view((0, 0), (np, np)).clone_owned();
        let mut m = Mat::zeros(n + ng, n + ng);
        m.view_mut((0, 0), (np, np))
            .copy_from(&(pp.transpose() * &g * &pp));
        m.view_mut((np, np), (nv, nv)).copy_from(&gv);
        let pg = pp.transpose() * &g * &self.geo.k_p * &self.u_bar;
        let vg = &gv * &self.geo.k_v * &self.u_bar;
        m.view_mut((0, n), (np, ng)).copy_from(&pg);
        m.view_mut((n, 0), (ng, np)).copy_from(&pg.transpose());
        m.view_mut((np, n), (nv, ng)).copy_from(&vg);
        m.view_mut((n, np), (ng, nv)).copy_from(&vg.transpose());
        m.view_mut((n, n), (ng, ng))
            .copy_from(&(self.u_bar.transpose() * &self.geo.d * &self.u_bar));
        m
    }

    /// Pseudoinverse of [`Self::bundle_metric`].
    pub fn bundle_metric_pinv(&self) -> Mat {
        let (np, nv, ng) = (self.geo.np, self.geo.nv, self.geo.ng);
        let n = np + nv;
        let ginv = self.geo.g_hat_inv.view((0, 0), (np, np)).clone_owned();
        let gvinv = self.geo.g_hat_inv.view((np, np), (nv, nv)).clone_owned();
        let npp = self.geo.proj.n.view((0, 0), (np, np)).clone_owned();
        let lam = &self.geo.proj.lambda;
        let kv = &self.geo.k_v;
        let vb = &self.v_bar;
        let lgl = lam * &ginv * lam.transpose();
        let mut m = Mat::zeros(n + ng, n + ng);
        m.view_mut((0, 0), (np, np))
            .copy_from(&(&npp * &ginv * npp.transpose()));
        let pv = -(&npp * &ginv * lam.transpose() * kv.transpose());
        m.view_mut((0, np), (np, nv)).copy_from(&pv);
        m.view_mut((np, 0), (nv, np)).copy_from(&pv.transpose());
        let pg = &npp * &ginv * lam.transpose() * vb.transpose();
        m.view_mut((0, n), (np, ng)).copy_from(&pg);
        m.view_mut((n, 0), (ng, np)).copy_from(&pg.transpose());
        m.view_mut((np, np), (nv, nv))
            .copy_from(&(gvinv + kv * &lgl * kv.transpose()));
        let vg = -(kv * &lgl * vb.transpose());
        m.view_mut((np, n), (nv, ng)).copy_from(&vg);
        m.view_mut((n, np), (ng, nv)).copy_from(&vg.transpose());
        m.view_mut((n, n), (ng, ng))
            .copy_from(&(vb * &lgl * vb.transpose()));
        m
    }

    /// Full frame bracket table: `[X_i, X_j] = C[k][i][j] X_k` for
    /// `X = (H_Ã, L_α)`. The `H`-`L` brackets vanish and
    /// `[L_α, L_β] = c^γ_αβ L_γ`.
    pub fn frame_structure(&self, c: &Tensor3) -> Tensor3 {
        let (n, ng) = (self.geo.dim_base(), self.geo.ng);
        let dim = n + ng;
        let s = &self.structure;
        let mut out = Tensor3::zeros(dim, dim, dim);
        for i in 0..n {
            for j in 0..n {
                for t in 0..n {
                    out.set(t, i, j, s.ch.get(t, i, j));
                }
                for alpha in 0..ng {
                    out.set(n + alpha, i, j, s.cv.get(alpha, i, j));
                }
            }
        }
        for gamma in 0..ng {
            for alpha in 0..ng {
                for beta in 0..ng {
                    out.set(n + gamma, n + alpha, n + beta, c.get(gamma, alpha, beta));
                }
            }
        }
        out
    }

    /// `diag(G^H, d̃)`.
    pub fn frame_metric(&self) -> Mat {
        block_diag(&self.geo.gh, &self.d_tilde)
    }

    /// `diag(Ǧ, d̃⁻¹)`.
    pub fn frame_metric_pinv(&self) -> Mat {
        block_diag(&self.geo.gh_pinv, &self.d_tilde_inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::DERIVATIVE_FD_STEP;
    use crate::linalg::max_abs;
    use crate::systems::{builtin, builtin_with, BuiltinKind, BuiltinParameters};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn curved(kind: BuiltinKind) -> MechanicalSystem {
        builtin_with(
            kind,
            &BuiltinParameters {
                metric_conformal: 0.15,
                gauge_curvature: 0.3,
                ..BuiltinParameters::default()
            },
        )
        .unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn so2_orbit_metric() {
        let sys = builtin(BuiltinKind::So2Planar).unwrap();
        let geo = PointGeometry::at(&sys, &v(&[1.5, 0.0]), &v(&[0.3, -0.4])).unwrap();
        assert!((geo.d[(0, 0)] - (2.25 + 0.25)).abs() < 1e-14);
        let geo0 = PointGeometry::at(&sys, &v(&[1.5, 0.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(geo0.conn.view((0, 2), (1, 2)).amax(), 0.0);
        let gh = geo0.gh.view((0, 0), (2, 2)).clone_owned();
        assert!(max_abs(&(gh - Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))) < 1e-14);
    }

    #[test]
    fn partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [BuiltinKind::So2Planar, BuiltinKind::Su2Quaternion] {
            let sys = curved(kind);
            let b = sys.random_bundle_point(&mut rng);
            let (q, f) = (b.q_star.clone(), b.f_tilde.clone());
            let geo = PointGeometry::at(&sys, &q, &f).unwrap();
            let parts = geo.partials(&*sys.action, &*sys.gauge).unwrap();
            let np = sys.action.dim_p();
            let h = DERIVATIVE_FD_STEP;
            for j in 0..sys.dim_base() {
                let shift = |s: f64| {
                    let (mut q2, mut f2) = (q.clone(), f.clone());
                    if j < np {
                        q2[j] += s;
                    } else {
                        f2[j - np] += s;
                    }
                    PointGeometry::at(&sys, &q2, &f2).unwrap()
                };
                let (p, m) = (shift(h), shift(-h));
                let fd = |a: &Mat, b: &Mat| (a - b) / (2.0 * h);
                assert!(max_abs(&(fd(&p.gh, &m.gh) - &parts[j].gh)) < 1e-7);
                assert!(max_abs(&(fd(&p.conn, &m.conn) - &parts[j].conn)) < 1e-7);
                assert!(max_abs(&(fd(&p.d, &m.d) - &parts[j].d)) < 1e-7);
                assert!(max_abs(&(fd(&p.proj.n, &m.proj.n) - &parts[j].n)) < 1e-7);
                assert!(
                    max_abs(&(fd(&p.proj.lambda, &m.proj.lambda) - &parts[j].lambda)) < 1e-7
                );
            }
        }
    }

    #[test]
    fn connection_reproduces_killing_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in [BuiltinKind::So2Planar, BuiltinKind::Su2Quaternion] {
            let sys = curved(kind);
            for _ in 0..20 {
                let b = sys.random_bundle_point(&mut rng);
                let geo = PointGeometry::at(&sys, &b.q_star, &b.f_tilde).unwrap();
                let ng = sys.action.dim_g();
                assert!(max_abs(&(&geo.conn * &geo.k_tilde - Mat::identity(ng, ng))) < 1e-12);
                assert!(max_abs(&(&geo.d * &geo.d_inv - Mat::identity(ng, ng))) < 1e-12);
            }
        }
    }

    #[test]
    fn curvature_antisymmetric_and_untilded_at_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sys = curved(BuiltinKind::Su2Quaternion);
        let mut b = sys.random_bundle_point(&mut rng);
        b.a = sys.action.group().identity();
        let cache = GeometryCache::at(&sys, &b).unwrap();
        let s = &cache.structure;
        assert!(s.curvature.max_abs_diff(&s.curvature_tilde) < 1e-15);
        let n = sys.dim_base();
        for alpha in 0..3 {
            for i in 0..n {
                for j in 0..n {
                    let x = s.curvature.get(alpha, i, j) + s.curvature.get(alpha, j, i);
                    assert!(x.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn su2_curvature_has_nonabelian_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = builtin(BuiltinKind::Su2Quaternion).unwrap();
        let b = sys.random_bundle_point(&mut rng);
        let geo = PointGeometry::at(&sys, &b.q_star, &b.f_tilde).unwrap();
        let c = sys.action.group().structure_constants();
        let mut quad = 0.0_f64;
        for alpha in 0..3 {
            let mut term = 0.0;
            for nu in 0..3 {
                for sg in 0..3 {
                    term += c.get(alpha, nu, sg) * geo.conn[(nu, 4)] * geo.conn[(sg, 5)];
                }
            }
            quad = quad.max(term.abs());
        }
        assert!(quad > 1e-3);
    }
}
