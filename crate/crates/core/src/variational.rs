//! Finite-difference verification of the differential relations between
//! quasi-velocities `ω` and variations `w` on two-parameter path families
//! `(Q*(u,t), f̃(u,t), a(u,t))` that stay on the slice.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{GeometryCache, PointGeometry};
use crate::error::{LprError, Result};
use crate::gauge::{solve_group_coordinate, BundlePoint};
use crate::linalg::{lstsq, max_abs_vec, Mat, Tensor3, Vector};
use crate::system::MechanicalSystem;

/// Grid spacing in both `t` and `u`.
pub const VARIATION_STEP: f64 = 1e-3;
pub const GRID_POINTS: usize = 1001;
/// Residual budget for each relation on the default grid.
pub const RELATION_TOL: f64 = 1e-4;
/// Minimum observed order between `h` and `h/2`.
pub const MIN_ORDER: f64 = 1.8;
/// Residuals below this are treated as exact; no order is measured.
pub const ROUNDOFF_FLOOR: f64 = 1e-9;
/// Rejects decompositions whose basis is this close to singular.
const BASIS_CONDITION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Time,
    Deformation,
}

/// `c + Σ_k A_k sin(ν_k t + φ_k)`, vector valued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurve {
    pub offset: Vector,
    pub amplitudes: Vec<Vector>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
}

impl SmoothCurve {
    pub fn constant(offset: Vector) -> Self {
        SmoothCurve {
            offset,
            amplitudes: Vec::new(),
            frequencies: Vec::new(),
            phases: Vec::new(),
        }
    }

    pub fn random<R: Rng>(rng: &mut R, offset: Vector, amplitude: f64, harmonics: usize) -> Self {
        let dim = offset.len();
        SmoothCurve {
            offset,
            amplitudes: (0..harmonics)
                .map(|_| Vector::from_fn(dim, |_, _| rng.random_range(-amplitude..amplitude)))
                .collect(),
            frequencies: (0..harmonics).map(|_| rng.random_range(1.0..4.0)).collect(),
            phases: (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
        }
    }

    pub fn at(&self, t: f64) -> Vector {
        let mut v = self.offset.clone();
        for ((a, nu), ph) in self.amplitudes.iter().zip(&self.frequencies).zip(&self.phases) {
            v += a * (nu * t + ph).sin();
        }
        v
    }
}

fn random_field<R: Rng>(rng: &mut R, dim: usize) -> SmoothCurve {
    let offset = Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    SmoothCurve::random(rng, offset, 0.5, 1)
}

/// Vanishes with its derivative at `t = 0` and `t = 1`.
pub fn bump(t: f64) -> f64 {
    (PI * t).sin().powi(2)
}

/// `Q*(u,t)` is the slice projection of `Q*_b(t) + u b(t) P⊥ τ(t)`, where
/// `Q*_b` is the slice projection of `base_q`. The fibre and group
/// coordinates are deformed additively with the same bump.
#[derive(Debug, Clone)]
pub struct PathFamily {
    pub system: MechanicalSystem,
    pub base_q: SmoothCurve,
    pub base_f: SmoothCurve,
    pub base_a: SmoothCurve,
    pub tangent_q: SmoothCurve,
    pub deform_f: SmoothCurve,
    pub deform_a: SmoothCurve,
}

impl PathFamily {
    pub fn random<R: Rng>(system: &MechanicalSystem, rng: &mut R) -> Self {
        let (np, nv, ng) = system.dims();
        let start = system.random_bundle_point(rng);
        let a0 = start.a.map(|x| 0.5 * x);
        PathFamily {
            system: system.clone(),
            base_q: SmoothCurve::random(rng, start.q_star, 0.25, 2),
            base_f: SmoothCurve::random(rng, start.f_tilde, 0.4, 2),
            base_a: SmoothCurve::random(rng, a0, 0.3, 2),
            tangent_q: random_field(rng, np),
            deform_f: random_field(rng, nv),
            deform_a: random_field(rng, ng),
        }
    }

    /// A family with no deformation: every `w` vanishes.
    pub fn frozen(&self) -> Self {
        let zero = |c: &SmoothCurve| SmoothCurve::constant(Vector::zeros(c.offset.len()));
        PathFamily {
            tangent_q: zero(&self.tangent_q),
            deform_f: zero(&self.deform_f),
            deform_a: zero(&self.deform_a),
            ..self.clone()
        }
    }

    fn slice_project(&self, q: &Vector) -> Result<Vector> {
        let sys = &self.system;
        let a = solve_group_coordinate(sys, q, None)?;
        sys.action.act_p(q, &sys.action.group().inverse(&a)?)
    }

    pub fn point(&self, u: f64, t: f64) -> Result<BundlePoint> {
        let sys = &self.system;
        let q_base = self.slice_project(&self.base_q.at(t))?;
        let s = u * bump(t);
        let q_star = if s == 0.0 {
            q_base
        } else {
            let nv = sys.action.dim_v();
            let proj = crate::gauge::ProjectorSet::evaluate(
                &*sys.action,
                &*sys.gauge,
                &q_base,
                &Vector::zeros(nv),
            )?;
            let np = q_base.len();
            let pp = proj.p_perp.view((0, 0), (np, np)).clone_owned();
            self.slice_project(&(&q_base + pp * self.tangent_q.at(t) * s))?
        };
        Ok(BundlePoint {
            q_star,
            f_tilde: self.base_f.at(t) + self.deform_f.at(t) * s,
            a: self.base_a.at(t) + self.deform_a.at(t) * s,
        })
    }
}

fn flatten(b: &BundlePoint) -> Vector {
    let mut v = Vec::with_capacity(b.q_star.len() + b.f_tilde.len() + b.a.len());
    v.extend_from_slice(b.q_star.as_slice());
    v.extend_from_slice(b.f_tilde.as_slice());
    v.extend_from_slice(b.a.as_slice());
    Vector::from_vec(v)
}

/// Frame matrix stacked on the slice-tangency rows `[χ_grad 0 0]`.
fn decomposition_basis(sys: &MechanicalSystem, b: &BundlePoint) -> Result<Mat> {
    let geo = PointGeometry::at(sys, &b.q_star, &b.f_tilde)?;
    let group = sys.action.group();
    let v = group.v(&b.a)?;
    let conn_tilde = group.adjoint_inv(&b.a)? * &geo.conn;
    let (np, ng) = (geo.np, geo.ng);
    let n = geo.dim_base();
    let mut m = Mat::zeros(n + 2 * ng, n + ng);
    m.view_mut((0, 0), (n, n)).copy_from(&geo.proj.n);
    m.view_mut((n, 0), (ng, n)).copy_from(&(-(&v * conn_tilde * &geo.proj.n)));
    m.view_mut((n, n), (ng, ng)).copy_from(&v);
    m.view_mut((n + ng, 0), (ng, np)).copy_from(&geo.chi_grad);
    Ok(m)
}

/// Components of a coordinate rate in the frame `(H_Ã, L_α)`; also returns
/// the recomposition error.
fn decompose(basis: &Mat, rate: &Vector) -> Result<(Vector, f64)> {
    let cols = basis.ncols();
    let mut rhs = Vector::zeros(basis.nrows());
    rhs.rows_mut(0, cols).copy_from(rate);
    let (x, rel) = lstsq(basis, &rhs)?;
    if rel < BASIS_CONDITION_FLOOR {
        return Err(LprError::Singular {
            context: "frame decomposition basis".into(),
            condition: 1.0 / rel.max(f64::MIN_POSITIVE),
        });
    }
    let back = basis * &x - rhs;
    Ok((x, max_abs_vec(&back)))
}

/// Central difference of `(Q*, f̃, a)` at `(u, t)` along `direction`,
/// decomposed in the frame at that point.
pub fn decompose_rates(fam: &PathFamily, u: f64, t: f64, direction: Direction, step: f64) -> Result<Vector> {
    let (lo, hi) = match direction {
        Direction::Time => (fam.point(u, t - step)?, fam.point(u, t + step)?),
        Direction::Deformation => (fam.point(u - step, t)?, fam.point(u + step, t)?),
    };
    let rate = (flatten(&hi) - flatten(&lo)) / (2.0 * step);
    let basis = decomposition_basis(&fam.system, &fam.point(u, t)?)?;
    Ok(decompose(&basis, &rate)?.0)
}

/// Maximum residuals over the evaluated points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationResiduals {
    pub relation_a: f64,
    pub relation_p: f64,
    pub relation_alpha: f64,
    /// Largest gap between the condensed and the block-expanded forms.
    pub condensed_vs_expanded: f64,
    pub slice_residual: f64,
    /// Largest `|w|` at the two ends of the grid (zero when the grid spans
    /// `[0, 1]`).
    pub endpoint_variation: f64,
    /// Largest `|M x - rate|` of the frame decompositions.
    pub recomposition: f64,
    pub points: usize,
}

impl RelationResiduals {
    pub fn as_array(&self) -> [f64; 3] {
        [self.relation_a, self.relation_p, self.relation_alpha]
    }

    fn merge(&mut self, o: &RelationResiduals) {
        self.relation_a = self.relation_a.max(o.relation_a);
        self.relation_p = self.relation_p.max(o.relation_p);
        self.relation_alpha = self.relation_alpha.max(o.relation_alpha);
        self.condensed_vs_expanded = self.condensed_vs_expanded.max(o.condensed_vs_expanded);
        self.slice_residual = self.slice_residual.max(o.slice_residual);
        self.recomposition = self.recomposition.max(o.recomposition);
        self.points += o.points;
    }
}

/// Uniform grid `t_i = t0 + i·dt`, `i < count`, with `u ∈ {-h, 0, h}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t0: f64,
    pub dt: f64,
    pub count: usize,
    pub h: f64,
}

impl GridSpec {
    pub fn unit_interval(count: usize, h: f64) -> Self {
        GridSpec {
            t0: 0.0,
            dt: 1.0 / (count - 1) as f64,
            count,
            h,
        }
    }

    /// Three-point grid centred on `t`.
    pub fn local(t: f64, step: f64) -> Self {
        GridSpec {
            t0: t - step,
            dt: step,
            count: 3,
            h: step,
        }
    }
}

/// The relations read, for the frame `X = (H_Ã, L_α)` with brackets
/// `[X_i, X_j] = C^k_ij X_k`,
/// `R^k = ∂ω^k/∂u - ∂w^k/∂t + C^k_ij w^i ω^j`, with `N R_h = 0` (relations
/// for `ω^A` and `ω^p`) and `R_v = 0` (relation for `ω^α`).
pub fn evaluate_relations(fam: &PathFamily, grid: &GridSpec) -> Result<RelationResiduals> {
    if grid.count < 3 {
        return Err(LprError::Dimension("relation grid needs at least 3 points".into()));
    }
    let sys = &fam.system;
    let (np, nv, ng) = sys.dims();
    let n = np + nv;
    let us = [-grid.h, 0.0, grid.h];
    let ts: Vec<f64> = (0..grid.count).map(|i| grid.t0 + i as f64 * grid.dt).collect();

    let mut out = RelationResiduals::default();
    let mut states: Vec<Vec<BundlePoint>> = Vec::with_capacity(3);
    for &u in &us {
        let row = ts.iter().map(|&t| fam.point(u, t)).collect::<Result<Vec<_>>>()?;
        for b in &row {
            out.slice_residual = out.slice_residual.max(max_abs_vec(&sys.gauge.chi(&b.q_star)));
        }
        states.push(row);
    }
    let flat: Vec<Vec<Vector>> = states.iter().map(|r| r.iter().map(flatten).collect()).collect();
    let bases: Vec<Vec<Mat>> = states
        .iter()
        .map(|r| r.iter().map(|b| decomposition_basis(sys, b)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let last = grid.count - 1;
    let mut omega: Vec<Vec<Option<Vector>>> = vec![vec![None; grid.count]; 3];
    for (ui, row) in omega.iter_mut().enumerate() {
        for i in 1..last {
            let rate = (&flat[ui][i + 1] - &flat[ui][i - 1]) / (2.0 * grid.dt);
            let (x, back) = decompose(&bases[ui][i], &rate)?;
            out.recomposition = out.recomposition.max(back);
            row[i] = Some(x);
        }
    }
    let mut w = Vec::with_capacity(grid.count);
    for i in 0..grid.count {
        let rate = (&flat[2][i] - &flat[0][i]) / (2.0 * grid.h);
        let (x, back) = decompose(&bases[1][i], &rate)?;
        out.recomposition = out.recomposition.max(back);
        w.push(x);
    }
    if grid.t0 == 0.0 && ((grid.t0 + last as f64 * grid.dt) - 1.0).abs() < 1e-12 {
        out.endpoint_variation = max_abs_vec(&w[0]).max(max_abs_vec(&w[last]));
    }

    let c = sys.action.group().structure_constants();
    for i in 1..last {
        let cache = GeometryCache::at(sys, &states[1][i])?;
        let structure = cache.frame_structure(c);
        let om = omega[1][i].as_ref().expect("interior");
        let d_omega = (omega[2][i].as_ref().expect("interior") - omega[0][i].as_ref().expect("interior"))
            / (2.0 * grid.h);
        let d_w = (&w[i + 1] - &w[i - 1]) / (2.0 * grid.dt);
        let delta = &d_omega - &d_w;
        let r = &delta + structure.contract(&w[i], om);

        let nr = &cache.geo.proj.n * r.rows(0, n);
        let condensed = [
            nr.rows(0, np).clone_owned(),
            nr.rows(np, nv).clone_owned(),
            r.rows(n, ng).clone_owned(),
        ];

        let expanded = expanded_relations(&cache, c, &delta, &w[i], om);
        out.relation_a = out.relation_a.max(max_abs_vec(&expanded[0]));
        out.relation_p = out.relation_p.max(max_abs_vec(&expanded[1]));
        out.relation_alpha = out.relation_alpha.max(max_abs_vec(&expanded[2]));
        let gap = condensed
            .iter()
            .zip(&expanded)
            .map(|(x, y)| max_abs_vec(&(x - y)))
            .fold(0.0, f64::max);
        out.condensed_vs_expanded = out.condensed_vs_expanded.max(gap);
        out.points += 1;
    }
    Ok(out)
}

/// The three relations written block by block with the separate `ℂ`
/// tensors. `delta = ∂ω/∂u - ∂w/∂t` on the full frame index.
fn expanded_relations(cache: &GeometryCache, c: &Tensor3, delta: &Vector, w: &Vector, om: &Vector) -> [Vector; 3] {
    let geo = &cache.geo;
    let s = &cache.structure;
    let (np, nv, ng) = (geo.np, geo.nv, geo.ng);
    let n = np + nv;
    let nm = &geo.proj.n;

    // ℂ^R_PE ω^E w^P on slice indices.
    let mut inner_a = Vector::zeros(np);
    for r in 0..np {
        let mut v = delta[r];
        for p in 0..np {
            for e in 0..np {
                v += s.c_t_ab.get(r, p, e) * om[e] * w[p];
            }
        }
        inner_a[r] = v;
    }
    let rel_a = nm.view((0, 0), (np, np)) * &inner_a;

    // N^p_T(δ^T - ℂ^T_ER ω^E w^R) + (δ^p - ℂ^p_ER ω^E w^R - ℂ^p_Eq ω^E w^q - ℂ^p_qR ω^q w^R).
    let mut inner_t = Vector::zeros(np);
    for t in 0..np {
        let mut v = delta[t];
        for e in 0..np {
            for r in 0..np {
                v -= s.c_t_ab.get(t, e, r) * om[e] * w[r];
            }
        }
        inner_t[t] = v;
    }
    let mut rel_p = nm.view((np, 0), (nv, np)) * &inner_t;
    for p in 0..nv {
        let mut v = delta[np + p];
        for e in 0..np {
            for r in 0..np {
                v -= s.c_p_ab.get(p, e, r) * om[e] * w[r];
            }
            for q in 0..nv {
                // ℂ^p_Eq = ℂ^m_Ap with m = p; ℂ^p_qR = -ℂ^p_Rq.
                v -= s.c_m_ap.get(p, e, q) * om[e] * w[np + q];
                v += s.c_m_ap.get(p, e, q) * om[np + q] * w[e];
            }
        }
        rel_p[p] += v;
    }

    let mut rel_alpha = Vector::zeros(ng);
    for beta in 0..ng {
        let mut v = delta[n + beta];
        for r in 0..np {
            for e in 0..np {
                v += s.c_alpha_ab.get(beta, r, e) * w[r] * om[e];
            }
            for m in 0..nv {
                v += s.c_alpha_ap.get(beta, r, m) * w[r] * om[np + m];
                // -ℂ^β_Ep w^p ω^E
                v -= s.c_alpha_ap.get(beta, r, m) * w[np + m] * om[r];
            }
        }
        for p in 0..nv {
            for m in 0..nv {
                v += s.c_alpha_pq.get(beta, p, m) * w[np + p] * om[np + m];
            }
        }
        for nu in 0..ng {
            for mu in 0..ng {
                v += c.get(beta, nu, mu) * w[n + nu] * om[n + mu];
            }
        }
        rel_alpha[beta] = v;
    }
    [rel_a, rel_p, rel_alpha]
}

/// Per-family outcome: the full-grid residuals and the refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub grid: RelationResiduals,
    /// Residuals at the sample times with step `h`.
    pub coarse: [f64; 3],
    /// Same sample times with step `h/2`.
    pub fine: [f64; 3],
    /// `log2(coarse/fine)`, `None` when the coarse residual is already at
    /// the round-off floor.
    pub order: [Option<f64>; 3],
}

impl FamilyReport {
    pub fn max_residual(&self) -> f64 {
        self.grid.as_array().into_iter().fold(0.0, f64::max)
    }

    pub fn min_order(&self) -> Option<f64> {
        self.order.iter().flatten().copied().reduce(f64::min)
    }

    pub fn order_ok(&self) -> bool {
        self.order.iter().flatten().all(|&o| o >= MIN_ORDER)
    }
}

/// Full check of one family: default grid plus refinement `h → h/2` at
/// `samples` evenly spread interior times.
pub fn check_family(fam: &PathFamily, grid: &GridSpec, samples: usize) -> Result<FamilyReport> {
    let full = evaluate_relations(fam, grid)?;
    let mut coarse = RelationResiduals::default();
    let mut fine = RelationResiduals::default();
    for k in 0..samples {
        let t = (k as f64 + 0.5) / samples as f64;
        coarse.merge(&evaluate_relations(fam, &GridSpec::local(t, grid.h))?);
        fine.merge(&evaluate_relations(fam, &GridSpec::local(t, grid.h / 2.0))?);
    }
    let c = coarse.as_array();
    let f = fine.as_array();
    let order = [0, 1, 2].map(|i| (c[i] > ROUNDOFF_FLOOR).then(|| (c[i] / f[i]).log2()));
    Ok(FamilyReport {
        grid: full,
        coarse: c,
        fine: f,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn family_stays_on_slice_and_is_clamped() {
        let sys = curved(BuiltinKind::Su2Quaternion);
        let fam = PathFamily::random(&sys, &mut ChaCha8Rng::seed_from_u64(1));
        for t in [0.0, 0.3, 0.77, 1.0] {
            for u in [-1e-2, 0.0, 1e-2] {
                let b = fam.point(u, t).unwrap();
                assert!(max_abs_vec(&sys.gauge.chi(&b.q_star)) < 1e-9);
            }
        }
        for t in [0.0, 1.0] {
            assert_eq!(fam.point(1e-3, t).unwrap(), fam.point(0.0, t).unwrap());
        }
    }

    #[test]
    fn frozen_family_has_no_variation() {
        let sys = builtin(BuiltinKind::So2Planar).unwrap();
        let fam = PathFamily::random(&sys, &mut ChaCha8Rng::seed_from_u64(2)).frozen();
        let w = decompose_rates(&fam, 0.0, 0.4, Direction::Deformation, 1e-3).unwrap();
        assert_eq!(w.amax(), 0.0);
    }

    #[test]
    fn decomposition_recomposes_tangent_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in BuiltinKind::ALL {
            let sys = curved(kind);
            let b = sys.random_bundle_point(&mut rng);
            let basis = decomposition_basis(&sys, &b).unwrap();
            let (np, nv, ng) = sys.dims();
            let n = np + nv;
            // An exact tangent rate: frame applied to slice-tangent components.
            let cache = GeometryCache::at(&sys, &b).unwrap();
            let mut x = Vector::from_fn(n + ng, |_, _| rng.random_range(-1.0..1.0));
            let xa = cache.geo.proj.n.view((0, 0), (np, np)) * x.rows(0, np);
            x.rows_mut(0, np).copy_from(&xa);
            let rate = cache.frame_matrix() * &x;
            let (y, back) = decompose(&basis, &rate).unwrap();
            assert!(back < 1e-10);
            assert!((y - x).amax() < 1e-10);
        }
    }

    #[test]
    fn relations_hold_on_local_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in BuiltinKind::ALL {
            let sys = curved(kind);
            let fam = PathFamily::random(&sys, &mut rng);
            let r = check_family(&fam, &GridSpec::local(0.4, VARIATION_STEP), 3).unwrap();
            assert!(r.max_residual() < RELATION_TOL, "{kind}: {r:?}");
            assert!(r.grid.condensed_vs_expanded < 1e-12, "{kind}: {r:?}");
            assert!(r.order_ok(), "{kind}: {r:?}");
        }
    }
}
