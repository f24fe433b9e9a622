//! Lagrangians, quasi-velocities, the Lagrange-Poincaré right-hand side,
//! the unreduced Euler-Lagrange oracle and fixed-step RK4 integration.

use serde::{Deserialize, Serialize};

use crate::connection::{GeometryCache, PointGeometry};
use crate::error::{LprError, Result};
use crate::gauge::{from_bundle, to_bundle, BundlePoint};
use crate::group::ad_of;
use crate::linalg::{ensure_finite, inverse_checked, max_abs_vec, Mat, Vector};
use crate::system::MechanicalSystem;

/// State in the original coordinates of `P × V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientState {
    pub q: Vector,
    pub f: Vector,
    pub q_dot: Vector,
    pub f_dot: Vector,
}

/// Components of a velocity in the frame `(H_A, H_p, L_α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiVelocity {
    /// `ω^A`, tangent to the slice.
    pub omega_p: Vector,
    /// `ω^p`.
    pub omega_f: Vector,
    /// `ω^α`.
    pub omega_g: Vector,
}

impl QuasiVelocity {
    /// `(ω^A, ω^p)` on the combined index.
    pub fn horizontal(&self) -> Vector {
        let mut h = Vector::zeros(self.omega_p.len() + self.omega_f.len());
        h.rows_mut(0, self.omega_p.len()).copy_from(&self.omega_p);
        h.rows_mut(self.omega_p.len(), self.omega_f.len())
            .copy_from(&self.omega_f);
        h
    }

    pub fn from_parts(horizontal: &Vector, np: usize, omega_g: Vector) -> Self {
        let nv = horizontal.len() - np;
        QuasiVelocity {
            omega_p: horizontal.rows(0, np).clone_owned(),
            omega_f: horizontal.rows(np, nv).clone_owned(),
            omega_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleState {
    pub point: BundlePoint,
    pub omega: QuasiVelocity,
}

pub fn kinetic_original(sys: &MechanicalSystem, s: &AmbientState) -> f64 {
    let g = sys.action.metric_p(&s.q);
    let gv = sys.action.metric_v();
    0.5 * s.q_dot.dot(&(g * &s.q_dot)) + 0.5 * s.f_dot.dot(&(gv * &s.f_dot))
}

/// `L = ½ G_AB Q̇^A Q̇^B + ½ G_mn ḟ^m ḟ^n - V`.
pub fn lagrangian_original(sys: &MechanicalSystem, s: &AmbientState) -> f64 {
    kinetic_original(sys, s) - sys.potential.value(&s.q, &s.f)
}

pub fn energy_original(sys: &MechanicalSystem, s: &AmbientState) -> f64 {
    kinetic_original(sys, s) + sys.potential.value(&s.q, &s.f)
}

/// Noether momentum `J_α = K̃_αᵀ Ĝ (Q̇, ḟ)`.
pub fn noether_momentum(sys: &MechanicalSystem, s: &AmbientState) -> Result<Vector> {
    let k = sys.action.killing_p(&s.q)?;
    let kv = sys.action.killing_v(&s.f);
    let g = sys.action.metric_p(&s.q);
    Ok(k.transpose() * g * &s.q_dot + kv.transpose() * sys.action.metric_v() * &s.f_dot)
}

/// `ω^A = Q̇*`, `ω^p = f̃̇`, `ω^α = u ȧ + 𝒜̃ (Q̇*, f̃̇)`.
pub fn quasi_velocities(
    cache: &GeometryCache,
    q_star_dot: &Vector,
    f_tilde_dot: &Vector,
    a_dot: &Vector,
) -> QuasiVelocity {
    let np = q_star_dot.len();
    let mut h = Vector::zeros(np + f_tilde_dot.len());
    h.rows_mut(0, np).copy_from(q_star_dot);
    h.rows_mut(np, f_tilde_dot.len()).copy_from(f_tilde_dot);
    let omega_g = &cache.u * a_dot + &cache.conn_tilde * &h;
    QuasiVelocity::from_parts(&h, np, omega_g)
}

/// Inverse of [`quasi_velocities`]: returns `(Q̇*, f̃̇, ȧ)`.
pub fn invert_quasi_velocities(cache: &GeometryCache, w: &QuasiVelocity) -> (Vector, Vector, Vector) {
    let h = w.horizontal();
    let a_dot = &cache.v * (&w.omega_g - &cache.conn_tilde * &h);
    (w.omega_p.clone(), w.omega_f.clone(), a_dot)
}

/// `L̂ = ½ ω_hᵀ G^H ω_h + ½ ω_vᵀ d̃ ω_v - V(Q*, f̃)`.
pub fn lagrangian_reduced(sys: &MechanicalSystem, cache: &GeometryCache, w: &QuasiVelocity) -> f64 {
    kinetic_reduced(cache, w) - sys.potential.value(&cache.point.q_star, &cache.point.f_tilde)
}

fn kinetic_reduced(cache: &GeometryCache, w: &QuasiVelocity) -> f64 {
    let h = w.horizontal();
    0.5 * h.dot(&(&cache.geo.gh * &h)) + 0.5 * w.omega_g.dot(&(&cache.d_tilde * &w.omega_g))
}

pub fn energy_reduced(sys: &MechanicalSystem, cache: &GeometryCache, w: &QuasiVelocity) -> f64 {
    kinetic_reduced(cache, w) + sys.potential.value(&cache.point.q_star, &cache.point.f_tilde)
}

/// Vertical momenta `π_α = d̃_αβ ω^β`.
pub fn vertical_momentum(cache: &GeometryCache, w: &QuasiVelocity) -> Vector {
    &cache.d_tilde * &w.omega_g
}

/// Chart map of a state. `guess` warm-starts the group-coordinate solve.
pub fn ambient_to_bundle(
    sys: &MechanicalSystem,
    s: &AmbientState,
    guess: Option<&Vector>,
) -> Result<BundleState> {
    let point = to_bundle(sys, &s.q, &s.f, guess)?;
    let group = sys.action.group();
    let geo = PointGeometry::at(sys, &point.q_star, &point.f_tilde)?;
    let fc = sys.action.act_p_jacobian(&point.q_star, &point.a)?;
    let w = inverse_checked(&fc, "action Jacobian")? * &s.q_dot;
    let xi = &geo.proj.lambda * &w;
    let omega_p = &w - &geo.k_p * &xi;
    let omega_f = sys.action.rep(&point.a)? * &s.f_dot - &geo.k_v * &xi;
    let mut h = Vector::zeros(sys.dim_base());
    h.rows_mut(0, omega_p.len()).copy_from(&omega_p);
    h.rows_mut(omega_p.len(), omega_f.len()).copy_from(&omega_f);
    let omega_g = group.adjoint_inv(&point.a)? * (xi + &geo.conn * &h);
    Ok(BundleState {
        point,
        omega: QuasiVelocity {
            omega_p,
            omega_f,
            omega_g,
        },
    })
}

/// Inverse chart map. `Q*` need not lie exactly on the slice.
pub fn bundle_to_ambient(sys: &MechanicalSystem, bs: &BundleState) -> Result<AmbientState> {
    let b = &bs.point;
    let group = sys.action.group();
    let geo = PointGeometry::at(sys, &b.q_star, &b.f_tilde)?;
    let h = bs.omega.horizontal();
    let xi = group.adjoint(&b.a)? * &bs.omega.omega_g - &geo.conn * &h;
    let fc = sys.action.act_p_jacobian(&b.q_star, &b.a)?;
    let q_dot = fc * (&bs.omega.omega_p + &geo.k_p * &xi);
    let f_dot = sys.action.rep_inv(&b.a)? * (&bs.omega.omega_f + &geo.k_v * &xi);
    let (q, f) = from_bundle(sys, b)?;
    Ok(AmbientState { q, f, q_dot, f_dot })
}

/// Time derivatives of the reduced state.
#[derive(Debug, Clone)]
pub struct LpRates {
    pub q_star_dot: Vector,
    pub f_tilde_dot: Vector,
    pub a_dot: Vector,
    pub omega_h_dot: Vector,
    pub omega_g_dot: Vector,
    /// `|G^H ω̇_h - r|_∞ / max(1, |r|_∞)` for the horizontal equations.
    pub implicit_residual: f64,
}

/// Forces of the horizontal equations, `r` in `G^H ω̇_h = r`, and the
/// vertical rate `π̇`. Split out so the checks can reuse them.
#[derive(Debug, Clone)]
pub struct LpForces {
    pub horizontal: Vector,
    pub vertical_momentum_rate: Vector,
    pub left_derivative: Vector,
}

pub fn lp_forces(sys: &MechanicalSystem, cache: &GeometryCache, w: &QuasiVelocity) -> Result<LpForces> {
    let geo = &cache.geo;
    let (np, ng) = (geo.np, geo.ng);
    let n = geo.dim_base();
    let c = sys.action.group().structure_constants();
    let h = w.horizontal();
    let wv = &w.omega_g;
    let p = &geo.gh * &h;
    let pi = &cache.d_tilde * wv;

    let (dvq, dvf) = sys
        .potential
        .gradient(&cache.point.q_star, &cache.point.f_tilde);
    let rw = &cache.rho * wv;
    let mut grad = Vector::zeros(n);
    let mut gh_dot = Mat::zeros(n, n);
    for (j, part) in cache.partials.iter().enumerate() {
        let dv = if j < np { dvq[j] } else { dvf[j - np] };
        grad[j] = 0.5 * h.dot(&(&part.gh * &h)) + 0.5 * rw.dot(&(&part.d * &rw)) - dv;
        if h[j] != 0.0 {
            gh_dot += &part.gh * h[j];
        }
    }

    // L_α L̂ = ω_vᵀ d̃ ad_α ω_v.
    let left_derivative = Vector::from_fn(ng, |alpha, _| {
        let mut s = 0.0;
        for mu in 0..ng {
            for gm in 0..ng {
                s += pi[mu] * c.get(mu, alpha, gm) * wv[gm];
            }
        }
        s
    });

    let nmat = &geo.proj.n;
    let h_of_l = nmat.transpose() * &grad - (&cache.conn_tilde * nmat).transpose() * &left_derivative;
    let s = &cache.structure;
    let mut coriolis = Vector::zeros(n);
    for e in 0..n {
        let mut acc = 0.0;
        for cc in 0..n {
            if h[cc] == 0.0 {
                continue;
            }
            for t in 0..n {
                acc += p[t] * s.ch.get(t, cc, e) * h[cc];
            }
            for alpha in 0..ng {
                acc += pi[alpha] * s.cv.get(alpha, cc, e) * h[cc];
            }
        }
        coriolis[e] = acc;
    }
    let horizontal = coriolis + h_of_l - gh_dot * &h;

    let mut pi_dot = left_derivative.clone();
    for alpha in 0..ng {
        for beta in 0..ng {
            for mu in 0..ng {
                pi_dot[alpha] += c.get(beta, mu, alpha) * wv[mu] * pi[beta];
            }
        }
    }
    Ok(LpForces {
        horizontal,
        vertical_momentum_rate: pi_dot,
        left_derivative,
    })
}

/// Right-hand side of the Lagrange-Poincaré system at a reduced state.
pub fn lp_rhs_cached(sys: &MechanicalSystem, cache: &GeometryCache, w: &QuasiVelocity) -> Result<LpRates> {
    let geo = &cache.geo;
    let (np, ng) = (geo.np, geo.ng);
    let n = geo.dim_base();
    let c = sys.action.group().structure_constants();
    let h = w.horizontal();
    let forces = lp_forces(sys, cache, w)?;
    let r = &forces.horizontal;

    // Tangency: d/dt (χ_grad ω^A) = 0.
    let hess = sys.gauge.hessians(&cache.point.q_star)?;
    let wa = &w.omega_p;
    let s = Vector::from_fn(ng, |mu, _| -wa.dot(&(&hess[mu] * wa)));
    let omega_h_dot = &geo.gh_pinv * r + &geo.k_tilde * (&geo.proj.fp_inv * s);
    let implicit = max_abs_vec(&(&geo.gh * &omega_h_dot - r)) / max_abs_vec(r).max(1.0);

    let zeta = &w.omega_g - &cache.conn_tilde * &h;
    let rho_dot = &cache.rho * ad_of(c, &zeta);
    let mut d_dot = Mat::zeros(ng, ng);
    for (j, part) in cache.partials.iter().enumerate() {
        if h[j] != 0.0 {
            d_dot += &part.d * h[j];
        }
    }
    let d = &geo.d;
    let dt_dot = rho_dot.transpose() * d * &cache.rho
        + cache.rho.transpose() * d_dot * &cache.rho
        + cache.rho.transpose() * d * &rho_dot;
    let omega_g_dot = &cache.d_tilde_inv * (&forces.vertical_momentum_rate - dt_dot * &w.omega_g);
    let a_dot = &cache.v * &zeta;

    let rates = LpRates {
        q_star_dot: h.rows(0, np).clone_owned(),
        f_tilde_dot: h.rows(np, n - np).clone_owned(),
        a_dot,
        omega_h_dot,
        omega_g_dot,
        implicit_residual: implicit,
    };
    ensure_finite(&rates.omega_h_dot, "horizontal Lagrange-Poincare equations")?;
    ensure_finite(&rates.omega_g_dot, "vertical Lagrange-Poincare equations")?;
    Ok(rates)
}

pub fn lp_rhs(sys: &MechanicalSystem, bs: &BundleState) -> Result<LpRates> {
    let cache = GeometryCache::at(sys, &bs.point)?;
    lp_rhs_cached(sys, &cache, &bs.omega)
}

/// Accelerations `(Q̈, f̈)` from the Euler-Lagrange equations of `L`.
pub fn euler_lagrange_rhs(sys: &MechanicalSystem, s: &AmbientState) -> Result<(Vector, Vector)> {
    let np = s.q.len();
    let g = sys.action.metric_p(&s.q);
    let dg = sys.action.metric_p_partials(&s.q)?;
    let (dvq, dvf) = sys.potential.gradient(&s.q, &s.f);
    let mut force = -dvq;
    for a in 0..np {
        // -∂_C G_AB Q̇^C Q̇^B + ½ ∂_A G_BC Q̇^B Q̇^C
        let mut acc = 0.0;
        for (cc, dgc) in dg.iter().enumerate() {
            acc -= s.q_dot[cc] * dgc.row(a).dot(&s.q_dot.transpose());
        }
        acc += 0.5 * s.q_dot.dot(&(&dg[a] * &s.q_dot));
        force[a] += acc;
    }
    let q_ddot = inverse_checked(&g, "metric on P")? * force;
    let f_ddot = inverse_checked(sys.action.metric_v(), "metric on V")? * (-dvf);
    ensure_finite(&q_ddot, "Euler-Lagrange equations")?;
    Ok((q_ddot, f_ddot))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Reduced,
    Original,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Reduced => "reduced",
            Mode::Original => "original",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = LprError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(Mode::Reduced),
            "original" => Ok(Mode::Original),
            other => Err(LprError::Config(format!(
                "unknown mode {other:?} (expected reduced or original)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub energy: f64,
    /// `|χ(Q*)|_∞` after re-projection (zero in original mode).
    pub slice_residual: f64,
    /// `|χ(Q*)|_∞` reached by the RK4 step before re-projection.
    pub slice_drift: f64,
    /// `π_α` (reduced) or the Noether momentum (original); they coincide.
    pub vertical_momentum: Vec<f64>,
    /// Residual of the implicit horizontal equations at the stored state.
    pub implicit_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrajectoryStates {
    Original(Vec<AmbientState>),
    Reduced(Vec<BundleState>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: Mode,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: TrajectoryStates,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn rk4_step<F>(y: &Vector, dt: f64, mut rhs: F) -> Result<Vector>
where
    F: FnMut(&Vector) -> Result<Vector>,
{
    let k1 = rhs(y)?;
    let k2 = rhs(&(y + &k1 * (dt / 2.0)))?;
    let k3 = rhs(&(y + &k2 * (dt / 2.0)))?;
    let k4 = rhs(&(y + &k3 * dt))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn pack_ambient(s: &AmbientState) -> Vector {
    let mut v = Vec::new();
    for part in [&s.q, &s.f, &s.q_dot, &s.f_dot] {
        v.extend_from_slice(part.as_slice());
    }
    Vector::from_vec(v)
}

fn unpack_ambient(y: &Vector, np: usize, nv: usize) -> AmbientState {
    AmbientState {
        q: y.rows(0, np).clone_owned(),
        f: y.rows(np, nv).clone_owned(),
        q_dot: y.rows(np + nv, np).clone_owned(),
        f_dot: y.rows(2 * np + nv, nv).clone_owned(),
    }
}

fn pack_bundle(s: &BundleState) -> Vector {
    let mut v = Vec::new();
    for part in [
        &s.point.q_star,
        &s.point.f_tilde,
        &s.point.a,
        &s.omega.omega_p,
        &s.omega.omega_f,
        &s.omega.omega_g,
    ] {
        v.extend_from_slice(part.as_slice());
    }
    Vector::from_vec(v)
}

fn unpack_bundle(sys: &MechanicalSystem, y: &Vector) -> BundleState {
    let (np, nv, ng) = sys.dims();
    let mut off = 0;
    let mut take = |n: usize| {
        let v = y.rows(off, n).clone_owned();
        off += n;
        v
    };
    let q_star = take(np);
    let f_tilde = take(nv);
    let a = sys.action.group().canonicalize(&take(ng));
    let omega_p = take(np);
    let omega_f = take(nv);
    let omega_g = take(ng);
    BundleState {
        point: BundlePoint { q_star, f_tilde, a },
        omega: QuasiVelocity {
            omega_p,
            omega_f,
            omega_g,
        },
    }
}

fn step_error(step: usize, e: LprError) -> LprError {
    match e {
        LprError::Domain(m) => LprError::Domain(format!("step {step}: {m}")),
        LprError::NonFinite(m) => LprError::NonFinite(format!("step {step}: {m}")),
        LprError::Singular { context, condition } => LprError::Singular {
            context: format!("step {step}: {context}"),
            condition,
        },
        other => other,
    }
}

fn reduced_diagnostics(sys: &MechanicalSystem, bs: &BundleState, drift: f64) -> Result<StepDiagnostics> {
    let cache = GeometryCache::at(sys, &bs.point)?;
    let implicit = lp_rhs_cached(sys, &cache, &bs.omega)?.implicit_residual;
    Ok(StepDiagnostics {
        energy: energy_reduced(sys, &cache, &bs.omega),
        slice_residual: max_abs_vec(&sys.gauge.chi(&bs.point.q_star)),
        slice_drift: drift,
        vertical_momentum: vertical_momentum(&cache, &bs.omega).as_slice().to_vec(),
        implicit_residual: implicit,
    })
}

fn original_diagnostics(sys: &MechanicalSystem, s: &AmbientState) -> Result<StepDiagnostics> {
    Ok(StepDiagnostics {
        energy: energy_original(sys, s),
        slice_residual: 0.0,
        slice_drift: 0.0,
        vertical_momentum: noether_momentum(sys, s)?.as_slice().to_vec(),
        implicit_residual: 0.0,
    })
}

/// Fixed-step RK4 from an initial state given in the original coordinates.
/// In reduced mode the initial state is mapped through the chart and `Q*` is
/// re-projected onto the slice after every step.
pub fn integrate(
    sys: &MechanicalSystem,
    initial: &AmbientState,
    dt: f64,
    steps: usize,
    mode: Mode,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LprError::Config(format!("dt must be positive, got {dt}")));
    }
    let (np, nv, _) = sys.dims();
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    match mode {
        Mode::Original => {
            let mut states = vec![initial.clone()];
            let mut diagnostics = vec![original_diagnostics(sys, initial)?];
            let mut y = pack_ambient(initial);
            for step in 1..=steps {
                y = rk4_step(&y, dt, |z| {
                    let s = unpack_ambient(z, np, nv);
                    let (qa, fa) = euler_lagrange_rhs(sys, &s)?;
                    let mut out = Vec::with_capacity(z.len());
                    out.extend_from_slice(s.q_dot.as_slice());
                    out.extend_from_slice(s.f_dot.as_slice());
                    out.extend_from_slice(qa.as_slice());
                    out.extend_from_slice(fa.as_slice());
                    Ok(Vector::from_vec(out))
                })
                .map_err(|e| step_error(step, e))?;
                let s = unpack_ambient(&y, np, nv);
                diagnostics.push(original_diagnostics(sys, &s)?);
                states.push(s);
            }
            Ok(Trajectory {
                mode,
                dt,
                times,
                states: TrajectoryStates::Original(states),
                diagnostics,
            })
        }
        Mode::Reduced => {
            let start = ambient_to_bundle(sys, initial, None)?;
            let mut diagnostics = vec![reduced_diagnostics(sys, &start, 0.0)?];
            let mut states = vec![start];
            for step in 1..=steps {
                let prev = states.last().expect("non-empty").clone();
                let y = rk4_step(&pack_bundle(&prev), dt, |z| {
                    let bs = unpack_bundle(sys, z);
                    let r = lp_rhs(sys, &bs)?;
                    let mut out = Vec::with_capacity(z.len());
                    for part in [&r.q_star_dot, &r.f_tilde_dot, &r.a_dot, &r.omega_h_dot, &r.omega_g_dot] {
                        out.extend_from_slice(part.as_slice());
                    }
                    Ok(Vector::from_vec(out))
                })
                .map_err(|e| step_error(step, e))?;
                let raw = unpack_bundle(sys, &y);
                let drift = max_abs_vec(&sys.gauge.chi(&raw.point.q_star));
                let ambient = bundle_to_ambient(sys, &raw).map_err(|e| step_error(step, e))?;
                let projected = ambient_to_bundle(sys, &ambient, Some(&raw.point.a))
                    .map_err(|e| step_error(step, e))?;
                diagnostics.push(reduced_diagnostics(sys, &projected, drift)?);
                states.push(projected);
            }
            Ok(Trajectory {
                mode,
                dt,
                times,
                states: TrajectoryStates::Reduced(states),
                diagnostics,
            })
        }
    }
}

/// Sup-norm deviations between two reduced-coordinate trajectories.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub q_star: f64,
    pub f_tilde: f64,
    pub a: f64,
    pub omega_horizontal: f64,
    pub omega_vertical: f64,
    pub samples: usize,
}

impl ComparisonReport {
    pub fn max_deviation(&self) -> f64 {
        self.q_star
            .max(self.f_tilde)
            .max(self.a)
            .max(self.omega_horizontal)
            .max(self.omega_vertical)
    }
}

/// Maps an original-mode trajectory through the chart (warm-started).
pub fn chart_map_trajectory(sys: &MechanicalSystem, t: &Trajectory) -> Result<Vec<BundleState>> {
    match &t.states {
        TrajectoryStates::Reduced(s) => Ok(s.clone()),
        TrajectoryStates::Original(s) => {
            let mut out: Vec<BundleState> = Vec::with_capacity(s.len());
            for st in s {
                let guess = out.last().map(|b| b.point.a.clone());
                out.push(ambient_to_bundle(sys, st, guess.as_ref())?);
            }
            Ok(out)
        }
    }
}

pub fn compare_trajectories(
    sys: &MechanicalSystem,
    first: &Trajectory,
    second: &Trajectory,
) -> Result<ComparisonReport> {
    if first.times.len() != second.times.len()
        || first
            .times
            .iter()
            .zip(&second.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(LprError::Dimension("trajectory time grids differ".into()));
    }
    let x = chart_map_trajectory(sys, first)?;
    let y = chart_map_trajectory(sys, second)?;
    let group = sys.action.group();
    let mut r = ComparisonReport {
        samples: x.len(),
        ..ComparisonReport::default()
    };
    for (p, q) in x.iter().zip(&y) {
        r.q_star = r.q_star.max((&p.point.q_star - &q.point.q_star).amax());
        r.f_tilde = r.f_tilde.max((&p.point.f_tilde - &q.point.f_tilde).amax());
        r.a = r.a.max(group.distance(&p.point.a, &q.point.a));
        r.omega_horizontal = r
            .omega_horizontal
            .max((p.omega.horizontal() - q.omega.horizontal()).amax());
        r.omega_vertical = r
            .omega_vertical
            .max((&p.omega.omega_g - &q.omega.omega_g).amax());
    }
    Ok(r)
}
