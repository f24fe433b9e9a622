//! Acceptance suite: geometric identities, frame commutators, variational
//! relations, reduction equivalence and conservation, run against one system.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connection::{GeometryCache, PointGeometry};
use crate::dynamics::{
    ambient_to_bundle, compare_trajectories, integrate, lagrangian_original, lagrangian_reduced, AmbientState,
    Mode, Trajectory, TrajectoryStates,
};
use crate::error::{LprError, Result};
use crate::gauge::BundlePoint;
use crate::linalg::{max_abs, Mat, Vector};
use crate::system::MechanicalSystem;
use crate::variational::{check_family, GridSpec, PathFamily, GRID_POINTS, VARIATION_STEP};

/// Residual bounds and the minimum convergence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub projector: f64,
    pub connection: f64,
    pub pseudoinverse: f64,
    pub commutator: f64,
    pub killing: f64,
    pub variational: f64,
    pub deviation_abelian: f64,
    pub deviation_nonabelian: f64,
    pub energy_drift: f64,
    pub momentum_drift: f64,
    pub slice_residual: f64,
    pub lagrangian: f64,
    pub min_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            projector: 1e-10,
            connection: 1e-10,
            pseudoinverse: 1e-10,
            commutator: 1e-5,
            killing: 1e-8,
            variational: 1e-4,
            deviation_abelian: 1e-6,
            deviation_nonabelian: 1e-5,
            energy_drift: 1e-6,
            momentum_drift: 1e-8,
            slice_residual: 1e-8,
            lagrangian: 1e-10,
            min_order: 1.8,
        }
    }
}

impl Tolerances {
    /// Multiplies every residual bound by `factor`; the order bound is kept.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(LprError::Config(format!(
                "tolerance scale must be positive, got {factor}"
            )));
        }
        Ok(Tolerances {
            projector: self.projector * factor,
            connection: self.connection * factor,
            pseudoinverse: self.pseudoinverse * factor,
            commutator: self.commutator * factor,
            killing: self.killing * factor,
            variational: self.variational * factor,
            deviation_abelian: self.deviation_abelian * factor,
            deviation_nonabelian: self.deviation_nonabelian * factor,
            energy_drift: self.energy_drift * factor,
            momentum_drift: self.momentum_drift * factor,
            slice_residual: self.slice_residual * factor,
            lagrangian: self.lagrangian * factor,
            min_order: self.min_order,
        })
    }
}

/// Sampling sizes and integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    pub seed: u64,
    pub sample_points: usize,
    pub commutator_points: usize,
    pub test_functions: usize,
    pub commutator_step: f64,
    /// Pair of larger steps for the commutator order estimate; at
    /// `commutator_step` the truncation error sits below round-off.
    pub commutator_order_steps: [f64; 2],
    pub path_families: usize,
    pub order_samples: usize,
    pub dt: f64,
    pub steps: usize,
    pub tolerances: Tolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 7,
            sample_points: 100,
            commutator_points: 10,
            test_functions: 5,
            commutator_step: 1e-4,
            commutator_order_steps: [1e-2, 5e-3],
            path_families: 10,
            order_samples: 10,
            dt: 1e-3,
            steps: 1000,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    ProjectorAlgebra,
    ConnectionAxioms,
    PseudoinverseIdentities,
    FrameCommutators,
    KillingIdentities,
    VariationalRelations,
    ReductionEquivalence,
    Conservation,
    LagrangianIdentity,
}

impl Criterion {
    pub const ALL: [Criterion; 9] = [
        Criterion::ProjectorAlgebra,
        Criterion::ConnectionAxioms,
        Criterion::PseudoinverseIdentities,
        Criterion::FrameCommutators,
        Criterion::KillingIdentities,
        Criterion::VariationalRelations,
        Criterion::ReductionEquivalence,
        Criterion::Conservation,
        Criterion::LagrangianIdentity,
    ];

    /// 1-based position in [`Criterion::ALL`].
    pub fn number(self) -> usize {
        Criterion::ALL.iter().position(|&c| c == self).expect("listed") + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::ProjectorAlgebra => "projector_algebra",
            Criterion::ConnectionAxioms => "connection_axioms",
            Criterion::PseudoinverseIdentities => "pseudoinverse_identities",
            Criterion::FrameCommutators => "frame_commutators",
            Criterion::KillingIdentities => "killing_identities",
            Criterion::VariationalRelations => "variational_relations",
            Criterion::ReductionEquivalence => "reduction_equivalence",
            Criterion::Conservation => "conservation",
            Criterion::LagrangianIdentity => "lagrangian_identity",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = LprError;
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(k) = s.parse::<usize>() {
            if (1..=Criterion::ALL.len()).contains(&k) {
                return Ok(Criterion::ALL[k - 1]);
            }
        }
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LprError::Config(format!("unknown check {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    /// Reported but not gated.
    Info,
}

impl Bound {
    pub fn holds(self, value: f64) -> bool {
        match self {
            Bound::AtMost(b) => value <= b,
            Bound::AtLeast(b) => value >= b,
            Bound::Info => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
}

impl Measurement {
    fn new(name: &str, value: f64, bound: Bound) -> Self {
        Measurement {
            name: name.to_string(),
            value,
            bound,
        }
    }

    pub fn passed(&self) -> bool {
        self.bound.holds(self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckFailure {
    pub message: String,
    /// The check stopped on a solver or conditioning failure.
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub criterion: Criterion,
    pub number: usize,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    pub failure: Option<CheckFailure>,
}

impl CheckResult {
    fn from_measurements(criterion: Criterion, measurements: Vec<Measurement>) -> Self {
        CheckResult {
            criterion,
            number: criterion.number(),
            passed: measurements.iter().all(Measurement::passed),
            measurements,
            failure: None,
        }
    }

    fn from_error(criterion: Criterion, e: &LprError) -> Self {
        CheckResult {
            criterion,
            number: criterion.number(),
            passed: false,
            measurements: Vec::new(),
            failure: Some(CheckFailure {
                message: e.to_string(),
                numerical: e.is_numerical(),
            }),
        }
    }

    /// Measurements that broke their bound.
    pub fn breaches(&self) -> impl Iterator<Item = &Measurement> {
        self.measurements.iter().filter(|m| !m.passed())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub system: String,
    pub abelian: bool,
    pub options: VerifyOptions,
    pub results: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn has_numerical_failure(&self) -> bool {
        self.results
            .iter()
            .any(|r| r.failure.as_ref().is_some_and(|f| f.numerical))
    }
}

/// True when every structure constant of the group vanishes.
pub fn is_abelian(sys: &MechanicalSystem) -> bool {
    sys.action.group().structure_constants().max_abs() == 0.0
}

fn rng_for(opts: &VerifyOptions, criterion: Criterion) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(criterion.number() as u64);
    rng
}

fn slice_points(sys: &MechanicalSystem, rng: &mut ChaCha8Rng, count: usize) -> Vec<BundlePoint> {
    (0..count).map(|_| sys.random_bundle_point(rng)).collect()
}

/// Max-abs residuals of several named identities, accumulated over points.
struct Accumulator(Vec<(&'static str, f64)>);

impl Accumulator {
    fn new(names: &[&'static str]) -> Self {
        Accumulator(names.iter().map(|&n| (n, 0.0)).collect())
    }

    fn record(&mut self, idx: usize, value: f64) {
        let slot = &mut self.0[idx].1;
        // NaN must propagate into a failure.
        if value.is_nan() || value > *slot {
            *slot = value;
        }
    }

    fn into_measurements(self, tol: f64) -> Vec<Measurement> {
        self.0
            .into_iter()
            .map(|(n, v)| Measurement::new(n, v, Bound::AtMost(tol)))
            .collect()
    }
}

fn projector_algebra(sys: &MechanicalSystem, opts: &VerifyOptions) -> Result<Vec<Measurement>> {
    let mut rng = rng_for(opts, Criterion::ProjectorAlgebra);
    let mut acc = Accumulator::new(&[
        "N N - N",
        "Pi Pi - Pi",
        "Pperp Pperp - Pperp",
        "Pi K",
        "N K",
        "N Pi - N",
        "Pi N - Pi",
        "N Pperp - Pperp",
        "Pperp N - N",
    ]);
    for b in slice_points(sys, &mut rng, opts.sample_points) {
        let geo = PointGeometry::at(sys, &b.q_star, &b.f_tilde)?;
        let (n, pi, pp, k) = (&geo.proj.n, &geo.pi, &geo.proj.p_perp, &geo.k_tilde);
        acc.record(0, max_abs(&(n * n - n)));
        acc.record(1, max_abs(&(pi * pi - pi)));
        acc.record(2, max_abs(&(pp * pp - pp)));
        acc.record(3, max_abs(&(pi * k)));
        acc.record(4, max_abs(&(n * k)));
        acc.record(5, max_abs(&(n * pi - n)));
        acc.record(6, max_abs(&(pi * n - pi)));
        acc.record(7, max_abs(&(n * pp - pp)));
        acc.record(8, max_abs(&(pp * n - n)));
    }
    Ok(acc.into_measurements(opts.tolerances.projector))
}

fn connection_axioms(sys: &MechanicalSystem, opts: &VerifyOptions) -> Result<Vec<Measurement>> {
    let mut rng = rng_for(opts, Criterion::ConnectionAxioms);
    let mut acc = Accumulator::new(&[
        "omega(H_A)",
        "omega(H_m)",
        "omega(K) - I",
        "frame: omega(H)",
        "frame: omega(L) - I",
    ]);
    let (np, _, ng) = sys.dims();
    for b in slice_points(sys, &mut rng, opts.sample_points) {
        let cache = GeometryCache::at(sys, &b)?;
        let geo = &cache.geo;
        let n = geo.dim_base();
        // Ambient representatives of H at the slice point: Π applied to Ñ.
        let horizontal = &geo.pi * &geo.proj.n;
        let on_h = &geo.conn * &horizontal;
        acc.record(0, max_abs(&on_h.columns(0, np).clone_owned()));
        acc.record(1, max_abs(&on_h.columns(np, n - np).clone_owned()));
        acc.record(2, max_abs(&(&geo.conn * &geo.k_tilde - Mat::identity(ng, ng))));

        // The same form in bundle coordinates, ω = 𝒜̃ dX + u da, on the frame.
        let frame = cache.frame_matrix();
        let form = &cache.conn_tilde * frame.rows(0, n) + &cache.u * frame.rows(n, ng);
        acc.record(3, max_abs(&form.columns(0, n).clone_owned()));
        acc.record(4, max_abs(&(form.columns(n, ng) - Mat::identity(ng, ng))));
    }
    Ok(acc.into_measurements(opts.tolerances.connection))
}

fn pseudoinverse_identities(sys: &MechanicalSystem, opts: &VerifyOptions) -> Result<Vec<Measurement>> {
    let mut rng = rng_for(opts, Criterion::PseudoinverseIdentities);
    let mut acc = Accumulator::new(&[
        "bundle metric: pinv G - diag(Pperp, I, I)",
        "horizontal metric: Gcheck GH - diag(N, I)",
        "K^T GH",
        "GH symmetry",
    ]);
    let (np, _, ng) = sys.dims();
    for b in slice_points(sys, &mut rng, opts.sample_points) {
        let cache = GeometryCache::at(sys, &b)?;
        let geo = &cache.geo;
        let n = geo.dim_base();

        let mut target = Mat::identity(n + ng, n + ng);
        target
            .view_mut((0, 0), (np, np))
            .copy_from(&geo.proj.p_perp.view((0, 0), (np, np)));
        acc.record(0, max_abs(&(cache.bundle_metric_pinv() * cache.bundle_metric() - target)));

        let mut target = Mat::identity(n + ng, n + ng);
        target.view_mut((0, 0), (n, n)).copy_from(&geo.proj.n);
        acc.record(1, max_abs(&(cache.frame_metric_pinv() * cache.frame_metric() - target)));

        acc.record(2, max_abs(&(geo.k_tilde.transpose() * &geo.gh)));
        acc.record(3, max_abs(&(&geo.gh - geo.gh.transpose())));
    }
    Ok(acc.into_measurements(opts.tolerances.pseudoinverse))
}

/// `φ(x) = Σ c_k sin(w_k·x + p_k)` with its exact gradient.
struct TestFunction {
    terms: Vec<(f64, Vector, f64)>,
}

impl TestFunction {
    fn random(rng: &mut ChaCha8Rng, dim: usize) -> Self {
        let terms = (0..3)
            .map(|_| {
                let c = rng.random_range(0.5..1.5);
                let w = Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                let p = rng.random_range(0.0..std::f64::consts::TAU);
                (c, w, p)
            })
            .collect();
        TestFunction { terms }
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(x.len());
        for (c, w, p) in &self.terms {
            g += w * (c * (w.dot(x) + p).cos());
        }
        g
    }
}

fn bundle_point(x: &Vector, np: usize, nv: usize, ng: usize) -> BundlePoint {
    BundlePoint {
        q_star: x.rows(0, np).clone_owned(),
        f_tilde: x.rows(np, nv).clone_owned(),
        a: x.rows(np + nv, ng).clone_owned(),
    }
}

/// `X_j φ` at `x` for every frame field, one row per test function.
fn frame_derivatives(sys: &MechanicalSystem, x: &Vector, phis: &[TestFunction]) -> Result<Mat> {
    let (np, nv, ng) = sys.dims();
    let frame = GeometryCache::at(sys, &bundle_point(x, np, nv, ng))?.frame_matrix();
    let mut out = Mat::zeros(phis.len(), frame.ncols());
    for (r, phi) in phis.iter().enumerate() {
        out.row_mut(r).copy_from(&(phi.gradient(x).transpose() * &frame));
    }
    Ok(out)
}

/// Largest `|[X_i, X_j]φ - C^k_ij X_k φ|` with central differences of step
/// `h` along straight lines in `(Q*, f̃, a)`.
fn commutator_error(sys: &MechanicalSystem, x: &Vector, phis: &[TestFunction], h: f64) -> Result<f64> {
    let (np, nv, ng) = sys.dims();
    let cache = GeometryCache::at(sys, &bundle_point(x, np, nv, ng))?;
    let frame = cache.frame_matrix();
    let table = cache.frame_structure(sys.action.group().structure_constants());
    let dim = frame.ncols();
    let center = frame_derivatives(sys, x, phis)?;
    let mut plus = Vec::with_capacity(dim);
    let mut minus = Vec::with_capacity(dim);
    for i in 0..dim {
        let step = frame.column(i) * h;
        plus.push(frame_derivatives(sys, &(x + &step), phis)?);
        minus.push(frame_derivatives(sys, &(x - &step), phis)?);
    }
    let mut worst = 0.0_f64;
    for r in 0..phis.len() {
        for i in 0..dim {
            for j in 0..dim {
                let xi_xj = (plus[i][(r, j)] - minus[i][(r, j)]) / (2.0 * h);
                let xj_xi = (plus[j][(r, i)] - minus[j][(r, i)]) / (2.0 * h);
                let expected: f64 = (0..dim).map(|k| table.get(k, i, j) * center[(r, k)]).sum();
                let e = (xi_xj - xj_xi - expected).abs();
                if e.is_nan() || e > worst {
                    worst = e;
                }
            }
        }
    }
    Ok(worst)
}

fn frame_commutators(sys: &MechanicalSystem, opts: &VerifyOptions) -> Result<Vec<Measurement>> {
    let mut rng = rng_for(opts, Criterion::FrameCommutators);
    let (np, nv, ng) = sys.dims();
    let dim = np + nv + ng;
    let phis: Vec<TestFunction> = (0..opts.test_functions)
        .map(|_| TestFunction::random(&mut rng, dim))
        .collect();
    let points: Vec<Vector> = slice_points(sys, &mut rng, opts.commutator_points)
        .into_iter()
        .map(|b| {
            let mut x = Vector::zeros(dim);
            x.rows_mut(0, np).copy_from(&b.q_star);
            x.rows_mut(np, nv).copy_from(&b.f_tilde);
            x.rows_mut(np + nv, ng).copy_from(&b.a);
            x
        })
        .collect();
    let [h1, h2] = opts.commutator_order_steps;
    let mut at_h = 0.0_f64;
    let mut coarse = 0.0_f64;
    let mut fine = 0.0_f64;
    for x in &points {
        at_h = at_h.max(commutator_error(sys, x, &phis, opts.commutator_step)?);
        coarse = coarse.max(commutator_error(sys, x, &phis, h1)?);
        fine = fine.max(commutator_error(sys, x, &phis, h2)?);
    }
    let tol = &opts.tolerances;
    Ok(vec![
        Measurement::new("residual at h", at_h, Bound::AtMost(tol.commutator)),
        Measurement::new("residual at coarse h", coarse, Bound::Info),
        Measurement::new("residual at fine h", fine, Bound::Info),
        Measurement::new("order", (coarse / fine).log2(), Bound::AtLeast(tol.min_order)),
    ])
}

fn killing_identities(sys: &MechanicalSystem, opts: &VerifyOptions) -> Result<Vec<Measurement>> {
    let mut rng = rng_for(opts, Criterion::KillingIdentities);
    let mut acc = Accumulator::new(&[
        "I (AB)",
        "II (pq)",
        "III (pB)",
        "IV (Bp)",
        "(A) d_D of K^T GH, A block",
        "(B) d_n of K^T GH, p block",
        "(C) d_D of K^T GH, p block",
        "(D) d_q of K^T GH, A block",
    ]);
    let (np, nv, ng) = sys.dims();
    let n = np + nv;
    for b in slice_points(sys, &mut rng, opts.sample_points) {
        let geo = PointGeometry::at(sys, &b.q_star, &b.f_tilde)?;
        let parts = geo.partials(&*sys.action, &*sys.gauge)?;
        let k = &geo.k_tilde;
        let gh = &geo.gh;
        for alpha in 0..ng {
            // Lie derivative of G^H along K_α.
            let mut dk = Mat::zeros(n, n);
            let mut lie = Mat::zeros(n, n);
            for (d, p) in parts.iter().enumerate() {
                dk.column_mut(d).copy_from(&p.k_tilde.column(alpha));
                lie += &p.gh * k[(d, alpha)];
            }
            lie += dk.transpose() * gh + gh * &dk;
            acc.record(0, max_abs(&lie.view((0, 0), (np, np)).clone_owned()));
            acc.record(1, max_abs(&lie.view((np, np), (nv, nv)).clone_owned()));
            acc.record(2, max_abs(&lie.view((np, 0), (nv, np)).clone_owned()));
            acc.record(3, max_abs(&lie.view((0, np), (np, nv)).clone_owned()));
        }
        for (d, p) in parts.iter().enumerate() {
            // ∂_d (K^R̃_γ G^H_R̃Ã) for every γ and Ã.
            let dkg = p.k_tilde.transpose() * gh + k.transpose() * &p.gh;
            let a_block = max_abs(&dkg.columns(0, np).clone_owned());
            let p_block = max_abs(&dkg.columns(np, nv).clone_owned());
            if d < np {
                acc.record(4, a_block);
                acc.record(6, p_block);
            } else {
                acc.record(5, p_block);
                acc.record(7, a_block);
            }
        }
    }
    Ok(acc.into_measurements(opts.tolerances.killing))
}

fn variational_relations(sys: &MechanicalSystem, opts: &VerifyOptions) -> Result<Vec<Measurement>> {
    let mut rng = rng_for(opts, Criterion::VariationalRelations);
    let families: Vec<PathFamily> = (0..opts.path_families)
        .map(|_| PathFamily::random(sys, &mut rng))
        .collect();
    let grid = GridSpec::unit_interval(GRID_POINTS, VARIATION_STEP);
    let reports = families
        .par_iter()
        .map(|fam| check_family(fam, &grid, opts.order_samples))
        .collect::<Result<Vec<_>>>()?;
    let tol = &opts.tolerances;
    let mut rel = [0.0_f64; 3];
    let mut consistency = 0.0_f64;
    let mut slice = 0.0_f64;
    let mut endpoint = 0.0_f64;
    let mut order: Option<f64> = None;
    for r in &reports {
        for (slot, v) in rel.iter_mut().zip(r.grid.as_array()) {
            *slot = slot.max(v);
        }
        consistency = consistency.max(r.grid.condensed_vs_expanded);
        slice = slice.max(r.grid.slice_residual);
        endpoint = endpoint.max(r.grid.endpoint_variation);
        if let Some(o) = r.min_order() {
            order = Some(order.map_or(o, |m| m.min(o)));
        }
    }
    let mut out = vec![
        Measurement::new("relation A", rel[0], Bound::AtMost(tol.variational)),
        Measurement::new("relation p", rel[1], Bound::AtMost(tol.variational)),
        Measurement::new("relation alpha", rel[2], Bound::AtMost(tol.variational)),
        Measurement::new("expanded vs condensed form", consistency, Bound::Info),
        Measurement::new("family slice residual", slice, Bound::Info),
        Measurement::new("endpoint variation", endpoint, Bound::Info),
    ];
    if let Some(o) = order {
        out.push(Measurement::new("order", o, Bound::AtLeast(tol.min_order)));
    }
    Ok(out)
}

fn trajectory_pair(sys: &MechanicalSystem, initial: &AmbientState, opts: &VerifyOptions) -> Result<(Trajectory, Trajectory)> {
    let (reduced, original) = rayon::join(
        || integrate(sys, initial, opts.dt, opts.steps, Mode::Reduced),
        || integrate(sys, initial, opts.dt, opts.steps, Mode::Original),
    );
    Ok((reduced?, original?))
}

fn reduction_equivalence(
    sys: &MechanicalSystem,
    pair: &(Trajectory, Trajectory),
    opts: &VerifyOptions,
) -> Result<Vec<Measurement>> {
    let r = compare_trajectories(sys, &pair.0, &pair.1)?;
    let tol = &opts.tolerances;
    let bound = if is_abelian(sys) {
        tol.deviation_abelian
    } else {
        tol.deviation_nonabelian
    };
    Ok(vec![
        Measurement::new("sup deviation", r.max_deviation(), Bound::AtMost(bound)),
        Measurement::new("Q*", r.q_star, Bound::Info),
        Measurement::new("f", r.f_tilde, Bound::Info),
        Measurement::new("a", r.a, Bound::Info),
        Measurement::new("omega horizontal", r.omega_horizontal, Bound::Info),
        Measurement::new("omega vertical", r.omega_vertical, Bound::Info),
    ])
}

fn drift(t: &Trajectory, value: impl Fn(usize) -> f64) -> f64 {
    let v0 = value(0);
    (0..t.len()).map(|i| (value(i) - v0).abs()).fold(0.0, f64::max)
}

fn conservation(
    sys: &MechanicalSystem,
    pair: &(Trajectory, Trajectory),
    opts: &VerifyOptions,
) -> Result<Vec<Measurement>> {
    let (reduced, original) = pair;
    let tol = &opts.tolerances;
    let energy = |t: &Trajectory| drift(t, |i| t.diagnostics[i].energy);
    let momentum = |t: &Trajectory| {
        let ng = t.diagnostics[0].vertical_momentum.len();
        (0..ng)
            .map(|a| drift(t, |i| t.diagnostics[i].vertical_momentum[a]))
            .fold(0.0, f64::max)
    };
    let momentum_bound = if is_abelian(sys) {
        Bound::AtMost(tol.momentum_drift)
    } else {
        Bound::Info
    };
    let slice = reduced
        .diagnostics
        .iter()
        .map(|d| d.slice_residual)
        .fold(0.0, f64::max);
    let mut tangency = 0.0_f64;
    if let TrajectoryStates::Reduced(states) = &reduced.states {
        for s in states {
            let chi = sys.gauge.gradient(&s.point.q_star);
            tangency = tangency.max((chi * &s.omega.omega_p).amax());
        }
    }
    let implicit = reduced
        .diagnostics
        .iter()
        .map(|d| d.implicit_residual)
        .fold(0.0, f64::max);
    Ok(vec![
        Measurement::new("energy drift (reduced)", energy(reduced), Bound::AtMost(tol.energy_drift)),
        Measurement::new("energy drift (original)", energy(original), Bound::AtMost(tol.energy_drift)),
        Measurement::new("pi drift (reduced)", momentum(reduced), momentum_bound),
        Measurement::new("momentum drift (original)", momentum(original), momentum_bound),
        Measurement::new("slice residual", slice, Bound::AtMost(tol.slice_residual)),
        Measurement::new("slice tangency of omega_A", tangency, Bound::AtMost(tol.slice_residual)),
        Measurement::new("implicit horizontal residual", implicit, Bound::Info),
    ])
}

fn lagrangian_identity(sys: &MechanicalSystem, opts: &VerifyOptions) -> Result<Vec<Measurement>> {
    let mut rng = rng_for(opts, Criterion::LagrangianIdentity);
    let (np, nv, _) = sys.dims();
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    let mut skipped = 0usize;
    let mut accepted = 0usize;
    while accepted < opts.sample_points {
        let s = AmbientState {
            q: sys.random_ambient_q(&mut rng),
            f: sys.random_f(&mut rng),
            q_dot: Vector::from_fn(np, |_, _| rng.random_range(-1.0..1.0)),
            f_dot: Vector::from_fn(nv, |_, _| rng.random_range(-1.0..1.0)),
        };
        // Points the gauge solve cannot reach lie outside the trivialization.
        let bs = match ambient_to_bundle(sys, &s, None) {
            Ok(bs) => bs,
            Err(LprError::GaugeNonConvergence { .. } | LprError::Domain(_))
                if skipped < 10 * opts.sample_points =>
            {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        accepted += 1;
        let cache = GeometryCache::at(sys, &bs.point)?;
        let lo = lagrangian_original(sys, &s);
        let lr = lagrangian_reduced(sys, &cache, &bs.omega);
        let e = (lo - lr).abs();
        if e.is_nan() || e > worst {
            worst = e;
        }
        scale = scale.max(lo.abs());
    }
    Ok(vec![
        Measurement::new("|L - L_reduced|", worst, Bound::AtMost(opts.tolerances.lagrangian)),
        Measurement::new("max |L|", scale, Bound::Info),
        Measurement::new("samples outside chart", skipped as f64, Bound::Info),
    ])
}

fn single(sys: &MechanicalSystem, criterion: Criterion, opts: &VerifyOptions) -> CheckResult {
    let run = match criterion {
        Criterion::ProjectorAlgebra => projector_algebra,
        Criterion::ConnectionAxioms => connection_axioms,
        Criterion::PseudoinverseIdentities => pseudoinverse_identities,
        Criterion::FrameCommutators => frame_commutators,
        Criterion::KillingIdentities => killing_identities,
        Criterion::VariationalRelations => variational_relations,
        Criterion::LagrangianIdentity => lagrangian_identity,
        Criterion::ReductionEquivalence | Criterion::Conservation => {
            unreachable!("trajectory checks run as a pair")
        }
    };
    match run(sys, opts) {
        Ok(m) => CheckResult::from_measurements(criterion, m),
        Err(e) => CheckResult::from_error(criterion, &e),
    }
}

fn dynamics_checks(
    sys: &MechanicalSystem,
    initial: &AmbientState,
    wanted: &[Criterion],
    opts: &VerifyOptions,
) -> Vec<CheckResult> {
    match trajectory_pair(sys, initial, opts) {
        Ok(pair) => wanted
            .iter()
            .map(|&c| {
                let m = match c {
                    Criterion::ReductionEquivalence => reduction_equivalence(sys, &pair, opts),
                    _ => conservation(sys, &pair, opts),
                };
                match m {
                    Ok(m) => CheckResult::from_measurements(c, m),
                    Err(e) => CheckResult::from_error(c, &e),
                }
            })
            .collect(),
        Err(e) => wanted.iter().map(|&c| CheckResult::from_error(c, &e)).collect(),
    }
}

/// Runs the selected checks in parallel; results come back in criterion
/// order regardless of scheduling.
pub fn run_checks(
    sys: &MechanicalSystem,
    initial: &AmbientState,
    criteria: &[Criterion],
    opts: &VerifyOptions,
) -> VerifyReport {
    let mut selected: Vec<Criterion> = criteria.to_vec();
    selected.sort();
    selected.dedup();
    let (dyn_checks, static_checks): (Vec<_>, Vec<_>) = selected
        .iter()
        .partition(|c| matches!(c, Criterion::ReductionEquivalence | Criterion::Conservation));

    let mut jobs: Vec<Vec<Criterion>> = static_checks.into_iter().map(|c| vec![c]).collect();
    if !dyn_checks.is_empty() {
        jobs.push(dyn_checks);
    }
    let mut results: Vec<CheckResult> = jobs
        .par_iter()
        .map(|job| match job.as_slice() {
            [c] if !matches!(c, Criterion::ReductionEquivalence | Criterion::Conservation) => {
                vec![single(sys, *c, opts)]
            }
            wanted => dynamics_checks(sys, initial, wanted, opts),
        })
        .flatten()
        .collect();
    results.sort_by_key(|r| r.criterion);
    VerifyReport {
        system: sys.name.clone(),
        abelian: is_abelian(sys),
        options: opts.clone(),
        passed: results.iter().all(|r| r.passed),
        results,
    }
}

/// All nine checks.
pub fn verify(sys: &MechanicalSystem, initial: &AmbientState, opts: &VerifyOptions) -> VerifyReport {
    run_checks(sys, initial, &Criterion::ALL, opts)
}
