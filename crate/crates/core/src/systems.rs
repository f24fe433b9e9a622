//! Built-in systems, the TOML configuration schema and load-time checks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{GroupAction, So2PlanarAction, Su2QuaternionAction};
use crate::error::{LprError, Result};
use crate::gauge::{faddeev_popov, GaugeSurface, So2Gauge, Su2Gauge};
use crate::linalg::{condition_number, max_abs, Mat, Vector, CONDITION_LIMIT};
use crate::potential::{ensure_finite_potential, ExprPotential, PlanarCoupling, Potential, QuaternionCoupling};
use crate::system::MechanicalSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    So2Planar,
    Su2Quaternion,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 2] = [BuiltinKind::So2Planar, BuiltinKind::Su2Quaternion];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::So2Planar => "so2_planar",
            BuiltinKind::Su2Quaternion => "su2_quaternion",
        }
    }

    pub fn is_abelian(self) -> bool {
        matches!(self, BuiltinKind::So2Planar)
    }

    fn dims(self) -> (usize, usize) {
        match self {
            BuiltinKind::So2Planar => (2, 2),
            BuiltinKind::Su2Quaternion => (4, 4),
        }
    }
}

impl fmt::Display for BuiltinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinKind {
    type Err = LprError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "so2_planar" => Ok(BuiltinKind::So2Planar),
            "su2_quaternion" => Ok(BuiltinKind::Su2Quaternion),
            other => Err(LprError::Config(format!(
                "unknown system {other:?} (expected so2_planar or su2_quaternion)"
            ))),
        }
    }
}

/// Tunable parameters of a built-in system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuiltinParameters {
    /// Coupling constant of the default potential.
    pub kappa: f64,
    /// `ε` in `G_AB = (1 + ε|Q|²) δ_AB`.
    pub metric_conformal: f64,
    /// `β`, bends the gauge surface away from the straight slice.
    pub gauge_curvature: f64,
    /// Constant metric on `V`; identity when absent.
    pub metric_v: Option<Vec<Vec<f64>>>,
}

impl Default for BuiltinParameters {
    fn default() -> Self {
        BuiltinParameters {
            kappa: 0.3,
            metric_conformal: 0.0,
            gauge_curvature: 0.0,
            metric_v: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// Expression in `q1..`, `f1..`, `kappa`, `pi` and the names below.
    pub expression: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

/// Initial state in the original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub q: Vec<f64>,
    pub f: Vec<f64>,
    pub q_dot: Vec<f64>,
    pub f_dot: Vec<f64>,
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub system: BuiltinKind,
    #[serde(default)]
    pub parameters: BuiltinParameters,
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
}

impl SystemConfig {
    pub fn builtin(kind: BuiltinKind) -> Self {
        SystemConfig {
            system: kind,
            parameters: BuiltinParameters::default(),
            potential: None,
            initial: None,
        }
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| LprError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LprError::Config(e.to_string()))
    }

    /// The configured initial state, or a documented default.
    pub fn initial_state(&self) -> Result<crate::dynamics::AmbientState> {
        let (np, nv) = self.system.dims();
        let init = match &self.initial {
            Some(i) => i.clone(),
            None => default_initial(self.system),
        };
        let check = |name: &str, v: &[f64], n: usize| -> Result<Vector> {
            if v.len() != n {
                return Err(LprError::Config(format!(
                    "initial.{name} has length {}, expected {n}",
                    v.len()
                )));
            }
            Ok(Vector::from_row_slice(v))
        };
        Ok(crate::dynamics::AmbientState {
            q: check("q", &init.q, np)?,
            f: check("f", &init.f, nv)?,
            q_dot: check("q_dot", &init.q_dot, np)?,
            f_dot: check("f_dot", &init.f_dot, nv)?,
        })
    }
}

fn default_initial(kind: BuiltinKind) -> InitialConfig {
    match kind {
        BuiltinKind::So2Planar => InitialConfig {
            q: vec![1.0, 0.3],
            f: vec![0.4, -0.2],
            q_dot: vec![0.1, 0.8],
            f_dot: vec![-0.3, 0.5],
        },
        BuiltinKind::Su2Quaternion => InitialConfig {
            q: vec![0.9, 0.2, -0.3, 0.1],
            f: vec![0.3, -0.4, 0.2, 0.5],
            q_dot: vec![0.1, 0.5, -0.2, 0.3],
            f_dot: vec![-0.2, 0.3, 0.4, -0.1],
        },
    }
}

fn metric_v_matrix(kind: BuiltinKind, p: &BuiltinParameters) -> Result<Mat> {
    let (_, nv) = kind.dims();
    match &p.metric_v {
        None => Ok(Mat::identity(nv, nv)),
        Some(rows) => {
            if rows.len() != nv || rows.iter().any(|r| r.len() != nv) {
                return Err(LprError::Config(format!(
                    "parameters.metric_v must be {nv}x{nv}"
                )));
            }
            let m = Mat::from_fn(nv, nv, |i, j| rows[i][j]);
            if max_abs(&(&m - m.transpose())) > 0.0 {
                return Err(LprError::Config("parameters.metric_v is not symmetric".into()));
            }
            if m.clone().cholesky().is_none() {
                return Err(LprError::Config(
                    "parameters.metric_v is not positive definite".into(),
                ));
            }
            Ok(m)
        }
    }
}

/// Builds a built-in system without running the load checks.
pub fn builtin_with(kind: BuiltinKind, p: &BuiltinParameters) -> Result<MechanicalSystem> {
    let gv = metric_v_matrix(kind, p)?;
    let (action, gauge, potential): (Arc<dyn GroupAction>, Arc<dyn GaugeSurface>, Arc<dyn Potential>) =
        match kind {
            BuiltinKind::So2Planar => (
                Arc::new(So2PlanarAction::new(p.metric_conformal, gv)),
                Arc::new(So2Gauge {
                    curvature: p.gauge_curvature,
                }),
                Arc::new(PlanarCoupling { kappa: p.kappa }),
            ),
            BuiltinKind::Su2Quaternion => (
                Arc::new(Su2QuaternionAction::new(p.metric_conformal, gv)),
                Arc::new(Su2Gauge {
                    curvature: p.gauge_curvature,
                }),
                Arc::new(QuaternionCoupling { kappa: p.kappa }),
            ),
        };
    Ok(MechanicalSystem {
        name: kind.name().to_string(),
        action,
        gauge,
        potential,
    })
}

/// A built-in system with default parameters.
pub fn builtin(kind: BuiltinKind) -> Result<MechanicalSystem> {
    builtin_with(kind, &BuiltinParameters::default())
}

/// One load-time check and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub checks: Vec<LoadCheck>,
    /// `s` in `[K_α, K_β] = s c^γ_αβ K_γ`, found by finite differences.
    pub killing_bracket_sign: i8,
}

const LOAD_PROBES: usize = 8;
const LOAD_SEED: u64 = 0x5eed;

/// Killing-field bracket `[K_α, K_β]^A = K^D_α ∂_D K^A_β - K^D_β ∂_D K^A_α`.
pub fn killing_bracket(action: &dyn GroupAction, q: &Vector, alpha: usize, beta: usize) -> Result<Vector> {
    let k = action.killing_p(q)?;
    let dk = action.killing_p_partials(q)?;
    let mut out = Vector::zeros(action.dim_p());
    for (d, dkd) in dk.iter().enumerate() {
        out += dkd.column(beta) * k[(d, alpha)] - dkd.column(alpha) * k[(d, beta)];
    }
    Ok(out)
}

/// Runs the load-time invariance checks on probe points.
pub fn check_system(sys: &MechanicalSystem) -> Result<LoadReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(LOAD_SEED);
    let action = &*sys.action;
    let group = action.group();
    let (np, _, ng) = sys.dims();
    let c = group.structure_constants();
    let mut iso_p = 0.0_f64;
    let mut iso_v = 0.0_f64;
    let mut hom = 0.0_f64;
    let mut pot = 0.0_f64;
    let mut transversality = 0.0_f64;
    let mut bracket = [0.0_f64; 2];

    for _ in 0..LOAD_PROBES {
        let q = sys.random_ambient_q(&mut rng);
        let f = sys.random_f(&mut rng);
        let g1 = sys.random_group_element(&mut rng);
        let g2 = sys.random_group_element(&mut rng);
        ensure_finite_potential(&*sys.potential, &q, &f)?;

        let qg = action.act_p(&q, &g1)?;
        let jac = action.act_p_jacobian(&q, &g1)?;
        let pulled = jac.transpose() * action.metric_p(&qg) * &jac;
        iso_p = iso_p.max(max_abs(&(pulled - action.metric_p(&q))));
        let dbar = action.rep_inv(&g1)?;
        let gv = action.metric_v();
        iso_v = iso_v.max(max_abs(&(dbar.transpose() * gv * &dbar - gv)));

        if let Ok(g12) = group.multiply(&g1, &g2) {
            let lhs = action.rep_inv(&g12)?;
            let rhs = action.rep_inv(&g2)? * action.rep_inv(&g1)?;
            hom = hom.max(max_abs(&(lhs - rhs)));
        }

        let v0 = sys.potential.value(&q, &f);
        let v1 = sys.potential.value(&qg, &(&dbar * &f));
        pot = pot.max((v1 - v0).abs() / v0.abs().max(1.0));

        let b = crate::gauge::to_bundle(sys, &q, &f, None)?;
        let fp = faddeev_popov(sys, &b.q_star)?;
        transversality = transversality.max(condition_number(&fp));

        let k = action.killing_p(&q)?;
        for a in 0..ng {
            for bb in 0..ng {
                let br = killing_bracket(action, &q, a, bb)?;
                let mut ck = Vector::zeros(np);
                for gm in 0..ng {
                    ck += k.column(gm) * c.get(gm, a, bb);
                }
                bracket[0] = bracket[0].max((&br - &ck).amax());
                bracket[1] = bracket[1].max((&br + &ck).amax());
            }
        }
    }

    let checks = vec![
        LoadCheck { name: "isometry of G_AB".into(), residual: iso_p, tolerance: 1e-10 },
        LoadCheck { name: "isometry of G_mn".into(), residual: iso_v, tolerance: 1e-12 },
        LoadCheck { name: "representation homomorphism".into(), residual: hom, tolerance: 1e-12 },
        LoadCheck { name: "potential invariance".into(), residual: pot, tolerance: 1e-10 },
        LoadCheck {
            name: "slice transversality (condition of Faddeev-Popov matrix)".into(),
            residual: transversality,
            tolerance: CONDITION_LIMIT,
        },
    ];
    for check in &checks {
        if !(check.residual <= check.tolerance) {
            return Err(LprError::InvarianceViolation {
                check: check.name.clone(),
                residual: check.residual,
                tolerance: check.tolerance,
            });
        }
    }
    let killing_bracket_sign = if bracket[0] <= 1e-8 {
        1
    } else if bracket[1] <= 1e-8 {
        -1
    } else {
        return Err(LprError::Representation(format!(
            "Killing brackets match neither +c nor -c (residuals {:.3e}, {:.3e})",
            bracket[0], bracket[1]
        )));
    };
    Ok(LoadReport {
        checks,
        killing_bracket_sign,
    })
}

/// Builds the configured system and runs the load checks.
pub fn load_system(config: &SystemConfig) -> Result<(MechanicalSystem, LoadReport)> {
    let mut sys = builtin_with(config.system, &config.parameters)?;
    if let Some(pc) = &config.potential {
        let (np, nv) = config.system.dims();
        let mut params = pc.parameters.clone();
        params.entry("kappa".to_string()).or_insert(config.parameters.kappa);
        sys.potential = Arc::new(ExprPotential::parse(&pc.expression, np, nv, &params)?);
    }
    let report = check_system(&sys)?;
    Ok((sys, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_pass_load_checks() {
        for kind in BuiltinKind::ALL {
            let (_, report) = load_system(&SystemConfig::builtin(kind)).unwrap();
            assert_eq!(report.killing_bracket_sign, 1);
        }
    }

    #[test]
    fn non_invariant_potential_rejected() {
        let src = "system = \"so2_planar\"\n[potential]\nexpression = \"q1\"\n";
        let cfg = SystemConfig::from_toml(src).unwrap();
        match load_system(&cfg) {
            Err(LprError::InvarianceViolation { check, .. }) => assert_eq!(check, "potential invariance"),
            other => panic!("expected invariance violation, got {other:?}"),
        }
    }

    #[test]
    fn invariant_expression_accepted() {
        let src = r#"
system = "su2_quaternion"
[parameters]
kappa = 0.5
[potential]
expression = "0.5*(f1^2+f2^2+f3^2+f4^2) + kappa*(q1*f1 - q2*f2 - q3*f3 - q4*f4) + lam*(q1^2+q2^2+q3^2+q4^2)^2"
parameters = { lam = 0.1 }
"#;
        let cfg = SystemConfig::from_toml(src).unwrap();
        assert!(load_system(&cfg).is_ok());
    }

    #[test]
    fn non_invariant_fiber_metric_rejected() {
        let mut cfg = SystemConfig::builtin(BuiltinKind::So2Planar);
        cfg.parameters.metric_v = Some(vec![vec![2.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            load_system(&cfg),
            Err(LprError::InvarianceViolation { .. })
        ));
    }

    #[test]
    fn unknown_keys_and_systems_rejected() {
        assert!(SystemConfig::from_toml("system = \"so3\"").is_err());
        assert!(SystemConfig::from_toml("system = \"so2_planar\"\nfoo = 1").is_err());
    }

    #[test]
    fn config_round_trips() {
        let mut cfg = SystemConfig::builtin(BuiltinKind::Su2Quaternion);
        cfg.parameters.gauge_curvature = 0.25;
        cfg.potential = Some(PotentialConfig {
            expression: "f1^2".into(),
            parameters: BTreeMap::new(),
        });
        let text = cfg.to_toml().unwrap();
        assert_eq!(SystemConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn su2_faddeev_popov_determinant_is_r_cubed() {
        let sys = builtin(BuiltinKind::Su2Quaternion).unwrap();
        for r in [0.5, 1.0, 2.0] {
            let q = Vector::from_vec(vec![r, 0.0, 0.0, 0.0]);
            let det = faddeev_popov(&sys, &q).unwrap().determinant();
            assert!((det - r * r * r).abs() < 1e-14);
        }
    }
}
