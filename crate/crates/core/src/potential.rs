//! Group-invariant potentials `V(Q, f)`.

use std::collections::BTreeMap;
use std::fmt::Debug;

use crate::action::DERIVATIVE_FD_STEP;
use crate::error::{LprError, Result};
use crate::expr::{Binding, Expr};
use crate::linalg::Vector;

pub trait Potential: Send + Sync + Debug {
    fn value(&self, q: &Vector, f: &Vector) -> f64;

    /// `(∂V/∂Q, ∂V/∂f)`; central differences unless overridden.
    fn gradient(&self, q: &Vector, f: &Vector) -> (Vector, Vector) {
        let h = DERIVATIVE_FD_STEP;
        let gq = Vector::from_fn(q.len(), |i, _| {
            let (mut p, mut m) = (q.clone(), q.clone());
            p[i] += h;
            m[i] -= h;
            (self.value(&p, f) - self.value(&m, f)) / (2.0 * h)
        });
        let gf = Vector::from_fn(f.len(), |i, _| {
            let (mut p, mut m) = (f.clone(), f.clone());
            p[i] += h;
            m[i] -= h;
            (self.value(q, &p) - self.value(q, &m)) / (2.0 * h)
        });
        (gq, gf)
    }

    fn describe(&self) -> String;
}

/// `½|f|² + κ Q·f`.
#[derive(Debug, Clone)]
pub struct PlanarCoupling {
    pub kappa: f64,
}

impl Potential for PlanarCoupling {
    fn value(&self, q: &Vector, f: &Vector) -> f64 {
        0.5 * f.norm_squared() + self.kappa * q.dot(f)
    }

    fn gradient(&self, q: &Vector, f: &Vector) -> (Vector, Vector) {
        (f * self.kappa, f + q * self.kappa)
    }

    fn describe(&self) -> String {
        format!("0.5*|f|^2 + {}*Q.f", self.kappa)
    }
}

/// `½|f|² + κ Re(Q f)` with the quaternion product.
#[derive(Debug, Clone)]
pub struct QuaternionCoupling {
    pub kappa: f64,
}

fn quaternion_real_part_gradient(x: &Vector) -> Vector {
    Vector::from_vec(vec![x[0], -x[1], -x[2], -x[3]])
}

impl Potential for QuaternionCoupling {
    fn value(&self, q: &Vector, f: &Vector) -> f64 {
        0.5 * f.norm_squared() + self.kappa * q.dot(&quaternion_real_part_gradient(f))
    }

    fn gradient(&self, q: &Vector, f: &Vector) -> (Vector, Vector) {
        (
            quaternion_real_part_gradient(f) * self.kappa,
            f + quaternion_real_part_gradient(q) * self.kappa,
        )
    }

    fn describe(&self) -> String {
        format!("0.5*|f|^2 + {}*Re(Q f)", self.kappa)
    }
}

/// A potential given as an expression in `q1..qN`, `f1..fM` and named
/// parameters.
#[derive(Debug, Clone)]
pub struct ExprPotential {
    source: String,
    expr: Expr,
    np: usize,
}

impl ExprPotential {
    pub fn parse(
        source: &str,
        np: usize,
        nv: usize,
        parameters: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let resolve = |name: &str| -> Option<Binding> {
            let index = |prefix: char, n: usize| -> Option<usize> {
                let rest = name.strip_prefix(prefix)?;
                let i: usize = rest.parse().ok()?;
                (1..=n).contains(&i).then(|| i - 1)
            };
            if let Some(i) = index('q', np) {
                return Some(Binding::Slot(i));
            }
            if let Some(i) = index('f', nv) {
                return Some(Binding::Slot(np + i));
            }
            if name == "pi" {
                return Some(Binding::Constant(std::f64::consts::PI));
            }
            parameters.get(name).map(|&v| Binding::Constant(v))
        };
        let expr = Expr::parse(source, resolve)?;
        Ok(ExprPotential {
            source: source.to_string(),
            expr,
            np,
        })
    }
}

impl Potential for ExprPotential {
    fn value(&self, q: &Vector, f: &Vector) -> f64 {
        let mut vars = Vec::with_capacity(q.len() + f.len());
        vars.extend_from_slice(q.as_slice());
        vars.extend_from_slice(f.as_slice());
        debug_assert_eq!(q.len(), self.np);
        self.expr.eval(&vars)
    }

    fn describe(&self) -> String {
        self.source.clone()
    }
}

/// Rejects potentials that are not finite at a probe point.
pub fn ensure_finite_potential(p: &dyn Potential, q: &Vector, f: &Vector) -> Result<()> {
    let v = p.value(q, f);
    if v.is_finite() {
        Ok(())
    } else {
        Err(LprError::NonFinite(format!("potential {}", p.describe())))
    }
}
