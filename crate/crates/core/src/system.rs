//! A mechanical system: action, gauge surface and potential.

use std::sync::Arc;

use rand::Rng;

use crate::action::GroupAction;
use crate::gauge::{to_bundle, BundlePoint, GaugeSurface};
use crate::linalg::Vector;
use crate::potential::Potential;

#[derive(Debug, Clone)]
pub struct MechanicalSystem {
    pub name: String,
    pub action: Arc<dyn GroupAction>,
    pub gauge: Arc<dyn GaugeSurface>,
    pub potential: Arc<dyn Potential>,
}

impl MechanicalSystem {
    /// `(N_P, N_V, N_G)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.action.dim_p(), self.action.dim_v(), self.action.dim_g())
    }

    /// `N_P + N_V`, the size of the combined horizontal index.
    pub fn dim_base(&self) -> usize {
        self.action.dim_p() + self.action.dim_v()
    }

    /// Uniform point in a box with `|Q|` bounded away from the origin.
    pub fn random_ambient_q<R: Rng>(&self, rng: &mut R) -> Vector {
        let np = self.action.dim_p();
        loop {
            let q = Vector::from_fn(np, |_, _| rng.random_range(-1.5..1.5));
            if q.norm() > 0.6 {
                return q;
            }
        }
    }

    pub fn random_f<R: Rng>(&self, rng: &mut R) -> Vector {
        Vector::from_fn(self.action.dim_v(), |_, _| rng.random_range(-1.0..1.0))
    }

    /// Group coordinates well inside the chart.
    pub fn random_group_element<R: Rng>(&self, rng: &mut R) -> Vector {
        let group = self.action.group();
        loop {
            let a = Vector::from_fn(group.dim(), |_, _| rng.random_range(-1.2..1.2));
            if group.contains(&a) {
                return a;
            }
        }
    }

    /// Random `(Q*, f̃, a)` with `Q*` on the slice.
    pub fn random_bundle_point<R: Rng>(&self, rng: &mut R) -> BundlePoint {
        loop {
            let q = self.random_ambient_q(rng);
            let f = self.random_f(rng);
            if let Ok(mut b) = to_bundle(self, &q, &f, None) {
                b.a = self.random_group_element(rng);
                return b;
            }
        }
    }
}
