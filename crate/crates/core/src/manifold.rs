//! Abstractions shared by the phase modules: the evolution drift `Au + f(u)`
//! and an `m`-parameter manifold of fixed points with adjoint null vectors.

use crate::grid::Field;

/// Drift `Au + f(u)` split into its linear and nonlinear parts, with the
/// Fréchet derivatives the phase equations need.
pub trait Dynamics: Sync {
    /// `A u`.
    fn linear(&self, u: &Field) -> Field;
    /// `A* w`.
    fn linear_adjoint(&self, w: &Field) -> Field;
    /// `f(u)`.
    fn nonlinear(&self, u: &Field) -> Field;
    /// `Df(u) w`.
    fn d_nonlinear(&self, u: &Field, w: &Field) -> Field;
    /// `Df(u)* w`.
    fn d_nonlinear_adjoint(&self, u: &Field, w: &Field) -> Field;
    /// `D^2 f(u) [w1, w2]`.
    fn d2_nonlinear(&self, u: &Field, w1: &Field, w2: &Field) -> Field;

    fn drift(&self, u: &Field) -> Field {
        self.linear(u).add(&self.nonlinear(u))
    }

    /// `L_u w = A w + Df(u) w`.
    fn linearized(&self, u: &Field, w: &Field) -> Field {
        self.linear(w).add(&self.d_nonlinear(u, w))
    }

    /// `L_u* w`.
    fn linearized_adjoint(&self, u: &Field, w: &Field) -> Field {
        self.linear_adjoint(w).add(&self.d_nonlinear_adjoint(u, w))
    }
}

/// Everything evaluated at one manifold point `alpha`.
///
/// Multi-index fields are stored flat: `phi_dd[i*m + j]`, `psi_d[i*m + j]` is
/// `psi^i_{,j}` and `psi_dd[(i*m + j)*m + k]` is `psi^i_{,jk}`.
#[derive(Clone, Debug)]
pub struct Frame {
    pub dim: usize,
    pub phi: Field,
    pub phi_d: Vec<Field>,
    pub phi_dd: Vec<Field>,
    pub psi: Vec<Field>,
    pub psi_d: Vec<Field>,
    pub psi_dd: Vec<Field>,
}

impl Frame {
    pub fn psi_d(&self, i: usize, j: usize) -> &Field {
        &self.psi_d[i * self.dim + j]
    }

    pub fn psi_dd(&self, i: usize, j: usize, k: usize) -> &Field {
        &self.psi_dd[(i * self.dim + j) * self.dim + k]
    }

    /// `P u = sum_i <psi^i, u> phi_{,i}`.
    pub fn project(&self, u: &Field) -> Field {
        let mut out = Field::zeros(u.grid());
        for i in 0..self.dim {
            out = out.axpy(self.psi[i].dot(u), &self.phi_d[i]);
        }
        out
    }

    /// `(I - P) u`.
    pub fn complement(&self, u: &Field) -> Field {
        u.sub(&self.project(u))
    }
}

/// A smooth `m`-parameter family of fixed points `phi_alpha` with adjoint
/// null vectors, parametrized over the torus.
pub trait PhaseManifold: Sync {
    fn dim(&self) -> usize;
    fn frame(&self, alpha: &[f64]) -> Frame;
    fn point(&self, alpha: &[f64]) -> Field {
        self.frame(alpha).phi
    }
}
