//! The Chaplygin sphere: an axisymmetric ball with centre of mass at its
//! geometric centre rolling without slipping on a plane.
//!
//! Chart `(phi, theta, psi, x, y)` with Euler angles in the x-convention;
//! frame `(Z1, Y2, Y3)` with `Z1 = d/dphi` the gauge generator.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{assemble_mg, body_angular_velocity, levi_civita, poisson_vector};
use crate::brackets::PhaseState;
use crate::error::{Error, Result};
use crate::gauge::GaugeGenerator;
use crate::geometry::{ChartDomain, MechanicalSystem, MetricField, Potential, VectorField};
use crate::Real;

/// Potential energies compatible with the SE(2) symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChaplyginPotential {
    None,
    /// `V = strength * gamma_3`.
    UniformGravityLike { strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaplyginParams {
    pub i1: f64,
    pub i3: f64,
    pub m: f64,
    pub radius: f64,
    pub potential: ChaplyginPotential,
    pub theta_min: f64,
}

impl Default for ChaplyginParams {
    fn default() -> Self {
        Self { i1: 2.0, i3: 1.0, m: 1.0, radius: 1.0, potential: ChaplyginPotential::None, theta_min: 1e-3 }
    }
}

impl ChaplyginParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("I1", self.i1), ("I3", self.i3), ("m", self.m), ("R", self.radius)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("chaplygin.{name} must be positive, got {v}")));
            }
        }
        if !(self.theta_min > 0.0 && self.theta_min < 0.5) {
            return Err(Error::InvalidParams("theta_min must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    fn mr2(&self) -> f64 {
        self.m * self.radius * self.radius
    }

    /// `K = I1 m R^2 sin^2 + I3 m R^2 cos^2 + I1 I3`.
    pub fn k_theta<T: Real>(&self, theta: T) -> T {
        let (s, c) = theta.sin_cos();
        let mr2 = T::c(self.mr2());
        T::c(self.i1) * mr2 * s * s + T::c(self.i3) * mr2 * c * c + T::c(self.i1 * self.i3)
    }

    /// Closed-form inverse Gram matrix of the frame `(Z1, Y2, Y3)`.
    pub fn gram_inv_closed_form<T: Real>(&self, theta: T) -> DMatrix<T> {
        let (s, c) = theta.sin_cos();
        let (i1, i3, mr2) = (T::c(self.i1), T::c(self.i3), T::c(self.mr2()));
        let k = self.k_theta(theta) * s * s;
        let mut g = DMatrix::zeros(3, 3);
        g[(0, 0)] = (i3 + mr2 * s * s) / k;
        g[(0, 2)] = -i3 * c / k;
        g[(2, 0)] = g[(0, 2)];
        g[(1, 1)] = T::one() / (i1 + mr2);
        g[(2, 2)] = (i1 * s * s + i3 * c * c) / k;
        g
    }

    fn potential_value<T: Real>(&self, gamma3: T) -> T {
        match self.potential {
            ChaplyginPotential::None => T::zero(),
            ChaplyginPotential::UniformGravityLike { strength } => T::c(strength) * gamma3,
        }
    }

    fn potential_gradient_gamma<T: Real>(&self) -> Vector3<T> {
        match self.potential {
            ChaplyginPotential::None => Vector3::zeros(),
            ChaplyginPotential::UniformGravityLike { strength } => Vector3::new(T::zero(), T::zero(), T::c(strength)),
        }
    }
}

/// The Chaplygin sphere as a [`MechanicalSystem`].
pub fn build_chaplygin<T: Real>(params: &ChaplyginParams) -> Result<MechanicalSystem<T>> {
    params.validate()?;
    let p = *params;
    let (i1, i3, m, rr) = (T::c(p.i1), T::c(p.i3), T::c(p.m), T::c(p.radius));
    let metric = MetricField::with_derivatives(
        move |q: &DVector<T>| {
            let (s, c) = q[1].sin_cos();
            let mut g = DMatrix::zeros(5, 5);
            g[(0, 0)] = i1 * s * s + i3 * c * c;
            g[(1, 1)] = i1;
            g[(2, 2)] = i3;
            g[(3, 3)] = m;
            g[(4, 4)] = m;
            g[(0, 2)] = i3 * c;
            g[(2, 0)] = i3 * c;
            g
        },
        move |q: &DVector<T>| {
            let (s, c) = q[1].sin_cos();
            let mut out = vec![DMatrix::zeros(5, 5); 5];
            out[1][(0, 0)] = T::c(2.0) * (i1 - i3) * s * c;
            out[1][(0, 2)] = -i3 * s;
            out[1][(2, 0)] = -i3 * s;
            out
        },
    );
    let z1 = VectorField::coordinate(5, 0);
    let y2 = VectorField::with_jacobian(
        move |q: &DVector<T>| {
            let (sp, cp) = q[0].sin_cos();
            DVector::from_vec(vec![T::zero(), T::one(), T::zero(), rr * sp, -rr * cp])
        },
        move |q: &DVector<T>| {
            let (sp, cp) = q[0].sin_cos();
            let mut j = DMatrix::zeros(5, 5);
            j[(3, 0)] = rr * cp;
            j[(4, 0)] = rr * sp;
            j
        },
    );
    let y3 = VectorField::with_jacobian(
        move |q: &DVector<T>| {
            let (sp, cp) = q[0].sin_cos();
            let (st, _) = q[1].sin_cos();
            DVector::from_vec(vec![T::zero(), T::zero(), T::one(), -rr * cp * st, -rr * sp * st])
        },
        move |q: &DVector<T>| {
            let (sp, cp) = q[0].sin_cos();
            let (st, ct) = q[1].sin_cos();
            let mut j = DMatrix::zeros(5, 5);
            j[(3, 0)] = rr * sp * st;
            j[(3, 1)] = -rr * cp * ct;
            j[(4, 0)] = -rr * cp * st;
            j[(4, 1)] = -rr * sp * ct;
            j
        },
    );
    let rotation = VectorField::with_jacobian(
        |q: &DVector<T>| DVector::from_vec(vec![T::one(), T::zero(), T::zero(), -q[4], q[3]]),
        |_| {
            let mut j = DMatrix::zeros(5, 5);
            j[(3, 4)] = -T::one();
            j[(4, 3)] = T::one();
            j
        },
    );
    let potential = Potential::with_gradient(
        move |q: &DVector<T>| p.potential_value(q[1].cos()),
        move |q: &DVector<T>| {
            let dv: Vector3<T> = p.potential_gradient_gamma();
            let mut g = DVector::zeros(5);
            g[1] = -dv[2] * q[1].sin();
            g
        },
    );
    Ok(MechanicalSystem::new("chaplygin", 5, ChartDomain::euler(1, T::c(p.theta_min)), metric, vec![z1, y2, y3])
        .with_potential(potential)
        .with_complement(vec![VectorField::coordinate(5, 3), VectorField::coordinate(5, 4)])
        .with_orbit_generators(vec![rotation, VectorField::coordinate(5, 3), VectorField::coordinate(5, 4)])
        .with_gauge_generators(vec![GaugeGenerator::frame_field("Z1", 0, 3, 5)]))
}

/// Reduced variables on `D*/SE(2)`: angular momentum about the contact point
/// and the Poisson vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedStateMG<T: Real> {
    pub m: Vector3<T>,
    pub gamma: Vector3<T>,
}

impl<T: Real> ReducedStateMG<T> {
    pub fn to_vector(&self) -> DVector<T> {
        DVector::from_vec(vec![self.m[0], self.m[1], self.m[2], self.gamma[0], self.gamma[1], self.gamma[2]])
    }

    pub fn from_slice(x: &[T]) -> Self {
        Self { m: Vector3::new(x[0], x[1], x[2]), gamma: Vector3::new(x[3], x[4], x[5]) }
    }
}

/// `(M, gamma)` from a state of the Chaplygin sphere.
pub fn reduce_to_mg<T: Real>(params: &ChaplyginParams, state: &PhaseState<T>) -> Result<ReducedStateMG<T>> {
    let q = &state.q;
    let th = q[1];
    let tmin = T::c(params.theta_min);
    if !(th > tmin && th < T::pi() - tmin) {
        return Err(Error::OutOfChart { point: crate::error::to_vec(q) });
    }
    let (st, ct) = th.sin_cos();
    let (sp, cp) = q[2].sin_cos();
    let pi = &state.pi;
    let m1 = (sp * pi[0] + cp * st * pi[1] - sp * ct * pi[2]) / st;
    let m2 = (cp * pi[0] - sp * st * pi[1] - cp * ct * pi[2]) / st;
    Ok(ReducedStateMG { m: Vector3::new(m1, m2, pi[2]), gamma: poisson_vector(th, q[2]) })
}

/// `Omega = A M + m R^2 (A M, gamma) / (1 - m R^2 (A gamma, gamma)) A gamma`, `A = (II + m R^2)^{-1}`.
pub fn omega_from_mg<T: Real>(params: &ChaplyginParams, s: &ReducedStateMG<T>) -> Result<Vector3<T>> {
    let mr2 = T::c(params.mr2());
    let a = Vector3::new(
        T::one() / (T::c(params.i1) + mr2),
        T::one() / (T::c(params.i1) + mr2),
        T::one() / (T::c(params.i3) + mr2),
    );
    let am = a.component_mul(&s.m);
    let ag = a.component_mul(&s.gamma);
    let den = T::one() - mr2 * ag.dot(&s.gamma);
    if den < T::c(1e-12) {
        return Err(Error::DegenerateDenominator { value: den.as_f64() });
    }
    Ok(am + ag * (mr2 * am.dot(&s.gamma) / den))
}

/// Closed-form reduced bracket on `(M, gamma)`:
/// `{M_i, M_j} = -eps_ijk (M_k - m R^2 (Omega, gamma) gamma_k)`, `{M_i, gamma_j} = -eps_ijk gamma_k`.
pub fn reduced_bracket_mg<T: Real>(params: &ChaplyginParams, s: &ReducedStateMG<T>) -> Result<DMatrix<T>> {
    let om = omega_from_mg(params, s)?;
    let w = s.m - s.gamma * (T::c(params.mr2()) * om.dot(&s.gamma));
    let mm = Matrix3::from_fn(|i, j| {
        let mut v = T::zero();
        for k in 0..3 {
            v -= T::c(f64::from(levi_civita(i, j, k))) * w[k];
        }
        v
    });
    Ok(assemble_mg(&mm, &s.gamma))
}

/// Reduced energy `1/2 (M, Omega) + V(gamma)`.
pub fn hamiltonian_mg<T: Real>(params: &ChaplyginParams, s: &ReducedStateMG<T>) -> Result<T> {
    let om = omega_from_mg(params, s)?;
    Ok(T::c(0.5) * s.m.dot(&om) + params.potential_value(s.gamma[2]))
}

/// Gradient of [`hamiltonian_mg`]: `(Omega, dH/dgamma)`.
pub fn hamiltonian_mg_gradient<T: Real>(params: &ChaplyginParams, s: &ReducedStateMG<T>) -> Result<DVector<T>> {
    let om = omega_from_mg(params, s)?;
    let mr2 = T::c(params.mr2());
    // dH/dgamma of 1/2 (M, Omega(M, gamma)) with Omega = A M + c(gamma) A gamma.
    let a = Vector3::new(
        T::one() / (T::c(params.i1) + mr2),
        T::one() / (T::c(params.i1) + mr2),
        T::one() / (T::c(params.i3) + mr2),
    );
    let am = a.component_mul(&s.m);
    let ag = a.component_mul(&s.gamma);
    let den = T::one() - mr2 * ag.dot(&s.gamma);
    let u = am.dot(&s.gamma);
    let dh_dgamma = am * (mr2 * u / den) + ag * (mr2 * mr2 * u * u / (den * den));
    let dv: Vector3<T> = params.potential_gradient_gamma();
    let g = dh_dgamma + dv;
    Ok(DVector::from_vec(vec![om[0], om[1], om[2], g[0], g[1], g[2]]))
}

/// Reduced vector field `P dH` on `(M, gamma)`.
pub fn reduced_vector_field_mg<T: Real>(params: &ChaplyginParams, s: &ReducedStateMG<T>) -> Result<DVector<T>> {
    Ok(reduced_bracket_mg(params, s)? * hamiltonian_mg_gradient(params, s)?)
}

/// Angular velocity from the quasi-velocities at a state.
pub fn omega_from_state<T: Real>(system: &MechanicalSystem<T>, state: &PhaseState<T>) -> Result<Vector3<T>> {
    let u = crate::gauge::velocity(system, state)?;
    Ok(body_angular_velocity(state.q[1], state.q[2], u[0], u[1], u[2]))
}

/// Bundled Chaplygin sphere: parameters and the assembled system.
#[derive(Debug, Clone)]
pub struct ChaplyginSphere<T: Real> {
    pub params: ChaplyginParams,
    pub system: MechanicalSystem<T>,
}

impl<T: Real> ChaplyginSphere<T> {
    pub fn new(params: ChaplyginParams) -> Result<Self> {
        Ok(Self { params, system: build_chaplygin(&params)? })
    }

    pub fn reduce(&self, state: &PhaseState<T>) -> Result<ReducedStateMG<T>> {
        reduce_to_mg(&self.params, state)
    }

    /// Random state with `theta` at least `margin` away from the poles.
    pub fn sample_state(&self, rng: &mut impl Rng, margin: f64) -> PhaseState<T> {
        let tau = std::f64::consts::TAU;
        let pi = std::f64::consts::PI;
        crate::brackets::random_state(
            rng,
            &[(0.0, tau), (margin, pi - margin), (0.0, tau), (-2.0, 2.0), (-2.0, 2.0)],
            &[(-1.0, 1.0); 3],
        )
    }
}
