//! Linear first integrals `p_Z`, the skew criterion for gauge momenta and
//! the drift of `p_Z` along the nonholonomic flow.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::brackets::PhaseState;
use crate::error::{Error, Result};
use crate::geometry::{
    lie_bracket, lie_derivative_metric, CoeffFn, MatrixFn, MechanicalSystem, VectorField,
};
use crate::Real;

/// Generator `Z = Z^a(q) X_a` of the linear function `p_Z = Z^a pi_a`.
#[derive(Clone)]
pub struct GaugeGenerator<T> {
    pub name: String,
    coeffs: Arc<CoeffFn<T>>,
    coeffs_jacobian: Option<Arc<MatrixFn<T>>>,
    pub tangent_to_orbit: bool,
}

impl<T: Real> GaugeGenerator<T> {
    pub fn new(
        name: impl Into<String>,
        coeffs: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        tangent_to_orbit: bool,
    ) -> Self {
        Self { name: name.into(), coeffs: Arc::new(coeffs), coeffs_jacobian: None, tangent_to_orbit }
    }

    /// Attaches the `r x n` jacobian of the frame coefficients.
    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.coeffs_jacobian = Some(Arc::new(jac));
        self
    }

    /// The frame field `X_index` itself.
    pub fn frame_field(name: impl Into<String>, index: usize, r: usize, n: usize) -> Self {
        Self::new(
            name,
            move |_| {
                let mut v = DVector::zeros(r);
                v[index] = T::one();
                v
            },
            true,
        )
        .with_jacobian(move |_| DMatrix::zeros(r, n))
    }

    pub fn coeffs(&self, q: &DVector<T>) -> DVector<T> {
        (self.coeffs)(q)
    }

    /// `c1 Z1 + c2 Z2` with constant coefficients.
    pub fn combine(c1: T, z1: &Self, c2: T, z2: &Self) -> Self {
        let (a, b) = (z1.coeffs.clone(), z2.coeffs.clone());
        let mut out = Self::new(
            format!("{}*{}+{}*{}", c1.as_f64(), z1.name, c2.as_f64(), z2.name),
            move |q| a(q) * c1 + b(q) * c2,
            z1.tangent_to_orbit && z2.tangent_to_orbit,
        );
        if let (Some(ja), Some(jb)) = (z1.coeffs_jacobian.clone(), z2.coeffs_jacobian.clone()) {
            out = out.with_jacobian(move |q| ja(q) * c1 + jb(q) * c2);
        }
        out
    }

    /// `Z` as a vector field on the configuration chart.
    pub fn to_vector_field(&self, system: &MechanicalSystem<T>) -> VectorField<T> {
        let frame = system.frame.clone();
        let coeffs = self.coeffs.clone();
        let value = {
            let frame = frame.clone();
            let coeffs = coeffs.clone();
            move |q: &DVector<T>| {
                let c = coeffs(q);
                let mut z = DVector::zeros(q.len());
                for (a, x) in frame.iter().enumerate() {
                    z += x.eval(q) * c[a];
                }
                z
            }
        };
        let analytic = self.coeffs_jacobian.is_some() && frame.iter().all(|x| x.has_jacobian());
        if !analytic {
            return VectorField::new(value);
        }
        let cj = self.coeffs_jacobian.clone().expect("checked");
        let domain = system.domain.clone();
        VectorField::with_jacobian(value, move |q| {
            let c = coeffs(q);
            let dc = cj(q);
            let n = q.len();
            let mut j = DMatrix::zeros(n, n);
            for (a, x) in frame.iter().enumerate() {
                let jx = x.jacobian(q, &domain).expect("analytic jacobian");
                j += jx * c[a] + x.eval(q) * dc.row(a);
            }
            j
        })
    }
}

impl<T> fmt::Debug for GaugeGenerator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaugeGenerator")
            .field("name", &self.name)
            .field("tangent_to_orbit", &self.tangent_to_orbit)
            .finish_non_exhaustive()
    }
}

/// `p_Z(q, pi) = Z^a(q) pi_a`.
pub fn momentum_value<T: Real>(
    system: &MechanicalSystem<T>,
    z: &GaugeGenerator<T>,
    state: &PhaseState<T>,
) -> Result<T> {
    system.check_point(&state.q)?;
    Ok(z.coeffs(&state.q).dot(&state.pi))
}

/// Outcome of [`skew_test`].
#[derive(Debug, Clone, Serialize)]
pub struct SkewReport {
    pub generator: String,
    pub n_samples: usize,
    pub max_residual: f64,
    /// Largest ratio of residual to its scaled tolerance.
    pub max_scaled: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `C_{Z a b} = <[Z, X_a], X_b>` on the system frame.
pub fn skew_matrix<T: Real>(
    system: &MechanicalSystem<T>,
    z: &VectorField<T>,
    q: &DVector<T>,
) -> Result<DMatrix<T>> {
    let g = system.metric.eval(q);
    let rho = system.rho(q);
    let gx = &g * &rho;
    let mut c = DMatrix::zeros(system.r, system.r);
    for (a, xa) in system.frame.iter().enumerate() {
        let br = lie_bracket(z, xa, q, &system.domain)?;
        for b in 0..system.r {
            c[(a, b)] = br.dot(&gx.column(b));
        }
    }
    Ok(c)
}

/// Skew criterion: `C_{Zab} + C_{Zba}` must vanish for a gauge momentum.
///
/// The tolerance at each sample is `tol * max(1, max |g_ij|)`.
pub fn skew_test<T: Real>(
    system: &MechanicalSystem<T>,
    z: &GaugeGenerator<T>,
    samples: &[DVector<T>],
    tol: f64,
) -> Result<SkewReport> {
    if !z.tangent_to_orbit {
        return Err(Error::NotOrbitTangent);
    }
    let zf = z.to_vector_field(system);
    let mut max_residual = 0.0f64;
    let mut max_scaled = 0.0f64;
    for q in samples {
        system.check_point(q)?;
        let c = skew_matrix(system, &zf, q)?;
        let res = (&c + c.transpose()).amax().as_f64();
        let scale = system.metric.eval(q).amax().as_f64().max(1.0);
        max_residual = max_residual.max(res);
        max_scaled = max_scaled.max(res / (tol * scale));
    }
    Ok(SkewReport {
        generator: z.name.clone(),
        n_samples: samples.len(),
        max_residual,
        max_scaled,
        tolerance: tol,
        pass: max_scaled <= 1.0,
    })
}

/// Distance of `Z(q)` from the span of the declared orbit generators,
/// relative to `max(1, |Z(q)|)`.
pub fn orbit_tangency_residual<T: Real>(
    system: &MechanicalSystem<T>,
    z: &VectorField<T>,
    q: &DVector<T>,
) -> Result<T> {
    system.check_point(q)?;
    let zq = z.eval(q);
    if system.orbit_generators.is_empty() {
        return Ok(zq.norm());
    }
    let cols: Vec<_> = system.orbit_generators.iter().map(|x| x.eval(q)).collect();
    let a = DMatrix::from_columns(&cols);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&zq, T::c(1e-12)).map_err(|_| Error::DegenerateFrame {
        condition: f64::INFINITY,
        bound: 0.0,
    })?;
    Ok((a * coef - &zq).norm() / zq.norm().max(T::one()))
}

/// `max |dV . Y(q)|` over the declared orbit generators `Y`.
pub fn potential_invariance_residual<T: Real>(system: &MechanicalSystem<T>, q: &DVector<T>) -> Result<T> {
    system.check_point(q)?;
    let dv = system.potential.gradient(q, &system.domain)?;
    Ok(system.orbit_generators.iter().fold(T::zero(), |m, y| m.max(dv.dot(&y.eval(q)).abs())))
}

/// Velocity `u = rho G^{-1} pi` reconstructed from the momenta.
pub fn velocity<T: Real>(system: &MechanicalSystem<T>, state: &PhaseState<T>) -> Result<DVector<T>> {
    system.check_point(&state.q)?;
    let rho = system.rho(&state.q);
    let gram = rho.transpose() * system.metric.eval(&state.q) * &rho;
    let v = gram
        .cholesky()
        .ok_or_else(|| Error::MetricNotPositive { point: crate::error::to_vec(&state.q) })?
        .solve(&state.pi);
    Ok(rho * v)
}

/// Time derivative of `p_Z` along the nonholonomic flow:
/// `1/2 (L_Z g)(u, u) - Z[V]`.
pub fn momentum_drift<T: Real>(
    system: &MechanicalSystem<T>,
    z: &GaugeGenerator<T>,
    state: &PhaseState<T>,
) -> Result<T> {
    let u = velocity(system, state)?;
    let zf = z.to_vector_field(system);
    let lg = lie_derivative_metric(system, &zf, &state.q)?;
    let dv = system.potential.gradient(&state.q, &system.domain)?;
    Ok(T::c(0.5) * u.dot(&(lg * &u)) - dv.dot(&zf.eval(&state.q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorConfig};
    use crate::systems::chaplygin::{build_chaplygin, ChaplyginParams, ChaplyginPotential};
    use crate::systems::revolution::{RevolutionParams, SolidOfRevolution, SolutionChoice};
    use crate::systems::profile::ShapeProfile;

    fn chaplygin() -> MechanicalSystem<f64> {
        build_chaplygin(&ChaplyginParams::default()).unwrap()
    }

    fn state(q: [f64; 5], pi: [f64; 3]) -> PhaseState<f64> {
        PhaseState::from_slices(&q, &pi)
    }

    #[test]
    fn frame_field_momentum_is_component() {
        let sys = chaplygin();
        let s = state([0.1, 1.0, 0.2, 0.0, 0.0], [0.3, -0.7, 1.1]);
        for a in 0..3 {
            let z = GaugeGenerator::frame_field("X", a, 3, 5);
            assert_eq!(momentum_value(&sys, &z, &s).unwrap(), s.pi[a]);
        }
        let z1 = &sys.gauge_generators[0];
        assert_eq!(momentum_value(&sys, z1, &state([0.0, 1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn chaplygin_z1_passes_skew_test() {
        let sys = chaplygin();
        let samples: Vec<DVector<f64>> =
            [0.2, 0.9, 1.6, 2.8].iter().map(|&th| DVector::from_vec(vec![0.3, th, -0.4, 1.0, 2.0])).collect();
        let rep = skew_test(&sys, &sys.gauge_generators[0], &samples, 1e-8).unwrap();
        assert!(rep.pass, "{rep:?}");
        let c = skew_matrix(&sys, &sys.frame[0], &samples[1]).unwrap();
        assert!((c[(1, 2)] + c[(2, 1)]).abs() < 1e-12);
        assert!(c[(1, 2)].abs() > 0.1);
    }

    #[test]
    fn non_tangent_generator_rejected() {
        let sys = chaplygin();
        let z = GaugeGenerator::new("Y2", |_| DVector::from_vec(vec![0.0, 1.0, 0.0]), false);
        assert!(matches!(skew_test(&sys, &z, &[], 1e-8), Err(Error::NotOrbitTangent)));
        let q = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(orbit_tangency_residual(&sys, &z.to_vector_field(&sys), &q).unwrap() > 0.1);
        let z1 = sys.gauge_generators[0].to_vector_field(&sys);
        assert!(orbit_tangency_residual(&sys, &z1, &q).unwrap() < 1e-9);
    }

    #[test]
    fn chaplygin_z1_has_no_drift() {
        let params = ChaplyginParams { potential: ChaplyginPotential::UniformGravityLike { strength: 2.0 }, ..Default::default() };
        let sys = build_chaplygin(&params).unwrap();
        for (th, pi) in [(0.4, [1.0, -0.5, 0.3]), (2.0, [0.2, 0.9, -1.3])] {
            let d = momentum_drift(&sys, &sys.gauge_generators[0], &state([0.2, th, 1.1, 0.0, 0.0], pi)).unwrap();
            assert!(d.abs() < 1e-9);
        }
    }

    #[test]
    fn zero_momentum_has_no_drift() {
        let sys = chaplygin();
        let w = GaugeGenerator::frame_field("Y3", 2, 3, 5);
        let d = momentum_drift(&sys, &w, &state([0.2, 1.0, 0.5, 0.0, 0.0], [0.0; 3])).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn bundled_potentials_are_invariant() {
        let params = ChaplyginParams { potential: ChaplyginPotential::UniformGravityLike { strength: 3.0 }, ..Default::default() };
        let sys = build_chaplygin(&params).unwrap();
        let body = SolidOfRevolution::<f64>::new(
            ShapeProfile::OffsetSphere { radius: 1.0, offset: 0.3 },
            RevolutionParams { potential: crate::systems::revolution::RevolutionPotential::Gravity { g0: 9.81 }, ..Default::default() },
            SolutionChoice::Auto,
        )
        .unwrap();
        for th in [0.3, 1.4, 2.7] {
            let q = DVector::from_vec(vec![0.7, th, -0.2, 1.0, 0.5]);
            assert!(potential_invariance_residual(&sys, &q).unwrap() < 1e-9);
            assert!(potential_invariance_residual(&body.system, &q).unwrap() < 1e-9);
        }
        let tilted = sys.clone().with_potential(crate::geometry::Potential::new(|q: &DVector<f64>| q[3]));
        let q = DVector::from_vec(vec![0.7, 1.0, -0.2, 1.0, 0.5]);
        assert!(potential_invariance_residual(&tilted, &q).unwrap() > 0.5);
    }

    #[test]
    fn combined_generator_is_linear() {
        let sys = chaplygin();
        let a = GaugeGenerator::frame_field("X1", 0, 3, 5);
        let b = GaugeGenerator::frame_field("X3", 2, 3, 5);
        let c = GaugeGenerator::combine(2.0, &a, -0.5, &b);
        let s = state([0.0, 1.0, 0.0, 0.0, 0.0], [1.0, 4.0, 3.0]);
        assert_eq!(momentum_value(&sys, &c, &s).unwrap(), 0.5);
    }

    #[test]
    fn drift_matches_trajectory_slope() {
        // p_W1 is not conserved for a non-spherical body; its rate along the flow
        // must equal momentum_drift.
        let body = SolidOfRevolution::<f64>::new(
            ShapeProfile::Ellipsoid { a: 1.0, c: 0.6 },
            RevolutionParams::default(),
            SolutionChoice::Auto,
        )
        .unwrap();
        let sys = &body.system;
        let w1 = GaugeGenerator::frame_field("W1", 1, 3, 5);
        let s0 = state([0.0, 1.2, 0.3, 0.0, 0.0], [0.5, 0.3, 0.2]);
        let h = 1e-3;
        let cfg = IntegratorConfig { sample_stride: 1, ..IntegratorConfig::rk4(h, 0.5) };
        let traj = integrate(sys, &s0, &cfg, &[]).unwrap();
        let mut largest = 0.0f64;
        for i in (1..traj.states.len() - 1).step_by(50) {
            let p = |j: usize| momentum_value(sys, &w1, &traj.states[j]).unwrap();
            let slope = (p(i + 1) - p(i - 1)) / (2.0 * h);
            let d = momentum_drift(sys, &w1, &traj.states[i]).unwrap();
            assert!((slope - d).abs() < 1e-6, "t = {}: {slope} vs {d}", traj.times[i]);
            largest = largest.max(d.abs());
        }
        assert!(largest > 1e-3);
    }
}
