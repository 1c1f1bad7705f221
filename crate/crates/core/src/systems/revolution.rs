//! A convex solid of revolution rolling without slipping on a plane.
//!
//! Chart `(phi, theta, psi, x, y)`. The equivariant frame `W1, W2, Y3`
//! spans `D`; the gauge generator `Z1 = g W1 + k W2` comes from the linear
//! ODE `(g, k)' = L(theta) (g, k)`, and the system frame is `(Z1, W1, Y3)`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::profile::{ShapeAt, ShapeProfile};
use super::{assemble_mg, body_angular_velocity, levi_civita, poisson_vector};
use crate::brackets::{set_alternating, PhaseState, ThreeForm};
use crate::error::{Error, Result};
use crate::gauge::{velocity, GaugeGenerator};
use crate::geometry::{ChartDomain, MechanicalSystem, MetricField, Potential, VectorField};
use crate::tensor::Tensor3;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevolutionPotential {
    None,
    /// `V = m g0 z(theta)`.
    Gravity { g0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevolutionParams {
    pub i1: f64,
    pub i3: f64,
    pub m: f64,
    pub potential: RevolutionPotential,
    pub theta_min: f64,
}

impl Default for RevolutionParams {
    fn default() -> Self {
        Self { i1: 2.0, i3: 1.0, m: 1.0, potential: RevolutionPotential::None, theta_min: 1e-3 }
    }
}

impl RevolutionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("I1", self.i1), ("I3", self.i3), ("m", self.m)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("revolution.{name} must be positive, got {v}")));
            }
        }
        if let RevolutionPotential::Gravity { g0 } = self.potential {
            if !g0.is_finite() {
                return Err(Error::InvalidParams("revolution.g0 must be finite".into()));
            }
        }
        if !(self.theta_min > 0.0 && self.theta_min < 0.5) {
            return Err(Error::InvalidParams("theta_min must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    /// `K = I1 I3 + m I1 a1^2 + m I3 f2^2`.
    pub fn k_of<T: Real>(&self, sh: &ShapeAt<T>) -> T {
        let m = T::c(self.m);
        T::c(self.i1 * self.i3) + m * T::c(self.i1) * sh.a1 * sh.a1 + m * T::c(self.i3) * sh.f2 * sh.f2
    }

    fn potential_scale(&self) -> f64 {
        match self.potential {
            RevolutionPotential::None => 0.0,
            RevolutionPotential::Gravity { g0 } => self.m * g0,
        }
    }
}

const POLE_SIN: f64 = 1e-4;
const POLE_GAP_TOL: f64 = 1e-8;

fn l_tilde<T: Real>(sh: &ShapeAt<T>, p: &RevolutionParams, near_pole: bool) -> Matrix2<T> {
    let (m, i1, i3) = (T::c(p.m), T::c(p.i1), T::c(p.i3));
    let (s, c) = (sh.sin, sh.cos);
    // (Rm - Rp) / sin, regularized through f1' (1 - g3^2) = g3 (f1 - f2') near the poles.
    let d = if near_pole { -sh.df1 * s / c } else { (sh.rm - sh.rp) / s };
    let i3zf = i3 + m * sh.z * sh.f1;
    let l11 = m * i3 * sh.f2 * d - m * sh.a2 * sh.f1 * i3zf;
    let l12 = m * i3 * sh.f2 * c * d - m * sh.f1 * sh.a1 * i3zf;
    let l21a = -m * sh.f1 * (i1 * s * s + i3 * c * c) * d;
    let l21b = if near_pole {
        let w = c * sh.f1 - sh.f2;
        m * w * s * (m * sh.f1 * w * sh.z - i3 * sh.df1 + (i3 - i1) * sh.f1 * c)
    } else {
        m * sh.a2 / (s * s)
            * (m * sh.a1 * sh.a2 * sh.z + (sh.rm - sh.rp) * i3 * c + (i3 - i1) * sh.a1 * s * c)
    };
    let l22 = -m * c * (i1 * sh.a1 * s + i3 * sh.f2 * c) * d
        + m * sh.f1 * sh.f1 * (m * sh.z * sh.a2 + (i3 - i1) * s * c);
    Matrix2::new(l11, l12, l21a + l21b, l22)
}

fn l_eval<T: Real>(profile: &ShapeProfile, p: &RevolutionParams, theta: T, regular: bool) -> Matrix2<T> {
    let sh = profile.at(theta);
    if sh.sin.abs() <= T::c(1e-12) {
        return Matrix2::zeros();
    }
    let near = regular && sh.sin.abs() < T::c(POLE_SIN);
    l_tilde(&sh, p, near) / p.k_of(&sh)
}

/// Coefficient matrix `L(theta)` of the gauge ODE.
pub fn l_matrix<T: Real>(profile: &ShapeProfile, params: &RevolutionParams, theta: T) -> Result<Matrix2<T>> {
    let s = theta.sin().abs();
    if s < T::c(POLE_SIN) && s > T::c(1e-12) {
        let gap = profile.pole_gap();
        if gap > POLE_GAP_TOL {
            return Err(Error::ShapeSingularity {
                theta: theta.as_f64(),
                detail: format!("(Rm - Rp)/sin(theta) has no finite limit: |Rp - Rm| = {gap:.3e} at the pole"),
            });
        }
    }
    Ok(l_eval(profile, params, theta, true))
}

/// A solution `(g, k)` of the gauge ODE on `[0, 2 pi]`, interpolated by
/// quintic Hermite splines with node slopes `L x` and curvatures `(L' + L^2) x`.
#[derive(Debug, Clone)]
pub struct GaugeSolution<T: Real> {
    pub theta_grid: Vec<T>,
    pub g: Vec<T>,
    pub k: Vec<T>,
    pub dg: Vec<T>,
    pub dk: Vec<T>,
    pub d2g: Vec<T>,
    pub d2k: Vec<T>,
    pub evenness_residual: f64,
    pub periodicity_residual: f64,
}

impl<T: Real> GaugeSolution<T> {
    fn locate(&self, theta: T) -> (usize, T, T) {
        let two_pi = T::two_pi();
        let mut th = theta % two_pi;
        if th < T::zero() {
            th += two_pi;
        }
        let n = self.theta_grid.len() - 1;
        let h = two_pi / T::from_usize(n).expect("grid size");
        let i = (th / h).floor().to_usize().unwrap_or(0).min(n - 1);
        let t = (th - self.theta_grid[i]) / h;
        (i, t, h)
    }

    fn blend(&self, i: usize, h: T, w: [T; 6]) -> Vector2<T> {
        let f = |y: &[T], dy: &[T], d2y: &[T]| {
            w[0] * y[i]
                + w[1] * h * dy[i]
                + w[2] * h * h * d2y[i]
                + w[3] * y[i + 1]
                + w[4] * h * dy[i + 1]
                + w[5] * h * h * d2y[i + 1]
        };
        Vector2::new(f(&self.g, &self.dg, &self.d2g), f(&self.k, &self.dk, &self.d2k))
    }

    /// Interpolated `(g, k)`; `theta` is reduced modulo `2 pi`.
    pub fn value(&self, theta: T) -> Vector2<T> {
        let (i, t, h) = self.locate(theta);
        let c = T::c;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let w = [
            T::one() - c(10.0) * t3 + c(15.0) * t4 - c(6.0) * t5,
            t - c(6.0) * t3 + c(8.0) * t4 - c(3.0) * t5,
            c(0.5) * t2 - c(1.5) * t3 + c(1.5) * t4 - c(0.5) * t5,
            c(10.0) * t3 - c(15.0) * t4 + c(6.0) * t5,
            -c(4.0) * t3 + c(7.0) * t4 - c(3.0) * t5,
            c(0.5) * t3 - t4 + c(0.5) * t5,
        ];
        self.blend(i, h, w)
    }

    /// Derivative of the interpolant.
    pub fn derivative(&self, theta: T) -> Vector2<T> {
        let (i, t, h) = self.locate(theta);
        let c = T::c;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let w = [
            -c(30.0) * t2 + c(60.0) * t3 - c(30.0) * t4,
            T::one() - c(18.0) * t2 + c(32.0) * t3 - c(15.0) * t4,
            t - c(4.5) * t2 + c(6.0) * t3 - c(2.5) * t4,
            c(30.0) * t2 - c(60.0) * t3 + c(30.0) * t4,
            -c(12.0) * t2 + c(28.0) * t3 - c(15.0) * t4,
            c(1.5) * t2 - c(4.0) * t3 + c(2.5) * t4,
        ];
        self.blend(i, h, w) / h
    }

    /// `(g, k)` as functions of `gamma_3 = cos theta`, `theta in [0, pi]`.
    pub fn value_at_gamma3(&self, g3: T) -> Vector2<T> {
        self.value(g3.max(-T::one()).min(T::one()).acos())
    }

    pub fn max_residual(&self) -> f64 {
        self.evenness_residual.max(self.periodicity_residual)
    }
}

/// Default number of RK4 steps over `[0, 2 pi]`.
pub const GAUGE_ODE_STEPS: usize = 4000;
/// Residual above which the gauge ODE solve is rejected.
pub const FLOQUET_TOL: f64 = 1e-5;

/// Solves the gauge ODE from `(1, 0)` and `(0, 1)` at `theta = 0`.
pub fn solve_gauge_ode<T: Real>(
    profile: &ShapeProfile,
    params: &RevolutionParams,
) -> Result<(GaugeSolution<T>, GaugeSolution<T>)> {
    solve_gauge_ode_with(profile, params, GAUGE_ODE_STEPS)
}

/// [`solve_gauge_ode`] with an explicit grid size.
///
/// Evenness compares the forward solution with an independent backward
/// integration at `-theta`; periodicity compares `x(theta)` with the backward
/// solution at `theta - 2 pi`.
pub fn solve_gauge_ode_with<T: Real>(
    profile: &ShapeProfile,
    params: &RevolutionParams,
    steps: usize,
) -> Result<(GaugeSolution<T>, GaugeSolution<T>)> {
    params.validate()?;
    profile.check_params()?;
    let regular = profile.pole_gap() <= POLE_GAP_TOL;
    let l = |th: T| l_eval(profile, params, th, regular);
    let h = T::two_pi() / T::from_usize(steps).expect("steps");
    let run = |x0: Vector2<T>, sign: T| -> Vec<Vector2<T>> {
        let hs = h * sign;
        let mut out = Vec::with_capacity(steps + 1);
        let mut x = x0;
        out.push(x);
        for i in 0..steps {
            let t = hs * T::from_usize(i).expect("index");
            let half = hs * T::c(0.5);
            let k1 = l(t) * x;
            let k2 = l(t + half) * (x + k1 * half);
            let k3 = l(t + half) * (x + k2 * half);
            let k4 = l(t + hs) * (x + k3 * hs);
            x += (k1 + (k2 + k3) * T::c(2.0) + k4) * (hs / T::c(6.0));
            out.push(x);
        }
        out
    };
    let grid: Vec<T> = (0..=steps).map(|i| h * T::from_usize(i).expect("index")).collect();
    let make = |x0: Vector2<T>| -> Result<GaugeSolution<T>> {
        let fwd = run(x0, T::one());
        let bwd = run(x0, -T::one());
        let mut even = 0.0f64;
        let mut per = 0.0f64;
        for i in 0..=steps {
            let e = (fwd[i] - bwd[i]).amax().as_f64();
            let p = (fwd[i] - bwd[steps - i]).amax().as_f64();
            even = if e.is_finite() { even.max(e) } else { f64::INFINITY };
            per = if p.is_finite() { per.max(p) } else { f64::INFINITY };
        }
        if !(even <= FLOQUET_TOL && per <= FLOQUET_TOL) {
            return Err(Error::FloquetViolation { evenness: even, periodicity: per });
        }
        let slopes: Vec<Vector2<T>> = grid.iter().zip(&fwd).map(|(t, x)| l(*t) * x).collect();
        let curv: Vec<Vector2<T>> = grid
            .iter()
            .zip(&fwd)
            .map(|(t, x)| {
                let e = T::c(1e-5);
                let dl = (l(*t + e) - l(*t - e)) / (e + e);
                let lt = l(*t);
                (dl + lt * lt) * x
            })
            .collect();
        Ok(GaugeSolution {
            theta_grid: grid.clone(),
            g: fwd.iter().map(|x| x[0]).collect(),
            k: fwd.iter().map(|x| x[1]).collect(),
            dg: slopes.iter().map(|x| x[0]).collect(),
            dk: slopes.iter().map(|x| x[1]).collect(),
            d2g: curv.iter().map(|x| x[0]).collect(),
            d2k: curv.iter().map(|x| x[1]).collect(),
            evenness_residual: even,
            periodicity_residual: per,
        })
    };
    Ok((make(Vector2::new(T::one(), T::zero()))?, make(Vector2::new(T::zero(), T::one()))?))
}

/// Minimum of `|g1 k2 - g2 k1|` over the grid.
pub fn wronskian_min<T: Real>(a: &GaugeSolution<T>, b: &GaugeSolution<T>) -> f64 {
    (0..a.g.len())
        .map(|i| (a.g[i] * b.k[i] - b.g[i] * a.k[i]).abs().as_f64())
        .fold(f64::INFINITY, f64::min)
}

fn w_field<T: Real>(phi: T, a: T) -> DVector<T> {
    let (sp, cp) = phi.sin_cos();
    DVector::from_vec(vec![T::zero(), T::zero(), T::zero(), -a * cp, -a * sp])
}

/// Columns `W1, W2, Y3` at `q` and their jacobians.
fn equivariant_frame<T: Real>(profile: &ShapeProfile, q: &DVector<T>) -> ([DVector<T>; 3], [DMatrix<T>; 3]) {
    let sh = profile.at(q[1]);
    let (sp, cp) = q[0].sin_cos();
    let mut w1 = w_field(q[0], sh.a2);
    w1[0] = T::one();
    let mut w2 = w_field(q[0], sh.a1);
    w2[2] = T::one();
    let y3 = DVector::from_vec(vec![T::zero(), T::one(), T::zero(), sh.z * sp, -sh.z * cp]);
    let mut j1 = DMatrix::zeros(5, 5);
    j1[(3, 0)] = sh.a2 * sp;
    j1[(3, 1)] = -sh.da2 * cp;
    j1[(4, 0)] = -sh.a2 * cp;
    j1[(4, 1)] = -sh.da2 * sp;
    let mut j2 = DMatrix::zeros(5, 5);
    j2[(3, 0)] = sh.a1 * sp;
    j2[(3, 1)] = -sh.da1 * cp;
    j2[(4, 0)] = -sh.a1 * cp;
    j2[(4, 1)] = -sh.da1 * sp;
    let mut j3 = DMatrix::zeros(5, 5);
    j3[(3, 0)] = sh.z * cp;
    j3[(3, 1)] = sh.a2 * sp;
    j3[(4, 0)] = sh.z * sp;
    j3[(4, 1)] = -sh.a2 * cp;
    ([w1, w2, y3], [j1, j2, j3])
}

fn revolution_metric<T: Real>(profile: &ShapeProfile, params: &RevolutionParams) -> MetricField<T> {
    let (pa, pb) = (profile.clone(), profile.clone());
    let (i1, i3, m) = (T::c(params.i1), T::c(params.i3), T::c(params.m));
    MetricField::with_derivatives(
        move |q: &DVector<T>| {
            let sh = pa.at(q[1]);
            let (s, c) = (sh.sin, sh.cos);
            let mut g = DMatrix::zeros(5, 5);
            g[(0, 0)] = i1 * s * s + i3 * c * c;
            g[(1, 1)] = i1 + m * sh.a2 * sh.a2;
            g[(2, 2)] = i3;
            g[(3, 3)] = m;
            g[(4, 4)] = m;
            g[(0, 2)] = i3 * c;
            g[(2, 0)] = i3 * c;
            g
        },
        move |q: &DVector<T>| {
            let sh = pb.at(q[1]);
            let (s, c) = (sh.sin, sh.cos);
            let mut out = vec![DMatrix::zeros(5, 5); 5];
            out[1][(0, 0)] = T::c(2.0) * (i1 - i3) * s * c;
            out[1][(1, 1)] = T::c(2.0) * m * sh.a2 * sh.da2;
            out[1][(0, 2)] = -i3 * s;
            out[1][(2, 0)] = -i3 * s;
            out
        },
    )
}

fn revolution_potential<T: Real>(profile: &ShapeProfile, params: &RevolutionParams) -> Potential<T> {
    let scale = params.potential_scale();
    if scale == 0.0 {
        return Potential::zero(5);
    }
    let (pa, pb) = (profile.clone(), profile.clone());
    Potential::with_gradient(
        move |q: &DVector<T>| T::c(scale) * pa.at(q[1]).z,
        move |q: &DVector<T>| {
            let mut g = DVector::zeros(5);
            g[1] = T::c(scale) * pb.at(q[1]).a2;
            g
        },
    )
}

fn orbit_generators<T: Real>() -> Vec<VectorField<T>> {
    let rotation = VectorField::with_jacobian(
        |q: &DVector<T>| DVector::from_vec(vec![T::one(), T::zero(), T::zero(), -q[4], q[3]]),
        |_| {
            let mut j = DMatrix::zeros(5, 5);
            j[(3, 4)] = -T::one();
            j[(4, 3)] = T::one();
            j
        },
    );
    vec![rotation, VectorField::coordinate(5, 2), VectorField::coordinate(5, 3), VectorField::coordinate(5, 4)]
}

/// Equivariant frame `(W1, W2, Y3)` without an adapted gauge generator.
pub fn build_revolution_equivariant<T: Real>(
    profile: &ShapeProfile,
    params: &RevolutionParams,
) -> Result<MechanicalSystem<T>> {
    params.validate()?;
    profile.check_params()?;
    let fields: Vec<VectorField<T>> = (0..3)
        .map(|idx| {
            let (pa, pb) = (profile.clone(), profile.clone());
            VectorField::with_jacobian(
                move |q: &DVector<T>| equivariant_frame(&pa, q).0[idx].clone(),
                move |q: &DVector<T>| equivariant_frame(&pb, q).1[idx].clone(),
            )
        })
        .collect();
    Ok(MechanicalSystem::new(
        "revolution-equivariant",
        5,
        ChartDomain::euler(1, T::c(params.theta_min)),
        revolution_metric(profile, params),
        fields,
    )
    .with_potential(revolution_potential(profile, params))
    .with_complement(vec![VectorField::coordinate(5, 3), VectorField::coordinate(5, 4)])
    .with_orbit_generators(orbit_generators()))
}

/// Sampled angles in the chart where `|k|` falls below `rel_tol * max |k|`.
pub fn degenerate_thetas<T: Real>(sol: &GaugeSolution<T>, theta_min: f64, rel_tol: f64) -> Vec<f64> {
    let kmax = sol.k.iter().fold(0.0f64, |m, k| m.max(k.abs().as_f64()));
    let pi = std::f64::consts::PI;
    sol.theta_grid
        .iter()
        .zip(&sol.k)
        .filter(|(t, k)| {
            let t = t.as_f64();
            t > theta_min && t < pi - theta_min && k.abs().as_f64() <= rel_tol * kmax
        })
        .map(|(t, _)| t.as_f64())
        .collect()
}

/// The system with frame `(Z1 = g W1 + k W2, Y2 = W1, Y3)` and `W = span(d/dx, d/dy)`.
pub fn build_revolution<T: Real>(
    profile: &ShapeProfile,
    params: &RevolutionParams,
    solution: &GaugeSolution<T>,
) -> Result<MechanicalSystem<T>> {
    params.validate()?;
    profile.check_params()?;
    let bad = degenerate_thetas(solution, params.theta_min, 1e-6);
    if !bad.is_empty() {
        return Err(Error::AdaptedBasisDegenerate { thetas: bad });
    }
    let base = build_revolution_equivariant::<T>(profile, params)?;
    let (pa, pb) = (profile.clone(), profile.clone());
    let (sa, sb) = (solution.clone(), solution.clone());
    let z1 = VectorField::with_jacobian(
        move |q: &DVector<T>| {
            let (f, _) = equivariant_frame(&pa, q);
            let gk = sa.value(q[1]);
            &f[0] * gk[0] + &f[1] * gk[1]
        },
        move |q: &DVector<T>| {
            let (f, j) = equivariant_frame(&pb, q);
            let gk = sb.value(q[1]);
            let dgk = sb.derivative(q[1]);
            let mut out = &j[0] * gk[0] + &j[1] * gk[1];
            for i in 0..5 {
                out[(i, 1)] += f[0][i] * dgk[0] + f[1][i] * dgk[1];
            }
            out
        },
    );
    let frame = vec![z1, base.frame[0].clone(), base.frame[2].clone()];
    Ok(MechanicalSystem { name: format!("revolution/{}", profile.name()), frame, ..base }
        .with_gauge_generators(vec![GaugeGenerator::frame_field("Z1", 0, 3, 5)]))
}

/// `Lambda = -m z Rp sin(theta) dphi ^ dtheta ^ dpsi` in coordinates.
pub fn lambda_closed_form<T: Real>(profile: &ShapeProfile, params: &RevolutionParams) -> ThreeForm<T> {
    let p = profile.clone();
    let m = T::c(params.m);
    ThreeForm::from_coordinate_form("revolution-closed-form", 3, move |q| {
        let sh = p.at(q[1]);
        let mut l = Tensor3::zeros(5);
        set_alternating(&mut l, 0, 1, 2, -m * sh.z * sh.rp * sh.sin);
        l
    })
}

/// S^1-invariant coordinates `(sigma_1, ..., sigma_5)` on `D*/SE(2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaState<T: Real> {
    pub sigma: [T; 5],
}

impl<T: Real> SigmaState<T> {
    pub fn from_mg(m: &Vector3<T>, g: &Vector3<T>) -> Self {
        Self {
            sigma: [
                g[2],
                g[0] * m[1] - g[1] * m[0],
                g[0] * m[0] + g[1] * m[1],
                m[2],
                m[0] * m[0] + m[1] * m[1],
            ],
        }
    }

    /// `sigma_2^2 + sigma_3^2 - sigma_5 (1 - sigma_1^2)`.
    pub fn variety_residual(&self) -> T {
        let s = &self.sigma;
        s[1] * s[1] + s[2] * s[2] - s[4] * (T::one() - s[0] * s[0])
    }

    /// Gradients of the five coordinates with respect to `(M, gamma)`.
    pub fn gradients(m: &Vector3<T>, g: &Vector3<T>) -> [DVector<T>; 5] {
        let z = T::zero();
        let two = T::c(2.0);
        [
            DVector::from_vec(vec![z, z, z, z, z, T::one()]),
            DVector::from_vec(vec![-g[1], g[0], z, m[1], -m[0], z]),
            DVector::from_vec(vec![g[0], g[1], z, m[0], m[1], z]),
            DVector::from_vec(vec![z, z, T::one(), z, z, z]),
            DVector::from_vec(vec![two * m[0], two * m[1], z, z, z, z]),
        ]
    }
}

/// `(M, gamma, sigma)` on the reduced space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevolutionReduced<T: Real> {
    pub m: Vector3<T>,
    pub gamma: Vector3<T>,
    pub sigma: SigmaState<T>,
}

/// Contact vector `(f1 g1, f1 g2, f2)` for a Poisson vector.
pub fn contact_vector<T: Real>(profile: &ShapeProfile, g: &Vector3<T>) -> Vector3<T> {
    let p = profile.values(g[2]);
    Vector3::new(p.f1 * g[0], p.f1 * g[1], p.f2)
}

fn inertia<T: Real>(params: &RevolutionParams) -> Vector3<T> {
    Vector3::new(T::c(params.i1), T::c(params.i1), T::c(params.i3))
}

/// Reduction `D* -> (M, gamma, sigma)` through the angular velocity of the body.
pub fn reduce_revolution<T: Real>(
    profile: &ShapeProfile,
    params: &RevolutionParams,
    system: &MechanicalSystem<T>,
    state: &PhaseState<T>,
) -> Result<RevolutionReduced<T>> {
    let u = velocity(system, state)?;
    let (th, psi) = (state.q[1], state.q[2]);
    let om = body_angular_velocity(th, psi, u[0], u[1], u[2]);
    let gamma = poisson_vector(th, psi);
    let cv = contact_vector(profile, &gamma);
    let m = inertia::<T>(params).component_mul(&om) + cv.cross(&om.cross(&cv)) * T::c(params.m);
    Ok(RevolutionReduced { m, gamma, sigma: SigmaState::from_mg(&m, &gamma) })
}

/// `Omega(M, gamma) = A M + m (A M, rho) / (1 - m (A rho, rho)) A rho`, `A = (II + m |rho|^2)^{-1}`.
pub fn omega_revolution<T: Real>(
    profile: &ShapeProfile,
    params: &RevolutionParams,
    m: &Vector3<T>,
    g: &Vector3<T>,
) -> Result<Vector3<T>> {
    let mass = T::c(params.m);
    let cv = contact_vector(profile, g);
    let r2 = cv.norm_squared();
    let a = inertia::<T>(params).map(|i| T::one() / (i + mass * r2));
    let am = a.component_mul(m);
    let ar = a.component_mul(&cv);
    let den = T::one() - mass * ar.dot(&cv);
    if den < T::c(1e-12) {
        return Err(Error::DegenerateDenominator { value: den.as_f64() });
    }
    Ok(am + ar * (mass * am.dot(&cv) / den))
}

/// Reduced bracket on `(M, gamma)`:
///
/// `{M_i, M_j} = eps_ijk (-M_k + m Rm (Omega, gamma) rho_k
///               + m (Rp - Rm) z / K (m (M, rho) rho_k + T_k))`
///
/// with `T_k = I3 (M1 g1 + M2 g2) g_k / (1 - g3^2)` for `k = 1, 2` and `T_3 = I1 M3`.
pub fn reduced_bracket_revolution<T: Real>(
    profile: &ShapeProfile,
    params: &RevolutionParams,
    m: &Vector3<T>,
    g: &Vector3<T>,
) -> Result<DMatrix<T>> {
    let mass = T::c(params.m);
    let (i1, i3) = (T::c(params.i1), T::c(params.i3));
    let pv = profile.values(g[2]);
    let cv = Vector3::new(pv.f1 * g[0], pv.f1 * g[1], pv.f2);
    let om = omega_revolution(profile, params, m, g)?;
    let (rp, rm) = (pv.f1, pv.df2);
    let s2 = T::one() - g[2] * g[2];
    let z = s2 * pv.f1 + g[2] * pv.f2;
    let k = T::c(params.i1 * params.i3) + mass * i1 * pv.f1 * pv.f1 * s2 + mass * i3 * pv.f2 * pv.f2;
    let mg12 = m[0] * g[0] + m[1] * g[1];
    let tk = if s2 < T::c(1e-8) {
        let gap = profile.pole_gap();
        if gap > POLE_GAP_TOL {
            return Err(Error::PoleRegularizationFailure { gap });
        }
        // (Rp - Rm) / (1 - g3^2) = f1' / g3 on consistent profiles.
        let c = pv.df1 / g[2] * i3 * mg12;
        Vector3::new(c * g[0], c * g[1], (rp - rm) * i1 * m[2])
    } else {
        let c = (rp - rm) * i3 * mg12 / s2;
        Vector3::new(c * g[0], c * g[1], (rp - rm) * i1 * m[2])
    };
    let coef = mass * z / k;
    let mrho = m.dot(&cv);
    let w = -m + cv * (mass * rm * om.dot(g)) + (cv * (mass * (rp - rm) * mrho) + tk) * coef;
    let mm = Matrix3::from_fn(|i, j| {
        let mut v = T::zero();
        for kk in 0..3 {
            v += T::c(f64::from(levi_civita(i, j, kk))) * w[kk];
        }
        v
    });
    Ok(assemble_mg(&mm, g))
}

/// `H(sigma) = 1/2 (s5/K1 + s4^2/K3) + m/2 (s3 f1 K3 + s4 f2 K1)^2 / (K K1 K3) + V(s1)`.
pub fn hamiltonian_sigma<T: Real>(profile: &ShapeProfile, params: &RevolutionParams, s: &SigmaState<T>) -> T {
    let [s1, _, s3, s4, s5] = s.sigma;
    let mass = T::c(params.m);
    let pv = profile.values(s1);
    let s2 = T::one() - s1 * s1;
    let r2 = s2 * pv.f1 * pv.f1 + pv.f2 * pv.f2;
    let k1 = T::c(params.i1) + mass * r2;
    let k3 = T::c(params.i3) + mass * r2;
    let k = T::c(params.i1 * params.i3)
        + mass * T::c(params.i1) * pv.f1 * pv.f1 * s2
        + mass * T::c(params.i3) * pv.f2 * pv.f2;
    let num = s3 * pv.f1 * k3 + s4 * pv.f2 * k1;
    let z = s2 * pv.f1 + s1 * pv.f2;
    T::c(0.5) * (s5 / k1 + s4 * s4 / k3)
        + mass * T::c(0.5) * num * num / (k * k1 * k3)
        + T::c(params.potential_scale()) * z
}

/// Which gauge ODE solution supplies the frame generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionChoice {
    /// The solution whose `|k|` stays farthest from zero in the chart.
    Auto,
    First,
    Second,
}

/// Bundled solid of revolution: profile, parameters, both gauge solutions and the system.
#[derive(Debug, Clone)]
pub struct SolidOfRevolution<T: Real> {
    pub profile: ShapeProfile,
    pub params: RevolutionParams,
    pub solutions: [GaugeSolution<T>; 2],
    /// Index into `solutions` of the generator used in the frame.
    pub frame_solution: usize,
    pub system: MechanicalSystem<T>,
}

fn min_abs_k<T: Real>(sol: &GaugeSolution<T>, theta_min: f64) -> f64 {
    let pi = std::f64::consts::PI;
    sol.theta_grid
        .iter()
        .zip(&sol.k)
        .filter(|(t, _)| t.as_f64() > theta_min && t.as_f64() < pi - theta_min)
        .map(|(_, k)| k.abs().as_f64())
        .fold(f64::INFINITY, f64::min)
}

impl<T: Real> SolidOfRevolution<T> {
    pub fn new(profile: ShapeProfile, params: RevolutionParams, choice: SolutionChoice) -> Result<Self> {
        profile.validate()?;
        let (s1, s2) = solve_gauge_ode::<T>(&profile, &params)?;
        let idx = match choice {
            SolutionChoice::First => 0,
            SolutionChoice::Second => 1,
            SolutionChoice::Auto => {
                if min_abs_k(&s2, params.theta_min) >= min_abs_k(&s1, params.theta_min) {
                    1
                } else {
                    0
                }
            }
        };
        let solutions = [s1, s2];
        let system = build_revolution(&profile, &params, &solutions[idx])?;
        Ok(Self { profile, params, solutions, frame_solution: idx, system })
    }

    pub fn reduce(&self, state: &PhaseState<T>) -> Result<RevolutionReduced<T>> {
        reduce_revolution(&self.profile, &self.params, &self.system, state)
    }

    /// `(p_W1, p_W2)` from the frame momenta.
    pub fn equivariant_momenta(&self, state: &PhaseState<T>) -> Result<Vector2<T>> {
        self.system.check_point(&state.q)?;
        let gk = self.solutions[self.frame_solution].value(state.q[1]);
        let pw1 = state.pi[1];
        Ok(Vector2::new(pw1, (state.pi[0] - gk[0] * pw1) / gk[1]))
    }

    /// Casimirs `C_j = g_j p_W1 + k_j p_W2` for both gauge solutions.
    pub fn casimirs(&self, state: &PhaseState<T>) -> Result<[T; 2]> {
        let p = self.equivariant_momenta(state)?;
        let th = state.q[1];
        let c = |s: &GaugeSolution<T>| {
            let gk = s.value(th);
            gk[0] * p[0] + gk[1] * p[1]
        };
        Ok([c(&self.solutions[0]), c(&self.solutions[1])])
    }

    /// `C_j(sigma) = g_j(s1) s3 + (g_j(s1) s1 + k_j(s1)) s4`.
    pub fn casimirs_sigma(&self, s: &SigmaState<T>) -> [T; 2] {
        let c = |sol: &GaugeSolution<T>| {
            let gk = sol.value_at_gamma3(s.sigma[0]);
            gk[0] * s.sigma[2] + (gk[0] * s.sigma[0] + gk[1]) * s.sigma[3]
        };
        [c(&self.solutions[0]), c(&self.solutions[1])]
    }

    pub fn reduced_bracket(&self, m: &Vector3<T>, g: &Vector3<T>) -> Result<DMatrix<T>> {
        reduced_bracket_revolution(&self.profile, &self.params, m, g)
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

    /// Reduced energy `1/2 (M, Omega) + V`.
    pub fn hamiltonian_mg(&self, m: &Vector3<T>, g: &Vector3<T>) -> Result<T> {
        let om = omega_revolution(&self.profile, &self.params, m, g)?;
        let s2 = T::one() - g[2] * g[2];
        let pv = self.profile.values(g[2]);
        let z = s2 * pv.f1 + g[2] * pv.f2;
        Ok(T::c(0.5) * m.dot(&om) + T::c(self.params.potential_scale()) * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::skew_test;
    use std::f64::consts::PI;

    fn ellipsoid() -> ShapeProfile {
        ShapeProfile::Ellipsoid { a: 1.0, c: 0.6 }
    }

    fn body() -> SolidOfRevolution<f64> {
        SolidOfRevolution::new(ellipsoid(), RevolutionParams::default(), SolutionChoice::Auto).unwrap()
    }

    #[test]
    fn coefficient_matrix_is_odd() {
        let p = RevolutionParams::default();
        for prof in [ellipsoid(), ShapeProfile::OffsetSphere { radius: 1.0, offset: 0.3 }] {
            for th in [0.3, 1.1, 2.0, 2.9] {
                let a = l_matrix::<f64>(&prof, &p, th).unwrap();
                let b = l_matrix::<f64>(&prof, &p, -th).unwrap();
                assert!((a + b).amax() < 1e-12);
            }
            for n in 0..3 {
                assert_eq!(l_matrix::<f64>(&prof, &p, f64::from(n) * PI).unwrap().amax(), 0.0);
            }
        }
    }

    #[test]
    fn homogeneous_ball_keeps_first_solution() {
        let p = RevolutionParams { i1: 0.4, i3: 0.4, ..Default::default() };
        let prof = ShapeProfile::Sphere { radius: 1.0 };
        for th in [0.2, 1.0, 2.5] {
            let l = l_matrix::<f64>(&prof, &p, th).unwrap();
            assert!(l[(0, 0)].abs() < 1e-15 && l[(1, 0)].abs() < 1e-15);
        }
    }

    #[test]
    fn pole_gap_profile_is_singular() {
        let prof = ShapeProfile::Polynomial { f1: vec![1.0, 0.5], f2: vec![0.1, 1.0] };
        assert!(matches!(
            l_matrix::<f64>(&prof, &RevolutionParams::default(), 1e-5),
            Err(Error::ShapeSingularity { .. })
        ));
    }

    #[test]
    fn sigma_coordinates_lie_on_variety() {
        let m = Vector3::<f64>::new(0.3, -1.2, 0.7);
        let g = Vector3::new(0.48, 0.6, 0.64);
        let s = SigmaState::from_mg(&m, &g);
        assert!(s.variety_residual().abs() < 1e-15);
        assert_eq!(s.sigma[0], 0.64);
        let grads = SigmaState::gradients(&m, &g);
        let h = 1e-6;
        for (i, grad) in grads.iter().enumerate() {
            for j in 0..6 {
                let shift = |d: f64| {
                    let mut x = [m[0], m[1], m[2], g[0], g[1], g[2]];
                    x[j] += d;
                    SigmaState::from_mg(&Vector3::new(x[0], x[1], x[2]), &Vector3::new(x[3], x[4], x[5])).sigma[i]
                };
                assert!(((shift(h) - shift(-h)) / (2.0 * h) - grad[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn equivariant_momenta_are_physical() {
        let b = body();
        for (q, pi) in [([0.1, 1.2, 0.3, 0.0, 0.0], [0.5, 0.3, 0.2]), ([2.0, 0.5, -1.0, 1.0, 2.0], [-0.4, 0.8, 0.1])] {
            let s = PhaseState::from_slices(&q, &pi);
            let p = b.equivariant_momenta(&s).unwrap();
            let r = b.reduce(&s).unwrap();
            assert!((p[0] - r.m.dot(&r.gamma)).abs() < 1e-12);
            assert!((p[1] - r.m[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_bracket_with_vertical_axis() {
        let b = body();
        let p = b.reduced_bracket(&Vector3::new(0.2, 0.1, -0.3), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((p[(0, 4)] + 1.0).abs() < 1e-15);
        assert!((p[(1, 3)] - 1.0).abs() < 1e-15);
        assert!((&p + p.transpose()).amax() < 1e-15);
    }

    #[test]
    fn energy_without_spin_is_kinetic_over_k1() {
        let prof = ellipsoid();
        let params = RevolutionParams::default();
        let s = SigmaState { sigma: [0.3, 0.0, 0.0, 0.0, 1.7] };
        let v = prof.values::<f64>(0.3);
        let k1 = params.i1 + params.m * ((1.0 - 0.09) * v.f1 * v.f1 + v.f2 * v.f2);
        assert!((hamiltonian_sigma(&prof, &params, &s) - 1.7 / (2.0 * k1)).abs() < 1e-15);
    }

    #[test]
    fn sigma_energy_matches_reduced_energy() {
        let params = RevolutionParams { potential: RevolutionPotential::Gravity { g0: 2.0 }, ..Default::default() };
        let b = SolidOfRevolution::<f64>::new(ellipsoid(), params, SolutionChoice::Auto).unwrap();
        let m = Vector3::new(0.3, -0.5, 0.4);
        let g = Vector3::new(0.6, 0.0, 0.8);
        let h = b.hamiltonian_mg(&m, &g).unwrap();
        assert!((hamiltonian_sigma(&b.profile, &b.params, &SigmaState::from_mg(&m, &g)) - h).abs() < 1e-12);
    }

    #[test]
    fn only_the_adapted_generator_is_skew() {
        let b = body();
        let samples: Vec<DVector<f64>> =
            [0.4, 1.0, 2.2].iter().map(|&th| DVector::from_vec(vec![0.3, th, -0.4, 0.5, 0.1])).collect();
        let z1 = &b.system.gauge_generators[0];
        assert!(skew_test(&b.system, z1, &samples, 1e-6).unwrap().pass);
        let w1 = GaugeGenerator::frame_field("W1", 1, 3, 5);
        assert!(!skew_test(&b.system, &w1, &samples, 1e-6).unwrap().pass);
    }

    #[test]
    fn solutions_are_independent() {
        let b = body();
        assert!(wronskian_min(&b.solutions[0], &b.solutions[1]) > 1e-3);
        let s = &b.solutions[0];
        let dv = s.derivative(0.7);
        let fd = (s.value(0.7 + 1e-6) - s.value(0.7 - 1e-6)) / 2e-6;
        assert!((dv - fd).amax() < 1e-7);
        let l = l_matrix::<f64>(&b.profile, &b.params, 0.7).unwrap();
        assert!((dv - l * s.value(0.7)).amax() < 1e-7);
    }

    #[test]
    fn bad_parameters_rejected() {
        let p = RevolutionParams { m: 0.0, ..Default::default() };
        assert!(matches!(SolidOfRevolution::<f64>::new(ellipsoid(), p, SolutionChoice::Auto), Err(Error::InvalidParams(_))));
    }
}
