//! Equations of motion on `D*`, fixed and adaptive Runge-Kutta integration
//! and conservation monitors.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brackets::PhaseState;
use crate::error::{to_vec, Error, Result};
use crate::gauge::{momentum_value, GaugeGenerator};
use crate::geometry::{frame_core, gram_derivatives, MechanicalSystem};
use crate::Real;

/// Constrained Hamiltonian `1/2 G^{ab} pi_a pi_b + V(q)`.
pub fn hamiltonian<T: Real>(system: &MechanicalSystem<T>, state: &PhaseState<T>) -> Result<T> {
    system.check_point(&state.q)?;
    let gram = system.gram(&state.q);
    let v = gram
        .cholesky()
        .ok_or_else(|| Error::MetricNotPositive { point: to_vec(&state.q) })?
        .solve(&state.pi);
    Ok(T::c(0.5) * state.pi.dot(&v) + system.potential.eval(&state.q))
}

/// Gradient of the constrained Hamiltonian in `(q, pi)`.
pub fn hamiltonian_gradient<T: Real>(
    system: &MechanicalSystem<T>,
    state: &PhaseState<T>,
) -> Result<DVector<T>> {
    let core = frame_core(system, &state.q)?;
    let (n, r) = (system.n, system.r);
    let v = &core.gram_inv * &state.pi;
    let dg = system.metric.derivatives(&state.q, &system.domain)?;
    let dgram = gram_derivatives(&core, &dg);
    let dv = system.potential.gradient(&state.q, &system.domain)?;
    let mut out = DVector::zeros(n + r);
    for k in 0..n {
        out[k] = dv[k] - T::c(0.5) * v.dot(&(&dgram[k] * &v));
    }
    out.rows_mut(n, r).copy_from(&v);
    Ok(out)
}

/// Right-hand side `(q_dot, pi_dot)` of the first-order system on `D*`.
pub fn nh_vector_field<T: Real>(system: &MechanicalSystem<T>, state: &PhaseState<T>) -> Result<DVector<T>> {
    let core = frame_core(system, &state.q)?;
    let (n, r) = (system.n, system.r);
    let v = &core.gram_inv * &state.pi;
    let dg = system.metric.derivatives(&state.q, &system.domain)?;
    let dgram = gram_derivatives(&core, &dg);
    let dv = system.potential.gradient(&state.q, &system.domain)?;
    let dhdq = DVector::from_fn(n, |k, _| dv[k] - T::c(0.5) * v.dot(&(&dgram[k] * &v)));
    let mut out = DVector::zeros(n + r);
    out.rows_mut(0, n).copy_from(&(&core.rho * &v));
    let force = core.rho.transpose() * dhdq;
    for a in 0..r {
        let mut s = T::zero();
        for g in 0..r {
            for b in 0..r {
                s += core.c_up[(g, a, b)] * state.pi[g] * v[b];
            }
        }
        out[n + a] = -force[a] - s;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed,
    Rkf45Adaptive,
}

/// Integrator settings; `step` is the fixed step or the initial adaptive step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    pub sample_stride: usize,
    pub min_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4Fixed,
            step: 1e-3,
            rtol: 1e-10,
            atol: 1e-12,
            t_end: 10.0,
            sample_stride: 10,
            min_step: 1e-14,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64, t_end: f64) -> Self {
        Self { step, t_end, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be non-negative");
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1");
        }
        if self.method == Method::Rkf45Adaptive {
            for (name, v) in [("rtol", self.rtol), ("atol", self.atol)] {
                if !(v > 0.0 && v <= 1e-2) {
                    return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1e-2]")));
                }
            }
        }
        Ok(())
    }
}

type MonitorFn<T> = dyn Fn(&PhaseState<T>) -> Result<T> + Send + Sync;

/// Named scalar recorded along a trajectory.
#[derive(Clone)]
pub struct Monitor<T: Real> {
    pub name: String,
    f: Arc<MonitorFn<T>>,
}

impl<T: Real> Monitor<T> {
    pub fn new(name: impl Into<String>, f: impl Fn(&PhaseState<T>) -> Result<T> + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, s: &PhaseState<T>) -> Result<T> {
        (self.f)(s)
    }

    pub fn energy(system: &MechanicalSystem<T>) -> Self {
        let sys = system.clone();
        Self::new("H", move |s| hamiltonian(&sys, s))
    }

    pub fn momentum(system: &MechanicalSystem<T>, z: &GaugeGenerator<T>, name: impl Into<String>) -> Self {
        let sys = system.clone();
        let z = z.clone();
        Self::new(name, move |s| momentum_value(&sys, &z, s))
    }
}

impl<T: Real> fmt::Debug for Monitor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Monitor({})", self.name)
    }
}

/// Sampled solution with monitor values at the same times.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<PhaseState<T>>,
    pub monitors: Vec<(String, Vec<T>)>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn monitor(&self, name: &str) -> Option<&[T]> {
        self.monitors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// `max |m(t) - m(0)|` for a monitor.
    pub fn max_drift(&self, name: &str) -> Option<T> {
        let v = self.monitor(name)?;
        Some(v.iter().fold(T::zero(), |m, x| m.max((*x - v[0]).abs())))
    }

    pub fn last(&self) -> &PhaseState<T> {
        self.states.last().expect("trajectory has at least the initial sample")
    }
}

fn is_chart_error(e: &Error) -> bool {
    matches!(e, Error::OutOfChart { .. } | Error::DegenerateFrame { .. } | Error::MetricNotPositive { .. })
}

/// One classical RK4 step of `x' = f(x)`.
pub fn rk4_step<T: Real>(
    f: &dyn Fn(&DVector<T>) -> Result<DVector<T>>,
    x: &DVector<T>,
    h: T,
) -> Result<DVector<T>> {
    let half = h * T::c(0.5);
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * half))?;
    let k3 = f(&(x + &k2 * half))?;
    let k4 = f(&(x + &k3 * h))?;
    Ok(x + (k1 + (k2 + k3) * T::c(2.0) + k4) * (h / T::c(6.0)))
}

/// Flow of an autonomous field over time `t` with fixed RK4 steps of size about `step`.
pub fn rk4_flow<T: Real>(
    f: &dyn Fn(&DVector<T>) -> Result<DVector<T>>,
    x0: &DVector<T>,
    t: T,
    step: T,
) -> Result<DVector<T>> {
    let steps = (t.abs() / step).ceil().to_usize().unwrap_or(0).max(1);
    let h = t / T::from_usize(steps).expect("step count");
    let mut x = x0.clone();
    for _ in 0..steps {
        x = rk4_step(f, &x, h)?;
    }
    Ok(x)
}

const FEHLBERG_A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const FEHLBERG_B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const FEHLBERG_B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

/// Fehlberg 4(5) step; returns the fifth-order solution and the error estimate.
fn rkf45_step<T: Real>(
    f: &dyn Fn(&DVector<T>) -> Result<DVector<T>>,
    x: &DVector<T>,
    h: T,
) -> Result<(DVector<T>, DVector<T>)> {
    let mut ks: Vec<DVector<T>> = Vec::with_capacity(6);
    ks.push(f(x)?);
    for row in FEHLBERG_A.iter() {
        let mut xi = x.clone();
        for (j, k) in ks.iter().enumerate() {
            if row[j] != 0.0 {
                xi += k * (h * T::c(row[j]));
            }
        }
        ks.push(f(&xi)?);
    }
    let mut x5 = x.clone();
    let mut err = DVector::zeros(x.len());
    for (j, k) in ks.iter().enumerate() {
        x5 += k * (h * T::c(FEHLBERG_B5[j]));
        err += k * (h * T::c(FEHLBERG_B5[j] - FEHLBERG_B4[j]));
    }
    Ok((x5, err))
}

/// Integrates `x' = f(x)` from `x0`, calling `sample(t, x)` at the initial
/// point, every `sample_stride` accepted steps and at `t_end`.
///
/// Returns `(accepted, rejected)` step counts.
pub fn integrate_field<T: Real>(
    f: &dyn Fn(&DVector<T>) -> Result<DVector<T>>,
    x0: &DVector<T>,
    cfg: &IntegratorConfig,
    sample: &mut dyn FnMut(T, &DVector<T>) -> Result<()>,
) -> Result<(usize, usize)> {
    cfg.validate()?;
    let t_end = T::c(cfg.t_end);
    let mut t = T::zero();
    let mut x = x0.clone();
    sample(t, &x)?;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_sampled = 0usize;
    let chart_exit = |t: T, x: &DVector<T>| Error::ChartExit {
        t: t.as_f64(),
        last_q: to_vec(x),
        last_pi: Vec::new(),
    };
    match cfg.method {
        Method::Rk4Fixed => {
            let h = T::c(cfg.step);
            let steps = (cfg.t_end / cfg.step - 1e-9).ceil().max(0.0) as usize;
            for i in 0..steps {
                let hi = if i + 1 == steps { t_end - t } else { h };
                x = match rk4_step(f, &x, hi) {
                    Ok(v) => v,
                    Err(e) if is_chart_error(&e) => return Err(chart_exit(t, &x)),
                    Err(e) => return Err(e),
                };
                t = if i + 1 == steps { t_end } else { t + hi };
                accepted += 1;
                if accepted.is_multiple_of(cfg.sample_stride) || i + 1 == steps {
                    sample(t, &x)?;
                    last_sampled = accepted;
                }
            }
        }
        Method::Rkf45Adaptive => {
            let mut h = T::c(cfg.step).min(t_end.max(T::c(cfg.min_step)));
            let mut err_prev = T::one();
            let (rtol, atol) = (T::c(cfg.rtol), T::c(cfg.atol));
            while t < t_end {
                if h < T::c(cfg.min_step) {
                    return Err(Error::StepUnderflow { t: t.as_f64(), step: h.as_f64() });
                }
                let hi = h.min(t_end - t);
                let (xn, err) = match rkf45_step(f, &x, hi) {
                    Ok(v) => v,
                    Err(e) if is_chart_error(&e) => {
                        rejected += 1;
                        h *= T::c(0.25);
                        if h < T::c(cfg.min_step) {
                            return Err(chart_exit(t, &x));
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let dim = T::from_usize(x.len()).expect("dimension");
                let mut acc = T::zero();
                for i in 0..x.len() {
                    let sc = atol + rtol * x[i].abs().max(xn[i].abs());
                    acc += (err[i] / sc).powi(2);
                }
                let e = (acc / dim).sqrt().max(T::c(1e-16));
                if e <= T::one() {
                    t = if hi == t_end - t { t_end } else { t + hi };
                    x = xn;
                    accepted += 1;
                    let fac = T::c(0.9) * e.powf(T::c(-0.7 / 5.0)) * err_prev.powf(T::c(0.4 / 5.0));
                    h = hi * fac.max(T::c(0.2)).min(T::c(5.0));
                    err_prev = e;
                    if accepted.is_multiple_of(cfg.sample_stride) || t >= t_end {
                        sample(t, &x)?;
                        last_sampled = accepted;
                    }
                } else {
                    rejected += 1;
                    h = hi * (T::c(0.9) * e.powf(T::c(-0.2))).max(T::c(0.1));
                }
            }
        }
    }
    if last_sampled != accepted {
        sample(t, &x)?;
    }
    Ok((accepted, rejected))
}

/// Integrates the nonholonomic equations from `state0`.
///
/// Leaving the chart aborts with [`Error::ChartExit`] carrying the last valid state.
pub fn integrate<T: Real>(
    system: &MechanicalSystem<T>,
    state0: &PhaseState<T>,
    cfg: &IntegratorConfig,
    monitors: &[Monitor<T>],
) -> Result<Trajectory<T>> {
    let n = system.n;
    let field = |x: &DVector<T>| nh_vector_field(system, &PhaseState::from_flat(x, n));
    field(&state0.to_flat())?;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        monitors: monitors.iter().map(|m| (m.name.clone(), Vec::new())).collect(),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut sample = |t: T, x: &DVector<T>| -> Result<()> {
        let s = PhaseState::from_flat(x, n);
        for (m, (_, vals)) in monitors.iter().zip(traj.monitors.iter_mut()) {
            vals.push(m.eval(&s)?);
        }
        traj.times.push(t);
        traj.states.push(s);
        Ok(())
    };
    let counts = integrate_field(&field, &state0.to_flat(), cfg, &mut sample);
    match counts {
        Ok((a, r)) => {
            traj.accepted_steps = a;
            traj.rejected_steps = r;
            Ok(traj)
        }
        Err(Error::ChartExit { t, last_q, .. }) => Err(Error::ChartExit {
            t,
            last_q: last_q[..n].to_vec(),
            last_pi: last_q[n..].to_vec(),
        }),
        Err(e) => Err(e),
    }
}

/// Integrates several initial states in parallel; results keep input order.
pub fn integrate_batch<T: Real>(
    system: &MechanicalSystem<T>,
    states: &[PhaseState<T>],
    cfg: &IntegratorConfig,
    monitors: &[Monitor<T>],
) -> Vec<Result<Trajectory<T>>> {
    states.par_iter().map(|s| integrate(system, s, cfg, monitors)).collect()
}
