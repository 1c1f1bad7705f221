//! The library instantiated at `f32`, compared against the `f64` build.

use nonholo_core::brackets::{gauge_transform, lambda_from_generators, pi_nh, PhaseState};
use nonholo_core::dynamics::{hamiltonian, integrate, IntegratorConfig, Monitor};
use nonholo_core::systems::profile::ShapeProfile;
use nonholo_core::systems::revolution::{RevolutionParams, SolutionChoice};
use nonholo_core::{ChaplyginParams, ChaplyginSphereF32, ChaplyginSphereF64, SolidOfRevolutionF32};

const Q: [f64; 5] = [0.1, 1.2, 0.3, 0.0, 0.0];
const PI: [f64; 3] = [0.5, 0.3, 0.2];

fn state32() -> PhaseState<f32> {
    PhaseState::from_slices(&Q.map(|v| v as f32), &PI.map(|v| v as f32))
}

#[test]
fn chaplygin_energy_and_bracket_agree_with_f64() {
    let s32 = ChaplyginSphereF32::new(ChaplyginParams::default()).unwrap();
    let s64 = ChaplyginSphereF64::new(ChaplyginParams::default()).unwrap();
    let st64 = PhaseState::from_slices(&Q, &PI);
    let h32 = hamiltonian(&s32.system, &state32()).unwrap();
    let h64 = hamiltonian(&s64.system, &st64).unwrap();
    assert!((f64::from(h32) - h64).abs() < 1e-5);
    let p32 = pi_nh(&s32.system, &state32()).unwrap().to_matrix();
    let p64 = pi_nh(&s64.system, &st64).unwrap().to_matrix();
    assert!((p32.map(f64::from) - p64).amax() < 1e-3);
}

#[test]
fn chaplygin_gauge_transform_in_f32() {
    let s = ChaplyginSphereF32::new(ChaplyginParams::default()).unwrap();
    let lam = lambda_from_generators(&s.system, &s.system.gauge_generators).unwrap();
    let p = gauge_transform(&s.system, &lam, &state32()).unwrap();
    assert!(p.skew_residual() < 1e-5);
}

#[test]
fn short_f32_trajectory_conserves_energy() {
    let s = ChaplyginSphereF32::new(ChaplyginParams::default()).unwrap();
    let traj = integrate(&s.system, &state32(), &IntegratorConfig::rk4(1e-2, 1.0), &[Monitor::energy(&s.system)]).unwrap();
    assert!(traj.max_drift("H").unwrap() < 1e-4);
}

#[test]
fn solid_of_revolution_builds_in_f32() {
    let body = SolidOfRevolutionF32::new(
        ShapeProfile::Ellipsoid { a: 1.0, c: 0.6 },
        RevolutionParams::default(),
        SolutionChoice::Auto,
    )
    .unwrap();
    let c = body.casimirs(&state32()).unwrap();
    assert!(c.iter().all(|v| v.is_finite()));
    assert!(body.solutions[0].max_residual() < 1e-2);
}
