//! Property tests over randomly drawn states of the bundled systems.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;

use nonholo_core::brackets::{
    bracket_at, gauge_transform, hamiltonian_vf, lambda_from_generators, phase_bivector, pi_lambda_simple, pi_nh,
    Observable, PhaseState, ThreeForm,
};
use nonholo_core::dynamics::{hamiltonian_gradient, nh_vector_field};
use nonholo_core::gauge::{momentum_drift, skew_test, GaugeGenerator};
use nonholo_core::geometry::frame_at;
use nonholo_core::systems::chaplygin::{reduced_bracket_mg, ChaplyginParams, ChaplyginSphere, ReducedStateMG};
use nonholo_core::systems::profile::ShapeProfile;
use nonholo_core::systems::revolution::{RevolutionParams, SigmaState, SolidOfRevolution, SolutionChoice};

fn chaplygin() -> &'static ChaplyginSphere<f64> {
    static S: OnceLock<ChaplyginSphere<f64>> = OnceLock::new();
    S.get_or_init(|| ChaplyginSphere::new(ChaplyginParams::default()).unwrap())
}

fn ellipsoid() -> &'static SolidOfRevolution<f64> {
    static S: OnceLock<SolidOfRevolution<f64>> = OnceLock::new();
    S.get_or_init(|| {
        SolidOfRevolution::new(
            ShapeProfile::Ellipsoid { a: 1.0, c: 0.6 },
            RevolutionParams::default(),
            SolutionChoice::Auto,
        )
        .unwrap()
    })
}

prop_compose! {
    fn phase_state()(
        phi in 0.0..std::f64::consts::TAU,
        theta in 0.05..3.09f64,
        psi in 0.0..std::f64::consts::TAU,
        x in -2.0..2.0f64,
        y in -2.0..2.0f64,
        pi in prop::array::uniform3(-1.0..1.0f64),
    ) -> PhaseState<f64> {
        PhaseState::from_slices(&[phi, theta, psi, x, y], &pi)
    }
}

prop_compose! {
    fn mg_state()(m in prop::array::uniform3(-1.0..1.0f64), g in prop::array::uniform3(-1.0..1.0f64)) -> ReducedStateMG<f64> {
        let g = Vector3::from(g);
        let g = if g.norm() < 0.1 { Vector3::new(0.0, 0.0, 1.0) } else { g.normalize() };
        ReducedStateMG { m: Vector3::from(m), gamma: g }
    }
}

fn observable(c: [f64; 4]) -> Observable<f64> {
    Observable::new("poly", move |x: &DVector<f64>| {
        c[0] * x[1].cos() + c[1] * x[5] * x[6] + c[2] * x[7] * x[7] + c[3] * x[0] * x[5]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coframe_is_dual(s in phase_state()) {
        for sys in [&chaplygin().system, &ellipsoid().system] {
            let f = frame_at(sys, &s.q).unwrap();
            prop_assert!((&f.rho_bar * &f.rho - DMatrix::identity(3, 3)).amax() < 1e-12);
            prop_assert!((&f.rho_bar * &f.complement).amax() < 1e-12);
        }
    }

    #[test]
    fn bracket_is_antisymmetric(s in phase_state(), a in prop::array::uniform4(-2.0..2.0f64), b in prop::array::uniform4(-2.0..2.0f64)) {
        let sys = &chaplygin().system;
        let lam = lambda_from_generators(sys, &sys.gauge_generators).unwrap();
        let (f, g) = (observable(a), observable(b));
        let x = s.to_flat();
        for p in [phase_bivector(sys, None), phase_bivector(sys, Some(&lam))].iter().map(|p| p as &dyn Fn(&DVector<f64>) -> _) {
            let fg = bracket_at(p, &f, &g, &x).unwrap();
            let gf = bracket_at(p, &g, &f, &x).unwrap();
            prop_assert!((fg + gf).abs() < 1e-9 * (1.0 + fg.abs()));
        }
    }

    #[test]
    fn bracket_is_bilinear(s in phase_state(), a in prop::array::uniform4(-2.0..2.0f64), b in prop::array::uniform4(-2.0..2.0f64), c in -3.0..3.0f64) {
        let sys = &chaplygin().system;
        let p = phase_bivector(sys, None);
        let x = s.to_flat();
        let h = Observable::coordinate(6);
        let sum: [f64; 4] = std::array::from_fn(|i| a[i] + c * b[i]);
        let lhs = bracket_at(&p, &observable(sum), &h, &x).unwrap();
        let rhs = bracket_at(&p, &observable(a), &h, &x).unwrap() + c * bracket_at(&p, &observable(b), &h, &x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-7 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gauge_transform_preserves_dynamics(s in phase_state()) {
        for sys in [&chaplygin().system, &ellipsoid().system] {
            let lam = lambda_from_generators(sys, &sys.gauge_generators).unwrap();
            let dh = hamiltonian_gradient(sys, &s).unwrap();
            let a = hamiltonian_vf(&gauge_transform(sys, &lam, &s).unwrap(), &dh).unwrap();
            let b = nh_vector_field(sys, &s).unwrap();
            prop_assert!((&a - &b).amax() < 1e-12 * b.amax().max(1.0));
            let f = frame_at(sys, &s.q).unwrap();
            let q_dot = a.rows(0, 5).into_owned();
            prop_assert!((q_dot - &f.rho * &f.gram_inv * &s.pi).amax() < 1e-10 * b.amax().max(1.0));
        }
    }

    #[test]
    fn hamiltonian_fields_stay_in_characteristic_distribution(s in phase_state(), df in prop::collection::vec(-1.0..1.0f64, 8)) {
        let sys = &chaplygin().system;
        let lam = lambda_from_generators(sys, &sys.gauge_generators).unwrap();
        let f = frame_at(sys, &s.q).unwrap();
        let xf = hamiltonian_vf(&gauge_transform(sys, &lam, &s).unwrap(), &DVector::from_vec(df)).unwrap();
        let q_part = xf.rows(0, 5).into_owned();
        let projected = &f.rho * (&f.rho_bar * &q_part);
        prop_assert!((q_part - projected).amax() < 1e-10);
    }

    #[test]
    fn generator_momentum_is_casimir(s in phase_state()) {
        for sys in [&chaplygin().system, &ellipsoid().system] {
            let lam = lambda_from_generators(sys, &sys.gauge_generators).unwrap();
            let mut dpi = DVector::zeros(8);
            dpi[5] = 1.0;
            let x = hamiltonian_vf(&gauge_transform(sys, &lam, &s).unwrap(), &dpi).unwrap();
            let rho = sys.rho(&s.q);
            prop_assert!(x.rows(5, 3).amax() < 1e-7);
            prop_assert!((x.rows(0, 5) - rho.column(0)).amax() < 1e-12);
        }
    }

    #[test]
    fn simple_formula_matches_transform(s in phase_state()) {
        let sys = &chaplygin().system;
        let lam = lambda_from_generators(sys, &sys.gauge_generators).unwrap();
        let f = frame_at(sys, &s.q).unwrap();
        let full = gauge_transform(sys, &lam, &s).unwrap();
        let simple = pi_lambda_simple(&f, 1, &s.pi);
        prop_assert!((full.lower_right[(1, 2)] - simple.lower_right[(1, 2)]).abs() < 1e-12);
    }

    #[test]
    fn skew_residual_is_subadditive(theta in 0.1..3.0f64, c1 in -2.0..2.0f64, c2 in -2.0..2.0f64) {
        let sys = &ellipsoid().system;
        let samples = vec![DVector::from_vec(vec![0.2, theta, 0.4, 0.0, 0.0])];
        let a = GaugeGenerator::frame_field("Y2", 1, 3, 5);
        let b = GaugeGenerator::frame_field("Y3", 2, 3, 5);
        let c = GaugeGenerator::combine(c1, &a, c2, &b);
        let res = |z: &GaugeGenerator<f64>| skew_test(sys, z, &samples, 1e-8).unwrap().max_residual;
        prop_assert!(res(&c) <= c1.abs() * res(&a) + c2.abs() * res(&b) + 1e-9);
    }

    #[test]
    fn skew_generators_have_no_drift(s in phase_state()) {
        for sys in [&chaplygin().system, &ellipsoid().system] {
            let z = &sys.gauge_generators[0];
            prop_assert!(skew_test(sys, z, std::slice::from_ref(&s.q), 1e-6).unwrap().pass);
            let scale = s.pi.norm_squared().max(1e-3);
            prop_assert!(momentum_drift(sys, z, &s).unwrap().abs() < 1e-7 * scale);
        }
    }

    #[test]
    fn area_integral_is_reduced_casimir(s in mg_state()) {
        let p = reduced_bracket_mg(&chaplygin().params, &s).unwrap();
        let grad = DVector::from_vec(vec![s.gamma[0], s.gamma[1], s.gamma[2], s.m[0], s.m[1], s.m[2]]);
        prop_assert!((&p * grad).amax() < 1e-12);
        prop_assert!((&p + p.transpose()).amax() == 0.0);
        prop_assert_eq!(p.rank(1e-9), 4);
    }

    #[test]
    fn sigma_map_lands_on_variety(s in mg_state()) {
        let sigma = SigmaState::from_mg(&s.m, &s.gamma);
        prop_assert!(sigma.variety_residual().abs() < 1e-12);
        prop_assert!((sigma.sigma[0] - s.gamma[2]).abs() == 0.0);
    }

    #[test]
    fn random_forms_are_alternating(seed in any::<u64>(), r in 3usize..6) {
        let form = ThreeForm::<f64>::random_constant(r, seed, 1.0);
        let b = form.eval(&DVector::zeros(1), &DMatrix::zeros(1, r), &nonholo_core::Tensor3::zeros(r)).unwrap();
        prop_assert_eq!(b.alternating_residual(), 0.0);
        prop_assert!(b.max_abs() <= 1.0);
    }

    #[test]
    fn nonholonomic_momentum_block_is_linear_in_pi(s in phase_state(), t in -2.0..2.0f64) {
        let sys = &chaplygin().system;
        let scaled = PhaseState::new(s.q.clone(), &s.pi * t);
        let a = pi_nh(sys, &s).unwrap().lower_right * t;
        let b = pi_nh(sys, &scaled).unwrap().lower_right;
        prop_assert!((a - b).amax() < 1e-12);
    }
}
