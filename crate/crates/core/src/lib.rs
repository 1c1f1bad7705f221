//! Almost-Poisson brackets for nonholonomic systems with symmetry.
//!
//! The crate builds the nonholonomic bivector `Pi_nh` on `D*` from a moving
//! frame of the constraint distribution, gauge-transforms it with a 3-form
//! `Lambda` so that gauge momenta become Casimirs after reduction, and ships
//! two worked systems: the Chaplygin sphere and a solid of revolution rolling
//! on a plane.

pub mod brackets;
pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod geometry;
pub mod scalar;
pub mod systems;
pub mod tensor;
pub mod verification;

pub use brackets::{
    gauge_transform, hamiltonian_vf, jacobiator, lambda_from_generators, pi_nh, BivectorBlocks,
    Observable, PhaseState, ThreeForm,
};
pub use dynamics::{integrate, nh_vector_field, IntegratorConfig, Method, Monitor, Trajectory};
pub use error::{Error, Result};
pub use gauge::{momentum_drift, momentum_value, potential_invariance_residual, skew_test, GaugeGenerator};
pub use geometry::{
    frame_at, lie_bracket, lie_derivative_metric_on_d, ChartDomain, FrameData, MechanicalSystem,
    MetricField, Potential, VectorField,
};
pub use scalar::Real;
pub use systems::chaplygin::{ChaplyginParams, ChaplyginPotential, ChaplyginSphere, ReducedStateMG};
pub use systems::profile::ShapeProfile;
pub use systems::revolution::{
    solve_gauge_ode, GaugeSolution, RevolutionParams, RevolutionPotential, SigmaState, SolidOfRevolution,
    SolutionChoice,
};
pub use tensor::Tensor3;
pub use verification::{LambdaChoice, Report, SuiteConfig};

pub type MechanicalSystemF64 = MechanicalSystem<f64>;
pub type PhaseStateF64 = PhaseState<f64>;
pub type FrameDataF64 = FrameData<f64>;
pub type BivectorBlocksF64 = BivectorBlocks<f64>;
pub type ThreeFormF64 = ThreeForm<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type ChaplyginSphereF64 = ChaplyginSphere<f64>;
pub type SolidOfRevolutionF64 = SolidOfRevolution<f64>;

pub type MechanicalSystemF32 = MechanicalSystem<f32>;
pub type PhaseStateF32 = PhaseState<f32>;
pub type ChaplyginSphereF32 = ChaplyginSphere<f32>;
pub type SolidOfRevolutionF32 = SolidOfRevolution<f32>;
