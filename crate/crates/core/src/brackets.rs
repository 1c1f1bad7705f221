//! The nonholonomic bivector, 3-forms on `D`, their gauge transformation,
//! Hamiltonian vector fields and the Jacobiator.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gauge::GaugeGenerator;
use crate::geometry::{fd_gradient, frame_at, frame_core, ChartDomain, CoeffFn, FrameData, MechanicalSystem, ScalarFn};
use crate::scalar::scaled_step;
use crate::tensor::Tensor3;
use crate::Real;

/// A point `(q, pi)` of `D*` in frame-dual coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState<T: Real> {
    pub q: DVector<T>,
    pub pi: DVector<T>,
}

impl<T: Real> PhaseState<T> {
    pub fn new(q: DVector<T>, pi: DVector<T>) -> Self {
        Self { q, pi }
    }

    pub fn from_slices(q: &[T], pi: &[T]) -> Self {
        Self { q: DVector::from_column_slice(q), pi: DVector::from_column_slice(pi) }
    }

    /// Stacked `(q, pi)`.
    pub fn to_flat(&self) -> DVector<T> {
        let n = self.q.len();
        DVector::from_fn(n + self.pi.len(), |i, _| if i < n { self.q[i] } else { self.pi[i - n] })
    }

    pub fn from_flat(x: &DVector<T>, n: usize) -> Self {
        Self { q: x.rows(0, n).into_owned(), pi: x.rows(n, x.len() - n).into_owned() }
    }
}

/// The two nontrivial blocks of `(0, rho; -rho^T, lower_right)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivectorBlocks<T: Real> {
    pub rho: DMatrix<T>,
    pub lower_right: DMatrix<T>,
}

impl<T: Real> BivectorBlocks<T> {
    pub fn n(&self) -> usize {
        self.rho.nrows()
    }

    pub fn r(&self) -> usize {
        self.rho.ncols()
    }

    /// Full antisymmetric `(n+r) x (n+r)` matrix; `{f, g} = df^T P dg`.
    pub fn to_matrix(&self) -> DMatrix<T> {
        let (n, r) = (self.n(), self.r());
        let mut p = DMatrix::zeros(n + r, n + r);
        p.view_mut((0, n), (n, r)).copy_from(&self.rho);
        p.view_mut((n, 0), (r, n)).copy_from(&(-self.rho.transpose()));
        p.view_mut((n, n), (r, r)).copy_from(&self.lower_right);
        p
    }

    pub fn skew_residual(&self) -> T {
        (&self.lower_right + self.lower_right.transpose()).amax()
    }

    /// Largest entrywise difference to another set of blocks.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        (&self.rho - &other.rho).amax().max((&self.lower_right - &other.lower_right).amax())
    }
}

/// `Pi_nh` blocks from frame data: `lower_right = -C^g_ab pi_g`.
pub fn pi_nh_blocks<T: Real>(rho: &DMatrix<T>, c_up: &Tensor3<T>, pi: &DVector<T>) -> BivectorBlocks<T> {
    let r = rho.ncols();
    let mut lr = DMatrix::zeros(r, r);
    for a in 0..r {
        for b in 0..r {
            let mut s = T::zero();
            for g in 0..r {
                s += c_up[(g, a, b)] * pi[g];
            }
            lr[(a, b)] = -s;
        }
    }
    BivectorBlocks { rho: rho.clone(), lower_right: lr }
}

/// Nonholonomic bivector at a state.
pub fn pi_nh<T: Real>(system: &MechanicalSystem<T>, state: &PhaseState<T>) -> Result<BivectorBlocks<T>> {
    check_pi(system, state)?;
    let core = frame_core(system, &state.q)?;
    Ok(pi_nh_blocks(&core.rho, &core.c_up, &state.pi))
}

fn check_pi<T: Real>(system: &MechanicalSystem<T>, state: &PhaseState<T>) -> Result<()> {
    if state.pi.len() != system.r {
        return Err(Error::DimensionMismatch { expected: system.r, got: state.pi.len() });
    }
    Ok(())
}

type ThreeFormFn<T> = dyn Fn(&DVector<T>, &DMatrix<T>, &Tensor3<T>) -> Result<Tensor3<T>> + Send + Sync;

/// A 3-form on `D` given by its frame coefficients `B_abc(q) = Lambda(X_a, X_b, X_c)`.
///
/// The coefficient function receives the point, the frame matrix and the
/// lowered structure coefficients at that point.
#[derive(Clone)]
pub struct ThreeForm<T> {
    pub label: String,
    r: usize,
    b_down: Arc<ThreeFormFn<T>>,
}

impl<T: Real> ThreeForm<T> {
    pub fn new(
        label: impl Into<String>,
        r: usize,
        b_down: impl Fn(&DVector<T>, &DMatrix<T>, &Tensor3<T>) -> Result<Tensor3<T>> + Send + Sync + 'static,
    ) -> Self {
        Self { label: label.into(), r, b_down: Arc::new(b_down) }
    }

    pub fn zero(r: usize) -> Self {
        Self::new("zero", r, move |_, _, _| Ok(Tensor3::zeros(r)))
    }

    /// Frame coefficients given directly as functions of `q`.
    pub fn from_frame_coefficients(
        label: impl Into<String>,
        r: usize,
        f: impl Fn(&DVector<T>) -> Tensor3<T> + Send + Sync + 'static,
    ) -> Self {
        Self::new(label, r, move |q, _, _| Ok(f(q)))
    }

    /// Coordinate components `Lambda_ijk(q)`, contracted with the frame.
    pub fn from_coordinate_form(
        label: impl Into<String>,
        r: usize,
        f: impl Fn(&DVector<T>) -> Tensor3<T> + Send + Sync + 'static,
    ) -> Self {
        Self::new(label, r, move |q, rho, _| {
            let l = f(q);
            let n = l.dim();
            Ok(Tensor3::from_fn(r, |a, b, c| {
                let mut s = T::zero();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            s += l[(i, j, k)] * rho[(i, a)] * rho[(j, b)] * rho[(k, c)];
                        }
                    }
                }
                s
            }))
        })
    }

    /// Constant alternating coefficients drawn uniformly from `[-scale, scale]`.
    pub fn random_constant(r: usize, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Tensor3::zeros(r);
        for i in 0..r {
            for j in (i + 1)..r {
                for k in (j + 1)..r {
                    let v = T::c(rng.random_range(-scale..=scale));
                    set_alternating(&mut b, i, j, k, v);
                }
            }
        }
        Self::new(format!("random-{seed}"), r, move |_, _, _| Ok(b.clone()))
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Evaluates and validates the coefficients.
    pub fn eval(&self, q: &DVector<T>, rho: &DMatrix<T>, c_down: &Tensor3<T>) -> Result<Tensor3<T>> {
        let b = (self.b_down)(q, rho, c_down)?;
        if b.dim() != self.r {
            return Err(Error::DimensionMismatch { expected: self.r, got: b.dim() });
        }
        let res = b.alternating_residual();
        if res > T::c(1e-12) * b.max_abs().max(T::one()) {
            return Err(Error::NotAlternating { residual: res.as_f64() });
        }
        Ok(b)
    }

    /// Coefficients at `q` for `system`.
    pub fn eval_on(&self, system: &MechanicalSystem<T>, q: &DVector<T>) -> Result<Tensor3<T>> {
        let core = frame_core(system, q)?;
        self.eval(q, &core.rho, &core.c_down)
    }
}

impl<T> fmt::Debug for ThreeForm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ThreeForm({}, r = {})", self.label, self.r)
    }
}

/// Writes `v` at `(i, j, k)` and all permutations with their signs.
pub fn set_alternating<T: Real>(b: &mut Tensor3<T>, i: usize, j: usize, k: usize, v: T) {
    b[(i, j, k)] = v;
    b[(j, k, i)] = v;
    b[(k, i, j)] = v;
    b[(j, i, k)] = -v;
    b[(i, k, j)] = -v;
    b[(k, j, i)] = -v;
}

/// Default skew tolerance for [`lambda_from_generators`], relative to `max(1, max |C|)`.
pub const GENERATOR_SKEW_TOL: f64 = 1e-6;

/// The 3-form with `B_{b be ga} = C_{b be ga}` for the leading gauge
/// generators and `B_IJK = 0` otherwise.
///
/// Generators must be the leading frame fields, in order.
pub fn lambda_from_generators<T: Real>(
    system: &MechanicalSystem<T>,
    generators: &[GaugeGenerator<T>],
) -> Result<ThreeForm<T>> {
    let r = system.r;
    let ell = generators.len();
    if ell > r {
        return Err(Error::DimensionMismatch { expected: r, got: ell });
    }
    let gens: Vec<GaugeGenerator<T>> = generators.to_vec();
    Ok(ThreeForm::new("generators", r, move |q: &DVector<T>, _rho: &DMatrix<T>, c: &Tensor3<T>| {
        let scale = c.max_abs().max(T::one());
        for (b, z) in gens.iter().enumerate() {
            let coeffs = z.coeffs(q);
            let mut dev = T::zero();
            for a in 0..r {
                let target = if a == b { T::one() } else { T::zero() };
                dev = dev.max((coeffs[a] - target).abs());
            }
            if dev > T::c(1e-9) {
                return Err(Error::InconsistentGenerators { index: b, residual: dev.as_f64() });
            }
            let mut res = T::zero();
            for be in 0..r {
                for ga in 0..r {
                    res = res.max((c[(b, be, ga)] + c[(b, ga, be)]).abs());
                }
            }
            if res > T::c(GENERATOR_SKEW_TOL) * scale {
                return Err(Error::InconsistentGenerators { index: b, residual: res.as_f64() });
            }
        }
        let mut out = Tensor3::zeros(r);
        for i in 0..ell.min(r) {
            for j in (i + 1)..r {
                for k in (j + 1)..r {
                    let v = (c[(i, j, k)] - c[(i, k, j)]) * T::c(0.5);
                    set_alternating(&mut out, i, j, k, v);
                }
            }
        }
        Ok(out)
    }))
}

/// `BB_ab = B^g_ab pi_g` with `B^g_ab = G^{gd} B_abd`.
pub fn xi_block<T: Real>(gram_inv: &DMatrix<T>, b: &Tensor3<T>, pi: &DVector<T>) -> DMatrix<T> {
    let r = gram_inv.nrows();
    let v = gram_inv * pi;
    DMatrix::from_fn(r, r, |a, be| {
        let mut s = T::zero();
        for d in 0..r {
            s += b[(a, be, d)] * v[d];
        }
        s
    })
}

/// `Pi^Lambda` blocks as the product `(Id + Pi# Xi)^{-1} Pi#` written out blockwise:
/// `(I, 0; BB rho_bar, I) (0, rho; -rho^T, -CC)`.
pub fn gauge_transform_blocks<T: Real>(
    frame: &FrameData<T>,
    b: &Tensor3<T>,
    pi: &DVector<T>,
) -> BivectorBlocks<T> {
    let nh = pi_nh_blocks(&frame.rho, &frame.c_up, pi);
    let bb = xi_block(&frame.gram_inv, b, pi);
    let lower_right = &bb * (&frame.rho_bar * &frame.rho) + &nh.lower_right;
    BivectorBlocks { rho: nh.rho, lower_right }
}

/// Gauge transformation of `Pi_nh` by the 3-form `lam` at a state.
pub fn gauge_transform<T: Real>(
    system: &MechanicalSystem<T>,
    lam: &ThreeForm<T>,
    state: &PhaseState<T>,
) -> Result<BivectorBlocks<T>> {
    check_pi(system, state)?;
    let frame = frame_at(system, &state.q)?;
    let b = lam.eval(&state.q, &frame.rho, &frame.c_down)?;
    Ok(gauge_transform_blocks(&frame, &b, &state.pi))
}

/// Momentum block of `Pi^Lambda` for a generators-first frame, written in
/// the split indices `b < ell <= I`: only `{pi_I, pi_J}` is nonzero and
///
/// `{pi_I, pi_J} = (G^{bc} C_cIJ + G^{bK} B_IJK - C^b_IJ) pi_b
///               + (G^{Kb} C_bIJ + G^{KL} B_IJL - C^K_IJ) pi_K`.
pub fn pi_lambda_general<T: Real>(
    frame: &FrameData<T>,
    b_ijk: &Tensor3<T>,
    ell: usize,
    pi: &DVector<T>,
) -> BivectorBlocks<T> {
    let r = frame.rho.ncols();
    let gi = &frame.gram_inv;
    let c = &frame.c_down;
    let cu = &frame.c_up;
    let mut lr = DMatrix::zeros(r, r);
    for i in ell..r {
        for j in ell..r {
            let mut s = T::zero();
            for b in 0..ell {
                let mut coef = -cu[(b, i, j)];
                for cc in 0..ell {
                    coef += gi[(b, cc)] * c[(cc, i, j)];
                }
                for k in ell..r {
                    coef += gi[(b, k)] * b_ijk[(i, j, k)];
                }
                s += coef * pi[b];
            }
            for k in ell..r {
                let mut coef = -cu[(k, i, j)];
                for b in 0..ell {
                    coef += gi[(k, b)] * c[(b, i, j)];
                }
                for l in ell..r {
                    coef += gi[(k, l)] * b_ijk[(i, j, l)];
                }
                s += coef * pi[k];
            }
            lr[(i, j)] = s;
        }
    }
    BivectorBlocks { rho: frame.rho.clone(), lower_right: lr }
}

/// Momentum block of `Pi^Lambda` when `r - ell < 3`:
/// `{pi_I, pi_J} = (G^{gb} C_bIJ - C^g_IJ) pi_g`.
pub fn pi_lambda_simple<T: Real>(frame: &FrameData<T>, ell: usize, pi: &DVector<T>) -> BivectorBlocks<T> {
    let r = frame.rho.ncols();
    let mut lr = DMatrix::zeros(r, r);
    for i in ell..r {
        for j in ell..r {
            let mut s = T::zero();
            for g in 0..r {
                let mut coef = -frame.c_up[(g, i, j)];
                for b in 0..ell {
                    coef += frame.gram_inv[(g, b)] * frame.c_down[(b, i, j)];
                }
                s += coef * pi[g];
            }
            lr[(i, j)] = s;
        }
    }
    BivectorBlocks { rho: frame.rho.clone(), lower_right: lr }
}

/// `X_f = P df` with `P = (0, rho; -rho^T, lower_right)`.
pub fn hamiltonian_vf<T: Real>(blocks: &BivectorBlocks<T>, df: &DVector<T>) -> Result<DVector<T>> {
    let (n, r) = (blocks.n(), blocks.r());
    if df.len() != n + r {
        return Err(Error::DimensionMismatch { expected: n + r, got: df.len() });
    }
    let dq = df.rows(0, n);
    let dp = df.rows(n, r);
    let mut out = DVector::zeros(n + r);
    out.rows_mut(0, n).copy_from(&(&blocks.rho * dp));
    out.rows_mut(n, r).copy_from(&(-blocks.rho.transpose() * dq + &blocks.lower_right * dp));
    Ok(out)
}

/// A scalar function on a coordinate space with optional analytic gradient.
#[derive(Clone)]
pub struct Observable<T> {
    pub name: String,
    value: Arc<ScalarFn<T>>,
    gradient: Option<Arc<CoeffFn<T>>>,
}

impl<T: Real> Observable<T> {
    pub fn new(name: impl Into<String>, f: impl Fn(&DVector<T>) -> T + Send + Sync + 'static) -> Self {
        Self { name: name.into(), value: Arc::new(f), gradient: None }
    }

    pub fn with_gradient(
        name: impl Into<String>,
        f: impl Fn(&DVector<T>) -> T + Send + Sync + 'static,
        grad: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), value: Arc::new(f), gradient: Some(Arc::new(grad)) }
    }

    /// The `i`-th coordinate function.
    pub fn coordinate(i: usize) -> Self {
        Self::with_gradient(format!("x{i}"), move |x| x[i], move |x| {
            let mut g = DVector::zeros(x.len());
            g[i] = T::one();
            g
        })
    }

    pub fn value(&self, x: &DVector<T>) -> T {
        (self.value)(x)
    }

    /// Analytic gradient when supplied, else central differences.
    pub fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(&*self.value, x, &ChartDomain::everywhere(), T::grad_step())
                .expect("unbounded domain"),
        }
    }
}

impl<T> fmt::Debug for Observable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({})", self.name)
    }
}

/// `{f, g}(x) = df^T P(x) dg`.
pub fn bracket_at<T: Real>(
    bivector: &dyn Fn(&DVector<T>) -> Result<DMatrix<T>>,
    f: &Observable<T>,
    g: &Observable<T>,
    x: &DVector<T>,
) -> Result<T> {
    let p = bivector(x)?;
    Ok(f.gradient(x).dot(&(p * g.gradient(x))))
}

/// Cyclic sum `{f,{g,h}} + {g,{h,f}} + {h,{f,g}}` at `x`.
///
/// Inner brackets are differentiated by central differences with the
/// scaled step [`Real::fd_step`].
pub fn jacobiator<T: Real>(
    bivector: &dyn Fn(&DVector<T>) -> Result<DMatrix<T>>,
    f: &Observable<T>,
    g: &Observable<T>,
    h: &Observable<T>,
    x: &DVector<T>,
) -> Result<T> {
    let dim = x.len();
    let p = bivector(x)?;
    let inner_grad = |a: &Observable<T>, b: &Observable<T>| -> Result<DVector<T>> {
        let mut out = DVector::zeros(dim);
        for i in 0..dim {
            let step = scaled_step(T::fd_step(), x[i]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            out[i] = (bracket_at(bivector, a, b, &xp)? - bracket_at(bivector, a, b, &xm)?) / (step + step);
        }
        Ok(out)
    };
    let term = |a: &Observable<T>, b: &Observable<T>, c: &Observable<T>| -> Result<T> {
        Ok(a.gradient(x).dot(&(&p * inner_grad(b, c)?)))
    };
    Ok(term(f, g, h)? + term(g, h, f)? + term(h, f, g)?)
}

/// Bivector of a phase-space bracket as a function of the stacked `(q, pi)`.
pub fn phase_bivector<'a, T: Real>(
    system: &'a MechanicalSystem<T>,
    lam: Option<&'a ThreeForm<T>>,
) -> impl Fn(&DVector<T>) -> Result<DMatrix<T>> + 'a {
    move |x| {
        let s = PhaseState::from_flat(x, system.n);
        let blocks = match lam {
            Some(l) => gauge_transform(system, l, &s)?,
            None => pi_nh(system, &s)?,
        };
        Ok(blocks.to_matrix())
    }
}

/// Draws a state uniformly from coordinate boxes.
pub fn random_state<T: Real>(rng: &mut impl Rng, q_box: &[(f64, f64)], pi_box: &[(f64, f64)]) -> PhaseState<T> {
    let q = DVector::from_iterator(q_box.len(), q_box.iter().map(|&(a, b)| T::c(rng.random_range(a..b))));
    let pi = DVector::from_iterator(pi_box.len(), pi_box.iter().map(|&(a, b)| T::c(rng.random_range(a..b))));
    PhaseState { q, pi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{hamiltonian_gradient, nh_vector_field};
    use crate::geometry::{frame_at, ChartDomain, MetricField, VectorField};
    use crate::systems::chaplygin::{build_chaplygin, ChaplyginParams};

    fn chaplygin() -> MechanicalSystem<f64> {
        build_chaplygin(&ChaplyginParams::default()).unwrap()
    }

    fn plane() -> MechanicalSystem<f64> {
        MechanicalSystem::new(
            "plane",
            2,
            ChartDomain::everywhere(),
            MetricField::euclidean(2),
            vec![VectorField::coordinate(2, 0), VectorField::coordinate(2, 1)],
        )
    }

    fn state() -> PhaseState<f64> {
        PhaseState::from_slices(&[0.3, 1.1, -0.4, 0.2, 0.5], &[0.7, -0.2, 1.3])
    }

    #[test]
    fn zero_momentum_has_zero_lower_block() {
        let sys = chaplygin();
        let s = PhaseState::from_slices(&[0.3, 1.1, -0.4, 0.2, 0.5], &[0.0; 3]);
        let p = pi_nh(&sys, &s).unwrap();
        assert_eq!(p.lower_right.amax(), 0.0);
        assert!(p.rho.amax() > 0.1);
    }

    #[test]
    fn bivectors_are_skew() {
        let sys = chaplygin();
        let lam = lambda_from_generators(&sys, &sys.gauge_generators).unwrap();
        let s = state();
        assert!(pi_nh(&sys, &s).unwrap().skew_residual() < 1e-12);
        assert!(gauge_transform(&sys, &lam, &s).unwrap().skew_residual() < 1e-12);
        let m = pi_nh(&sys, &s).unwrap().to_matrix();
        assert!((&m + m.transpose()).amax() < 1e-12);
    }

    #[test]
    fn zero_form_leaves_bracket_unchanged() {
        let sys = chaplygin();
        let s = state();
        let a = pi_nh(&sys, &s).unwrap();
        let b = gauge_transform(&sys, &ThreeForm::zero(3), &s).unwrap();
        assert_eq!(a.max_abs_diff(&b), 0.0);
    }

    #[test]
    fn two_dimensional_fibers_carry_no_three_form() {
        let sys = plane();
        let lam = lambda_from_generators(&sys, &[]).unwrap();
        let q = DVector::from_vec(vec![0.2, 0.1]);
        assert_eq!(lam.eval_on(&sys, &q).unwrap().max_abs(), 0.0);
        assert_eq!(ThreeForm::<f64>::random_constant(2, 5, 1.0).eval_on(&sys, &q).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn hamiltonian_field_reproduces_equations_of_motion() {
        let sys = chaplygin();
        let s = state();
        let dh = hamiltonian_gradient(&sys, &s).unwrap();
        let xh = hamiltonian_vf(&pi_nh(&sys, &s).unwrap(), &dh).unwrap();
        let rhs = nh_vector_field(&sys, &s).unwrap();
        assert!((xh - rhs).amax() < 1e-12);
        assert!(matches!(
            hamiltonian_vf(&pi_nh(&sys, &s).unwrap(), &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn canonical_bracket_satisfies_jacobi() {
        let sys = plane();
        let p = phase_bivector(&sys, None);
        let f = Observable::new("q1 p2", |x: &DVector<f64>| x[0] * x[3]);
        let g = Observable::new("p1^2 + q2", |x: &DVector<f64>| x[2] * x[2] + x[1]);
        let h = Observable::new("sin q1 p1", |x: &DVector<f64>| x[0].sin() * x[2]);
        let x = DVector::from_vec(vec![0.4, -0.3, 1.2, 0.7]);
        assert!(jacobiator(&p, &f, &g, &h, &x).unwrap().abs() < 1e-7);
        let q1 = Observable::coordinate(0);
        let p1 = Observable::coordinate(2);
        assert!((bracket_at(&p, &q1, &p1, &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chaplygin_nonholonomic_bracket_violates_jacobi() {
        let sys = chaplygin();
        let p = phase_bivector(&sys, None);
        let obs: Vec<Observable<f64>> = [1, 5, 6, 7].iter().map(|&i| Observable::coordinate(i)).collect();
        let x = state().to_flat();
        let mut worst = 0.0f64;
        for a in 0..4 {
            for b in (a + 1)..4 {
                for c in (b + 1)..4 {
                    worst = worst.max(jacobiator(&p, &obs[a], &obs[b], &obs[c], &x).unwrap().abs());
                }
            }
        }
        assert!(worst > 1e-4, "{worst}");
    }

    #[test]
    fn characteristic_distribution_has_full_fiber_rank() {
        let sys = chaplygin();
        let m = pi_nh(&sys, &state()).unwrap().to_matrix();
        assert_eq!(m.rank(1e-9), 6);
        let image = &m * DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let frame = frame_at(&sys, &state().q).unwrap();
        let q_part = image.rows(0, 5).into_owned();
        assert!((&frame.complement.transpose() * &frame.metric * q_part).amax() < 1e-12);
    }

    #[test]
    fn closed_forms_match_blockwise_transform() {
        let sys = chaplygin();
        let lam = lambda_from_generators(&sys, &sys.gauge_generators).unwrap();
        let s = state();
        let frame = frame_at(&sys, &s.q).unwrap();
        let b = lam.eval(&s.q, &frame.rho, &frame.c_down).unwrap();
        let full = gauge_transform_blocks(&frame, &b, &s.pi);
        let general = pi_lambda_general(&frame, &b, 1, &s.pi);
        let simple = pi_lambda_simple(&frame, 1, &s.pi);
        for i in 1..3 {
            for j in 1..3 {
                assert!((full.lower_right[(i, j)] - general.lower_right[(i, j)]).abs() < 1e-12);
                assert!((full.lower_right[(i, j)] - simple.lower_right[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_alternating_form_rejected() {
        let sys = chaplygin();
        let lam = ThreeForm::from_frame_coefficients("bad", 3, |_| {
            let mut t = Tensor3::zeros(3);
            t[(0, 1, 2)] = 1.0;
            t
        });
        assert!(matches!(lam.eval_on(&sys, &state().q), Err(Error::NotAlternating { .. })));
    }

    #[test]
    fn random_form_is_alternating_and_seeded() {
        let sys = chaplygin();
        let q = state().q;
        let a = ThreeForm::<f64>::random_constant(3, 9, 2.0).eval_on(&sys, &q).unwrap();
        let b = ThreeForm::<f64>::random_constant(3, 9, 2.0).eval_on(&sys, &q).unwrap();
        let c = ThreeForm::<f64>::random_constant(3, 10, 2.0).eval_on(&sys, &q).unwrap();
        assert_eq!(a.alternating_residual(), 0.0);
        assert_eq!(a.max_abs_diff(&b), 0.0);
        assert!(a.max_abs_diff(&c) > 0.0);
        assert!(a.max_abs() <= 2.0 && a.max_abs() > 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let s = state();
        let back = PhaseState::from_flat(&s.to_flat(), 5);
        assert_eq!(back.q, s.q);
        assert_eq!(back.pi, s.pi);
    }
}
