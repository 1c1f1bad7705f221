//! Charts, vector fields given by coordinate coefficients, Lie brackets and
//! the frame-derived data (coframe, Gram matrix, structure coefficients).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{to_vec, Error, Result};
use crate::gauge::GaugeGenerator;
use crate::scalar::{scaled_step, Real};
use crate::tensor::Tensor3;

/// Coordinates `q^i` of a point in the single chart of a system.
pub type ChartPoint<T> = DVector<T>;

pub type CoeffFn<T> = dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync;
pub type MatrixFn<T> = dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync;
pub type MatrixListFn<T> = dyn Fn(&DVector<T>) -> Vec<DMatrix<T>> + Send + Sync;
pub type ScalarFn<T> = dyn Fn(&DVector<T>) -> T + Send + Sync;
pub type PredicateFn<T> = dyn Fn(&DVector<T>) -> bool + Send + Sync;

/// Domain predicate of a chart.
#[derive(Clone)]
pub struct ChartDomain<T> {
    contains: Arc<PredicateFn<T>>,
}

impl<T: Real> ChartDomain<T> {
    pub fn everywhere() -> Self {
        Self { contains: Arc::new(|_| true) }
    }

    pub fn from_predicate(f: impl Fn(&DVector<T>) -> bool + Send + Sync + 'static) -> Self {
        Self { contains: Arc::new(f) }
    }

    /// Euler-angle chart: coordinate `index` restricted to `(theta_min, pi - theta_min)`.
    pub fn euler(index: usize, theta_min: T) -> Self {
        Self::from_predicate(move |q| {
            let th = q[index];
            th > theta_min && th < T::pi() - theta_min
        })
    }

    pub fn contains(&self, q: &DVector<T>) -> bool {
        q.iter().all(|x| x.is_finite()) && (self.contains)(q)
    }

    pub fn check(&self, q: &DVector<T>) -> Result<()> {
        if self.contains(q) {
            Ok(())
        } else {
            Err(Error::OutOfChart { point: to_vec(q) })
        }
    }
}

impl<T> fmt::Debug for ChartDomain<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ChartDomain")
    }
}

/// Vector field `X = X^i(q) d/dq^i`, optionally with its jacobian `dX^i/dq^j`.
#[derive(Clone)]
pub struct VectorField<T> {
    coeffs: Arc<CoeffFn<T>>,
    jacobian: Option<Arc<MatrixFn<T>>>,
}

impl<T: Real> VectorField<T> {
    pub fn new(coeffs: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static) -> Self {
        Self { coeffs: Arc::new(coeffs), jacobian: None }
    }

    pub fn with_jacobian(
        coeffs: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        jacobian: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self { coeffs: Arc::new(coeffs), jacobian: Some(Arc::new(jacobian)) }
    }

    /// Coordinate field `d/dq^i` in dimension `n`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        Self::with_jacobian(
            move |_| {
                let mut v = DVector::zeros(n);
                v[i] = T::one();
                v
            },
            move |_| DMatrix::zeros(n, n),
        )
    }

    /// Same field without the analytic jacobian.
    pub fn without_jacobian(&self) -> Self {
        Self { coeffs: self.coeffs.clone(), jacobian: None }
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, q: &DVector<T>) -> DVector<T> {
        (self.coeffs)(q)
    }

    /// Jacobian from the analytic form when present, else central differences.
    pub fn jacobian(&self, q: &DVector<T>, domain: &ChartDomain<T>) -> Result<DMatrix<T>> {
        match &self.jacobian {
            Some(j) => Ok(j(q)),
            None => self.fd_jacobian(q, domain),
        }
    }

    pub fn fd_jacobian(&self, q: &DVector<T>, domain: &ChartDomain<T>) -> Result<DMatrix<T>> {
        fd_jacobian(&*self.coeffs, q, domain, T::fd_step())
    }

    /// Pointwise linear combination `sum c_i X_i` with constant coefficients.
    pub fn linear_combination(terms: Vec<(T, VectorField<T>)>) -> Self {
        let all_jac = terms.iter().all(|(_, x)| x.jacobian.is_some());
        let t1 = terms.clone();
        let coeffs = move |q: &DVector<T>| {
            let mut out = t1[0].1.eval(q) * t1[0].0;
            for (c, x) in &t1[1..] {
                out += x.eval(q) * *c;
            }
            out
        };
        if all_jac {
            let t2 = terms;
            Self::with_jacobian(coeffs, move |q| {
                let mut out = (t2[0].1.jacobian.as_ref().unwrap())(q) * t2[0].0;
                for (c, x) in &t2[1..] {
                    out += (x.jacobian.as_ref().unwrap())(q) * *c;
                }
                out
            })
        } else {
            Self::new(coeffs)
        }
    }
}

impl<T> fmt::Debug for VectorField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField {{ analytic_jacobian: {} }}", self.jacobian.is_some())
    }
}

/// Central-difference jacobian with per-component step `base * max(1, |q_i|)`.
pub fn fd_jacobian<T: Real>(
    f: &dyn Fn(&DVector<T>) -> DVector<T>,
    q: &DVector<T>,
    domain: &ChartDomain<T>,
    base: T,
) -> Result<DMatrix<T>> {
    let n = q.len();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let h = scaled_step(base, q[i]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        domain.check(&qp)?;
        domain.check(&qm)?;
        cols.push((f(&qp) - f(&qm)) / (h + h));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<T: Real>(
    f: &dyn Fn(&DVector<T>) -> T,
    q: &DVector<T>,
    domain: &ChartDomain<T>,
    base: T,
) -> Result<DVector<T>> {
    let n = q.len();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let h = scaled_step(base, q[i]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        domain.check(&qp)?;
        domain.check(&qm)?;
        out[i] = (f(&qp) - f(&qm)) / (h + h);
    }
    Ok(out)
}

/// Jacobian by Ridders' polynomial extrapolation of central differences.
///
/// Starts from step `h0 * max(1, |q_i|)`, halved until both probes lie in the
/// chart, and shrinks it by 1.4 per tableau row. Returns the jacobian and the
/// largest per-column error estimate.
pub fn ridders_jacobian<T: Real>(
    f: &dyn Fn(&DVector<T>) -> Result<DVector<T>>,
    q: &DVector<T>,
    domain: &ChartDomain<T>,
    h0: T,
) -> Result<(DMatrix<T>, T)> {
    const ROWS: usize = 10;
    let con = T::c(1.4);
    let con2 = con * con;
    let n = q.len();
    let mut cols = Vec::with_capacity(n);
    let mut worst = T::zero();
    for i in 0..n {
        let mut h = scaled_step(h0, q[i]);
        let probe = |h: T| -> Result<DVector<T>> {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            domain.check(&qp)?;
            domain.check(&qm)?;
            Ok((f(&qp)? - f(&qm)?) / (h + h))
        };
        let inside = |h: T| {
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            domain.contains(&a) && domain.contains(&b)
        };
        let mut tries = 0;
        while !inside(h) {
            h *= T::c(0.5);
            tries += 1;
            if tries > 60 {
                return Err(Error::OutOfChart { point: to_vec(q) });
            }
        }
        let mut table: Vec<Vec<DVector<T>>> = vec![vec![probe(h)?]];
        let mut best = table[0][0].clone();
        let mut err = T::max_value().unwrap_or_else(|| T::c(f64::MAX));
        for row in 1..ROWS {
            h /= con;
            let mut cur = vec![probe(h)?];
            let mut fac = con2;
            for j in 1..=row {
                let next = (&cur[j - 1] * fac - &table[row - 1][j - 1]) / (fac - T::one());
                fac *= con2;
                let e = (&next - &cur[j - 1]).amax().max((&next - &table[row - 1][j - 1]).amax());
                if e <= err {
                    err = e;
                    best = next.clone();
                }
                cur.push(next);
            }
            let stall = (&cur[row] - &table[row - 1][row - 1]).amax();
            table.push(cur);
            if stall >= err + err {
                break;
            }
        }
        worst = worst.max(err);
        cols.push(best);
    }
    Ok((DMatrix::from_columns(&cols), worst))
}

/// Kinetic-energy metric with optional analytic partial derivatives `dg/dq^k`.
#[derive(Clone)]
pub struct MetricField<T> {
    g: Arc<MatrixFn<T>>,
    derivatives: Option<Arc<MatrixListFn<T>>>,
}

impl<T: Real> MetricField<T> {
    pub fn new(g: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static) -> Self {
        Self { g: Arc::new(g), derivatives: None }
    }

    pub fn with_derivatives(
        g: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
        dg: impl Fn(&DVector<T>) -> Vec<DMatrix<T>> + Send + Sync + 'static,
    ) -> Self {
        Self { g: Arc::new(g), derivatives: Some(Arc::new(dg)) }
    }

    pub fn euclidean(n: usize) -> Self {
        Self::with_derivatives(
            move |_| DMatrix::identity(n, n),
            move |_| vec![DMatrix::zeros(n, n); n],
        )
    }

    pub fn eval(&self, q: &DVector<T>) -> DMatrix<T> {
        (self.g)(q)
    }

    pub fn has_derivatives(&self) -> bool {
        self.derivatives.is_some()
    }

    /// `dg/dq^k` for every `k`, analytic when available.
    pub fn derivatives(&self, q: &DVector<T>, domain: &ChartDomain<T>) -> Result<Vec<DMatrix<T>>> {
        match &self.derivatives {
            Some(d) => Ok(d(q)),
            None => self.fd_derivatives(q, domain),
        }
    }

    pub fn fd_derivatives(&self, q: &DVector<T>, domain: &ChartDomain<T>) -> Result<Vec<DMatrix<T>>> {
        let mut out = Vec::with_capacity(q.len());
        for i in 0..q.len() {
            let h = scaled_step(T::fd_step(), q[i]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            domain.check(&qp)?;
            domain.check(&qm)?;
            out.push(((self.g)(&qp) - (self.g)(&qm)) / (h + h));
        }
        Ok(out)
    }
}

/// Potential energy with optional analytic gradient.
#[derive(Clone)]
pub struct Potential<T> {
    v: Arc<ScalarFn<T>>,
    gradient: Option<Arc<CoeffFn<T>>>,
}

impl<T: Real> Potential<T> {
    pub fn new(v: impl Fn(&DVector<T>) -> T + Send + Sync + 'static) -> Self {
        Self { v: Arc::new(v), gradient: None }
    }

    pub fn with_gradient(
        v: impl Fn(&DVector<T>) -> T + Send + Sync + 'static,
        grad: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        Self { v: Arc::new(v), gradient: Some(Arc::new(grad)) }
    }

    pub fn zero(n: usize) -> Self {
        Self::with_gradient(|_| T::zero(), move |_| DVector::zeros(n))
    }

    pub fn eval(&self, q: &DVector<T>) -> T {
        (self.v)(q)
    }

    pub fn gradient(&self, q: &DVector<T>, domain: &ChartDomain<T>) -> Result<DVector<T>> {
        match &self.gradient {
            Some(g) => Ok(g(q)),
            None => fd_gradient(&*self.v, q, domain, T::grad_step()),
        }
    }
}

/// A mechanical system with linear constraints, described in one chart.
///
/// The frame spans the constraint distribution `D`; gauge generators, when
/// present, are the leading frame fields.
#[derive(Clone)]
pub struct MechanicalSystem<T> {
    pub name: String,
    pub n: usize,
    pub r: usize,
    pub domain: ChartDomain<T>,
    pub metric: MetricField<T>,
    pub potential: Potential<T>,
    pub frame: Vec<VectorField<T>>,
    /// Complement `W` of `D`; `None` selects the metric orthogonal complement.
    pub complement: Option<Vec<VectorField<T>>>,
    pub orbit_generators: Vec<VectorField<T>>,
    pub gauge_generators: Vec<GaugeGenerator<T>>,
    pub condition_bound: T,
}

impl<T: Real> MechanicalSystem<T> {
    /// System with `D = span(frame)`, Euclidean-free defaults for the rest.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        domain: ChartDomain<T>,
        metric: MetricField<T>,
        frame: Vec<VectorField<T>>,
    ) -> Self {
        let r = frame.len();
        Self {
            name: name.into(),
            n,
            r,
            domain,
            metric,
            potential: Potential::zero(n),
            frame,
            complement: None,
            orbit_generators: Vec::new(),
            gauge_generators: Vec::new(),
            condition_bound: T::c(1e8),
        }
    }

    pub fn with_potential(mut self, v: Potential<T>) -> Self {
        self.potential = v;
        self
    }

    pub fn with_complement(mut self, w: Vec<VectorField<T>>) -> Self {
        self.complement = Some(w);
        self
    }

    pub fn with_orbit_generators(mut self, g: Vec<VectorField<T>>) -> Self {
        self.orbit_generators = g;
        self
    }

    pub fn with_gauge_generators(mut self, g: Vec<GaugeGenerator<T>>) -> Self {
        self.gauge_generators = g;
        self
    }

    /// Number of declared gauge generators (the leading frame indices).
    pub fn ell(&self) -> usize {
        self.gauge_generators.len()
    }

    pub fn check_point(&self, q: &DVector<T>) -> Result<()> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: q.len() });
        }
        self.domain.check(q)
    }

    /// Frame matrix `rho` (columns `X_alpha(q)`).
    pub fn rho(&self, q: &DVector<T>) -> DMatrix<T> {
        let cols: Vec<_> = self.frame.iter().map(|x| x.eval(q)).collect();
        DMatrix::from_columns(&cols)
    }

    /// Gram matrix `G_ab = <X_a, X_b>`.
    pub fn gram(&self, q: &DVector<T>) -> DMatrix<T> {
        let rho = self.rho(q);
        rho.transpose() * self.metric.eval(q) * rho
    }
}

impl<T> fmt::Debug for MechanicalSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MechanicalSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("r", &self.r)
            .finish_non_exhaustive()
    }
}

/// Frame-derived quantities at one chart point.
#[derive(Debug, Clone)]
pub struct FrameData<T> {
    pub q: DVector<T>,
    /// `n x r`, columns are the frame fields.
    pub rho: DMatrix<T>,
    /// `r x n`, rows are the dual coframe annihilating `W`.
    pub rho_bar: DMatrix<T>,
    /// `n x (n - r)`, columns span `W`.
    pub complement: DMatrix<T>,
    pub gram: DMatrix<T>,
    pub gram_inv: DMatrix<T>,
    /// `c_up[(g, a, b)] = C^g_ab`.
    pub c_up: Tensor3<T>,
    /// `c_down[(a, b, g)] = C_abg = <[X_a, X_b], X_g>`.
    pub c_down: Tensor3<T>,
    pub metric: DMatrix<T>,
    /// Jacobian of each frame field.
    pub frame_jacobians: Vec<DMatrix<T>>,
}

/// The part of [`FrameData`] needed by the equations of motion.
#[derive(Debug, Clone)]
pub struct FrameCore<T> {
    pub rho: DMatrix<T>,
    pub gram: DMatrix<T>,
    pub gram_inv: DMatrix<T>,
    pub c_up: Tensor3<T>,
    pub c_down: Tensor3<T>,
    pub metric: DMatrix<T>,
    pub frame_jacobians: Vec<DMatrix<T>>,
}

/// Frame data without the coframe; skips the complement and its inversion.
pub fn frame_core<T: Real>(system: &MechanicalSystem<T>, q: &DVector<T>) -> Result<FrameCore<T>> {
    system.check_point(q)?;
    let r = system.r;
    let rho = system.rho(q);
    let metric = system.metric.eval(q);
    let frame_jacobians = system
        .frame
        .iter()
        .map(|x| x.jacobian(q, &system.domain))
        .collect::<Result<Vec<_>>>()?;
    let gx = &metric * &rho;
    let gram = rho.transpose() * &gx;
    let gram_inv = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::MetricNotPositive { point: to_vec(q) })?
        .inverse();
    let mut c_down = Tensor3::zeros(r);
    for a in 0..r {
        for b in (a + 1)..r {
            let br = &frame_jacobians[b] * rho.column(a) - &frame_jacobians[a] * rho.column(b);
            for c in 0..r {
                let v = br.dot(&gx.column(c));
                c_down[(a, b, c)] = v;
                c_down[(b, a, c)] = -v;
            }
        }
    }
    let mut c_up = Tensor3::zeros(r);
    for g in 0..r {
        for a in 0..r {
            for b in 0..r {
                let mut s = T::zero();
                for d in 0..r {
                    s += gram_inv[(g, d)] * c_down[(a, b, d)];
                }
                c_up[(g, a, b)] = s;
            }
        }
    }
    Ok(FrameCore { rho, gram, gram_inv, c_up, c_down, metric, frame_jacobians })
}

/// Basis of the metric-orthogonal complement of the column span of `rho`.
pub fn metric_complement<T: Real>(rho: &DMatrix<T>, g: &DMatrix<T>) -> DMatrix<T> {
    let n = rho.nrows();
    let r = rho.ncols();
    let ip = |a: &DVector<T>, b: &DVector<T>| (g * b).dot(a);
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(n);
    let orthogonalize = |v: &mut DVector<T>, basis: &[DVector<T>]| {
        for _ in 0..2 {
            for e in basis {
                let c = ip(v, e);
                *v -= e * c;
            }
        }
    };
    for a in 0..r {
        let mut v = rho.column(a).into_owned();
        orthogonalize(&mut v, &basis);
        let nv = ip(&v, &v).sqrt();
        if nv > T::zero() {
            basis.push(v / nv);
        }
    }
    let mut out = Vec::with_capacity(n - r);
    let mut used = vec![false; n];
    while out.len() < n - r {
        let mut best: Option<(usize, DVector<T>, T)> = None;
        for i in (0..n).filter(|&i| !used[i]) {
            let mut v = DVector::zeros(n);
            v[i] = T::one();
            orthogonalize(&mut v, &basis);
            let nv = ip(&v, &v).sqrt();
            if best.as_ref().is_none_or(|(_, _, b)| nv > *b) {
                best = Some((i, v, nv));
            }
        }
        let (i, v, nv) = best.expect("candidate available");
        used[i] = true;
        let e = v / nv;
        basis.push(e.clone());
        out.push(e);
    }
    if out.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Frame, coframe, Gram matrix and structure coefficients at `q`.
pub fn frame_at<T: Real>(system: &MechanicalSystem<T>, q: &DVector<T>) -> Result<FrameData<T>> {
    let core = frame_core(system, q)?;
    let (n, r) = (system.n, system.r);
    let complement = match &system.complement {
        Some(w) => {
            let cols: Vec<_> = w.iter().map(|x| x.eval(q)).collect();
            if cols.len() != n - r {
                return Err(Error::DimensionMismatch { expected: n - r, got: cols.len() });
            }
            if cols.is_empty() {
                DMatrix::zeros(n, 0)
            } else {
                DMatrix::from_columns(&cols)
            }
        }
        None => metric_complement(&core.rho, &core.metric),
    };
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n, r)).copy_from(&core.rho);
    full.view_mut((0, r), (n, n - r)).copy_from(&complement);
    let sv = full.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > T::zero() { smax / smin } else { T::max_value().unwrap_or(smax) };
    if !(condition <= system.condition_bound) {
        return Err(Error::DegenerateFrame {
            condition: condition.as_f64(),
            bound: system.condition_bound.as_f64(),
        });
    }
    let inv = full.lu().try_inverse().ok_or(Error::DegenerateFrame {
        condition: f64::INFINITY,
        bound: system.condition_bound.as_f64(),
    })?;
    let rho_bar = inv.rows(0, r).into_owned();
    Ok(FrameData {
        q: q.clone(),
        rho: core.rho,
        rho_bar,
        complement,
        gram: core.gram,
        gram_inv: core.gram_inv,
        c_up: core.c_up,
        c_down: core.c_down,
        metric: core.metric,
        frame_jacobians: core.frame_jacobians,
    })
}

/// `[X, Y](q) = (DY) X - (DX) Y`.
pub fn lie_bracket<T: Real>(
    x: &VectorField<T>,
    y: &VectorField<T>,
    q: &DVector<T>,
    domain: &ChartDomain<T>,
) -> Result<DVector<T>> {
    domain.check(q)?;
    let dx = x.jacobian(q, domain)?;
    let dy = y.jacobian(q, domain)?;
    Ok(dy * x.eval(q) - dx * y.eval(q))
}

/// Lie derivative of the metric along `Z`, as an `n x n` matrix in coordinates.
pub fn lie_derivative_metric<T: Real>(
    system: &MechanicalSystem<T>,
    z: &VectorField<T>,
    q: &DVector<T>,
) -> Result<DMatrix<T>> {
    system.check_point(q)?;
    let g = system.metric.eval(q);
    let dg = system.metric.derivatives(q, &system.domain)?;
    let zq = z.eval(q);
    let dz = z.jacobian(q, &system.domain)?;
    let mut out = dz.transpose() * &g + &g * &dz;
    for (k, dgk) in dg.iter().enumerate() {
        out += dgk * zq[k];
    }
    Ok(out)
}

/// `(L_Z G)(X_a, X_b)` on the system frame.
pub fn lie_derivative_metric_on_d<T: Real>(
    system: &MechanicalSystem<T>,
    z: &VectorField<T>,
    q: &DVector<T>,
) -> Result<DMatrix<T>> {
    let lg = lie_derivative_metric(system, z, q)?;
    let rho = system.rho(q);
    Ok(rho.transpose() * lg * rho)
}

/// Partial derivatives `dG/dq^k` of the Gram matrix.
pub fn gram_derivatives<T: Real>(
    core: &FrameCore<T>,
    metric_derivatives: &[DMatrix<T>],
) -> Vec<DMatrix<T>> {
    let n = core.rho.nrows();
    let r = core.rho.ncols();
    let gx = &core.metric * &core.rho;
    (0..n)
        .map(|k| {
            let drho = DMatrix::from_fn(n, r, |i, a| core.frame_jacobians[a][(i, k)]);
            let cross = drho.transpose() * &gx;
            &cross + cross.transpose() + core.rho.transpose() * &metric_derivatives[k] * &core.rho
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::chaplygin::{build_chaplygin, ChaplyginParams};

    fn chaplygin() -> MechanicalSystem<f64> {
        build_chaplygin(&ChaplyginParams::default()).unwrap()
    }

    fn flat_plane() -> MechanicalSystem<f64> {
        MechanicalSystem::new(
            "plane",
            2,
            ChartDomain::everywhere(),
            MetricField::euclidean(2),
            vec![VectorField::coordinate(2, 0), VectorField::coordinate(2, 1)],
        )
    }

    #[test]
    fn coordinate_fields_commute() {
        let q = DVector::from_vec(vec![0.3, -1.2]);
        let d = ChartDomain::everywhere();
        let b = lie_bracket(&VectorField::coordinate(2, 0), &VectorField::coordinate(2, 1), &q, &d).unwrap();
        assert_eq!(b.amax(), 0.0);
    }

    #[test]
    fn flat_frame_is_trivial() {
        let f = frame_at(&flat_plane(), &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(f.rho, DMatrix::identity(2, 2));
        assert_eq!(f.gram, DMatrix::identity(2, 2));
        assert_eq!(f.c_down.max_abs(), 0.0);
        assert_eq!(f.complement.ncols(), 0);
    }

    #[test]
    fn chaplygin_c_down_at_equator() {
        let q = DVector::from_vec(vec![0.4, std::f64::consts::FRAC_PI_2, 0.7, 0.1, -0.3]);
        let f = frame_at(&chaplygin(), &q).unwrap();
        assert!((f.c_down[(0, 1, 2)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn chaplygin_z1_y2_bracket() {
        let sys = chaplygin();
        let q = DVector::from_vec(vec![0.0, std::f64::consts::FRAC_PI_2, 0.2, 0.5, 0.5]);
        let b = lie_bracket(&sys.frame[0], &sys.frame[1], &q, &sys.domain).unwrap();
        let expect = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((b - expect).amax() < 1e-12);
    }

    #[test]
    fn duality_and_gram_inverse() {
        let sys = chaplygin();
        for (th, psi) in [(0.3, 0.1), (1.2, 2.0), (2.9, -1.0)] {
            let q = DVector::from_vec(vec![0.5, th, psi, 1.0, -2.0]);
            let f = frame_at(&sys, &q).unwrap();
            assert!((&f.rho_bar * &f.rho - DMatrix::identity(3, 3)).amax() < 1e-12);
            assert!((&f.rho_bar * &f.complement).amax() < 1e-12);
            assert!((&f.gram * &f.gram_inv - DMatrix::identity(3, 3)).amax() < 1e-10);
        }
    }

    #[test]
    fn c_down_is_lowered_c_up() {
        let sys = chaplygin();
        let q = DVector::from_vec(vec![0.5, 1.1, 0.4, 0.0, 0.0]);
        let f = frame_at(&sys, &q).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for g in 0..3 {
                    let lowered: f64 = (0..3).map(|d| f.gram[(g, d)] * f.c_up[(d, a, b)]).sum();
                    assert!((lowered - f.c_down[(a, b, g)]).abs() < 1e-12);
                    let direct = lie_bracket(&sys.frame[a], &sys.frame[b], &q, &sys.domain).unwrap();
                    let inner = (direct.transpose() * &f.metric * f.rho.column(g))[(0, 0)];
                    assert!((inner - f.c_down[(a, b, g)]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn metric_complement_is_orthogonal() {
        let sys = chaplygin();
        let q = DVector::from_vec(vec![0.0, 0.8, 0.3, 0.0, 0.0]);
        let rho = sys.rho(&q);
        let g = sys.metric.eval(&q);
        let w = metric_complement(&rho, &g);
        assert_eq!(w.ncols(), 2);
        assert!((rho.transpose() * g * w).amax() < 1e-12);
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let sys = chaplygin();
        let q = DVector::from_vec(vec![0.7, 1.0, -0.4, 0.2, 0.1]);
        for x in &sys.frame {
            let a = x.jacobian(&q, &sys.domain).unwrap();
            let n = x.fd_jacobian(&q, &sys.domain).unwrap();
            assert!((&a - &n).amax() <= 1e-6 * a.amax().max(1.0));
        }
        let a = sys.metric.derivatives(&q, &sys.domain).unwrap();
        let n = sys.metric.fd_derivatives(&q, &sys.domain).unwrap();
        for (x, y) in a.iter().zip(&n) {
            assert!((x - y).amax() < 1e-8);
        }
    }

    #[test]
    fn point_outside_euler_chart_rejected() {
        let sys = chaplygin();
        let q = DVector::from_vec(vec![0.0, 1e-4, 0.0, 0.0, 0.0]);
        assert!(matches!(frame_at(&sys, &q), Err(Error::OutOfChart { .. })));
        let short = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(frame_at(&sys, &short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn parallel_frame_is_degenerate() {
        let sys = MechanicalSystem::new(
            "parallel",
            3,
            ChartDomain::everywhere(),
            MetricField::euclidean(3),
            vec![VectorField::coordinate(3, 0), VectorField::linear_combination(vec![(2.0, VectorField::coordinate(3, 0))])],
        );
        let q = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        assert!(matches!(frame_at(&sys, &q), Err(Error::DegenerateFrame { .. } | Error::MetricNotPositive { .. })));
    }

    #[test]
    fn rotation_generator_is_isometry() {
        let sys = chaplygin();
        let q = DVector::from_vec(vec![0.3, 1.3, 0.9, 0.4, -0.2]);
        let l = lie_derivative_metric_on_d(&sys, &sys.orbit_generators[0], &q).unwrap();
        assert!(l.amax() < 1e-9);
        let l = lie_derivative_metric_on_d(&sys, &sys.frame[0], &q).unwrap();
        assert!(l.amax() < 1e-9);
    }

    #[test]
    fn scaling_is_not_isometry() {
        let line = MechanicalSystem::new(
            "line",
            1,
            ChartDomain::everywhere(),
            MetricField::euclidean(1),
            vec![VectorField::coordinate(1, 0)],
        );
        let z = VectorField::new(|q: &DVector<f64>| q.clone());
        let l = lie_derivative_metric(&line, &z, &DVector::from_vec(vec![0.7])).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn ridders_beats_plain_differences() {
        let f = |x: &DVector<f64>| Ok(DVector::from_vec(vec![x[0].sin() * x[1], (x[0] * x[1]).exp()]));
        let q = DVector::from_vec(vec![0.4, -0.8]);
        let (j, err) = ridders_jacobian(&f, &q, &ChartDomain::everywhere(), 0.1).unwrap();
        let exact = DMatrix::from_row_slice(2, 2, &[
            q[0].cos() * q[1],
            q[0].sin(),
            q[1] * (q[0] * q[1]).exp(),
            q[0] * (q[0] * q[1]).exp(),
        ]);
        assert!((j - exact).amax() < 1e-11);
        assert!(err < 1e-9);
    }

    #[test]
    fn ridders_stays_inside_domain() {
        let domain = ChartDomain::from_predicate(|x: &DVector<f64>| x[0] > 0.0);
        let f = |x: &DVector<f64>| {
            assert!(x[0] > 0.0);
            Ok(DVector::from_vec(vec![x[0].ln()]))
        };
        let (j, _) = ridders_jacobian(&f, &DVector::from_vec(vec![0.05]), &domain, 0.1).unwrap();
        assert!((j[(0, 0)] - 20.0).abs() < 1e-7);
    }
}
