//! Worked systems.

pub mod chaplygin;
pub mod profile;
pub mod revolution;

use nalgebra::{Matrix3, Vector3};

use crate::Real;

/// Levi-Civita symbol.
#[inline]
pub fn levi_civita(i: usize, j: usize, k: usize) -> i32 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
        _ => 0,
    }
}

/// Poisson vector `gamma = (sin th sin psi, sin th cos psi, cos th)` (Euler x-convention).
pub fn poisson_vector<T: Real>(theta: T, psi: T) -> Vector3<T> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Vector3::new(st * sp, st * cp, ct)
}

/// Body angular velocity from Euler angle rates.
pub fn body_angular_velocity<T: Real>(theta: T, psi: T, dphi: T, dtheta: T, dpsi: T) -> Vector3<T> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Vector3::new(
        dtheta * cp + dphi * sp * st,
        -dtheta * sp + dphi * cp * st,
        dphi * ct + dpsi,
    )
}

/// The 6x6 matrix of a bracket on `(M, gamma)` with
/// `{M_i, M_j} = mm[(i, j)]`, `{M_i, gamma_j} = -eps_ijk gamma_k`, `{gamma_i, gamma_j} = 0`.
pub(crate) fn assemble_mg<T: Real>(mm: &Matrix3<T>, gamma: &Vector3<T>) -> nalgebra::DMatrix<T> {
    let mut p = nalgebra::DMatrix::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            p[(i, j)] = mm[(i, j)];
            let mut s = T::zero();
            for k in 0..3 {
                s += T::c(f64::from(levi_civita(i, j, k))) * gamma[k];
            }
            p[(i, 3 + j)] = -s;
            p[(3 + j, i)] = s;
        }
    }
    p
}
