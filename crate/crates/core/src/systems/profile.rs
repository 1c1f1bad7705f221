//! Body shapes of revolution described by the contact vector
//! `(f1(g3) g1, f1(g3) g2, f2(g3))` as a function of the Poisson vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Profile presets and user polynomials in `gamma_3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeProfile {
    /// Sphere with centre of mass at the geometric centre.
    Sphere { radius: f64 },
    /// Sphere whose centre of mass sits `offset` below the geometric centre along the axis.
    OffsetSphere { radius: f64, offset: f64 },
    /// Ellipsoid of revolution with equatorial semi-axis `a` and polar semi-axis `c`.
    Ellipsoid { a: f64, c: f64 },
    /// `f1 = sum f1[i] g3^i`, `f2 = sum f2[i] g3^i`; no geometric consistency is implied.
    Polynomial { f1: Vec<f64>, f2: Vec<f64> },
}

/// Profile functions and their `gamma_3` derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValues<T> {
    pub f1: T,
    pub f2: T,
    pub df1: T,
    pub df2: T,
}

/// Geometric quantities at an angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeAt<T> {
    pub sin: T,
    pub cos: T,
    pub f1: T,
    pub f2: T,
    /// `df1/dg3`.
    pub df1: T,
    /// `df2/dg3`.
    pub df2: T,
    pub a1: T,
    pub a2: T,
    pub z: T,
    pub rp: T,
    pub rm: T,
    pub da1: T,
    pub da2: T,
}

fn poly<T: Real>(c: &[f64], x: T) -> (T, T) {
    let mut v = T::zero();
    let mut d = T::zero();
    for &ci in c.iter().rev() {
        d = d * x + v;
        v = v * x + T::c(ci);
    }
    (v, d)
}

impl ShapeProfile {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::OffsetSphere { .. } => "offset-sphere",
            Self::Ellipsoid { .. } => "ellipsoid",
            Self::Polynomial { .. } => "polynomial",
        }
    }

    pub fn values<T: Real>(&self, g3: T) -> ProfileValues<T> {
        match self {
            Self::Sphere { radius } => {
                let r = T::c(*radius);
                ProfileValues { f1: r, f2: r * g3, df1: T::zero(), df2: r }
            }
            Self::OffsetSphere { radius, offset } => {
                let r = T::c(*radius);
                ProfileValues { f1: r, f2: r * g3 - T::c(*offset), df1: T::zero(), df2: r }
            }
            Self::Ellipsoid { a, c } => {
                let (a2, c2) = (T::c(a * a), T::c(c * c));
                let s2 = a2 * (T::one() - g3 * g3) + c2 * g3 * g3;
                let s = s2.sqrt();
                let s3 = s2 * s;
                ProfileValues {
                    f1: a2 / s,
                    f2: c2 * g3 / s,
                    df1: -a2 * (c2 - a2) * g3 / s3,
                    df2: a2 * c2 / s3,
                }
            }
            Self::Polynomial { f1, f2 } => {
                let (v1, d1) = poly(f1, g3);
                let (v2, d2) = poly(f2, g3);
                ProfileValues { f1: v1, f2: v2, df1: d1, df2: d2 }
            }
        }
    }

    /// All derived quantities at `theta` (`g3 = cos theta`).
    pub fn at<T: Real>(&self, theta: T) -> ShapeAt<T> {
        let (s, c) = theta.sin_cos();
        let p = self.values(c);
        let w = c * p.f1 - p.f2;
        ShapeAt {
            sin: s,
            cos: c,
            f1: p.f1,
            f2: p.f2,
            df1: p.df1,
            df2: p.df2,
            a1: p.f1 * s,
            a2: s * w,
            z: s * s * p.f1 + c * p.f2,
            rp: p.f1,
            rm: p.df2,
            da1: -p.df1 * s * s + p.f1 * c,
            da2: c * w - s * s * (p.f1 + c * p.df1 - p.df2),
        }
    }

    /// `|Rp - Rm|` at the two poles.
    pub fn pole_gap(&self) -> f64 {
        let n = self.values::<f64>(1.0);
        let s = self.values::<f64>(-1.0);
        (n.f1 - n.df2).abs().max((s.f1 - s.df2).abs())
    }

    /// Checks the basic parameter ranges.
    pub fn check_params(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProfile(m));
        match self {
            Self::Sphere { radius } if !(*radius > 0.0) => bad(format!("radius must be positive, got {radius}")),
            Self::OffsetSphere { radius, offset } if !(*radius > 0.0 && offset.abs() < *radius) => {
                bad(format!("need radius > |offset|, got radius {radius}, offset {offset}"))
            }
            Self::Ellipsoid { a, c } if !(*a > 0.0 && *c > 0.0) => bad(format!("semi-axes must be positive, got {a}, {c}")),
            Self::Polynomial { f1, f2 } if f1.is_empty() || f2.is_empty() => bad("empty polynomial".into()),
            _ => Ok(()),
        }
    }

    /// Full geometric validation: convexity proxy, pole matching and the
    /// compatibility identity `sin da1/dtheta + cos df2/dtheta = 0`.
    pub fn validate(&self) -> Result<()> {
        self.check_params()?;
        let gap = self.pole_gap();
        if gap > 1e-8 {
            return Err(Error::InvalidProfile(format!("Rp and Rm differ by {gap:.3e} at a pole")));
        }
        for i in 0..=400 {
            let theta = std::f64::consts::PI * f64::from(i) / 400.0;
            let s = self.at::<f64>(theta);
            if !(s.rp > 0.0 && s.rm > 0.0) {
                return Err(Error::InvalidProfile(format!("Rp or Rm not positive at theta = {theta}")));
            }
            let ident = s.sin * s.da1 - s.cos * s.sin * s.df2;
            if ident.abs() > 1e-8 {
                return Err(Error::InvalidProfile(format!(
                    "profile identity violated by {ident:.3e} at theta = {theta}"
                )));
            }
        }
        Ok(())
    }
}
