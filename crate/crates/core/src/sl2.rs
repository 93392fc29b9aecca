//! Real 2×2 matrices of determinant one.
//!
//! Everything here is a plain value type; long products go through
//! [`ProductAccumulator`] (determinant renormalization) or [`ScaledMat2`]
//! (log-domain scale, for products whose entries would overflow).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `|trace| - 2` used for classification.
pub const TOL_HYP: f64 = 1e-9;
/// Tolerance on the determinant of unimodular values.
pub const TOL_DET: f64 = 1e-9;
/// Number of factors between two determinant renormalizations.
pub const RENORM_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceClass {
    Elliptic,
    Parabolic,
    Hyperbolic,
    PlusMinusIdentity,
}

/// A point of the upper half-plane, `im > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub re: f64,
    pub im: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    /// Builds a matrix and checks that its determinant is one.
    pub fn unimodular(a11: f64, a12: f64, a21: f64, a22: f64) -> Result<Self> {
        let m = Mat2::new(a11, a12, a21, a22);
        if (m.det() - 1.0).abs() > TOL_DET {
            return Err(Error::InvalidArgument(format!(
                "determinant {} is not 1",
                m.det()
            )));
        }
        Ok(m)
    }

    /// Rotation by `theta` (counterclockwise).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        Mat2 {
            a11: self.a11 * rhs.a11 + self.a12 * rhs.a21,
            a12: self.a11 * rhs.a12 + self.a12 * rhs.a22,
            a21: self.a21 * rhs.a11 + self.a22 * rhs.a21,
            a22: self.a21 * rhs.a12 + self.a22 * rhs.a22,
        }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn sub(&self, rhs: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 - rhs.a11,
            self.a12 - rhs.a12,
            self.a21 - rhs.a21,
            self.a22 - rhs.a22,
        )
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    /// Inverse, assuming determinant one.
    pub fn inverse_unimodular(&self) -> Mat2 {
        Mat2::new(self.a22, -self.a12, -self.a21, self.a11)
    }

    /// General inverse.
    pub fn inverse(&self) -> Mat2 {
        let d = self.det();
        Mat2::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d)
    }

    pub fn powi(&self, n: u32) -> Mat2 {
        let mut acc = Mat2::IDENTITY;
        for _ in 0..n {
            acc = self.mul(&acc);
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    pub fn approx_eq(&self, other: &Mat2, tol: f64) -> bool {
        self.sub(other).max_abs() <= tol
    }

    /// Divides by `sqrt(det)` so the determinant returns to one.
    pub fn renormalized(&self) -> Mat2 {
        let d = self.det();
        if d > 0.0 && d.is_finite() {
            self.scale(1.0 / d.sqrt())
        } else {
            *self
        }
    }

    pub fn classify(&self, tol_hyp: f64) -> TraceClass {
        let t = self.trace().abs();
        if t > 2.0 + tol_hyp {
            TraceClass::Hyperbolic
        } else if t < 2.0 - tol_hyp {
            TraceClass::Elliptic
        } else if self.approx_eq(&Mat2::IDENTITY, tol_hyp)
            || self.approx_eq(&Mat2::IDENTITY.scale(-1.0), tol_hyp)
        {
            TraceClass::PlusMinusIdentity
        } else {
            TraceClass::Parabolic
        }
    }

    /// Largest eigenvalue modulus of a unimodular matrix.
    pub fn spectral_radius(&self) -> f64 {
        let t = self.trace().abs();
        if t < 2.0 {
            1.0
        } else {
            0.5 * (t + (t * t - 4.0).sqrt())
        }
    }

    /// Möbius action `z -> (a z + b) / (c z + d)` on a complex number
    /// given as `(re, im)`.
    pub fn mobius(&self, z: (f64, f64)) -> (f64, f64) {
        let (x, y) = z;
        let (nr, ni) = (self.a11 * x + self.a12, self.a11 * y);
        let (dr, di) = (self.a21 * x + self.a22, self.a21 * y);
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }

    /// The fixed point of the Möbius action in the upper half-plane.
    pub fn mobius_fixed_point(&self) -> Result<FixedPoint> {
        if self.classify(TOL_HYP) != TraceClass::Elliptic {
            return Err(Error::NotElliptic {
                trace: self.trace(),
            });
        }
        let t = self.trace();
        let disc = 4.0 * self.det() - t * t;
        let c = self.a21;
        Ok(FixedPoint {
            re: (self.a11 - self.a22) / (2.0 * c),
            im: disc.sqrt() / (2.0 * c.abs()),
        })
    }

    /// Upper-triangular unimodular matrix conjugating `self` into SO(2).
    pub fn conjugator(&self) -> Result<Mat2> {
        let z = self.mobius_fixed_point()?;
        let s = 1.0 / z.im.sqrt();
        Ok(Mat2::new(s, -z.re * s, 0.0, z.im * s))
    }

    /// Squared Hilbert–Schmidt norm.
    pub fn hs_norm_sq(&self) -> f64 {
        self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22
    }

    /// Frobenius norm of `AB - BA`.
    pub fn commutator_norm(&self, other: &Mat2) -> f64 {
        self.mul(other).sub(&other.mul(self)).hs_norm_sq().sqrt()
    }

    /// `‖QᵀQ − I‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        self.transpose().mul(self).sub(&Mat2::IDENTITY).max_abs()
    }
}

/// Left-multiplying product with periodic determinant renormalization.
///
/// `push(B)` maps the running product `P` to `B·P`.
#[derive(Debug, Clone)]
pub struct ProductAccumulator {
    acc: Mat2,
    since_renorm: usize,
}

impl Default for ProductAccumulator {
    fn default() -> Self {
        ProductAccumulator {
            acc: Mat2::IDENTITY,
            since_renorm: 0,
        }
    }
}

impl ProductAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, m: &Mat2) {
        self.acc = m.mul(&self.acc);
        self.since_renorm += 1;
        if self.since_renorm == RENORM_EVERY {
            self.acc = self.acc.renormalized();
            self.since_renorm = 0;
        }
    }

    pub fn finish(self) -> Mat2 {
        self.acc
    }
}

/// A matrix stored as `mat · exp(log_scale)` with `mat` normalized to unit
/// max-entry; survives products whose entries overflow `f64`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledMat2 {
    pub mat: Mat2,
    pub log_scale: f64,
}

impl Default for ScaledMat2 {
    fn default() -> Self {
        ScaledMat2 {
            mat: Mat2::IDENTITY,
            log_scale: 0.0,
        }
    }
}

impl ScaledMat2 {
    /// `self <- m · self`.
    pub fn push(&mut self, m: &Mat2) {
        self.mat = m.mul(&self.mat);
        let n = self.mat.max_abs();
        if !(1e-64..=1e64).contains(&n) && n > 0.0 && n.is_finite() {
            self.mat = self.mat.scale(1.0 / n);
            self.log_scale += n.ln();
        }
    }

    pub fn normalize(&mut self) {
        let n = self.mat.max_abs();
        if n > 0.0 && n.is_finite() {
            self.mat = self.mat.scale(1.0 / n);
            self.log_scale += n.ln();
        }
    }

    /// Trace of the represented matrix (may be infinite).
    pub fn trace(&self) -> f64 {
        let t = self.mat.trace();
        if self.log_scale == 0.0 {
            t
        } else {
            t * self.log_scale.exp()
        }
    }

    /// Natural log of the spectral radius, computed from trace and
    /// determinant of the normalized factor.
    pub fn log_spectral_radius(&self) -> f64 {
        let t = self.mat.trace();
        let d = self.mat.det();
        let disc = t * t - 4.0 * d;
        let r = if disc >= 0.0 {
            0.5 * (t.abs() + disc.sqrt())
        } else {
            d.abs().sqrt()
        };
        r.ln() + self.log_scale
    }

    /// The represented matrix as plain `f64` entries.
    pub fn to_mat2(&self) -> Mat2 {
        self.mat.scale(self.log_scale.exp())
    }
}
