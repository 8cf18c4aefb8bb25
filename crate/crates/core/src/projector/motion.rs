//! Steady affine motion: a global transform interpolated in time by
//! fractional powers of a homogeneous matrix.

use nalgebra::{Matrix3, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::grid::Vec3;

/// `M(t)(x) = A^((t - t_r) / (t1 - t0)) x`, mapping reconstruction
/// coordinates to acquisition coordinates at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMotionModel {
    a: Matrix4<f64>,
    log_a: Matrix4<f64>,
    pub t0: f64,
    pub t1: f64,
    pub t_r: f64,
}

impl AffineMotionModel {
    pub fn new(a: Matrix4<f64>, t0: f64, t1: f64, t_r: f64) -> Result<Self> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() || !t_r.is_finite() {
            return Err(Error::invalid("affine motion needs finite t0 < t1 and t_r"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("affine matrix must be finite"));
        }
        let bottom = a.fixed_view::<1, 4>(3, 0);
        if bottom[(0, 0)] != 0.0 || bottom[(0, 1)] != 0.0 || bottom[(0, 2)] != 0.0 || bottom[(0, 3)] != 1.0 {
            return Err(Error::invalid("affine matrix must have homogeneous last row [0 0 0 1]"));
        }
        let linear: Matrix3<f64> = a.fixed_view::<3, 3>(0, 0).into_owned();
        let scale = linear.norm().max(1.0);
        if linear.determinant().abs() <= 1e-12 * scale * scale * scale {
            return Err(Error::invalid("affine matrix is singular"));
        }
        for ev in linear.complex_eigenvalues().iter() {
            if ev.im.abs() <= 1e-12 * scale && ev.re <= 0.0 {
                return Err(Error::invalid(format!(
                    "affine matrix has eigenvalue {} on the closed negative real axis; no real logarithm",
                    ev.re
                )));
            }
        }
        let log_a = real_log(&a)?;
        Ok(Self { a, log_a, t0, t1, t_r })
    }

    pub fn translation(d: Vec3, t0: f64, t1: f64, t_r: f64) -> Result<Self> {
        let mut a = Matrix4::identity();
        a[(0, 3)] = d.x;
        a[(1, 3)] = d.y;
        a[(2, 3)] = d.z;
        Self::new(a, t0, t1, t_r)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.a
    }

    fn exponent(&self, t: f64) -> f64 {
        (t - self.t_r) / (self.t1 - self.t0)
    }

    /// The homogeneous transform at time `t`.
    pub fn matrix_at(&self, t: f64) -> Matrix4<f64> {
        let s = self.exponent(t);
        if s == 0.0 {
            Matrix4::identity()
        } else {
            (self.log_a * s).exp()
        }
    }

    pub fn inverse_matrix_at(&self, t: f64) -> Matrix4<f64> {
        let s = self.exponent(t);
        if s == 0.0 {
            Matrix4::identity()
        } else {
            (self.log_a * -s).exp()
        }
    }

    pub fn apply(&self, x: Vec3, t: f64) -> Vec3 {
        transform_point(&self.matrix_at(t), x)
    }

    pub fn apply_inverse(&self, x: Vec3, t: f64) -> Vec3 {
        transform_point(&self.inverse_matrix_at(t), x)
    }
}

/// Applies a homogeneous transform to a point.
pub fn apply_affine_motion(x: Vec3, t: f64, model: &AffineMotionModel) -> Vec3 {
    model.apply(x, t)
}

#[inline]
pub(crate) fn transform_point(m: &Matrix4<f64>, x: Vec3) -> Vec3 {
    let h = m * Vector4::new(x.x, x.y, x.z, 1.0);
    Vec3::new(h.x, h.y, h.z)
}

#[inline]
pub(crate) fn transform_vector(m: &Matrix4<f64>, v: Vec3) -> Vec3 {
    let h = m * Vector4::new(v.x, v.y, v.z, 0.0);
    Vec3::new(h.x, h.y, h.z)
}

/// Principal real logarithm by inverse scaling and squaring: take
/// Denman-Beavers square roots until the matrix is near identity, sum the
/// Mercator series there, then scale back up.
fn real_log(a: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let id = Matrix4::<f64>::identity();
    let mut x = *a;
    let mut halvings = 0u32;
    while (x - id).norm() > 0.25 {
        if halvings >= 60 {
            return Err(Error::Numerical("matrix logarithm did not converge".into()));
        }
        x = sqrt_denman_beavers(&x)?;
        halvings += 1;
    }
    let y = x - id;
    let mut term = y;
    let mut log = Matrix4::zeros();
    for n in 1..200 {
        let contrib = term / n as f64;
        if n % 2 == 1 {
            log += contrib;
        } else {
            log -= contrib;
        }
        if contrib.norm() < 1e-18 {
            break;
        }
        term *= y;
    }
    Ok(log * 2f64.powi(halvings as i32))
}

fn sqrt_denman_beavers(a: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let mut y = *a;
    let mut z = Matrix4::<f64>::identity();
    for _ in 0..100 {
        let yi = y.try_inverse().ok_or_else(|| Error::Numerical("singular iterate in matrix square root".into()))?;
        let zi = z.try_inverse().ok_or_else(|| Error::Numerical("singular iterate in matrix square root".into()))?;
        let y_next = 0.5 * (y + zi);
        let z_next = 0.5 * (z + yi);
        let delta = (y_next - y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            return Ok(y);
        }
    }
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(Error::Numerical("matrix square root diverged".into()))
    }
}
