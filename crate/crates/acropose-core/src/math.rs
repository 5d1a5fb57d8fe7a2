//! Small numerical helpers: axis-angle rotations and their derivatives,
//! rigid transforms, interpolation.
//!
//! Rotations are parameterized as axis-angle vectors `w` (rotation by |w|
//! radians about w/|w|), the same convention used for body pose parameters.

use nalgebra::{Matrix3, Vector3};

/// Skew-symmetric cross-product matrix: `skew(w) * v == w × v`.
#[inline]
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix from an axis-angle vector (Rodrigues formula).
///
/// Uses series expansions of sin(t)/t and (1-cos(t))/t^2 near zero so the
/// result is smooth through the origin.
pub fn rotation_from_axis_angle(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let (a, b) = sinc_coeffs(theta2);
    let k = skew(w);
    Matrix3::identity() + k * a + k * k * b
}

/// (sin(t)/t, (1-cos(t))/t^2) given t^2, stable for small t.
#[inline]
fn sinc_coeffs(theta2: f64) -> (f64, f64) {
    if theta2 < 1e-12 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        ((theta.sin()) / theta, (1.0 - theta.cos()) / theta2)
    }
}

/// Rotation matrix together with its partial derivatives with respect to the
/// three axis-angle components: `jac[i] = ∂R/∂w_i`.
///
/// Closed form after Gallego & Yezzi; switches to the series form below
/// 1e-4 rad where the exact expression loses digits to cancellation.
pub fn rotation_with_jacobian(w: &Vector3<f64>) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let r = rotation_from_axis_angle(w);
    let theta2 = w.norm_squared();
    let mut jac = [Matrix3::zeros(); 3];
    if theta2 < 1e-8 {
        // d/dw_i of (I + [w]x + 1/2 [w]x^2)
        let k = skew(w);
        for i in 0..3 {
            let ei = skew(&unit(i));
            jac[i] = ei + (ei * k + k * ei) * 0.5;
        }
    } else {
        let i_minus_r = Matrix3::identity() - r;
        for i in 0..3 {
            let col: Vector3<f64> = i_minus_r.column(i).into();
            let v = w[i] * w + w.cross(&col);
            jac[i] = (skew(&v) * r) / theta2;
        }
    }
    (r, jac)
}

#[inline]
fn unit(i: usize) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    v[i] = 1.0;
    v
}

/// Canonical axis-angle (|w| in [0, π]) from a rotation matrix.
pub fn axis_angle_from_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let skew_part = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < 1e-7 {
        return skew_part * 0.5;
    }
    if (std::f64::consts::PI - theta) < 1e-5 {
        // Near π the skew part vanishes; recover the axis from the symmetric part.
        let m = (r + Matrix3::identity()) * 0.5;
        let mut axis = Vector3::new(m[(0, 0)].max(0.0).sqrt(), m[(1, 1)].max(0.0).sqrt(), m[(2, 2)].max(0.0).sqrt());
        // Fix signs using the largest component.
        let k = axis.imax();
        if axis[k] > 0.0 {
            for i in 0..3 {
                if i != k {
                    let off = (m[(k, i)] + m[(i, k)]) * 0.5;
                    axis[i] = off / axis[k];
                }
            }
        }
        let axis = axis.normalize();
        // Sign of the axis is still ambiguous at exactly π; pin it with the skew part
        // when it is not exactly zero.
        let sign = if skew_part.dot(&axis) < 0.0 { -1.0 } else { 1.0 };
        return axis * theta * sign;
    }
    skew_part * (theta / (2.0 * theta.sin()))
}

/// The axis-angle representative of `r` closest to `reference`.
///
/// Rotation matrices identify axis-angle vectors up to `axis·(θ + 2πk)`;
/// this picks the branch that keeps a trajectory continuous.
pub fn axis_angle_near(r: &Matrix3<f64>, reference: &Vector3<f64>) -> Vector3<f64> {
    let canonical = axis_angle_from_rotation(r);
    let theta = canonical.norm();
    let two_pi = 2.0 * std::f64::consts::PI;
    let axis = if theta > 1e-9 {
        canonical / theta
    } else if reference.norm() > 1e-9 {
        reference.normalize()
    } else {
        return canonical;
    };
    let mut best = canonical;
    let mut best_d = (canonical - reference).norm_squared();
    for k in -3i32..=3 {
        let cand = axis * (theta + two_pi * f64::from(k));
        let d = (cand - reference).norm_squared();
        if d < best_d {
            best_d = d;
            best = cand;
        }
    }
    best
}

/// Shortest-arc interpolation between two rotations given as axis-angle,
/// returning an axis-angle continuous with `a` at t=0.
pub fn slerp_axis_angle(a: &Vector3<f64>, b: &Vector3<f64>, t: f64) -> Vector3<f64> {
    let ra = rotation_from_axis_angle(a);
    let rb = rotation_from_axis_angle(b);
    let rel = axis_angle_from_rotation(&(ra.transpose() * rb));
    let r = ra * rotation_from_axis_angle(&(rel * t));
    // Keep the result on the same winding branch as the endpoints.
    let reference = a + (b - a) * t;
    axis_angle_near(&r, &reference)
}

/// A rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rot: Matrix3::identity(),
            trans: Vector3::zeros(),
        }
    }

    pub fn new(rot: Matrix3<f64>, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.trans
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    #[inline]
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rot: self.rot * other.rot,
            trans: self.rot * other.trans + self.trans,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rot.transpose();
        RigidTransform {
            rot: rt,
            trans: -(rt * self.trans),
        }
    }

    /// Rotation by `rot` about a fixed point `center`.
    pub fn rotation_about(rot: Matrix3<f64>, center: &Vector3<f64>) -> RigidTransform {
        RigidTransform {
            rot,
            trans: center - rot * center,
        }
    }
}

/// Cubic smoothstep on [0, 1], clamped outside.
#[inline]
pub fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}
