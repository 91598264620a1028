//! Rotation-group helpers shared by the rod integrator and the pose metrics.
//!
//! Quaternions here always map body (local) coordinates to world
//! coordinates. Logarithms use the `w >= 0` hemisphere; at exactly half a
//! turn the axis sign is fixed so that its largest-magnitude component is
//! positive, which is the quaternion form of "pick the axis with the largest
//! diagonal entry of the rotation matrix".

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

const SMALL_ANGLE: f64 = 1e-6;

pub fn hat(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map from a rotation vector to a unit quaternion.
pub fn exp(phi: &Vec3) -> Quat {
    let theta2 = phi.norm_squared();
    let (w, k) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
    } else {
        let theta = theta2.sqrt();
        let (s, c) = (0.5 * theta).sin_cos();
        (c, s / theta)
    };
    UnitQuaternion::new_normalize(Quaternion::new(w, k * phi.x, k * phi.y, k * phi.z))
}

/// Logarithm map: rotation vector (axis times angle, angle in `[0, pi]`).
pub fn log(q: &Quat) -> Vec3 {
    let q = q.quaternion();
    let (mut w, mut v) = (q.w, q.imag());
    if w < 0.0 {
        w = -w;
        v = -v;
    } else if w == 0.0 {
        let lead = (0..3)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        if v[lead] < 0.0 {
            v = -v;
        }
    }
    let s = v.norm();
    if s < SMALL_ANGLE {
        // atan2(s, w) / s expanded around s = 0
        let factor = 2.0 / w * (1.0 - s * s / (3.0 * w * w));
        return v * factor;
    }
    v * (2.0 * s.atan2(w) / s)
}

/// Rotation angle in `[0, pi]`.
pub fn angle(q: &Quat) -> f64 {
    log(q).norm()
}

/// Relative rotation `a^-1 * b`, expressed in the body frame of `a`.
#[inline]
pub fn between(a: &Quat, b: &Quat) -> Quat {
    a.inverse() * b
}

/// Coefficient of `[theta]x^2` in the inverse SO(3) Jacobians.
fn jacobian_inv_quadratic(theta: f64) -> f64 {
    if theta < 1e-3 {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    }
}

/// `J_r^{-1}(theta) * c`, where `log(exp(theta) exp(d)) ~ theta + J_r^{-1} d`.
pub fn right_jacobian_inv_mul(theta: &Vec3, c: &Vec3) -> Vec3 {
    let b = jacobian_inv_quadratic(theta.norm());
    let tc = theta.cross(c);
    c + 0.5 * tc + b * theta.cross(&tc)
}

/// `J_l^{-1}(theta) * c`, where `log(exp(d) exp(theta)) ~ theta + J_l^{-1} d`.
pub fn left_jacobian_inv_mul(theta: &Vec3, c: &Vec3) -> Vec3 {
    let b = jacobian_inv_quadratic(theta.norm());
    let tc = theta.cross(c);
    c - 0.5 * tc + b * theta.cross(&tc)
}

/// Shortest rotation carrying unit vector `from` onto unit vector `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Quat {
    let axis = from.cross(to);
    let s = axis.norm();
    let c = from.dot(to).clamp(-1.0, 1.0);
    if s < 1e-12 {
        if c > 0.0 {
            return Quat::identity();
        }
        // antiparallel: any perpendicular axis works; take the most orthogonal basis vector
        let basis = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let perp = from.cross(&basis).normalize();
        return exp(&(perp * std::f64::consts::PI));
    }
    exp(&(axis / s * s.atan2(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exp_log_round_trip_small_and_large() {
        for phi in [
            Vec3::new(1e-9, -2e-9, 3e-9),
            Vec3::new(0.1, 0.2, -0.3),
            Vec3::new(2.0, -1.0, 0.5),
            Vec3::new(0.0, 0.0, PI - 1e-3),
        ] {
            let back = log(&exp(&phi));
            assert!((back - phi).norm() < 1e-13, "{phi:?} -> {back:?}");
        }
    }

    #[test]
    fn half_turn_axis_sign_is_deterministic() {
        let q = UnitQuaternion::new_normalize(Quaternion::new(0.0, 0.0, -0.6, -0.8));
        let v = log(&q);
        assert!((v.norm() - PI).abs() < 1e-15);
        assert!(v.z > 0.0 && v.y > 0.0);
        let q2 = UnitQuaternion::new_normalize(Quaternion::new(0.0, 0.0, 0.6, 0.8));
        assert_eq!(log(&q2), v);
    }

    #[test]
    fn inverse_jacobians_match_finite_differences() {
        let theta = Vec3::new(0.3, -0.2, 0.45);
        let base = exp(&theta);
        let h = 1e-6;
        for k in 0..3 {
            let mut d = Vec3::zeros();
            d[k] = h;
            let right = (log(&(base * exp(&d))) - log(&(base * exp(&-d)))) / (2.0 * h);
            let left = (log(&(exp(&d) * base)) - log(&(exp(&-d) * base))) / (2.0 * h);
            let mut e = Vec3::zeros();
            e[k] = 1.0;
            // columns of the inverse Jacobians
            let jr = right_jacobian_inv_mul(&theta, &e);
            let jl = left_jacobian_inv_mul(&theta, &e);
            assert!((right - jr).norm() < 1e-8, "right col {k}: {right:?} vs {jr:?}");
            assert!((left - jl).norm() < 1e-8, "left col {k}: {left:?} vs {jl:?}");
        }
    }

    #[test]
    fn rotation_between_aligns_vectors() {
        let a = Vec3::new(0.0, 0.0, -1.0);
        for b in [Vec3::new(0.3, 0.4, -0.866).normalize(), Vec3::new(0.0, 0.0, 1.0), a] {
            let q = rotation_between(&a, &b);
            assert!((q * a - b).norm() < 1e-12);
        }
    }
}
