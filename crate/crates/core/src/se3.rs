//! Rigid poses, the weighted SE(3) log distance, and the tracking rewards
//! built on it.

use std::cmp::Ordering;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::so3::{self, Quat, Vec3};

/// Default rotation weight in the pose distance.
pub const DEFAULT_ALPHA: f64 = 0.2;
/// Translational success threshold (m), exclusive.
pub const SUCCESS_TRANSLATION: f64 = 0.03;
/// Rotational success threshold (rad), exclusive.
pub const SUCCESS_ROTATION: f64 = 0.3;

/// Element of SE(3). `rotation` maps body coordinates into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Quat::identity(), translation: Vec3::zeros() }
    }

    pub fn new(translation: Vec3, rotation: Quat) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Quat::identity(), translation }
    }

    /// Builds a pose from `[w, x, y, z]` quaternion components, normalizing them.
    /// Fails when the components are not within 1e-6 of unit norm.
    pub fn from_parts(translation: [f64; 3], wxyz: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 || translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "pose must have finite translation and unit quaternion, got |q| = {n}"
            )));
        }
        // keep stored bits when already unit to within rounding, so files round-trip exactly
        let rotation = if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Self {
            rotation,
            translation: Vec3::from(translation),
        })
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        Self { translation: -(rotation * self.translation), rotation }
    }

    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.translation + self.rotation * p
    }

    fn sort_key(&self) -> [f64; 7] {
        let [w, x, y, z] = self.wxyz();
        [self.translation.x, self.translation.y, self.translation.z, w, x, y, z]
    }

    fn canonical_cmp(&self, other: &Pose) -> Ordering {
        let (a, b) = (self.sort_key(), other.sort_key());
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    translation: [f64; 3],
    rotation: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRepr { translation: self.translation.into(), rotation: self.wxyz() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        Pose::from_parts(r.translation, r.rotation).map_err(serde::de::Error::custom)
    }
}

/// Decomposed pose error: twist coordinates of `P^-1 * P_target` and the
/// scalar distance `d = |d_p| + alpha |d_r|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseDiff {
    pub d_p: [f64; 3],
    pub d_r: [f64; 3],
    pub d: f64,
    pub alpha: f64,
}

impl PoseDiff {
    pub fn translation_norm(&self) -> f64 {
        Vec3::from(self.d_p).norm()
    }

    pub fn rotation_norm(&self) -> f64 {
        Vec3::from(self.d_r).norm()
    }
}

/// SE(3) logarithm `(rho, omega)` of `pose`.
pub fn se3_log(pose: &Pose) -> (Vec3, Vec3) {
    let omega = so3::log(&pose.rotation);
    // V^-1 of the SE(3) log coincides with the inverse left Jacobian of SO(3)
    let rho = so3::left_jacobian_inv_mul(&omega, &pose.translation);
    (rho, omega)
}

/// SE(3) exponential of twist `(rho, omega)`.
pub fn se3_exp(rho: &Vec3, omega: &Vec3) -> Pose {
    let theta2 = omega.norm_squared();
    let (a, b) = if theta2 < 1e-8 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    let wr = omega.cross(rho);
    let translation = rho + a * wr + b * omega.cross(&wr);
    Pose { rotation: so3::exp(omega), translation }
}

/// Pose difference from `current` to `target`.
///
/// The relative transform is always evaluated in a canonical order of the
/// two poses and negated when needed, so `pose_log(a, b).d` and
/// `pose_log(b, a).d` are bit-identical.
pub fn pose_log(current: &Pose, target: &Pose, alpha: f64) -> PoseDiff {
    let (rho, omega) = match current.canonical_cmp(target) {
        Ordering::Greater => {
            let (r, w) = se3_log(&target.inverse().compose(current));
            (-r, -w)
        }
        Ordering::Less => se3_log(&current.inverse().compose(target)),
        Ordering::Equal => (Vec3::zeros(), Vec3::zeros()),
    };
    PoseDiff {
        d_p: rho.into(),
        d_r: omega.into(),
        d: rho.norm() + alpha * omega.norm(),
        alpha,
    }
}

pub fn success(diff: &PoseDiff) -> bool {
    diff.translation_norm() < SUCCESS_TRANSLATION && diff.rotation_norm() < SUCCESS_ROTATION
}

/// Parameters of the distance reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdParams {
    pub k1: f64,
    pub k2: f64,
    pub d1: f64,
    pub d2: f64,
    pub lambda: f64,
}

impl Default for RdParams {
    fn default() -> Self {
        Self::with_lambda(1.0)
    }
}

impl RdParams {
    /// Bonuses 0.5 / 1.5 with thresholds 0.1/lambda and 0.05/lambda.
    pub fn with_lambda(lambda: f64) -> Self {
        Self { k1: 0.5, k2: 1.5, d1: 0.1 / lambda, d2: 0.05 / lambda, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.d2 < self.d1) || !(self.d2 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "reward thresholds need 0 < d2 < d1 and lambda > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Parameters of the stability reward. `beta = 0` disables it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsParams {
    pub beta: f64,
    pub big_d: f64,
}

impl Default for RsParams {
    fn default() -> Self {
        Self { beta: 1.0, big_d: 0.3 }
    }
}

impl RsParams {
    pub fn disabled() -> Self {
        Self { beta: 0.0, big_d: 0.3 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !(self.big_d >= 0.0) {
            return Err(Error::InvalidConfig(format!("stability reward needs beta, D >= 0, got {self:?}")));
        }
        Ok(())
    }
}

pub fn reward_d(d: f64, p: &RdParams) -> f64 {
    let mut r = -d;
    if d < p.d1 {
        r += p.k1;
    }
    if d < p.d2 {
        r += p.k2;
    }
    r
}

/// Stability reward with the time derivative of `d` replaced by the
/// one-control-step backward difference.
pub fn reward_s(d: f64, d_prev: f64, p: &RsParams) -> f64 {
    if d > p.big_d {
        return 0.0;
    }
    let rate = d - d_prev;
    let sign = if rate > 0.0 {
        1.0
    } else if rate < 0.0 {
        -1.0
    } else {
        0.0
    };
    -sign * p.beta
}

/// Population variance of the last `window` values.
pub fn stability_variance(series: &[f64], window: usize) -> Result<f64> {
    if window == 0 || series.len() < window {
        return Err(Error::SeriesTooShort { len: series.len(), window });
    }
    let tail = &series[series.len() - window..];
    let n = window as f64;
    // shifted by the first sample so a constant window gives exactly zero
    let shift = tail[0];
    let (sum, sum_sq) = tail.iter().fold((0.0, 0.0), |(s, q), x| (s + (x - shift), q + (x - shift) * (x - shift)));
    Ok(((sum_sq - sum * sum / n) / n).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identical_poses_have_zero_distance() {
        let p = Pose::new(Vec3::new(0.1, -0.4, 0.7), so3::exp(&Vec3::new(0.2, 0.1, -0.3)));
        let diff = pose_log(&p, &p, DEFAULT_ALPHA);
        assert_eq!(diff.d, 0.0);
        assert_eq!(diff.d_p, [0.0; 3]);
        assert_eq!(diff.d_r, [0.0; 3]);
    }

    #[test]
    fn pure_translation_distance() {
        let a = Pose::identity();
        let b = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(pose_log(&a, &b, 0.2).d, 1.0);
    }

    #[test]
    fn quarter_turn_about_z() {
        let a = Pose::identity();
        let b = Pose::new(Vec3::zeros(), so3::exp(&Vec3::new(0.0, 0.0, FRAC_PI_2)));
        let d = pose_log(&a, &b, 0.2).d;
        assert!((d - 0.2 * FRAC_PI_2).abs() < 1e-15, "{d}");
        assert!((d - 0.31416).abs() < 1e-5);
    }

    #[test]
    fn reward_d_table() {
        let p = RdParams::default();
        assert_eq!(reward_d(0.2, &p), -0.2);
        assert_eq!(reward_d(0.07, &p), -0.07 + 0.5);
        assert!((reward_d(0.07, &p) - 0.43).abs() < 1e-15);
        assert_eq!(reward_d(0.0, &p), 2.0);
        // strict thresholds
        assert_eq!(reward_d(0.1, &p), -0.1);
        assert_eq!(reward_d(0.05, &p), -0.05 + 0.5);
    }

    #[test]
    fn lambda_scales_thresholds() {
        let p = RdParams::with_lambda(2.0);
        assert_eq!((p.d1, p.d2), (0.05, 0.025));
        assert!(RdParams { d1: 0.01, ..RdParams::default() }.validate().is_err());
    }

    #[test]
    fn reward_s_cases() {
        let p = RsParams::default();
        assert_eq!(reward_s(0.2, 0.25, &p), 1.0);
        assert_eq!(reward_s(0.25, 0.2, &p), -1.0);
        assert_eq!(reward_s(0.5, 0.1, &p), 0.0);
        assert_eq!(reward_s(0.2, 0.2, &p), 0.0);
        assert_eq!(reward_s(0.3, 0.4, &p), 1.0, "activation radius is inclusive");
    }

    #[test]
    fn variance_cases() {
        assert_eq!(stability_variance(&[0.4; 20], 10).unwrap(), 0.0);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.1 } else { 0.3 }).collect();
        assert!((stability_variance(&alt, 100).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(stability_variance(&[1.0, 2.0, 3.0, 4.0], 4).unwrap(), 1.25);
        assert!(matches!(
            stability_variance(&[1.0, 2.0], 3),
            Err(Error::SeriesTooShort { len: 2, window: 3 })
        ));
    }

    #[test]
    fn success_thresholds() {
        let mk = |p: [f64; 3], r: [f64; 3]| PoseDiff { d_p: p, d_r: r, d: 0.0, alpha: 0.2 };
        assert!(success(&mk([0.01, 0.0, 0.0], [0.1, 0.0, 0.0])));
        assert!(!success(&mk([0.03, 0.0, 0.0], [0.0; 3])));
        assert!(!success(&mk([0.0; 3], [0.0, 0.0, 0.31])));
    }

    #[test]
    fn pose_json_round_trip_is_exact() {
        let p = Pose::new(Vec3::new(0.1, 0.2, 0.3), so3::exp(&Vec3::new(0.3, -0.2, 0.1)));
        let s = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Pose>(r#"{"translation":[0,0,0],"rotation":[2,0,0,0]}"#).is_err());
    }
}
