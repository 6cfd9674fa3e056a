//! Gaussian primitive and camera models.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::scalar::Real;

/// Quaternion norm tolerance for [`GaussianPrimitive`] validation.
pub const UNIT_QUAT_TOL: f64 = 1e-6;
/// Orthonormality tolerance for the rotation block of a view transform.
pub const VIEW_ORTHO_TOL: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("quaternion norm {norm} deviates from 1 beyond tolerance")]
    NonUnitQuaternion { norm: f64 },
    #[error("scale components must be positive and finite")]
    InvalidScale,
    #[error("opacity {0} outside [0, 1]")]
    InvalidOpacity(f64),
    #[error("non-finite component in primitive")]
    NonFinite,
    #[error("color coefficient count {0} is not a positive multiple of 3")]
    InvalidColorLength(usize),
    #[error("camera focal lengths must be positive")]
    InvalidFocal,
    #[error("view rotation block is not orthonormal within {VIEW_ORTHO_TOL}")]
    NonRigidView,
}

/// One anisotropic 3D Gaussian: position, per-axis scales, rotation,
/// opacity and spherical-harmonic color coefficients.
///
/// Stored values are post-activation: scales are linear (not log),
/// opacity is in `[0, 1]` (not a logit).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive<S> {
    pub position: Vector3<S>,
    pub scale: Vector3<S>,
    /// Unit quaternion as `(w, x, y, z)`.
    pub rotation: [S; 4],
    pub opacity: S,
    /// `3 * (deg + 1)^2` coefficients; the first three are the DC terms.
    pub color: Vec<S>,
}

impl<S: Real> GaussianPrimitive<S> {
    pub fn rotation_quaternion(&self) -> UnitQuaternion<S> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    /// Checks every invariant: unit rotation, positive scales, opacity in
    /// `[0, 1]`, finite components, color length a positive multiple of 3.
    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = |v: S| v.as_f64().is_finite();
        if !self.position.iter().all(|&v| finite(v))
            || !self.scale.iter().all(|&v| finite(v))
            || !self.rotation.iter().all(|&v| finite(v))
            || !finite(self.opacity)
            || !self.color.iter().all(|&v| finite(v))
        {
            return Err(ModelError::NonFinite);
        }
        if self.scale.iter().any(|&v| v <= S::zero()) {
            return Err(ModelError::InvalidScale);
        }
        let norm = self
            .rotation
            .iter()
            .map(|&v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > UNIT_QUAT_TOL {
            return Err(ModelError::NonUnitQuaternion { norm });
        }
        let alpha = self.opacity.as_f64();
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ModelError::InvalidOpacity(alpha));
        }
        if self.color.is_empty() || !self.color.len().is_multiple_of(3) {
            return Err(ModelError::InvalidColorLength(self.color.len()));
        }
        Ok(())
    }
}

/// Pinhole camera with a rigid world-to-camera transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
    /// 4x4 rigid world -> camera transform; upper-left 3x3 is the rotation.
    pub view: Matrix4<S>,
}

impl<S: Real> CameraModel<S> {
    pub fn new(
        fx: S,
        fy: S,
        cx: S,
        cy: S,
        width: u32,
        height: u32,
        view: Matrix4<S>,
    ) -> Result<Self, ModelError> {
        if fx <= S::zero() || fy <= S::zero() {
            return Err(ModelError::InvalidFocal);
        }
        let rot = view.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = rot.transpose() * rot;
        let dev = (gram - Matrix3::identity())
            .iter()
            .map(|v| v.as_f64().abs())
            .fold(0.0, f64::max);
        if !dev.is_finite() || dev > VIEW_ORTHO_TOL {
            return Err(ModelError::NonRigidView);
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            view,
        })
    }

    /// Rotation block of the view transform.
    pub fn view_rotation(&self) -> Matrix3<S> {
        self.view.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// World point mapped to camera space.
    pub fn to_camera(&self, point: &Vector3<S>) -> Vector3<S> {
        let p = self.view * point.push(S::one());
        Vector3::new(p.x, p.y, p.z)
    }
}

/// Axis-aligned bounding-box center of a set of Gaussian positions.
///
/// This is the default projection origin recorded in the sidecar.
pub fn scene_center<S: Real>(gaussians: &[GaussianPrimitive<S>]) -> Vector3<S> {
    if gaussians.is_empty() {
        return Vector3::zeros();
    }
    let mut lo = gaussians[0].position;
    let mut hi = gaussians[0].position;
    for g in gaussians {
        for i in 0..3 {
            lo[i] = lo[i].min(g.position[i]);
            hi[i] = hi[i].max(g.position[i]);
        }
    }
    (lo + hi) * S::from_f64_lossy(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit<S: Real>() -> GaussianPrimitive<S> {
        GaussianPrimitive {
            position: Vector3::new(S::one(), S::zero(), S::zero()),
            scale: Vector3::new(S::one(), S::one(), S::one()),
            rotation: [S::one(), S::zero(), S::zero(), S::zero()],
            opacity: S::from_f64_lossy(0.5),
            color: vec![S::zero(); 3],
        }
    }

    #[test]
    fn valid_primitive_passes() {
        unit::<f64>().validate().unwrap();
        unit::<f32>().validate().unwrap();
    }

    #[test]
    fn bad_quaternion_rejected() {
        let mut g = unit::<f64>();
        g.rotation = [0.5, 0.0, 0.0, 0.0];
        assert!(matches!(
            g.validate(),
            Err(ModelError::NonUnitQuaternion { .. })
        ));
    }

    #[test]
    fn bad_scale_rejected() {
        let mut g = unit::<f64>();
        g.scale.y = 0.0;
        assert_eq!(g.validate(), Err(ModelError::InvalidScale));
    }

    #[test]
    fn bad_opacity_rejected() {
        let mut g = unit::<f64>();
        g.opacity = 1.5;
        assert!(matches!(g.validate(), Err(ModelError::InvalidOpacity(_))));
    }

    #[test]
    fn nan_rejected() {
        let mut g = unit::<f64>();
        g.position.x = f64::NAN;
        assert_eq!(g.validate(), Err(ModelError::NonFinite));
    }

    #[test]
    fn camera_requires_orthonormal_rotation() {
        let mut view = Matrix4::identity();
        view[(0, 0)] = 2.0;
        assert_eq!(
            CameraModel::new(1.0, 1.0, 0.0, 0.0, 8, 8, view).unwrap_err(),
            ModelError::NonRigidView
        );
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 8, 8, Matrix4::identity()).is_ok());
    }

    #[test]
    fn scene_center_is_bbox_center() {
        let mut a = unit::<f64>();
        a.position = Vector3::new(-1.0, 2.0, 0.0);
        let mut b = unit::<f64>();
        b.position = Vector3::new(3.0, -4.0, 10.0);
        let c = scene_center(&[a, b]);
        assert_eq!(c, Vector3::new(1.0, -1.0, 5.0));
    }
}
