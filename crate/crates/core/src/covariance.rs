//! 3D covariance construction and its EWA projection to image space.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use thiserror::Error;

use crate::gaussian::CameraModel;
use crate::scalar::Real;

/// Low-pass value added to both diagonal entries of the projected covariance.
pub const LOW_PASS: f64 = 0.3;
/// Determinants at or below this are treated as degenerate.
pub const DET_FLOOR: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("camera-space depth {0} is not positive")]
    BehindCamera(f64),
    #[error("projected covariance determinant {0} is degenerate")]
    DegenerateCovariance(f64),
}

/// `R(q) * diag(s^2) * R(q)^T`: symmetric positive definite with
/// eigenvalues `s^2`.
pub fn covariance3d<S: Real>(scale: &Vector3<S>, rotation: &[S; 4]) -> Matrix3<S> {
    let [w, x, y, z] = *rotation;
    let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
    let r = q.to_rotation_matrix();
    let d = Matrix3::from_diagonal(&Vector3::new(
        scale.x * scale.x,
        scale.y * scale.y,
        scale.z * scale.z,
    ));
    r * d * r.transpose()
}

/// Projects a world-space covariance to a 2x2 image-space covariance.
///
/// The world covariance is rotated into camera space, pushed through the
/// perspective Jacobian evaluated at the camera-space mean, and low-pass
/// filtered by adding [`LOW_PASS`] to the diagonal. Also returns the pixel
/// projection of the mean and its camera-space depth.
pub fn project_covariance<S: Real>(
    sigma3d: &Matrix3<S>,
    mu: &Vector3<S>,
    cam: &CameraModel<S>,
) -> Result<(Matrix2<S>, Vector2<S>, S), ProjectionError> {
    let mu_cam = cam.to_camera(mu);
    let z = mu_cam.z;
    if z <= S::zero() {
        return Err(ProjectionError::BehindCamera(z.as_f64()));
    }
    let rot = cam.view_rotation();
    let sigma_cam = rot * sigma3d * rot.transpose();

    let inv_z = S::one() / z;
    let inv_z2 = inv_z * inv_z;
    let jac = Matrix2x3::new(
        cam.fx * inv_z,
        S::zero(),
        -cam.fx * mu_cam.x * inv_z2,
        S::zero(),
        cam.fy * inv_z,
        -cam.fy * mu_cam.y * inv_z2,
    );
    let mut sigma2d = jac * sigma_cam * jac.transpose();
    let low_pass = S::from_f64_lossy(LOW_PASS);
    sigma2d[(0, 0)] += low_pass;
    sigma2d[(1, 1)] += low_pass;
    // The product is symmetric up to rounding; make it exact.
    let off = (sigma2d[(0, 1)] + sigma2d[(1, 0)]) * S::from_f64_lossy(0.5);
    sigma2d[(0, 1)] = off;
    sigma2d[(1, 0)] = off;

    let det = sigma2d[(0, 0)] * sigma2d[(1, 1)] - sigma2d[(0, 1)] * sigma2d[(1, 0)];
    if !(det.as_f64().is_finite()) || det.as_f64() <= DET_FLOOR {
        return Err(ProjectionError::DegenerateCovariance(det.as_f64()));
    }
    let mean_px = Vector2::new(
        cam.fx * mu_cam.x * inv_z + cam.cx,
        cam.fy * mu_cam.y * inv_z + cam.cy,
    );
    Ok((sigma2d, mean_px, z))
}
