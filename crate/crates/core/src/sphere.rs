//! Spherical coordinates and the discrete UV grid mapping.
//!
//! A Gaussian center is expressed relative to the scene center as
//! `(rho, theta, phi)` and binned into an `M x N` grid: `u` discretizes the
//! azimuth `theta in [-pi, pi)`, `v` the polar angle `phi in [0, pi]`. The
//! inverse mapping goes through pixel centers so that forward projection of
//! a reconstructed point lands back in the same cell.

use nalgebra::Vector3;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SphereError {
    #[error("point coincides with the projection origin; polar angle undefined")]
    OriginDegenerate,
    #[error("radial distance must be positive")]
    InvalidDepth,
}

/// Spherical coordinates relative to a scene center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord<S> {
    /// Radial distance, `>= 0`.
    pub rho: S,
    /// Azimuth in `[-pi, pi)`.
    pub theta: S,
    /// Polar angle in `[0, pi]`.
    pub phi: S,
}

/// Discrete UV cell with its pyramid layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UVCoord {
    pub u: u32,
    pub v: u32,
    pub layer: u32,
}

/// Spherical coordinates of `point` relative to `center`.
///
/// `theta = atan2(dy, dx)` normalized to `[-pi, pi)`; at the poles
/// `atan2(0, 0) = 0` by convention. A zero radius has no defined polar
/// angle and is an error.
pub fn to_spherical<S: Real>(
    point: &Vector3<S>,
    center: &Vector3<S>,
) -> Result<SphericalCoord<S>, SphereError> {
    let d = point - center;
    let rho = d.norm();
    if rho == S::zero() {
        return Err(SphereError::OriginDegenerate);
    }
    let mut theta = d.y.atan2(d.x);
    if theta >= S::pi() {
        theta -= S::two_pi();
    }
    let cos_phi = (d.z / rho).clamp(-S::one(), S::one());
    let phi = cos_phi.acos();
    Ok(SphericalCoord { rho, theta, phi })
}

/// Bins spherical angles into a discrete `M x N` grid cell.
///
/// `u = floor((pi + theta) / 2pi * m)` and `v = floor(phi / pi * n)`, each
/// clamped into range so the closed upper boundary (`theta = pi`,
/// `phi = pi`) maps to the last cell instead of overflowing.
pub fn uv_project<S: Real>(sph: &SphericalCoord<S>, m: u32, n: u32) -> (u32, u32) {
    debug_assert!(m >= 1 && n >= 1);
    let mf = S::from_u32(m).unwrap();
    let nf = S::from_u32(n).unwrap();
    let u = ((S::pi() + sph.theta) / S::two_pi() * mf).floor();
    let v = (sph.phi / S::pi() * nf).floor();
    let clamp = |x: S, hi: u32| -> u32 {
        if x <= S::zero() {
            0
        } else {
            (x.as_f64() as u32).min(hi - 1)
        }
    };
    (clamp(u, m), clamp(v, n))
}

/// Unit direction through the center of grid cell `(u, v)`.
pub fn ray_direction<S: Real>(u: u32, v: u32, m: u32, n: u32) -> Vector3<S> {
    debug_assert!(u < m && v < n);
    let half = S::from_f64_lossy(0.5);
    let theta = (S::from_u32(u).unwrap() + half) / S::from_u32(m).unwrap() * S::two_pi() - S::pi();
    let phi = (S::from_u32(v).unwrap() + half) / S::from_u32(n).unwrap() * S::pi();
    let (sin_p, cos_p) = (phi.sin(), phi.cos());
    let (sin_t, cos_t) = (theta.sin(), theta.cos());
    Vector3::new(sin_p * cos_t, sin_p * sin_t, cos_p)
}

/// Point at distance `rho` along the ray through base-grid cell `(u, v)`.
pub fn position_from_ray<S: Real>(
    u: u32,
    v: u32,
    rho: S,
    center: &Vector3<S>,
    m: u32,
    n: u32,
) -> Result<Vector3<S>, SphereError> {
    if rho <= S::zero() {
        return Err(SphereError::InvalidDepth);
    }
    Ok(center + ray_direction::<S>(u, v, m, n) * rho)
}
