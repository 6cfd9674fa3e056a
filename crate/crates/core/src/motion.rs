//! Flow-driven dynamic/static labeling of Gaussians.
//!
//! Per camera, optical-flow magnitude is thresholded and dilated into a
//! binary motion mask. Each Gaussian is projected to image space with its
//! covariance; pixels inside the 3-sigma Mahalanobis ellipse are scanned
//! against the mask, and a hit in any camera marks the Gaussian dynamic.

use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::covariance::{covariance3d, project_covariance};
use crate::gaussian::{CameraModel, GaussianPrimitive};
use crate::scalar::Real;

/// Default clamp on the per-Gaussian pixel scan radius.
pub const DEFAULT_R_MAX: u32 = 64;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("flow data contains non-finite values")]
    NonFinite,
    #[error("malformed flow file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense per-pixel 2D displacement field.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<S> {
    pub width: u32,
    pub height: u32,
    /// Row-major `(dx, dy)` per pixel.
    pub vectors: Vec<[S; 2]>,
}

impl<S: Real> FlowField<S> {
    pub fn new(width: u32, height: u32, vectors: Vec<[S; 2]>) -> Result<Self, MotionError> {
        if vectors.len() != (width as usize) * (height as usize) {
            return Err(MotionError::DimensionMismatch(format!(
                "{} vectors for a {width}x{height} field",
                vectors.len()
            )));
        }
        if vectors
            .iter()
            .any(|v| !v[0].as_f64().is_finite() || !v[1].as_f64().is_finite())
        {
            return Err(MotionError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    pub fn magnitude_at(&self, x: u32, y: u32) -> S {
        let [dx, dy] = self.vectors[(y * self.width + x) as usize];
        (dx * dx + dy * dy).sqrt()
    }

    /// Reads the binary layout: `u32` width, `u32` height (little endian),
    /// then row-major `f32` pairs.
    pub fn read(mut reader: impl Read) -> Result<Self, MotionError> {
        let mut header = [0u8; 8];
        reader.read_exact(&mut header)?;
        let width = u32::from_le_bytes(header[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(header[4..8].try_into().unwrap());
        let count = (width as usize)
            .checked_mul(height as usize)
            .ok_or_else(|| MotionError::Format("flow dimensions overflow".into()))?;
        let mut buf = vec![0u8; count * 8];
        reader.read_exact(&mut buf).map_err(|_| {
            MotionError::Format(format!("flow file shorter than {width}x{height} pairs"))
        })?;
        let mut vectors = Vec::with_capacity(count);
        for pair in buf.chunks_exact(8) {
            let dx = f32::from_le_bytes(pair[0..4].try_into().unwrap());
            let dy = f32::from_le_bytes(pair[4..8].try_into().unwrap());
            vectors.push([S::from_f64_lossy(f64::from(dx)), S::from_f64_lossy(f64::from(dy))]);
        }
        Self::new(width, height, vectors)
    }

    pub fn write(&self, mut writer: impl Write) -> Result<(), MotionError> {
        writer.write_all(&self.width.to_le_bytes())?;
        writer.write_all(&self.height.to_le_bytes())?;
        for v in &self.vectors {
            writer.write_all(&(v[0].as_f64() as f32).to_le_bytes())?;
            writer.write_all(&(v[1].as_f64() as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

/// Binary motion mask matching a flow field's dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl MotionMask {
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn true_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Thresholds flow magnitude at `tau` (strictly greater) and dilates with
/// a square structuring element of radius `r`, clipped at the borders.
pub fn motion_mask<S: Real>(flow: &FlowField<S>, tau: S, r: u32) -> MotionMask {
    let (w, h) = (flow.width, flow.height);
    let mut bits = vec![false; (w as usize) * (h as usize)];
    bits.par_iter_mut().enumerate().for_each(|(idx, bit)| {
        let (x, y) = (idx as u32 % w, idx as u32 / w);
        *bit = flow.magnitude_at(x, y) > tau;
    });
    if r == 0 {
        return MotionMask {
            width: w,
            height: h,
            bits,
        };
    }
    // Square element separates into a horizontal then a vertical pass.
    let mut horiz = vec![false; bits.len()];
    horiz.par_iter_mut().enumerate().for_each(|(idx, bit)| {
        let (x, y) = (idx as u32 % w, idx as u32 / w);
        let lo = x.saturating_sub(r);
        let hi = (x + r).min(w - 1);
        *bit = (lo..=hi).any(|xx| bits[(y * w + xx) as usize]);
    });
    let mut dilated = vec![false; bits.len()];
    dilated.par_iter_mut().enumerate().for_each(|(idx, bit)| {
        let (x, y) = (idx as u32 % w, idx as u32 / w);
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        *bit = (lo..=hi).any(|yy| horiz[(yy * w + x) as usize]);
    });
    MotionMask {
        width: w,
        height: h,
        bits: dilated,
    }
}

/// Per-Gaussian dynamic flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicLabels {
    pub bits: Vec<bool>,
}

impl DynamicLabels {
    pub fn dynamic_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Tests one projected Gaussian against one camera's mask.
fn dynamic_in_camera<S: Real>(
    gaussian: &GaussianPrimitive<S>,
    cam: &CameraModel<S>,
    mask: &MotionMask,
    r_max: u32,
) -> bool {
    let sigma3d = covariance3d(&gaussian.scale, &gaussian.rotation);
    // Behind the camera or degenerate: contributes static.
    let Ok((sigma2d, mean, _z)) = project_covariance(&sigma3d, &gaussian.position, cam) else {
        return false;
    };
    let (a, b, c) = (
        sigma2d[(0, 0)].as_f64(),
        sigma2d[(0, 1)].as_f64(),
        sigma2d[(1, 1)].as_f64(),
    );
    let det = a * c - b * b;
    let trace = a + c;
    let lambda_max = (trace + (trace * trace - 4.0 * det).max(0.0).sqrt()) / 2.0;
    let radius = (3.0 * lambda_max.sqrt()).ceil().min(f64::from(r_max));
    let (mx, my) = (mean.x.as_f64(), mean.y.as_f64());
    if !mx.is_finite() || !my.is_finite() {
        return false;
    }

    let x_lo = (mx - radius).ceil().max(0.0) as i64;
    let x_hi = (mx + radius).floor().min(f64::from(mask.width - 1)) as i64;
    let y_lo = (my - radius).ceil().max(0.0) as i64;
    let y_hi = (my + radius).floor().min(f64::from(mask.height - 1)) as i64;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            if x < 0 || y < 0 {
                continue;
            }
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            let dx = x as f64 - mx;
            let dy = y as f64 - my;
            // Closed-form 2x2 inverse; det was validated by the projection.
            let d2 = (dx * dx * c - 2.0 * dx * dy * b + dy * dy * a) / det;
            if d2 <= 9.0 {
                return true;
            }
        }
    }
    false
}

/// Labels each Gaussian dynamic when its projected 3-sigma ellipse touches
/// a motion-mask pixel in any camera. Invalid projections (behind the
/// camera, degenerate covariance) contribute static.
pub fn label_dynamic<S: Real>(
    gaussians: &[GaussianPrimitive<S>],
    cameras: &[CameraModel<S>],
    masks: &[MotionMask],
    r_max: u32,
) -> Result<DynamicLabels, MotionError> {
    if cameras.len() != masks.len() {
        return Err(MotionError::DimensionMismatch(format!(
            "{} cameras but {} masks",
            cameras.len(),
            masks.len()
        )));
    }
    for (cam, mask) in cameras.iter().zip(masks) {
        if cam.width != mask.width || cam.height != mask.height {
            return Err(MotionError::DimensionMismatch(format!(
                "camera is {}x{} but mask is {}x{}",
                cam.width, cam.height, mask.width, mask.height
            )));
        }
    }
    let bits = gaussians
        .par_iter()
        .map(|g| {
            cameras
                .iter()
                .zip(masks)
                .any(|(cam, mask)| dynamic_in_camera(g, cam, mask, r_max))
        })
        .collect();
    Ok(DynamicLabels { bits })
}

/// Zeroes the gradients of static Gaussians: `out_i = label_i * grads_i`.
pub fn freeze_gradients<S: Real>(grads: &[Vec<S>], labels: &DynamicLabels) -> Vec<Vec<S>> {
    debug_assert_eq!(grads.len(), labels.bits.len());
    grads
        .iter()
        .zip(&labels.bits)
        .map(|(g, &dynamic)| {
            if dynamic {
                g.clone()
            } else {
                vec![S::zero(); g.len()]
            }
        })
        .collect()
}

/// Children take their parent's label verbatim.
pub fn inherit_labels(parent_labels: &DynamicLabels, children: &[usize]) -> DynamicLabels {
    DynamicLabels {
        bits: children.iter().map(|&p| parent_labels.bits[p]).collect(),
    }
}
