//! Camera description file: a JSON list of pinhole models.

use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::Matrix4;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct CameraSpec {
    pub id: String,
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
    pub width: u32,
    pub height: u32,
    /// Row-major 4x4 world-to-camera transform.
    pub view: [[f32; 4]; 4],
}

impl CameraSpec {
    pub fn to_model(&self) -> Result<packuv_core::Camera32> {
        let mut view = Matrix4::zeros();
        for (i, row) in self.view.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                view[(i, j)] = v;
            }
        }
        packuv_core::CameraModel::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            view,
        )
        .with_context(|| format!("camera {:?} is invalid", self.id))
    }
}

pub fn load_cameras(path: &Path) -> Result<Vec<CameraSpec>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading cameras {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing cameras {}", path.display()))
}
