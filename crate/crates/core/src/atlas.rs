//! Packing the pyramid layers into a single 2D atlas.
//!
//! Layer 0 occupies the top-right at full resolution and the rotated layer
//! 1 fills the column to its left. Remaining layers fill a bottom strip
//! left to right, odd layers rotated 90 degrees counterclockwise, even
//! layers upright; whenever an upright layer is half the strip height the
//! strip descends below it at half height and continues. The packing is
//! exactly invertible.

use thiserror::Error;

use crate::scalar::Real;
use crate::uvmap::{CellRecord, LayeredUVMap, PyramidSchedule};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AtlasError {
    #[error("layer {layer} ({w}x{h}) does not fit the layout strip")]
    LayoutOverflow { layer: u32, w: u32, h: u32 },
    #[error("occupied pixel ({x}, {y}) lies outside every placement")]
    StrayOccupancy { x: u32, y: u32 },
    #[error("frame geometry does not match the layout")]
    GeometryMismatch,
}

/// Placement rectangle of one layer inside the atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub x: u32,
    pub y: u32,
    /// Footprint in atlas pixels; swapped relative to the layer resolution
    /// when `rotated`.
    pub w: u32,
    pub h: u32,
    /// 90 degrees counterclockwise.
    pub rotated: bool,
}

impl Placement {
    /// Layer resolution `(m, n)` this placement holds.
    pub fn layer_dims(&self) -> (u32, u32) {
        if self.rotated {
            (self.h, self.w)
        } else {
            (self.w, self.h)
        }
    }

    /// Atlas pixel of layer cell `(u, v)`.
    pub fn cell_to_atlas(&self, u: u32, v: u32) -> (u32, u32) {
        let (m, _) = self.layer_dims();
        if self.rotated {
            (self.x + v, self.y + (m - 1 - u))
        } else {
            (self.x + u, self.y + v)
        }
    }

    /// Layer cell of a placement-local pixel.
    pub fn local_to_cell(&self, lx: u32, ly: u32) -> (u32, u32) {
        let (m, _) = self.layer_dims();
        if self.rotated {
            (m - 1 - ly, lx)
        } else {
            (lx, ly)
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// Full atlas geometry: dimensions plus one placement per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtlasLayout {
    pub atlas_w: u32,
    pub atlas_h: u32,
    pub placements: Vec<Placement>,
}

impl AtlasLayout {
    pub fn pixel_index(&self, x: u32, y: u32) -> usize {
        (y * self.atlas_w + x) as usize
    }

    pub fn pixel_count(&self) -> usize {
        (self.atlas_w as usize) * (self.atlas_h as usize)
    }

    /// Sum of layer resolutions, i.e. the pixels that carry content.
    pub fn utilized_pixels(&self) -> u64 {
        self.placements
            .iter()
            .map(|p| u64::from(p.w) * u64::from(p.h))
            .sum()
    }
}

/// Computes the deterministic recursive layout for a pyramid schedule.
pub fn layout(schedule: &PyramidSchedule) -> Result<AtlasLayout, AtlasError> {
    let dims = schedule.dims();
    let (m0, n0) = dims[0];
    if dims.len() == 1 {
        return Ok(AtlasLayout {
            atlas_w: m0,
            atlas_h: n0,
            placements: vec![Placement {
                x: 0,
                y: 0,
                w: m0,
                h: n0,
                rotated: false,
            }],
        });
    }

    let (m1, n1) = dims[1];
    let atlas_w = m0 + n1;
    let mut placements = vec![
        Placement {
            x: n1,
            y: 0,
            w: m0,
            h: n0,
            rotated: false,
        },
        Placement {
            x: 0,
            y: 0,
            w: n1,
            h: m1,
            rotated: true,
        },
    ];
    let top_h = n0.max(m1);
    if dims.len() == 2 {
        return Ok(AtlasLayout {
            atlas_w,
            atlas_h: top_h,
            placements,
        });
    }

    // Bottom strip: full-height layers advance rightward; a half-height
    // layer sits on top and the strip continues below it.
    let mut strip_x = 0;
    let mut strip_y = top_h;
    let mut strip_h = dims[2].1;
    for (k, &(m, n)) in dims.iter().enumerate().skip(2) {
        let rotated = k % 2 == 1;
        let (w, h) = if rotated { (n, m) } else { (m, n) };
        let fits_height = h == strip_h || h * 2 == strip_h;
        if !fits_height || strip_x + w > atlas_w {
            return Err(AtlasError::LayoutOverflow {
                layer: k as u32,
                w,
                h,
            });
        }
        placements.push(Placement {
            x: strip_x,
            y: strip_y,
            w,
            h,
            rotated,
        });
        if h == strip_h {
            strip_x += w;
        } else {
            strip_y += h;
            strip_h = h;
        }
    }
    Ok(AtlasLayout {
        atlas_w,
        atlas_h: strip_y + strip_h,
        placements,
    })
}

/// Utilized fraction of the atlas area.
pub fn efficiency(layout: &AtlasLayout) -> f64 {
    layout.utilized_pixels() as f64 / layout.pixel_count() as f64
}

/// Single 2D frame holding every layer's attribute planes.
///
/// Channel order: `rho`, `q0..q3`, `s0..s2`, `alpha`, then the color
/// coefficients. The origin base pixel of each record rides in two
/// dedicated integer planes so unpacking is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasFrame<S> {
    pub layout: AtlasLayout,
    pub color_dim: usize,
    pub channels: Vec<Vec<S>>,
    pub occupancy: Vec<bool>,
    pub base_u: Vec<u32>,
    pub base_v: Vec<u32>,
}

/// Attribute channels for a given color coefficient count.
pub fn scalar_channel_count(color_dim: usize) -> usize {
    9 + color_dim
}

impl<S: Real> AtlasFrame<S> {
    pub fn empty(layout: AtlasLayout, color_dim: usize) -> Self {
        let pixels = layout.pixel_count();
        Self {
            layout,
            color_dim,
            channels: vec![vec![S::zero(); pixels]; scalar_channel_count(color_dim)],
            occupancy: vec![false; pixels],
            base_u: vec![0; pixels],
            base_v: vec![0; pixels],
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    fn store(&mut self, idx: usize, rec: &CellRecord<S>) {
        let mut values = Vec::with_capacity(scalar_channel_count(self.color_dim));
        values.push(rec.rho);
        values.extend_from_slice(&rec.rotation);
        values.extend_from_slice(rec.scale.as_slice());
        values.push(rec.opacity);
        values.extend_from_slice(&rec.color);
        for (plane, value) in self.channels.iter_mut().zip(values) {
            plane[idx] = value;
        }
        self.occupancy[idx] = true;
        self.base_u[idx] = rec.base_pixel.0;
        self.base_v[idx] = rec.base_pixel.1;
    }

    fn load(&self, idx: usize) -> CellRecord<S> {
        let c = |ch: usize| self.channels[ch][idx];
        CellRecord {
            rho: c(0),
            rotation: [c(1), c(2), c(3), c(4)],
            scale: nalgebra::Vector3::new(c(5), c(6), c(7)),
            opacity: c(8),
            color: (9..9 + self.color_dim).map(c).collect(),
            base_pixel: (self.base_u[idx], self.base_v[idx]),
        }
    }
}

/// Writes every occupied map cell into its atlas pixel.
pub fn pack<S: Real>(map: &LayeredUVMap<S>, layout: &AtlasLayout) -> Result<AtlasFrame<S>, AtlasError> {
    if layout.placements.len() != map.schedule().layer_count() as usize
        || layout
            .placements
            .iter()
            .zip(map.schedule().dims())
            .any(|(p, &d)| p.layer_dims() != d)
    {
        return Err(AtlasError::GeometryMismatch);
    }
    let mut frame = AtlasFrame::empty(layout.clone(), map.color_dim());
    for (layer, u, v, rec) in map.iter_cells() {
        let (x, y) = layout.placements[layer as usize].cell_to_atlas(u, v);
        let idx = layout.pixel_index(x, y);
        frame.store(idx, rec);
    }
    Ok(frame)
}

/// Exact inverse of [`pack`].
pub fn unpack<S: Real>(frame: &AtlasFrame<S>) -> Result<LayeredUVMap<S>, AtlasError> {
    let layout = &frame.layout;
    let dims: Vec<(u32, u32)> = layout.placements.iter().map(|p| p.layer_dims()).collect();
    let schedule = schedule_from_dims(&dims)?;
    let mut map = LayeredUVMap::empty(schedule, frame.color_dim);

    let mut claimed = vec![false; layout.pixel_count()];
    for (k, place) in layout.placements.iter().enumerate() {
        for ly in 0..place.h {
            for lx in 0..place.w {
                let idx = layout.pixel_index(place.x + lx, place.y + ly);
                claimed[idx] = true;
                if frame.occupancy[idx] {
                    let (u, v) = place.local_to_cell(lx, ly);
                    *map.cell_mut(k as u32, u, v) = Some(frame.load(idx));
                }
            }
        }
    }
    for y in 0..layout.atlas_h {
        for x in 0..layout.atlas_w {
            let idx = layout.pixel_index(x, y);
            if frame.occupancy[idx] && !claimed[idx] {
                return Err(AtlasError::StrayOccupancy { x, y });
            }
        }
    }
    Ok(map)
}

fn schedule_from_dims(dims: &[(u32, u32)]) -> Result<PyramidSchedule, AtlasError> {
    let (m0, n0) = dims[0];
    let schedule = PyramidSchedule::new(m0, n0, dims.len() as u32)
        .map_err(|_| AtlasError::GeometryMismatch)?;
    if schedule.dims() != dims {
        return Err(AtlasError::GeometryMismatch);
    }
    Ok(schedule)
}
