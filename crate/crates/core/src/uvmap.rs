//! Multi-layer pyramid UV maps of Gaussian attributes.
//!
//! The base layer has resolution `M0 x N0`; each deeper layer alternately
//! halves one dimension. Gaussians are grouped by base-grid pixel, ranked
//! by opacity, and placed layer by layer: the rank-`r` candidate targets
//! layer `r` at the scaled coordinate, and collisions at coarse cells (two
//! base pixels sharing one coarse cell) are resolved by opacity with the
//! loser cascading one layer deeper. Anything pushed past the last layer is
//! pruned.

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::gaussian::GaussianPrimitive;
use crate::scalar::Real;
use crate::sphere::{position_from_ray, to_spherical, uv_project};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UvMapError {
    #[error("invalid pyramid configuration: {0}")]
    InvalidConfig(String),
    #[error("gaussians carry mixed color coefficient counts")]
    MixedColorDims,
}

/// Why a Gaussian was dropped during map construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneReason {
    /// Coincides with the projection origin; no UV cell is defined.
    OriginDegenerate,
    /// Violates a primitive invariant (non-finite, bad scale/quaternion).
    Invalid,
    /// Zero opacity carries no content and cannot be opacity-ranked.
    ZeroOpacity,
    /// Ranked or cascaded past the last layer.
    MaxK,
}

/// Index into the input Gaussian list plus the reason it was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pruned {
    pub index: usize,
    pub reason: PruneReason,
}

/// Per-layer resolutions of the UV pyramid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidSchedule {
    dims: Vec<(u32, u32)>,
}

impl PyramidSchedule {
    /// Applies the alternating halving recurrence for `k` layers starting
    /// from `m0 x n0`. Both base dimensions must be powers of two large
    /// enough that no layer drops below one cell.
    pub fn new(m0: u32, n0: u32, k: u32) -> Result<Self, UvMapError> {
        if k < 1 {
            return Err(UvMapError::InvalidConfig("layer count must be >= 1".into()));
        }
        if m0 < 1 || n0 < 1 || !m0.is_power_of_two() || !n0.is_power_of_two() {
            return Err(UvMapError::InvalidConfig(format!(
                "base resolution {m0}x{n0} must be powers of two"
            )));
        }
        let mut dims = Vec::with_capacity(k as usize);
        dims.push((m0, n0));
        for layer in 1..k {
            let (m, n) = dims[layer as usize - 1];
            let next = if layer % 2 == 1 { (m, n / 2) } else { (m / 2, n) };
            if next.0 < 1 || next.1 < 1 {
                return Err(UvMapError::InvalidConfig(format!(
                    "layer {layer} resolution falls below 1 cell"
                )));
            }
            dims.push(next);
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[(u32, u32)] {
        &self.dims
    }

    pub fn layer_count(&self) -> u32 {
        self.dims.len() as u32
    }

    pub fn base(&self) -> (u32, u32) {
        self.dims[0]
    }

    /// Base-grid pixel scaled down to its cell in `layer`.
    pub fn scale_to_layer(&self, base_u: u32, base_v: u32, layer: u32) -> (u32, u32) {
        let (m0, n0) = self.base();
        let (mk, nk) = self.dims[layer as usize];
        (
            (u64::from(base_u) * u64::from(mk) / u64::from(m0)) as u32,
            (u64::from(base_v) * u64::from(nk) / u64::from(n0)) as u32,
        )
    }
}

/// Attributes stored in one occupied UV cell, along with the base-grid
/// pixel the Gaussian projected to.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord<S> {
    pub rho: S,
    pub rotation: [S; 4],
    pub scale: Vector3<S>,
    pub opacity: S,
    pub color: Vec<S>,
    pub base_pixel: (u32, u32),
}

/// Opacity-sorted pyramid of optional attribute records.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredUVMap<S> {
    schedule: PyramidSchedule,
    color_dim: usize,
    layers: Vec<Vec<Option<CellRecord<S>>>>,
}

impl<S: Real> LayeredUVMap<S> {
    pub fn empty(schedule: PyramidSchedule, color_dim: usize) -> Self {
        let layers = schedule
            .dims()
            .iter()
            .map(|&(m, n)| vec![None; (m * n) as usize])
            .collect();
        Self {
            schedule,
            color_dim,
            layers,
        }
    }

    pub fn schedule(&self) -> &PyramidSchedule {
        &self.schedule
    }

    pub fn color_dim(&self) -> usize {
        self.color_dim
    }

    pub fn cell(&self, layer: u32, u: u32, v: u32) -> Option<&CellRecord<S>> {
        let (m, _) = self.schedule.dims()[layer as usize];
        self.layers[layer as usize][(v * m + u) as usize].as_ref()
    }

    pub(crate) fn cell_mut(&mut self, layer: u32, u: u32, v: u32) -> &mut Option<CellRecord<S>> {
        let (m, _) = self.schedule.dims()[layer as usize];
        &mut self.layers[layer as usize][(v * m + u) as usize]
    }

    pub fn occupied_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.iter().filter(|c| c.is_some()).count())
            .sum()
    }

    /// Occupied cells in deterministic order: layer, then row, then column.
    pub fn iter_cells(&self) -> impl Iterator<Item = (u32, u32, u32, &CellRecord<S>)> {
        self.schedule
            .dims()
            .iter()
            .enumerate()
            .flat_map(move |(k, &(m, _))| {
                self.layers[k].iter().enumerate().filter_map(move |(i, c)| {
                    c.as_ref()
                        .map(|rec| (k as u32, i as u32 % m, i as u32 / m, rec))
                })
            })
    }
}

struct Candidate<S> {
    index: usize,
    base: (u32, u32),
    record: CellRecord<S>,
}

/// Builds the layered map from a Gaussian set.
///
/// Positions are snapped to the base-pixel center ray: only `rho` and the
/// base pixel survive. Returns the map plus the indices that were pruned,
/// each with a reason. Results are identical regardless of rayon worker
/// count.
pub fn build_layered_map<S: Real>(
    gaussians: &[GaussianPrimitive<S>],
    center: &Vector3<S>,
    schedule: &PyramidSchedule,
) -> Result<(LayeredUVMap<S>, Vec<Pruned>), UvMapError> {
    let color_dim = gaussians.first().map_or(3, |g| g.color.len());
    if gaussians.iter().any(|g| g.color.len() != color_dim) {
        return Err(UvMapError::MixedColorDims);
    }
    let (m0, n0) = schedule.base();

    let projected: Vec<Result<Candidate<S>, Pruned>> = gaussians
        .par_iter()
        .enumerate()
        .map(|(index, g)| {
            if g.validate().is_err() {
                return Err(Pruned {
                    index,
                    reason: PruneReason::Invalid,
                });
            }
            if g.opacity <= S::zero() {
                return Err(Pruned {
                    index,
                    reason: PruneReason::ZeroOpacity,
                });
            }
            let sph = to_spherical(&g.position, center).map_err(|_| Pruned {
                index,
                reason: PruneReason::OriginDegenerate,
            })?;
            let base = uv_project(&sph, m0, n0);
            Ok(Candidate {
                index,
                base,
                record: CellRecord {
                    rho: sph.rho,
                    rotation: g.rotation,
                    scale: g.scale,
                    opacity: g.opacity,
                    color: g.color.clone(),
                    base_pixel: base,
                },
            })
        })
        .collect();

    let mut pruned = Vec::new();
    let mut candidates = Vec::new();
    for item in projected {
        match item {
            Ok(c) => candidates.push(c),
            Err(p) => pruned.push(p),
        }
    }

    // Rank within each base pixel: opacity descending, input index ascending.
    candidates.par_sort_by(|a, b| {
        a.base
            .cmp(&b.base)
            .then(b.record.opacity.partial_cmp(&a.record.opacity).unwrap())
            .then(a.index.cmp(&b.index))
    });

    let k = schedule.layer_count();
    let mut carried: Vec<(u32, Candidate<S>)> = Vec::with_capacity(candidates.len());
    {
        let mut rank = 0u32;
        let mut prev: Option<(u32, u32)> = None;
        for cand in candidates {
            rank = if prev == Some(cand.base) { rank + 1 } else { 0 };
            prev = Some(cand.base);
            if rank >= k {
                pruned.push(Pruned {
                    index: cand.index,
                    reason: PruneReason::MaxK,
                });
            } else {
                carried.push((rank, cand));
            }
        }
    }

    let mut map = LayeredUVMap::empty(schedule.clone(), color_dim);
    for layer in 0..k {
        let (current, rest): (Vec<_>, Vec<_>) =
            carried.into_iter().partition(|(target, _)| *target == layer);
        carried = rest;
        if current.is_empty() {
            continue;
        }
        let mut contest: Vec<(u32, u32, Candidate<S>)> = current
            .into_iter()
            .map(|(_, cand)| {
                let (u, v) = schedule.scale_to_layer(cand.base.0, cand.base.1, layer);
                (u, v, cand)
            })
            .collect();
        // Highest opacity wins each cell; ties break on input index.
        contest.par_sort_by(|a, b| {
            (a.0, a.1)
                .cmp(&(b.0, b.1))
                .then(b.2.record.opacity.partial_cmp(&a.2.record.opacity).unwrap())
                .then(a.2.index.cmp(&b.2.index))
        });
        let mut prev_cell: Option<(u32, u32)> = None;
        for (u, v, cand) in contest {
            if prev_cell == Some((u, v)) {
                // Lost the cell; cascade one layer deeper or fall off.
                if layer + 1 >= k {
                    pruned.push(Pruned {
                        index: cand.index,
                        reason: PruneReason::MaxK,
                    });
                } else {
                    carried.push((layer + 1, cand));
                }
            } else {
                prev_cell = Some((u, v));
                *map.cell_mut(layer, u, v) = Some(cand.record);
            }
        }
    }

    pruned.sort_by_key(|p| p.index);
    Ok((map, pruned))
}

/// One Gaussian per occupied cell, with the position reconstructed on the
/// base-pixel center ray and every other attribute copied verbatim.
///
/// The rotation is renormalized only when it deviates from unit norm
/// beyond the primitive tolerance (it does after 8-bit dequantization).
pub fn extract_gaussians<S: Real>(
    map: &LayeredUVMap<S>,
    center: &Vector3<S>,
) -> Vec<GaussianPrimitive<S>> {
    let (m0, n0) = map.schedule().base();
    map.iter_cells()
        .map(|(_, _, _, rec)| {
            let (bu, bv) = rec.base_pixel;
            let position = position_from_ray(bu, bv, rec.rho, center, m0, n0)
                .expect("occupied cells carry positive depth");
            let mut rotation = rec.rotation;
            let norm_sq = rotation.iter().fold(S::zero(), |acc, &c| acc + c * c);
            let norm = norm_sq.sqrt();
            if (norm.as_f64() - 1.0).abs() > crate::gaussian::UNIT_QUAT_TOL {
                for c in rotation.iter_mut() {
                    *c /= norm;
                }
            }
            GaussianPrimitive {
                position,
                scale: rec.scale,
                rotation,
                opacity: rec.opacity,
                color: rec.color.clone(),
            }
        })
        .collect()
}

/// Keep mask from per-Gaussian gradient norms: entries below `tau` are
/// marked for removal, entries at or above it are kept.
pub fn gradient_prune<S: Real>(grad_norms: &[S], tau: S) -> Vec<bool> {
    grad_norms.iter().map(|&n| n >= tau).collect()
}
