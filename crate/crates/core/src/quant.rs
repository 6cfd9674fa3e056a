//! Uniform fixed-point coding of atlas channels.
//!
//! Every channel is normalized against a global min/max fitted over the
//! whole sequence and mapped onto a `2^bits - 1` step grid. Depth uses 16
//! bits and is split into two 8-bit planes for storage; everything else is
//! 8-bit. Arithmetic goes through `f64` so codes are identical for `f32`
//! and `f64` pipelines, with round-half-away-from-zero rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{scalar_channel_count, AtlasFrame, AtlasLayout};
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuantError {
    #[error("no occupied pixels in the frame sequence")]
    EmptySequence,
    #[error("channel map does not match the frame: {0}")]
    SpecMismatch(String),
}

/// One logical channel: name, bit depth and normalization range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub bits: u8,
    pub min: f64,
    pub max: f64,
}

impl ChannelSpec {
    pub fn plane_count(&self) -> usize {
        (self.bits / 8) as usize
    }
}

/// Ordered channel list covering every plane of a quantized frame:
/// occupancy, rho (16-bit), q0..q3, s0..s2, alpha, then color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub channels: Vec<ChannelSpec>,
}

impl QuantSpec {
    /// Channel names for a given color coefficient count, in plane order.
    pub fn channel_names(color_dim: usize) -> Vec<(String, u8)> {
        let mut names = vec![
            ("occupancy".to_string(), 8),
            ("rho".to_string(), 16),
            ("q0".to_string(), 8),
            ("q1".to_string(), 8),
            ("q2".to_string(), 8),
            ("q3".to_string(), 8),
            ("s0".to_string(), 8),
            ("s1".to_string(), 8),
            ("s2".to_string(), 8),
            ("alpha".to_string(), 8),
        ];
        for i in 0..color_dim {
            names.push((format!("c{i}"), 8));
        }
        names
    }

    /// Number of 8-bit planes before triplet padding.
    pub fn plane_count(&self) -> usize {
        self.channels.iter().map(ChannelSpec::plane_count).sum()
    }

    /// Color coefficient count implied by the channel list.
    pub fn color_dim(&self) -> usize {
        self.channels.len().saturating_sub(10)
    }

    fn matches_frame<S>(&self, frame: &AtlasFrame<S>) -> Result<(), QuantError> {
        let expected = Self::channel_names(frame.color_dim);
        if self.channels.len() != expected.len() {
            return Err(QuantError::SpecMismatch(format!(
                "{} channels in spec, {} in frame",
                self.channels.len(),
                expected.len()
            )));
        }
        Ok(())
    }
}

/// Fits global per-channel extrema over the occupied pixels of a frame
/// sequence.
pub fn fit_quant_spec<S: Real>(frames: &[AtlasFrame<S>]) -> Result<QuantSpec, QuantError> {
    let mut acc = match frames.first() {
        Some(f) => QuantSpecAccumulator::new(f.color_dim),
        None => return Err(QuantError::EmptySequence),
    };
    for frame in frames {
        acc.observe(frame);
    }
    acc.finish()
}

/// Streaming extrema accumulator giving the same result as
/// [`fit_quant_spec`] on the full sequence, one frame at a time.
#[derive(Debug, Clone)]
pub struct QuantSpecAccumulator {
    color_dim: usize,
    ranges: Vec<(f64, f64)>,
    occupied: u64,
}

impl QuantSpecAccumulator {
    pub fn new(color_dim: usize) -> Self {
        Self {
            color_dim,
            ranges: vec![(f64::INFINITY, f64::NEG_INFINITY); scalar_channel_count(color_dim)],
            occupied: 0,
        }
    }

    pub fn observe<S: Real>(&mut self, frame: &AtlasFrame<S>) {
        debug_assert_eq!(frame.color_dim, self.color_dim);
        let updates: Vec<(f64, f64)> = frame
            .channels
            .par_iter()
            .map(|plane| {
                plane
                    .iter()
                    .zip(frame.occupancy.iter())
                    .filter(|(_, &occ)| occ)
                    .map(|(&value, _)| value.as_f64())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect();
        for (range, update) in self.ranges.iter_mut().zip(updates) {
            range.0 = range.0.min(update.0);
            range.1 = range.1.max(update.1);
        }
        self.occupied += frame.occupied_count() as u64;
    }

    pub fn finish(self) -> Result<QuantSpec, QuantError> {
        if self.occupied == 0 {
            return Err(QuantError::EmptySequence);
        }
        let names = QuantSpec::channel_names(self.color_dim);
        let mut channels = vec![ChannelSpec {
            name: names[0].0.clone(),
            bits: 8,
            min: 0.0,
            max: 1.0,
        }];
        for ((name, bits), (min, max)) in names.into_iter().skip(1).zip(self.ranges) {
            channels.push(ChannelSpec {
                name,
                bits,
                min,
                max,
            });
        }
        Ok(QuantSpec { channels })
    }
}

/// Maps `x` onto the `2^bits - 1` step grid over `[min, max]`.
///
/// Values outside the range are clamped. A degenerate range maps to code 0.
pub fn quantize<S: Real>(x: S, min: f64, max: f64, bits: u8) -> u16 {
    debug_assert!(bits == 8 || bits == 16);
    if max <= min {
        return 0;
    }
    let levels = ((1u32 << bits) - 1) as f64;
    let t = ((x.as_f64() - min) / (max - min)).clamp(0.0, 1.0);
    (t * levels).round() as u16
}

/// Grid value for a code; exact inverse of [`quantize`] on grid points.
pub fn dequantize<S: Real>(code: u16, min: f64, max: f64, bits: u8) -> S {
    debug_assert!(bits == 8 || bits == 16);
    let levels = ((1u32 << bits) - 1) as f64;
    S::from_f64_lossy(min + (f64::from(code) / levels) * (max - min))
}

/// High and low bytes of a 16-bit code.
pub fn split16(code: u16) -> (u8, u8) {
    ((code >> 8) as u8, (code & 0xff) as u8)
}

/// Inverse of [`split16`].
pub fn join16(hi: u8, lo: u8) -> u16 {
    (u16::from(hi) << 8) | u16::from(lo)
}

/// Atlas-sized 8-bit planes in channel-map order; unoccupied pixels are
/// zero everywhere and the occupancy plane holds `{0, 255}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedFrame {
    pub width: u32,
    pub height: u32,
    pub planes: Vec<Vec<u8>>,
}

impl QuantizedFrame {
    pub fn pixel_count(&self) -> usize {
        (self.width as usize) * (self.height as usize)
    }

    pub fn occupied_count(&self) -> usize {
        self.planes[0].iter().filter(|&&b| b != 0).count()
    }
}

/// Quantizes every channel of an atlas frame into 8-bit planes.
pub fn quantize_frame<S: Real>(
    frame: &AtlasFrame<S>,
    spec: &QuantSpec,
) -> Result<QuantizedFrame, QuantError> {
    spec.matches_frame(frame)?;
    let pixels = frame.layout.pixel_count();
    let mut planes: Vec<Vec<u8>> = Vec::with_capacity(spec.plane_count());

    let occupancy: Vec<u8> = frame
        .occupancy
        .par_iter()
        .map(|&occ| if occ { 255 } else { 0 })
        .collect();
    planes.push(occupancy);

    for (channel, plane) in spec.channels.iter().skip(1).zip(&frame.channels) {
        if channel.bits == 16 {
            let mut hi = vec![0u8; pixels];
            let mut lo = vec![0u8; pixels];
            hi.par_iter_mut()
                .zip(lo.par_iter_mut())
                .zip(plane.par_iter().zip(frame.occupancy.par_iter()))
                .for_each(|((h, l), (&value, &occ))| {
                    if occ {
                        let (a, b) = split16(quantize(value, channel.min, channel.max, 16));
                        *h = a;
                        *l = b;
                    }
                });
            planes.push(hi);
            planes.push(lo);
        } else {
            let codes: Vec<u8> = plane
                .par_iter()
                .zip(frame.occupancy.par_iter())
                .map(|(&value, &occ)| {
                    if occ {
                        quantize(value, channel.min, channel.max, 8) as u8
                    } else {
                        0
                    }
                })
                .collect();
            planes.push(codes);
        }
    }
    Ok(QuantizedFrame {
        width: frame.layout.atlas_w,
        height: frame.layout.atlas_h,
        planes,
    })
}

/// Reconstructs an atlas frame from quantized planes.
///
/// Values land exactly on the quantization grid, so requantizing the
/// result is the identity. The per-cell origin base pixel is not part of
/// the coded planes; it is reconstructed as the center of the base-grid
/// block covered by each cell.
pub fn dequantize_frame<S: Real>(
    qf: &QuantizedFrame,
    spec: &QuantSpec,
    layout: &AtlasLayout,
) -> Result<AtlasFrame<S>, QuantError> {
    if qf.planes.len() != spec.plane_count() {
        return Err(QuantError::SpecMismatch(format!(
            "{} planes in frame, {} in channel map",
            qf.planes.len(),
            spec.plane_count()
        )));
    }
    if layout.atlas_w != qf.width || layout.atlas_h != qf.height {
        return Err(QuantError::SpecMismatch(
            "atlas dimensions do not match layout".into(),
        ));
    }
    let mut frame = AtlasFrame::<S>::empty(layout.clone(), spec.color_dim());
    for (idx, &occ) in qf.planes[0].iter().enumerate() {
        frame.occupancy[idx] = occ != 0;
    }

    let mut plane_idx = 1;
    for (ch_idx, channel) in spec.channels.iter().enumerate().skip(1) {
        let out = &mut frame.channels[ch_idx - 1];
        if channel.bits == 16 {
            let (hi, lo) = (&qf.planes[plane_idx], &qf.planes[plane_idx + 1]);
            out.par_iter_mut()
                .zip(hi.par_iter().zip(lo.par_iter()))
                .zip(frame.occupancy.par_iter())
                .for_each(|((value, (&h, &l)), &occ)| {
                    if occ {
                        *value = dequantize(join16(h, l), channel.min, channel.max, 16);
                    }
                });
            plane_idx += 2;
        } else {
            let codes = &qf.planes[plane_idx];
            out.par_iter_mut()
                .zip(codes.par_iter())
                .zip(frame.occupancy.par_iter())
                .for_each(|((value, &code), &occ)| {
                    if occ {
                        *value = dequantize(u16::from(code), channel.min, channel.max, 8);
                    }
                });
            plane_idx += 1;
        }
    }

    // Occupied cells get a canonical origin: the center of the base-grid
    // block their layer cell covers (exact for layer 0).
    let (m0, n0) = layout.placements[0].layer_dims();
    for place in &layout.placements {
        let (mk, nk) = place.layer_dims();
        let (bu, bv) = (m0 / mk, n0 / nk);
        for ly in 0..place.h {
            for lx in 0..place.w {
                let idx = layout.pixel_index(place.x + lx, place.y + ly);
                if frame.occupancy[idx] {
                    let (u, v) = place.local_to_cell(lx, ly);
                    frame.base_u[idx] = u * bu + bu / 2;
                    frame.base_v[idx] = v * bv + bv / 2;
                }
            }
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{layout, pack};
    use crate::uvmap::{build_layered_map, PyramidSchedule};
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_known_values() {
        assert_eq!(quantize(0.5f64, -1.0, 1.0, 8), 191);
        assert_eq!(quantize(-1.0f64, -1.0, 1.0, 8), 0);
        assert_eq!(quantize(1.0f64, -1.0, 1.0, 8), 255);
        assert_eq!(quantize(3.0f64, 3.0, 3.0, 8), 0);
        assert_eq!(quantize(0.5f32, -1.0, 1.0, 8), 191);
    }

    #[test]
    fn dequantize_known_value() {
        let x: f64 = dequantize(191, -1.0, 1.0, 8);
        assert!((x - 0.49803921568627446).abs() < 1e-15);
    }

    #[test]
    fn codes_round_trip_exactly() {
        for code in 0..=255u16 {
            let x: f64 = dequantize(code, -2.5, 7.25, 8);
            assert_eq!(quantize(x, -2.5, 7.25, 8), code);
        }
    }

    #[test]
    fn split_join_exhaustive() {
        for code in 0..=65535u16 {
            let (hi, lo) = split16(code);
            assert_eq!(join16(hi, lo), code);
        }
        assert_eq!(split16(0), (0, 0));
        assert_eq!(split16(65535), (255, 255));
        assert_eq!(split16(513), (2, 1));
    }

    fn frame_with_values(values: &[(u32, f64)]) -> crate::atlas::AtlasFrame<f64> {
        let schedule = PyramidSchedule::new(4, 4, 2).unwrap();
        let l = layout(&schedule).unwrap();
        let mut frame = crate::atlas::AtlasFrame::empty(l, 3);
        for &(idx, v) in values {
            frame.occupancy[idx as usize] = true;
            for plane in frame.channels.iter_mut() {
                plane[idx as usize] = v;
            }
        }
        frame
    }

    #[test]
    fn fit_finds_exact_extrema() {
        let constant = frame_with_values(&[(0, 3.0), (1, 3.0)]);
        let spec = fit_quant_spec(&[constant]).unwrap();
        for ch in spec.channels.iter().skip(1) {
            assert_eq!((ch.min, ch.max), (3.0, 3.0));
        }

        let spread = frame_with_values(&[(0, -1.0), (1, 0.5), (2, 2.0)]);
        let spec = fit_quant_spec(&[spread]).unwrap();
        for ch in spec.channels.iter().skip(1) {
            assert_eq!((ch.min, ch.max), (-1.0, 2.0));
        }
    }

    #[test]
    fn fit_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let schedule = PyramidSchedule::new(8, 8, 3).unwrap();
        let l = layout(&schedule).unwrap();
        let mut frame = crate::atlas::AtlasFrame::<f64>::empty(l, 3);
        for idx in 0..frame.layout.pixel_count() {
            if rng.gen_bool(0.3) {
                frame.occupancy[idx] = true;
                for plane in frame.channels.iter_mut() {
                    plane[idx] = rng.gen_range(-5.0..5.0);
                }
            }
        }
        let spec = fit_quant_spec(std::slice::from_ref(&frame)).unwrap();
        for (ch, plane) in spec.channels.iter().skip(1).zip(&frame.channels) {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (v, &occ) in plane.iter().zip(&frame.occupancy) {
                if occ {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
            }
            assert_eq!((ch.min, ch.max), (lo, hi));
        }
    }

    #[test]
    fn fit_rejects_empty_sequence() {
        assert_eq!(
            fit_quant_spec::<f64>(&[]).unwrap_err(),
            QuantError::EmptySequence
        );
        let empty = frame_with_values(&[]);
        assert_eq!(
            fit_quant_spec(&[empty]).unwrap_err(),
            QuantError::EmptySequence
        );
    }

    fn random_frame(seed: u64) -> crate::atlas::AtlasFrame<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = PyramidSchedule::new(16, 16, 4).unwrap();
        let gaussians: Vec<_> = (0..150)
            .map(|_| crate::gaussian::GaussianPrimitive {
                position: Vector3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ),
                scale: Vector3::new(
                    rng.gen_range(0.01..1.0),
                    rng.gen_range(0.01..1.0),
                    rng.gen_range(0.01..1.0),
                ),
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity: rng.gen_range(0.01..1.0),
                color: vec![
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ],
            })
            .collect();
        let (map, _) = build_layered_map(&gaussians, &Vector3::zeros(), &schedule).unwrap();
        pack(&map, &layout(&schedule).unwrap()).unwrap()
    }

    #[test]
    fn zero_occupancy_frame_quantizes_to_zero_planes() {
        let frame = frame_with_values(&[]);
        let spec = QuantSpec {
            channels: QuantSpec::channel_names(3)
                .into_iter()
                .map(|(name, bits)| ChannelSpec {
                    name,
                    bits,
                    min: 0.0,
                    max: 1.0,
                })
                .collect(),
        };
        let qf = quantize_frame(&frame, &spec).unwrap();
        assert_eq!(qf.planes.len(), 14);
        assert!(qf.planes.iter().all(|p| p.iter().all(|&b| b == 0)));
    }

    #[test]
    fn requantization_reaches_fixpoint_after_one_round_trip() {
        let frame = random_frame(31);
        let spec = fit_quant_spec(std::slice::from_ref(&frame)).unwrap();
        let qf1 = quantize_frame(&frame, &spec).unwrap();
        let deq = dequantize_frame::<f64>(&qf1, &spec, &frame.layout).unwrap();
        let qf2 = quantize_frame(&deq, &spec).unwrap();
        assert_eq!(qf1, qf2);
        let deq2 = dequantize_frame::<f64>(&qf2, &spec, &frame.layout).unwrap();
        assert_eq!(deq, deq2);
    }

    #[test]
    fn occupancy_preserved_and_error_bounded() {
        let frame = random_frame(32);
        let spec = fit_quant_spec(std::slice::from_ref(&frame)).unwrap();
        let qf = quantize_frame(&frame, &spec).unwrap();
        let deq = dequantize_frame::<f64>(&qf, &spec, &frame.layout).unwrap();
        assert_eq!(deq.occupancy, frame.occupancy);
        for ((ch, plane), deq_plane) in spec
            .channels
            .iter()
            .skip(1)
            .zip(&frame.channels)
            .zip(&deq.channels)
        {
            let levels = ((1u32 << ch.bits) - 1) as f64;
            let bound = (ch.max - ch.min) / (2.0 * levels) + 1e-12;
            for ((&x, &y), &occ) in plane.iter().zip(deq_plane).zip(&frame.occupancy) {
                if occ {
                    assert!((x - y).abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn spec_mismatch_detected() {
        let frame = random_frame(40);
        let mut spec = fit_quant_spec(std::slice::from_ref(&frame)).unwrap();
        spec.channels.pop();
        assert!(matches!(
            quantize_frame(&frame, &spec),
            Err(QuantError::SpecMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(
            a in -10.0f64..10.0, b in -10.0f64..10.0,
            lo in -5.0f64..0.0, span in 0.1f64..10.0,
        ) {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize(x, lo, lo + span, 8) <= quantize(y, lo, lo + span, 8));
            prop_assert!(quantize(x, lo, lo + span, 16) <= quantize(y, lo, lo + span, 16));
        }

        #[test]
        fn round_trip_error_within_half_step(
            x in -4.0f64..4.0, lo in -5.0f64..-4.0, span in 1.0f64..10.0,
        ) {
            for bits in [8u8, 16] {
                let code = quantize(x, lo, lo + span, bits);
                let back: f64 = dequantize(code, lo, lo + span, bits);
                let clamped = x.clamp(lo, lo + span);
                let bound = span / (2.0 * (((1u32 << bits) - 1) as f64));
                prop_assert!((clamped - back).abs() <= bound);
            }
        }
    }
}
