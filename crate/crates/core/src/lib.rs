//! Layered UV-atlas representation for sets of 3D Gaussians.
//!
//! The pipeline turns an unordered Gaussian set into an image-native form:
//! spherical projection onto a multi-layer UV pyramid ordered by opacity,
//! recursive packing of the layers into a single 2D atlas, global
//! per-channel quantization to 8-bit planes, and bit-exact serialization as
//! raw RGB triplet video frames plus a sidecar that makes decoding
//! invertible. Companion modules cover flow-driven dynamic labeling,
//! flow-peak keyframing, and timecode-based multi-camera synchronization.
//!
//! All floating-point math is generic over the scalar type through
//! [`Real`]; `f32` and `f64` aliases for the main types live at the crate
//! root.

pub mod atlas;
pub mod covariance;
pub mod framecodec;
pub mod gaussian;
pub mod keyframe;
pub mod motion;
pub mod ply;
pub mod quant;
pub mod scalar;
pub mod sphere;
pub mod sync;
pub mod uvmap;

pub use gaussian::{scene_center, CameraModel, GaussianPrimitive};
pub use scalar::Real;
pub use sphere::{SphericalCoord, UVCoord};

/// Concrete single-precision aliases (native precision of PLY exports).
pub type Gaussian32 = GaussianPrimitive<f32>;
pub type Camera32 = CameraModel<f32>;
pub type Spherical32 = SphericalCoord<f32>;
pub type LayeredUVMap32 = uvmap::LayeredUVMap<f32>;
pub type AtlasFrame32 = atlas::AtlasFrame<f32>;
pub type FlowField32 = motion::FlowField<f32>;
pub type FlowSeries32 = keyframe::FlowSeries<f32>;

/// Concrete double-precision aliases.
pub type Gaussian64 = GaussianPrimitive<f64>;
pub type Camera64 = CameraModel<f64>;
pub type Spherical64 = SphericalCoord<f64>;
pub type LayeredUVMap64 = uvmap::LayeredUVMap<f64>;
pub type AtlasFrame64 = atlas::AtlasFrame<f64>;
pub type FlowField64 = motion::FlowField<f64>;
pub type FlowSeries64 = keyframe::FlowSeries<f64>;
