//! Bit-exact serialization of quantized atlas sequences.
//!
//! Planes are grouped into 8-bit triplets and laid out as raw RGB24 video:
//! one video frame per atlas frame, triplet groups stacked vertically. A
//! JSON sidecar carries the geometry and the exact normalization ranges
//! needed to invert decoding. Streams can be piped through an external
//! lossless encoder or through the built-in delta + DEFLATE fallback.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quant::{QuantSpec, QuantizedFrame};

pub const FORMAT_VERSION: u32 = 1;
const COMPRESSED_MAGIC: &[u8; 4] = b"PUVZ";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frame geometry does not match the sidecar: {0}")]
    GeometryMismatch(String),
    #[error("stream ends early: expected {expected} bytes, found {found}")]
    TruncatedStream { expected: usize, found: usize },
    #[error("sidecar schema error: {0}")]
    SchemaError(String),
    #[error("unsupported sidecar version {0}")]
    UnsupportedVersion(u32),
    #[error("external encoder unavailable: {0}")]
    EncoderUnavailable(String),
    #[error("lossy round trip: {mismatched} of {total} bytes differ; per-plane diffs {per_plane:?}")]
    LossyRoundTrip {
        mismatched: u64,
        total: u64,
        per_plane: Vec<(String, u64)>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frame rate as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Default for Rational {
    fn default() -> Self {
        Self { num: 30, den: 1 }
    }
}

/// Everything a decoder needs to invert the stream exactly: geometry,
/// channel normalization ranges, scene center and keyframes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub m0: u32,
    pub n0: u32,
    pub k: u32,
    pub scene_center: [f64; 3],
    pub channel_map: Vec<crate::quant::ChannelSpec>,
    pub frame_count: u32,
    pub frame_rate: Rational,
    pub keyframe_indices: Vec<u32>,
    pub atlas_w: u32,
    pub atlas_h: u32,
}

impl Sidecar {
    pub fn quant_spec(&self) -> QuantSpec {
        QuantSpec {
            channels: self.channel_map.clone(),
        }
    }

    /// 8-bit planes before padding.
    pub fn logical_planes(&self) -> usize {
        self.quant_spec().plane_count()
    }

    /// Planes after zero-padding to a multiple of 3.
    pub fn padded_planes(&self) -> usize {
        self.logical_planes().div_ceil(3) * 3
    }

    pub fn triplet_groups(&self) -> usize {
        self.padded_planes() / 3
    }

    /// Bytes of one serialized frame.
    pub fn frame_len(&self) -> usize {
        self.triplet_groups() * (self.atlas_w as usize) * (self.atlas_h as usize) * 3
    }

    /// Raw video geometry fed to an external encoder: triplet groups are
    /// stacked vertically into one tall RGB24 frame.
    pub fn video_dims(&self) -> (u32, u32) {
        (
            self.atlas_w,
            self.atlas_h * self.triplet_groups() as u32,
        )
    }

    fn plane_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.padded_planes());
        for ch in &self.channel_map {
            match ch.plane_count() {
                1 => names.push(ch.name.clone()),
                2 => {
                    names.push(format!("{}_hi", ch.name));
                    names.push(format!("{}_lo", ch.name));
                }
                n => {
                    for i in 0..n {
                        names.push(format!("{}_{i}", ch.name));
                    }
                }
            }
        }
        while names.len() < self.padded_planes() {
            names.push("pad".to_string());
        }
        names
    }
}

/// Raw triplet-grouped byte stream: frame-major, group-major, row-major,
/// RGB-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletStream {
    pub data: Vec<u8>,
    pub frame_len: usize,
}

impl TripletStream {
    pub fn frame_count(&self) -> usize {
        self.data.len().checked_div(self.frame_len).unwrap_or(0)
    }
}

/// Serializes quantized frames into the triplet stream.
pub fn serialize(frames: &[QuantizedFrame], sidecar: &Sidecar) -> Result<TripletStream, CodecError> {
    let planes = sidecar.logical_planes();
    let groups = sidecar.triplet_groups();
    let pixels = (sidecar.atlas_w as usize) * (sidecar.atlas_h as usize);
    if frames.len() != sidecar.frame_count as usize {
        return Err(CodecError::GeometryMismatch(format!(
            "{} frames given, sidecar lists {}",
            frames.len(),
            sidecar.frame_count
        )));
    }
    let frame_len = sidecar.frame_len();
    let mut data = Vec::with_capacity(frame_len * frames.len());
    for frame in frames {
        if frame.width != sidecar.atlas_w
            || frame.height != sidecar.atlas_h
            || frame.planes.len() != planes
        {
            return Err(CodecError::GeometryMismatch(format!(
                "frame is {}x{} with {} planes, sidecar expects {}x{} with {}",
                frame.width,
                frame.height,
                frame.planes.len(),
                sidecar.atlas_w,
                sidecar.atlas_h,
                planes
            )));
        }
        for group in 0..groups {
            for px in 0..pixels {
                for slot in 0..3 {
                    let plane = group * 3 + slot;
                    data.push(if plane < planes {
                        frame.planes[plane][px]
                    } else {
                        0
                    });
                }
            }
        }
    }
    Ok(TripletStream { data, frame_len })
}

/// Exact inverse of [`serialize`]. Pad-plane bytes are discarded.
#[allow(clippy::needless_range_loop)]
pub fn deserialize(stream: &TripletStream, sidecar: &Sidecar) -> Result<Vec<QuantizedFrame>, CodecError> {
    let planes = sidecar.logical_planes();
    let groups = sidecar.triplet_groups();
    let pixels = (sidecar.atlas_w as usize) * (sidecar.atlas_h as usize);
    let expected = sidecar.frame_len() * sidecar.frame_count as usize;
    if stream.data.len() < expected {
        return Err(CodecError::TruncatedStream {
            expected,
            found: stream.data.len(),
        });
    }
    if stream.data.len() > expected || stream.frame_len != sidecar.frame_len() {
        return Err(CodecError::GeometryMismatch(format!(
            "stream holds {} bytes, sidecar expects {}",
            stream.data.len(),
            expected
        )));
    }
    let mut frames = Vec::with_capacity(sidecar.frame_count as usize);
    let mut offset = 0;
    for _ in 0..sidecar.frame_count {
        let mut frame_planes = vec![vec![0u8; pixels]; planes];
        for group in 0..groups {
            for px in 0..pixels {
                for slot in 0..3 {
                    let byte = stream.data[offset];
                    offset += 1;
                    let plane = group * 3 + slot;
                    if plane < planes {
                        frame_planes[plane][px] = byte;
                    }
                }
            }
        }
        frames.push(QuantizedFrame {
            width: sidecar.atlas_w,
            height: sidecar.atlas_h,
            planes: frame_planes,
        });
    }
    Ok(frames)
}

/// Per-plane byte differences between two streams of equal geometry.
///
/// Returns `Ok(())` when identical, otherwise [`CodecError::LossyRoundTrip`]
/// listing every plane (pad included) with its mismatch count.
pub fn verify_roundtrip(
    original: &TripletStream,
    decoded: &TripletStream,
    sidecar: &Sidecar,
) -> Result<(), CodecError> {
    let names = sidecar.plane_names();
    let pixels = (sidecar.atlas_w as usize) * (sidecar.atlas_h as usize);
    let frame_len = sidecar.frame_len().max(1);
    let mut per_plane = vec![0u64; names.len()];
    let total = original.data.len().max(decoded.data.len()) as u64;
    let mut mismatched = 0u64;
    for (i, (a, b)) in original.data.iter().zip(decoded.data.iter()).enumerate() {
        if a != b {
            mismatched += 1;
            let within = i % frame_len;
            let group = within / (pixels * 3);
            let slot = within % 3;
            per_plane[group * 3 + slot] += 1;
        }
    }
    mismatched += (original.data.len() as i64 - decoded.data.len() as i64).unsigned_abs();
    if mismatched == 0 {
        return Ok(());
    }
    Err(CodecError::LossyRoundTrip {
        mismatched,
        total,
        per_plane: names.into_iter().zip(per_plane).collect(),
    })
}

#[cfg(unix)]
fn block_sigpipe_on_this_thread() {
    unsafe {
        let mut set: libc::sigset_t = std::mem::zeroed();
        libc::sigemptyset(&mut set);
        libc::sigaddset(&mut set, libc::SIGPIPE);
        libc::pthread_sigmask(libc::SIG_BLOCK, &set, std::ptr::null_mut());
    }
}

#[cfg(not(unix))]
fn block_sigpipe_on_this_thread() {}

fn shell_escape(path: &str) -> String {
    format!("'{}'", path.replace('\'', r"'\''"))
}

fn fill_template(template: &str, sidecar: &Sidecar, input: Option<&Path>, output: Option<&Path>) -> String {
    let (w, h) = sidecar.video_dims();
    let rate = format!("{}/{}", sidecar.frame_rate.num, sidecar.frame_rate.den);
    let mut cmd = template
        .replace("{width}", &w.to_string())
        .replace("{height}", &h.to_string())
        .replace("{rate}", &rate);
    if let Some(p) = input {
        cmd = cmd.replace("{input}", &shell_escape(&p.display().to_string()));
    }
    if let Some(p) = output {
        cmd = cmd.replace("{output}", &shell_escape(&p.display().to_string()));
    }
    cmd
}

/// Pipes the raw stream into an external encoder subprocess.
///
/// The command template receives `{width}`, `{height}`, `{rate}` and
/// `{output}` substitutions and runs under `sh -c` with the raw RGB24
/// stream on stdin. A typical template:
/// `ffmpeg -y -f rawvideo -pix_fmt rgb24 -s {width}x{height} -r {rate} -i - -c:v ffv1 -level 3 {output}`
pub fn encode_external(
    stream: &TripletStream,
    sidecar: &Sidecar,
    encoder_command: &str,
    out_path: &Path,
) -> Result<(), CodecError> {
    let cmd = fill_template(encoder_command, sidecar, None, Some(out_path));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| CodecError::EncoderUnavailable(format!("{cmd}: {e}")))?;
    // Feed stdin from a thread; a dead encoder breaks the pipe and the
    // exit status below is the signal that matters. SIGPIPE is blocked on
    // the feeder so a broken pipe surfaces as EPIPE even when the process
    // runs with the default disposition.
    let mut stdin = child.stdin.take().expect("stdin was piped");
    let data = stream.data.clone();
    let feeder = std::thread::spawn(move || {
        block_sigpipe_on_this_thread();
        stdin.write_all(&data)
    });
    let out = child.wait_with_output()?;
    let fed = feeder.join().expect("stdin feeder thread");
    if !out.status.success() {
        return Err(CodecError::EncoderUnavailable(format!(
            "encoder exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    fed?;
    if !out_path.exists() {
        return Err(CodecError::EncoderUnavailable(format!(
            "encoder produced no output file {}",
            out_path.display()
        )));
    }
    Ok(())
}

/// Runs an external decoder subprocess and captures the raw stream from
/// its stdout. Template placeholders: `{width}`, `{height}`, `{rate}`,
/// `{input}`. A typical template:
/// `ffmpeg -i {input} -f rawvideo -pix_fmt rgb24 -`
pub fn decode_external(
    in_path: &Path,
    sidecar: &Sidecar,
    decoder_command: &str,
) -> Result<TripletStream, CodecError> {
    let cmd = fill_template(decoder_command, sidecar, Some(in_path), None);
    let out = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| CodecError::EncoderUnavailable(format!("{cmd}: {e}")))?;
    if !out.status.success() {
        return Err(CodecError::EncoderUnavailable(format!(
            "decoder exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    let expected = sidecar.frame_len() * sidecar.frame_count as usize;
    if out.stdout.len() < expected {
        return Err(CodecError::TruncatedStream {
            expected,
            found: out.stdout.len(),
        });
    }
    let mut data = out.stdout;
    data.truncate(expected);
    Ok(TripletStream {
        data,
        frame_len: sidecar.frame_len(),
    })
}

/// Lossless fallback: per frame, a left-neighbor delta predictor followed
/// by DEFLATE.
pub fn compress_internal(stream: &TripletStream) -> Result<Vec<u8>, CodecError> {
    if stream.frame_len == 0 && !stream.data.is_empty() {
        return Err(CodecError::GeometryMismatch(
            "nonempty stream with zero frame length".into(),
        ));
    }
    if stream.frame_len != 0 && !stream.data.len().is_multiple_of(stream.frame_len) {
        return Err(CodecError::GeometryMismatch(
            "stream length is not a multiple of the frame length".into(),
        ));
    }
    let frame_count = stream.frame_count();
    let mut out = Vec::new();
    out.extend_from_slice(COMPRESSED_MAGIC);
    out.push(1u8);
    out.extend_from_slice(&(stream.frame_len as u64).to_le_bytes());
    out.extend_from_slice(&(frame_count as u32).to_le_bytes());
    for frame in stream.data.chunks(stream.frame_len.max(1)) {
        let mut delta = Vec::with_capacity(frame.len());
        let mut prev = 0u8;
        for &b in frame {
            delta.push(b.wrapping_sub(prev));
            prev = b;
        }
        let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&delta)?;
        let compressed = enc.finish()?;
        out.extend_from_slice(&(compressed.len() as u64).to_le_bytes());
        out.extend_from_slice(&compressed);
    }
    Ok(out)
}

/// Exact inverse of [`compress_internal`].
pub fn decompress_internal(bytes: &[u8]) -> Result<TripletStream, CodecError> {
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], CodecError> {
        if *cursor + n > bytes.len() {
            return Err(CodecError::TruncatedStream {
                expected: *cursor + n,
                found: bytes.len(),
            });
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let magic = take(&mut cursor, 4)?;
    if magic != COMPRESSED_MAGIC {
        return Err(CodecError::SchemaError("bad compressed-stream magic".into()));
    }
    let version = take(&mut cursor, 1)?[0];
    if version != 1 {
        return Err(CodecError::UnsupportedVersion(u32::from(version)));
    }
    let frame_len = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
    let frame_count = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let mut data = Vec::with_capacity(frame_len * frame_count);
    for _ in 0..frame_count {
        let clen = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
        let compressed = take(&mut cursor, clen)?;
        let mut delta = Vec::with_capacity(frame_len);
        DeflateDecoder::new(compressed).read_to_end(&mut delta)?;
        if delta.len() != frame_len {
            return Err(CodecError::GeometryMismatch(format!(
                "frame inflated to {} bytes, expected {frame_len}",
                delta.len()
            )));
        }
        let mut prev = 0u8;
        for d in delta {
            prev = prev.wrapping_add(d);
            data.push(prev);
        }
    }
    if cursor != bytes.len() {
        return Err(CodecError::GeometryMismatch(
            "trailing bytes after the final frame".into(),
        ));
    }
    Ok(TripletStream { data, frame_len })
}

/// Writes the sidecar as pretty JSON; floats round-trip exactly.
pub fn write_sidecar(sidecar: &Sidecar, writer: impl Write) -> Result<(), CodecError> {
    serde_json::to_writer_pretty(writer, sidecar)
        .map_err(|e| CodecError::SchemaError(e.to_string()))
}

/// Parses and validates a sidecar.
pub fn read_sidecar(reader: impl Read) -> Result<Sidecar, CodecError> {
    let sidecar: Sidecar =
        serde_json::from_reader(reader).map_err(|e| CodecError::SchemaError(e.to_string()))?;
    if sidecar.format_version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(sidecar.format_version));
    }
    if sidecar
        .channel_map
        .iter()
        .any(|c| !c.min.is_finite() || !c.max.is_finite() || c.max < c.min)
    {
        return Err(CodecError::SchemaError(
            "channel ranges must be finite with max >= min".into(),
        ));
    }
    Ok(sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::ChannelSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_sidecar(frame_count: u32) -> Sidecar {
        Sidecar {
            format_version: FORMAT_VERSION,
            m0: 4,
            n0: 4,
            k: 2,
            scene_center: [0.125, -3.5, 0.1],
            channel_map: crate::quant::QuantSpec::channel_names(3)
                .into_iter()
                .map(|(name, bits)| ChannelSpec {
                    name,
                    bits,
                    min: -1.0,
                    max: 1.0,
                })
                .collect(),
            frame_count,
            frame_rate: Rational::default(),
            keyframe_indices: vec![0],
            atlas_w: 4,
            atlas_h: 4,
        }
    }

    fn random_qframe(rng: &mut ChaCha8Rng, sidecar: &Sidecar) -> QuantizedFrame {
        let pixels = (sidecar.atlas_w * sidecar.atlas_h) as usize;
        QuantizedFrame {
            width: sidecar.atlas_w,
            height: sidecar.atlas_h,
            planes: (0..sidecar.logical_planes())
                .map(|_| (0..pixels).map(|_| rng.gen()).collect())
                .collect(),
        }
    }

    #[test]
    fn triplet_arithmetic_matches_layout() {
        let sidecar = test_sidecar(1);
        assert_eq!(sidecar.logical_planes(), 14);
        assert_eq!(sidecar.padded_planes(), 15);
        assert_eq!(sidecar.triplet_groups(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frame = random_qframe(&mut rng, &sidecar);
        let stream = serialize(&[frame], &sidecar).unwrap();
        assert_eq!(stream.data.len(), 240);
        assert_eq!(sidecar.video_dims(), (4, 20));
    }

    #[test]
    fn empty_frame_serializes_to_zeros() {
        let sidecar = test_sidecar(1);
        let pixels = (sidecar.atlas_w * sidecar.atlas_h) as usize;
        let frame = QuantizedFrame {
            width: 4,
            height: 4,
            planes: vec![vec![0; pixels]; sidecar.logical_planes()],
        };
        let stream = serialize(&[frame], &sidecar).unwrap();
        assert!(stream.data.iter().all(|&b| b == 0));
    }

    #[test]
    fn serialize_deserialize_round_trip() {
        let sidecar = test_sidecar(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<_> = (0..3).map(|_| random_qframe(&mut rng, &sidecar)).collect();
        let stream = serialize(&frames, &sidecar).unwrap();
        let back = deserialize(&stream, &sidecar).unwrap();
        assert_eq!(frames, back);
    }

    #[test]
    fn truncated_stream_detected() {
        let sidecar = test_sidecar(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = random_qframe(&mut rng, &sidecar);
        let mut stream = serialize(&[frame], &sidecar).unwrap();
        stream.data.truncate(100);
        assert!(matches!(
            deserialize(&stream, &sidecar),
            Err(CodecError::TruncatedStream { .. })
        ));
    }

    #[test]
    fn geometry_mismatch_detected() {
        let sidecar = test_sidecar(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = random_qframe(&mut rng, &sidecar);
        assert!(matches!(
            serialize(std::slice::from_ref(&frame), &sidecar),
            Err(CodecError::GeometryMismatch(_))
        ));
        let bad = QuantizedFrame {
            width: 8,
            ..frame.clone()
        };
        assert!(matches!(
            serialize(&[frame, bad], &sidecar),
            Err(CodecError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn internal_compression_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sidecar = test_sidecar(4);
        let frames: Vec<_> = (0..4).map(|_| random_qframe(&mut rng, &sidecar)).collect();
        let stream = serialize(&frames, &sidecar).unwrap();
        let compressed = compress_internal(&stream).unwrap();
        let back = decompress_internal(&compressed).unwrap();
        assert_eq!(stream, back);
    }

    #[test]
    fn zero_stream_compresses_small() {
        let stream = TripletStream {
            data: vec![0u8; 2_400_000],
            frame_len: 240_000,
        };
        let compressed = compress_internal(&stream).unwrap();
        assert!(compressed.len() < stream.data.len() / 100);
        assert_eq!(decompress_internal(&compressed).unwrap(), stream);
    }

    #[test]
    fn single_byte_stream_round_trips() {
        let stream = TripletStream {
            data: vec![42],
            frame_len: 1,
        };
        let back = decompress_internal(&compress_internal(&stream).unwrap()).unwrap();
        assert_eq!(back, stream);
    }

    #[test]
    fn sidecar_round_trip_exact() {
        let mut sidecar = test_sidecar(7);
        sidecar.channel_map[1].min = 0.1 + 0.2; // not exactly 0.3
        sidecar.channel_map[1].max = f64::from_bits(0x3FF0_0000_0000_0001);
        let mut buf = Vec::new();
        write_sidecar(&sidecar, &mut buf).unwrap();
        let back = read_sidecar(buf.as_slice()).unwrap();
        assert_eq!(back, sidecar);
        assert_eq!(
            back.channel_map[1].max.to_bits(),
            sidecar.channel_map[1].max.to_bits()
        );
    }

    #[test]
    fn sidecar_missing_field_is_schema_error() {
        let err = read_sidecar(br#"{"format_version": 1, "m0": 4}"#.as_slice()).unwrap_err();
        assert!(matches!(err, CodecError::SchemaError(_)));
    }

    #[test]
    fn sidecar_version_mismatch() {
        let mut sidecar = test_sidecar(1);
        sidecar.format_version = 99;
        let mut buf = Vec::new();
        write_sidecar(&sidecar, &mut buf).unwrap();
        assert!(matches!(
            read_sidecar(buf.as_slice()),
            Err(CodecError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn external_identity_codec_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.bin");
        let sidecar = test_sidecar(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames: Vec<_> = (0..2).map(|_| random_qframe(&mut rng, &sidecar)).collect();
        let stream = serialize(&frames, &sidecar).unwrap();
        // `cat` stands in for any lossless encoder reading stdin.
        encode_external(&stream, &sidecar, "cat > {output}", &path).unwrap();
        let decoded = decode_external(&path, &sidecar, "cat {input}").unwrap();
        verify_roundtrip(&stream, &decoded, &sidecar).unwrap();
        assert_eq!(decoded, stream);
    }

    #[test]
    fn missing_encoder_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.bin");
        let sidecar = test_sidecar(0);
        let stream = TripletStream {
            data: vec![],
            frame_len: sidecar.frame_len(),
        };
        let err = encode_external(
            &stream,
            &sidecar,
            "definitely-not-a-real-encoder-binary {output}",
            &path,
        )
        .unwrap_err();
        assert!(matches!(err, CodecError::EncoderUnavailable(_)));
    }

    #[test]
    fn lossy_mismatch_reported_per_plane() {
        let sidecar = test_sidecar(1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = random_qframe(&mut rng, &sidecar);
        let stream = serialize(&[frame], &sidecar).unwrap();
        let mut corrupted = stream.clone();
        corrupted.data[0] ^= 0xff; // first byte: group 0 slot 0 = occupancy
        let err = verify_roundtrip(&stream, &corrupted, &sidecar).unwrap_err();
        match err {
            CodecError::LossyRoundTrip {
                mismatched,
                per_plane,
                ..
            } => {
                assert_eq!(mismatched, 1);
                assert_eq!(per_plane[0], ("occupancy".to_string(), 1));
                assert_eq!(per_plane.len(), 15);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
