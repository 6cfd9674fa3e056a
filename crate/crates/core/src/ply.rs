//! Reader and writer for standard 3DGS binary PLY exports.
//!
//! Vertices carry `x y z`, `scale_0..2` (log scale), `rot_0..3`
//! (unnormalized quaternion), `opacity` (logit) and `f_dc_0..2` plus
//! optional `f_rest_*` spherical-harmonic coefficients. Activations are
//! applied on load: scales exponentiate, opacity passes through a sigmoid,
//! rotations normalize. Unknown properties are skipped.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::gaussian::GaussianPrimitive;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed PLY: {0}")]
    Format(String),
    #[error("unsupported PLY: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
struct Header {
    vertex_count: usize,
    /// Byte offset of each property within a vertex record.
    offsets: std::collections::HashMap<String, usize>,
    stride: usize,
}

fn parse_header(reader: &mut impl BufRead) -> Result<Header, PlyError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(PlyError::Format("missing 'ply' signature".into()));
    }

    let mut vertex_count = None;
    let mut offsets = std::collections::HashMap::new();
    let mut stride = 0usize;
    let mut in_vertex_element = false;
    let mut format_seen = false;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(PlyError::Format("header ends before end_header".into()));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(PlyError::Unsupported(format!(
                        "format {fmt}; only binary_little_endian is handled"
                    )));
                }
                format_seen = true;
            }
            ["element", "vertex", count] => {
                in_vertex_element = true;
                vertex_count = Some(count.parse::<usize>().map_err(|e| {
                    PlyError::Format(format!("bad vertex count: {e}"))
                })?);
            }
            ["element", _, _] => in_vertex_element = false,
            ["property", ty, name] => {
                if !in_vertex_element {
                    continue;
                }
                let size = match *ty {
                    "float" | "float32" => 4,
                    "double" | "float64" => 8,
                    "uchar" | "uint8" | "char" | "int8" => 1,
                    "ushort" | "uint16" | "short" | "int16" => 2,
                    "uint" | "uint32" | "int" | "int32" => 4,
                    other => {
                        return Err(PlyError::Unsupported(format!(
                            "vertex property type {other}"
                        )))
                    }
                };
                if size == 4 && (*ty == "float" || *ty == "float32") {
                    offsets.insert((*name).to_string(), stride);
                }
                stride += size;
            }
            ["property", "list", ..] => {
                if in_vertex_element {
                    return Err(PlyError::Unsupported("list property on vertices".into()));
                }
            }
            _ => return Err(PlyError::Format(format!("unrecognized header line: {line:?}"))),
        }
    }
    if !format_seen {
        return Err(PlyError::Format("missing format line".into()));
    }
    Ok(Header {
        vertex_count: vertex_count
            .ok_or_else(|| PlyError::Format("missing vertex element".into()))?,
        offsets,
        stride,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reads a 3DGS PLY into activated Gaussian primitives.
pub fn read_ply<S: Real>(reader: impl Read) -> Result<Vec<GaussianPrimitive<S>>, PlyError> {
    let mut reader = BufReader::new(reader);
    let header = parse_header(&mut reader)?;

    let offset = |name: &str| -> Result<usize, PlyError> {
        header
            .offsets
            .get(name)
            .copied()
            .ok_or_else(|| PlyError::Format(format!("missing float property {name}")))
    };
    let pos = [offset("x")?, offset("y")?, offset("z")?];
    let scale = [offset("scale_0")?, offset("scale_1")?, offset("scale_2")?];
    let rot = [
        offset("rot_0")?,
        offset("rot_1")?,
        offset("rot_2")?,
        offset("rot_3")?,
    ];
    let opacity = offset("opacity")?;
    let dc = [offset("f_dc_0")?, offset("f_dc_1")?, offset("f_dc_2")?];
    let mut rest = Vec::new();
    for i in 0.. {
        match header.offsets.get(&format!("f_rest_{i}")) {
            Some(&o) => rest.push(o),
            None => break,
        }
    }

    let mut record = vec![0u8; header.stride];
    let field = |record: &[u8], offset: usize| -> f64 {
        f64::from(f32::from_le_bytes(
            record[offset..offset + 4].try_into().unwrap(),
        ))
    };
    let mut gaussians = Vec::with_capacity(header.vertex_count);
    for i in 0..header.vertex_count {
        reader.read_exact(&mut record).map_err(|_| {
            PlyError::Format(format!(
                "vertex data ends at record {i} of {}",
                header.vertex_count
            ))
        })?;
        let mut rotation = [
            field(&record, rot[0]),
            field(&record, rot[1]),
            field(&record, rot[2]),
            field(&record, rot[3]),
        ];
        let norm = rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(PlyError::Format(format!(
                "vertex {i} has an unnormalizable rotation"
            )));
        }
        for c in rotation.iter_mut() {
            *c /= norm;
        }
        let mut color = Vec::with_capacity(3 + rest.len());
        for &o in &dc {
            color.push(S::from_f64_lossy(field(&record, o)));
        }
        for &o in &rest {
            color.push(S::from_f64_lossy(field(&record, o)));
        }
        gaussians.push(GaussianPrimitive {
            position: Vector3::new(
                S::from_f64_lossy(field(&record, pos[0])),
                S::from_f64_lossy(field(&record, pos[1])),
                S::from_f64_lossy(field(&record, pos[2])),
            ),
            scale: Vector3::new(
                S::from_f64_lossy(field(&record, scale[0]).exp()),
                S::from_f64_lossy(field(&record, scale[1]).exp()),
                S::from_f64_lossy(field(&record, scale[2]).exp()),
            ),
            rotation: rotation.map(S::from_f64_lossy),
            opacity: S::from_f64_lossy(sigmoid(field(&record, opacity))),
            color,
        });
    }
    Ok(gaussians)
}

/// Writes primitives back to the standard layout, inverting the
/// activations. Opacities are nudged inside `(0, 1)` so the logit is
/// finite.
pub fn write_ply<S: Real>(
    gaussians: &[GaussianPrimitive<S>],
    mut writer: impl Write,
) -> Result<(), PlyError> {
    let rest_count = gaussians
        .first()
        .map_or(0, |g| g.color.len().saturating_sub(3));
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", gaussians.len()));
    for name in ["x", "y", "z"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for i in 0..3 {
        header.push_str(&format!("property float f_dc_{i}\n"));
    }
    for i in 0..rest_count {
        header.push_str(&format!("property float f_rest_{i}\n"));
    }
    header.push_str("property float opacity\n");
    for i in 0..3 {
        header.push_str(&format!("property float scale_{i}\n"));
    }
    for i in 0..4 {
        header.push_str(&format!("property float rot_{i}\n"));
    }
    header.push_str("end_header\n");
    writer.write_all(header.as_bytes())?;

    let put = |w: &mut dyn Write, v: f64| w.write_all(&(v as f32).to_le_bytes());
    for g in gaussians {
        for i in 0..3 {
            put(&mut writer, g.position[i].as_f64())?;
        }
        for &c in &g.color {
            put(&mut writer, c.as_f64())?;
        }
        let alpha = g.opacity.as_f64().clamp(1e-6, 1.0 - 1e-6);
        put(&mut writer, (alpha / (1.0 - alpha)).ln())?;
        for i in 0..3 {
            put(&mut writer, g.scale[i].as_f64().ln())?;
        }
        for &c in &g.rotation {
            put(&mut writer, c.as_f64())?;
        }
    }
    Ok(())
}
