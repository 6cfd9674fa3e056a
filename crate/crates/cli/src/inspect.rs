//! `packuv inspect`: stats and channel previews for a packed archive.

use std::path::PathBuf;

use anyhow::{Context, Result};

use packuv_core::framecodec;
use packuv_core::uvmap::PyramidSchedule;

use crate::codec::{load_sidecar, load_stream};

pub struct InspectArgs {
    pub sidecar: PathBuf,
    pub input: PathBuf,
    pub png_dir: Option<PathBuf>,
}

pub fn run(args: &InspectArgs) -> Result<()> {
    let sidecar = load_sidecar(&args.sidecar)?;
    let stream = load_stream(&args.input, &sidecar)?;
    let frames = framecodec::deserialize(&stream, &sidecar)?;

    println!(
        "atlas {}x{} ({} layers from {}x{}), {} logical planes in {} triplet groups",
        sidecar.atlas_w,
        sidecar.atlas_h,
        sidecar.k,
        sidecar.m0,
        sidecar.n0,
        sidecar.logical_planes(),
        sidecar.triplet_groups(),
    );
    let schedule = PyramidSchedule::new(sidecar.m0, sidecar.n0, sidecar.k)?;
    let layout = packuv_core::atlas::layout(&schedule)?;
    println!(
        "layout efficiency {:.4}; scene center ({}, {}, {}); {} fps",
        packuv_core::atlas::efficiency(&layout),
        sidecar.scene_center[0],
        sidecar.scene_center[1],
        sidecar.scene_center[2],
        sidecar.frame_rate.num as f64 / sidecar.frame_rate.den as f64,
    );
    println!(
        "keyframes: {}",
        sidecar
            .keyframe_indices
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!("channels:");
    for ch in &sidecar.channel_map {
        println!(
            "  {:<10} {:>2}-bit  [{}, {}]",
            ch.name, ch.bits, ch.min, ch.max
        );
    }
    let mut total = 0usize;
    for (i, frame) in frames.iter().enumerate() {
        let occupied = frame.occupied_count();
        total += occupied;
        println!("frame {i}: {occupied} occupied pixels");
    }
    println!("total occupied pixels: {total}");

    if let Some(dir) = &args.png_dir {
        if let Some(frame) = frames.first() {
            std::fs::create_dir_all(dir)?;
            let names = plane_names(&sidecar);
            for (plane, name) in frame.planes.iter().zip(&names) {
                let image =
                    image::GrayImage::from_raw(frame.width, frame.height, plane.clone())
                        .expect("plane size matches atlas");
                let path = dir.join(format!("{name}.png"));
                image
                    .save(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("wrote {} channel previews to {}", names.len(), dir.display());
        }
    }
    Ok(())
}

fn plane_names(sidecar: &framecodec::Sidecar) -> Vec<String> {
    let mut names = Vec::new();
    for ch in &sidecar.channel_map {
        match ch.plane_count() {
            1 => names.push(ch.name.clone()),
            _ => {
                names.push(format!("{}_hi", ch.name));
                names.push(format!("{}_lo", ch.name));
            }
        }
    }
    names
}
