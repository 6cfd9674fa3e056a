//! `packuv label`: flow-driven dynamic/static labeling of a PLY scene.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use packuv_core::motion::{self, MotionMask};

use crate::cameras::load_cameras;

pub struct LabelArgs {
    pub ply: PathBuf,
    pub cameras: PathBuf,
    pub flow_dir: PathBuf,
    pub out: PathBuf,
    pub mask_dir: Option<PathBuf>,
    pub tau: f32,
    pub dilate: u32,
    pub r_max: u32,
}

pub fn write_mask_png(mask: &MotionMask, path: &Path) -> Result<()> {
    let pixels: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let image = image::GrayImage::from_raw(mask.width, mask.height, pixels)
        .expect("mask dimensions match the pixel buffer");
    image
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: &LabelArgs) -> Result<()> {
    let gaussians = packuv_core::ply::read_ply::<f32>(BufReader::new(
        File::open(&args.ply).with_context(|| format!("opening {}", args.ply.display()))?,
    ))?;
    let specs = load_cameras(&args.cameras)?;

    let mut cameras = Vec::new();
    let mut masks = Vec::new();
    for spec in &specs {
        let flow_path = args.flow_dir.join(format!("{}.flow", spec.id));
        let flow = motion::FlowField::<f32>::read(BufReader::new(
            File::open(&flow_path).with_context(|| format!("opening {}", flow_path.display()))?,
        ))?;
        let mask = motion::motion_mask(&flow, args.tau, args.dilate);
        if let Some(dir) = &args.mask_dir {
            std::fs::create_dir_all(dir)?;
            write_mask_png(&mask, &dir.join(format!("{}_mask.png", spec.id)))?;
        }
        cameras.push(spec.to_model()?);
        masks.push(mask);
    }

    let labels = motion::label_dynamic(&gaussians, &cameras, &masks, args.r_max)?;
    let mut writer = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    for &bit in &labels.bits {
        writeln!(writer, "{}", u8::from(bit))?;
    }
    writer.flush()?;
    println!(
        "labeled {} gaussians across {} cameras: {} dynamic, {} static",
        gaussians.len(),
        cameras.len(),
        labels.dynamic_count(),
        gaussians.len() - labels.dynamic_count()
    );
    Ok(())
}
