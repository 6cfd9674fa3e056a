//! `packuv pack`: PLY frames -> layered maps -> atlas -> quantized raw
//! stream plus sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;

use packuv_core::atlas;
use packuv_core::framecodec::{self, Rational, Sidecar};
use packuv_core::quant::{self, QuantSpecAccumulator};
use packuv_core::uvmap::{self, PruneReason, PyramidSchedule};

pub struct PackArgs {
    pub inputs: Vec<PathBuf>,
    pub out_prefix: PathBuf,
    pub m0: u32,
    pub n0: u32,
    pub k: u32,
    pub center: Option<[f64; 3]>,
    pub rate: Rational,
    pub keyframes: Option<PathBuf>,
}

fn read_frame(path: &Path) -> Result<Vec<packuv_core::Gaussian32>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let gaussians = packuv_core::ply::read_ply::<f32>(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    if gaussians.is_empty() {
        bail!("{} contains no gaussians", path.display());
    }
    Ok(gaussians)
}

fn scene_center_of_sequence(inputs: &[PathBuf]) -> Result<[f64; 3]> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for path in inputs {
        for g in read_frame(path)? {
            for i in 0..3 {
                lo[i] = lo[i].min(f64::from(g.position[i]));
                hi[i] = hi[i].max(f64::from(g.position[i]));
            }
        }
    }
    Ok([
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    ])
}

fn read_keyframe_list(path: &Path) -> Result<Vec<u32>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = vec![0u32];
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        out.push(line.trim().parse()?);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn run(args: &PackArgs) -> Result<()> {
    if args.inputs.is_empty() {
        bail!("at least one input PLY is required");
    }
    let schedule = PyramidSchedule::new(args.m0, args.n0, args.k)?;
    let layout = atlas::layout(&schedule)?;

    let center = match args.center {
        Some(c) => c,
        None => scene_center_of_sequence(&args.inputs)?,
    };
    let center32 = Vector3::new(center[0] as f32, center[1] as f32, center[2] as f32);

    // Pass 1: fit global per-channel extrema.
    let mut acc: Option<QuantSpecAccumulator> = None;
    let mut stats = Vec::new();
    for path in &args.inputs {
        let gaussians = read_frame(path)?;
        let (map, pruned) = uvmap::build_layered_map(&gaussians, &center32, &schedule)?;
        let frame = atlas::pack(&map, &layout)?;
        let acc = acc.get_or_insert_with(|| QuantSpecAccumulator::new(frame.color_dim));
        acc.observe(&frame);
        stats.push((gaussians.len(), pruned));
    }
    let spec = acc.expect("at least one frame").finish()?;

    let sidecar = Sidecar {
        format_version: framecodec::FORMAT_VERSION,
        m0: args.m0,
        n0: args.n0,
        k: args.k,
        scene_center: center,
        channel_map: spec.channels.clone(),
        frame_count: args.inputs.len() as u32,
        frame_rate: args.rate,
        keyframe_indices: match &args.keyframes {
            Some(path) => read_keyframe_list(path)?,
            None => vec![0],
        },
        atlas_w: layout.atlas_w,
        atlas_h: layout.atlas_h,
    };

    // Pass 2: quantize against the fitted spec and serialize.
    let stream_path = args.out_prefix.with_extension("rgb");
    let mut writer = BufWriter::new(
        File::create(&stream_path)
            .with_context(|| format!("creating {}", stream_path.display()))?,
    );
    for path in &args.inputs {
        let gaussians = read_frame(path)?;
        let (map, _) = uvmap::build_layered_map(&gaussians, &center32, &schedule)?;
        let frame = atlas::pack(&map, &layout)?;
        let quantized = quant::quantize_frame(&frame, &spec)?;
        let single = Sidecar {
            frame_count: 1,
            ..sidecar.clone()
        };
        let stream = framecodec::serialize(std::slice::from_ref(&quantized), &single)?;
        writer.write_all(&stream.data)?;
    }
    writer.flush()?;

    let sidecar_path = args.out_prefix.with_extension("puv");
    let file = File::create(&sidecar_path)
        .with_context(|| format!("creating {}", sidecar_path.display()))?;
    framecodec::write_sidecar(&sidecar, BufWriter::new(file))?;

    let mut retained_total = 0usize;
    let mut pruned_total = 0usize;
    for (i, (count, pruned)) in stats.iter().enumerate() {
        let by_reason = |reason: PruneReason| pruned.iter().filter(|p| p.reason == reason).count();
        println!(
            "frame {i}: {} gaussians, {} retained, {} pruned (max-k {}, origin {}, invalid {})",
            count,
            count - pruned.len(),
            pruned.len(),
            by_reason(PruneReason::MaxK),
            by_reason(PruneReason::OriginDegenerate),
            by_reason(PruneReason::Invalid) + by_reason(PruneReason::ZeroOpacity),
        );
        retained_total += count - pruned.len();
        pruned_total += pruned.len();
    }
    println!(
        "packed {} frames: {} retained, {} pruned, atlas {}x{}, efficiency {:.4}",
        args.inputs.len(),
        retained_total,
        pruned_total,
        layout.atlas_w,
        layout.atlas_h,
        atlas::efficiency(&layout)
    );
    println!(
        "wrote {} and {}",
        sidecar_path.display(),
        stream_path.display()
    );
    Ok(())
}
