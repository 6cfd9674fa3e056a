//! packuv: pack 3D Gaussian sequences into codec-ready UV atlases, label
//! dynamic Gaussians from optical flow, pick keyframes, and synchronize
//! multi-camera captures.
//!
//! Exit codes: 0 success, 2 usage, 3 malformed input file, 4 invalid data
//! or configuration, 5 I/O failure.

mod cameras;
mod codec;
mod config;
mod inspect;
mod keyframes;
mod label;
mod pack;
mod sync_cmd;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{parse_center, parse_rate, CommonOpts, ConfigFile};

#[derive(Parser)]
#[command(name = "packuv", version, about = "UV-atlas tooling for 3D Gaussian video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Subcommand)]
enum Command {
    /// Pack PLY frames into a quantized atlas stream plus sidecar.
    Pack {
        /// Input PLY files, one per frame, in order.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output prefix; writes <prefix>.puv and <prefix>.rgb.
        #[arg(long)]
        out_prefix: PathBuf,
        /// Base UV width (power of two).
        #[arg(long)]
        m0: Option<u32>,
        /// Base UV height (power of two).
        #[arg(long)]
        n0: Option<u32>,
        /// Pyramid layer count.
        #[arg(long)]
        k: Option<u32>,
        /// Projection origin override as x,y,z scene units.
        #[arg(long)]
        center: Option<String>,
        /// Frame rate, e.g. 30 or 30000/1001.
        #[arg(long)]
        rate: Option<String>,
        /// Keyframe index list (one per line) to record in the sidecar.
        #[arg(long)]
        keyframes: Option<PathBuf>,
    },
    /// Compress a raw stream, verifying a lossless round trip.
    Encode {
        #[arg(long)]
        sidecar: PathBuf,
        /// Raw .rgb stream from `pack` or `decode`.
        #[arg(long, value_name = "RGB")]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// External encoder: `ffv1` for the stock ffmpeg template, or a
        /// shell template with {width} {height} {rate} {output}; omit to
        /// use the internal lossless codec.
        #[arg(long)]
        encoder: Option<String>,
        /// External decoder template used for round-trip verification.
        #[arg(long)]
        decoder: Option<String>,
    },
    /// Decompress back to the raw stream.
    Decode {
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_name = "RGB")]
        output: PathBuf,
        /// External decoder template with {input} {width} {height} {rate}.
        #[arg(long)]
        decoder: Option<String>,
    },
    /// Label Gaussians dynamic or static from per-camera optical flow.
    Label {
        /// Scene PLY.
        #[arg(long)]
        ply: PathBuf,
        /// JSON list of camera models.
        #[arg(long)]
        cameras: PathBuf,
        /// Directory holding one <camera id>.flow per camera.
        #[arg(long)]
        flow_dir: PathBuf,
        /// Output label file, one 0/1 line per Gaussian.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-camera motion-mask PNGs.
        #[arg(long)]
        mask_dir: Option<PathBuf>,
        /// Flow magnitude threshold in pixels.
        #[arg(long)]
        tau: Option<f32>,
        /// Mask dilation radius in pixels.
        #[arg(long)]
        dilate: Option<u32>,
        /// Clamp on the per-Gaussian pixel scan radius.
        #[arg(long)]
        rmax: Option<u32>,
    },
    /// Select keyframes from a flow-magnitude series.
    Keyframe {
        /// CSV with frame,magnitude rows.
        #[arg(long)]
        series: Option<PathBuf>,
        /// Directory of per-frame .flow files (sorted by name).
        #[arg(long)]
        flow_dir: Option<PathBuf>,
        /// Output file; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Target segment count.
        #[arg(long)]
        m: Option<usize>,
        /// Minimum peak separation in frames.
        #[arg(long)]
        theta: Option<usize>,
        /// Per-frame drift/disocclusion scores (CSV) to promote.
        #[arg(long)]
        promote_scores: Option<PathBuf>,
        /// Percentile above which scored frames are promoted.
        #[arg(long, default_value_t = 99.0)]
        promote_percentile: f64,
    },
    /// Match frames across cameras by nearest timecode.
    Sync {
        /// Camera information files (timecode frame_index per line);
        /// the file stem is the camera id.
        #[arg(required = true)]
        camera_files: Vec<PathBuf>,
        /// Reference camera id.
        #[arg(long)]
        reference: String,
        /// Maximum timecode difference, in ticks.
        #[arg(long)]
        threshold: i64,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Directory of persisted .tree indexes (loaded when present,
        /// written otherwise).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Print archive statistics and optionally export channel PNGs.
    Inspect {
        #[arg(long)]
        sidecar: PathBuf,
        /// Raw .rgb stream.
        #[arg(long)]
        input: PathBuf,
        /// Directory for per-plane grayscale previews of frame 0.
        #[arg(long)]
        png_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let file = ConfigFile::load(cli.common.config.as_deref())?;
    if let Some(threads) = cli.common.thread_count(&file) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }

    match cli.command {
        Command::Pack {
            inputs,
            out_prefix,
            m0,
            n0,
            k,
            center,
            rate,
            keyframes,
        } => pack::run(&pack::PackArgs {
            inputs,
            out_prefix,
            m0: m0.or(file.m0).unwrap_or(1024),
            n0: n0.or(file.n0).unwrap_or(1024),
            k: k.or(file.k).unwrap_or(8),
            center: match center {
                Some(text) => Some(parse_center(&text)?),
                None => file.center,
            },
            rate: match rate {
                Some(text) => parse_rate(&text)?,
                None => match &file.rate {
                    Some(text) => parse_rate(text)?,
                    None => packuv_core::framecodec::Rational::default(),
                },
            },
            keyframes,
        }),
        Command::Encode {
            sidecar,
            input,
            output,
            encoder,
            decoder,
        } => codec::encode(&codec::EncodeArgs {
            sidecar,
            input,
            output,
            encoder: encoder.or(file.encoder).map(codec::resolve_encoder),
            decoder: decoder
                .or(file.decoder)
                .unwrap_or_else(|| codec::DEFAULT_DECODER.to_string()),
        }),
        Command::Decode {
            sidecar,
            input,
            output,
            decoder,
        } => codec::decode(&codec::DecodeArgs {
            sidecar,
            input,
            output,
            decoder: decoder
                .or(file.decoder)
                .unwrap_or_else(|| codec::DEFAULT_DECODER.to_string()),
        }),
        Command::Label {
            ply,
            cameras,
            flow_dir,
            out,
            mask_dir,
            tau,
            dilate,
            rmax,
        } => label::run(&label::LabelArgs {
            ply,
            cameras,
            flow_dir,
            out,
            mask_dir,
            tau: tau.or(file.tau).unwrap_or(1.0),
            dilate: dilate.or(file.dilate).unwrap_or(3),
            r_max: rmax
                .or(file.rmax)
                .unwrap_or(packuv_core::motion::DEFAULT_R_MAX),
        }),
        Command::Keyframe {
            series,
            flow_dir,
            out,
            m,
            theta,
            promote_scores,
            promote_percentile,
        } => keyframes::run(&keyframes::KeyframeArgs {
            series,
            flow_dir,
            out,
            segments: m.or(file.m).unwrap_or(8),
            theta: theta
                .or(file.theta)
                .unwrap_or(packuv_core::keyframe::DEFAULT_THETA),
            promote_scores,
            promote_percentile,
        }),
        Command::Sync {
            camera_files,
            reference,
            threshold,
            out_csv,
            out_json,
            cache_dir,
        } => sync_cmd::run(&sync_cmd::SyncArgs {
            camera_files,
            reference,
            threshold,
            out_csv,
            out_json,
            cache_dir,
        }),
        Command::Inspect {
            sidecar,
            input,
            png_dir,
        } => inspect::run(&inspect::InspectArgs {
            sidecar,
            input,
            png_dir,
        }),
    }
}

/// Maps error causes onto the documented exit codes.
fn exit_code(err: &anyhow::Error) -> i32 {
    use packuv_core::framecodec::CodecError;
    use packuv_core::motion::MotionError;
    use packuv_core::ply::PlyError;
    use packuv_core::sync::SyncError;

    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PlyError>() {
            return match e {
                PlyError::Io(_) => 5,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<CodecError>() {
            return match e {
                CodecError::SchemaError(_)
                | CodecError::UnsupportedVersion(_)
                | CodecError::TruncatedStream { .. } => 3,
                CodecError::Io(_) => 5,
                _ => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<SyncError>() {
            return match e {
                SyncError::FormatError(_) | SyncError::ParseError { .. } => 3,
                SyncError::Io(_) => 5,
                _ => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<MotionError>() {
            return match e {
                MotionError::Format(_) => 3,
                MotionError::Io(_) => 5,
                _ => 4,
            };
        }
        if cause.downcast_ref::<packuv_core::uvmap::UvMapError>().is_some()
            || cause.downcast_ref::<packuv_core::atlas::AtlasError>().is_some()
            || cause.downcast_ref::<packuv_core::quant::QuantError>().is_some()
            || cause
                .downcast_ref::<packuv_core::gaussian::ModelError>()
                .is_some()
            || cause
                .downcast_ref::<packuv_core::keyframe::KeyframeError>()
                .is_some()
        {
            return 4;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 5;
        }
    }
    4
}

fn main() {
    // Die quietly when stdout is a closed pipe (e.g. `packuv inspect | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
