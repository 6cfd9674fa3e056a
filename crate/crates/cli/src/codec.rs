//! `packuv encode` / `packuv decode`: raw stream <-> compressed file, with
//! a verified round trip on every encode.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use packuv_core::framecodec::{self, CodecError, Sidecar, TripletStream};

pub const DEFAULT_ENCODER: &str = "ffmpeg -y -loglevel error -f rawvideo -pix_fmt rgb24 -s {width}x{height} -r {rate} -i - -c:v ffv1 -level 3 {output}";
pub const DEFAULT_DECODER: &str =
    "ffmpeg -loglevel error -i {input} -f rawvideo -pix_fmt rgb24 -";

/// `ffv1` names the stock ffmpeg template; anything else is a literal
/// shell template.
pub fn resolve_encoder(value: String) -> String {
    if value == "ffv1" {
        DEFAULT_ENCODER.to_string()
    } else {
        value
    }
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(framecodec::read_sidecar(BufReader::new(file))?)
}

pub fn load_stream(path: &Path, sidecar: &Sidecar) -> Result<TripletStream> {
    let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let expected = sidecar.frame_len() * sidecar.frame_count as usize;
    if data.len() < expected {
        return Err(CodecError::TruncatedStream {
            expected,
            found: data.len(),
        }
        .into());
    }
    if data.len() > expected {
        return Err(CodecError::GeometryMismatch(format!(
            "{} holds {} bytes, sidecar expects {expected}",
            path.display(),
            data.len()
        ))
        .into());
    }
    Ok(TripletStream {
        data,
        frame_len: sidecar.frame_len(),
    })
}

pub struct EncodeArgs {
    pub sidecar: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub encoder: Option<String>,
    pub decoder: String,
}

pub fn encode(args: &EncodeArgs) -> Result<()> {
    let sidecar = load_sidecar(&args.sidecar)?;
    let stream = load_stream(&args.input, &sidecar)?;

    let external_ok = match &args.encoder {
        None => false,
        Some(cmd) => {
            match framecodec::encode_external(&stream, &sidecar, cmd, &args.output) {
                Ok(()) => true,
                Err(CodecError::EncoderUnavailable(reason)) => {
                    eprintln!("external encoder unavailable ({reason}); falling back to the internal codec");
                    false
                }
                Err(other) => return Err(other.into()),
            }
        }
    };

    if external_ok {
        let decoded = framecodec::decode_external(&args.output, &sidecar, &args.decoder)?;
        framecodec::verify_roundtrip(&stream, &decoded, &sidecar)?;
        println!(
            "encoded {} frames externally to {} ({} bytes, raw {}); verification: 0 byte diffs",
            sidecar.frame_count,
            args.output.display(),
            std::fs::metadata(&args.output)?.len(),
            stream.data.len(),
        );
    } else {
        let compressed = framecodec::compress_internal(&stream)?;
        let restored = framecodec::decompress_internal(&compressed)?;
        framecodec::verify_roundtrip(&stream, &restored, &sidecar)?;
        std::fs::write(&args.output, &compressed)
            .with_context(|| format!("writing {}", args.output.display()))?;
        println!(
            "encoded {} frames internally to {} ({} bytes, raw {}); verification: 0 byte diffs",
            sidecar.frame_count,
            args.output.display(),
            compressed.len(),
            stream.data.len(),
        );
    }
    Ok(())
}

pub struct DecodeArgs {
    pub sidecar: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub decoder: String,
}

pub fn decode(args: &DecodeArgs) -> Result<()> {
    let sidecar = load_sidecar(&args.sidecar)?;
    let header = {
        let mut buf = [0u8; 4];
        use std::io::Read;
        let mut f =
            File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
        let n = f.read(&mut buf)?;
        buf[..n].to_vec()
    };
    let stream = if header == b"PUVZ" {
        let bytes = std::fs::read(&args.input)?;
        framecodec::decompress_internal(&bytes)?
    } else {
        framecodec::decode_external(&args.input, &sidecar, &args.decoder)?
    };
    // Deserializing validates geometry before anything is written.
    let frames = framecodec::deserialize(&stream, &sidecar)?;
    std::fs::write(&args.output, &stream.data)
        .with_context(|| format!("writing {}", args.output.display()))?;
    println!(
        "decoded {} frames ({} bytes) to {}",
        frames.len(),
        stream.data.len(),
        args.output.display()
    );
    Ok(())
}
