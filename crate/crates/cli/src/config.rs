//! Run configuration: JSON config file with flag overrides (flags win).

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Optional file-borne settings; every field can be overridden by a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub m0: Option<u32>,
    pub n0: Option<u32>,
    pub k: Option<u32>,
    pub center: Option<[f64; 3]>,
    pub tau: Option<f32>,
    pub dilate: Option<u32>,
    pub rmax: Option<u32>,
    pub theta: Option<usize>,
    pub m: Option<usize>,
    pub rate: Option<String>,
    pub encoder: Option<String>,
    pub decoder: Option<String>,
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// Shared flags common to most subcommands.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonOpts {
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Worker thread count (falls back to PACKUV_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

impl CommonOpts {
    pub fn thread_count(&self, file: &ConfigFile) -> Option<usize> {
        self.threads
            .or_else(|| {
                std::env::var("PACKUV_THREADS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .or(file.threads)
    }
}

/// Parses `num/den` or a bare integer frame rate.
pub fn parse_rate(text: &str) -> Result<packuv_core::framecodec::Rational> {
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.parse()?, d.parse()?),
        None => (text.parse()?, 1),
    };
    if den == 0 || num == 0 {
        bail!("frame rate must be positive");
    }
    Ok(packuv_core::framecodec::Rational { num, den })
}

/// Parses `x,y,z` into a center override.
pub fn parse_center(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("center must be x,y,z");
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part.trim().parse()?;
    }
    Ok(out)
}
