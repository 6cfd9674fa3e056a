//! `packuv keyframe`: peak selection over a flow-magnitude series.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use packuv_core::keyframe::{self, FlowSeries};
use packuv_core::motion::FlowField;

pub struct KeyframeArgs {
    pub series: Option<PathBuf>,
    pub flow_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub segments: usize,
    pub theta: usize,
    pub promote_scores: Option<PathBuf>,
    pub promote_percentile: f64,
}

/// Parses `frame,magnitude` lines; a `frame,...` header row is allowed.
pub fn read_series_csv(path: &Path) -> Result<FlowSeries<f32>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<(usize, f32)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("frame")) {
            continue;
        }
        let (frame, magnitude) = line
            .split_once(',')
            .with_context(|| format!("{}:{}: expected frame,magnitude", path.display(), i + 1))?;
        rows.push((frame.trim().parse()?, magnitude.trim().parse()?));
    }
    rows.sort_by_key(|&(frame, _)| frame);
    let mut values = vec![0.0f32; rows.last().map_or(0, |&(frame, _)| frame + 1)];
    for (frame, magnitude) in rows {
        values[frame] = magnitude;
    }
    Ok(FlowSeries::new(values)?)
}

fn series_from_flows(dir: &Path) -> Result<FlowSeries<f32>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "flow"))
        .collect();
    if paths.is_empty() {
        bail!("no .flow files in {}", dir.display());
    }
    paths.sort();
    let flows: Vec<FlowField<f32>> = paths
        .iter()
        .map(|p| {
            Ok(FlowField::read(BufReader::new(
                File::open(p).with_context(|| format!("opening {}", p.display()))?,
            ))?)
        })
        .collect::<Result<_>>()?;
    Ok(keyframe::flow_magnitude_series(&flows))
}

pub fn run(args: &KeyframeArgs) -> Result<()> {
    let series = match (&args.series, &args.flow_dir) {
        (Some(path), None) => read_series_csv(path)?,
        (None, Some(dir)) => series_from_flows(dir)?,
        _ => bail!("exactly one of --series or --flow-dir is required"),
    };
    if series.is_empty() {
        bail!("the flow series is empty");
    }
    let mut keys = keyframe::select_keyframes(&series, args.segments, args.theta);
    if let Some(path) = &args.promote_scores {
        let scores = read_series_csv(path)?;
        let promoted = keyframe::promote_by_percentile(&scores.values, args.promote_percentile);
        keys.extend(promoted.into_iter().filter(|&t| t < series.len()));
        keys.sort_unstable();
        keys.dedup();
    }

    let lines: String = keys.iter().map(|k| format!("{k}\n")).collect();
    match &args.out {
        Some(path) => std::fs::write(path, &lines)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{lines}"),
    }
    let segments = keyframe::segment(series.len(), &keys);
    println!(
        "selected {} keyframes over {} frames; segments: {}",
        keys.len(),
        series.len(),
        segments
            .iter()
            .map(|(s, e)| format!("[{s},{e})"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}
