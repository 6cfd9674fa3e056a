//! `packuv sync`: nearest-timecode synchronization across cameras.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use packuv_core::sync::{self, TimecodeTree};

pub struct SyncArgs {
    pub camera_files: Vec<PathBuf>,
    pub reference: String,
    pub threshold: i64,
    pub out_csv: PathBuf,
    pub out_json: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

fn camera_id(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("{} has no usable file stem", path.display()))
}

fn build_tree(path: &Path, cache_dir: Option<&Path>, id: &str) -> Result<TimecodeTree> {
    if let Some(dir) = cache_dir {
        let cached = dir.join(format!("{id}.tree"));
        if cached.exists() {
            let file =
                File::open(&cached).with_context(|| format!("opening {}", cached.display()))?;
            return Ok(TimecodeTree::load(BufReader::new(file))?);
        }
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let tree = TimecodeTree::build(sync::parse_camera_info(&text)?)?;
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir)?;
        let cached = dir.join(format!("{id}.tree"));
        let file =
            File::create(&cached).with_context(|| format!("creating {}", cached.display()))?;
        tree.save(BufWriter::new(file))?;
    }
    Ok(tree)
}

pub fn run(args: &SyncArgs) -> Result<()> {
    if args.camera_files.is_empty() {
        bail!("at least one camera information file is required");
    }
    // One build per camera, in parallel; the map keeps ids unique.
    let built: Vec<(String, TimecodeTree)> = args
        .camera_files
        .par_iter()
        .map(|path| {
            let id = camera_id(path)?;
            let tree = build_tree(path, args.cache_dir.as_deref(), &id)?;
            Ok((id, tree))
        })
        .collect::<Result<_>>()?;
    let mut trees: BTreeMap<String, TimecodeTree> = BTreeMap::new();
    for (id, tree) in built {
        if trees.insert(id.clone(), tree).is_some() {
            bail!("duplicate camera id {id:?}");
        }
    }
    let table = sync::synchronize(&args.reference, &trees, args.threshold)?;
    std::fs::write(&args.out_csv, table.to_csv())
        .with_context(|| format!("writing {}", args.out_csv.display()))?;
    if let Some(path) = &args.out_json {
        std::fs::write(path, table.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "synchronized {} cameras against {:?}: {} rows, {} unmatched cells",
        table.camera_ids.len(),
        table.reference,
        table.rows.len(),
        table.absent_count()
    );
    Ok(())
}
