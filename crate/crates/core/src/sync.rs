//! Timecode-indexed frame lookup and multi-camera synchronization.
//!
//! Each camera's `(timecode, frame index)` pairs go into an AVL tree.
//! Synchronization walks the reference camera's frames in timecode order
//! and finds the nearest-timecode frame of every other camera, dropping
//! matches farther than a threshold. Trees persist to a compact binary
//! format so large captures index once.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

const TREE_MAGIC: &[u8; 4] = b"PUVT";
const TREE_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("duplicate timecode {0}")]
    DuplicateTimecode(i64),
    #[error("unknown reference camera {0:?}")]
    UnknownReference(String),
    #[error("malformed tree file: {0}")]
    FormatError(String),
    #[error("malformed camera information file at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One indexed frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub timecode: i64,
    pub frame_index: u32,
}

#[derive(Debug, Clone)]
struct Node {
    entry: Entry,
    height: u8,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

impl Node {
    fn leaf(entry: Entry) -> Box<Node> {
        Box::new(Node {
            entry,
            height: 1,
            left: None,
            right: None,
        })
    }

    fn update_height(&mut self) {
        self.height = 1 + height(&self.left).max(height(&self.right));
    }

    fn balance(&self) -> i32 {
        i32::from(height(&self.left)) - i32::from(height(&self.right))
    }
}

fn height(node: &Option<Box<Node>>) -> u8 {
    node.as_ref().map_or(0, |n| n.height)
}

fn rotate_right(mut root: Box<Node>) -> Box<Node> {
    let mut pivot = root.left.take().expect("left-heavy rotation");
    root.left = pivot.right.take();
    root.update_height();
    pivot.right = Some(root);
    pivot.update_height();
    pivot
}

fn rotate_left(mut root: Box<Node>) -> Box<Node> {
    let mut pivot = root.right.take().expect("right-heavy rotation");
    root.right = pivot.left.take();
    root.update_height();
    pivot.left = Some(root);
    pivot.update_height();
    pivot
}

fn rebalance(mut node: Box<Node>) -> Box<Node> {
    node.update_height();
    match node.balance() {
        2 => {
            if node.left.as_ref().unwrap().balance() < 0 {
                node.left = Some(rotate_left(node.left.take().unwrap()));
            }
            rotate_right(node)
        }
        -2 => {
            if node.right.as_ref().unwrap().balance() > 0 {
                node.right = Some(rotate_right(node.right.take().unwrap()));
            }
            rotate_left(node)
        }
        _ => node,
    }
}

fn insert(node: Option<Box<Node>>, entry: Entry) -> Result<Box<Node>, SyncError> {
    let Some(mut node) = node else {
        return Ok(Node::leaf(entry));
    };
    match entry.timecode.cmp(&node.entry.timecode) {
        std::cmp::Ordering::Less => node.left = Some(insert(node.left.take(), entry)?),
        std::cmp::Ordering::Greater => node.right = Some(insert(node.right.take(), entry)?),
        std::cmp::Ordering::Equal => return Err(SyncError::DuplicateTimecode(entry.timecode)),
    }
    Ok(rebalance(node))
}

/// Self-balancing search tree over frame timecodes.
#[derive(Debug, Clone, Default)]
pub struct TimecodeTree {
    root: Option<Box<Node>>,
    len: usize,
}

impl TimecodeTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a tree from `(timecode, frame index)` pairs.
    pub fn build(entries: impl IntoIterator<Item = (i64, u32)>) -> Result<Self, SyncError> {
        let mut tree = Self::new();
        for (timecode, frame_index) in entries {
            tree.insert(Entry {
                timecode,
                frame_index,
            })?;
        }
        Ok(tree)
    }

    pub fn insert(&mut self, entry: Entry) -> Result<(), SyncError> {
        self.root = Some(insert(self.root.take(), entry)?);
        self.len += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Root height in levels; an empty tree has height 0.
    pub fn height(&self) -> u8 {
        height(&self.root)
    }

    /// Entries in ascending timecode order.
    pub fn entries(&self) -> Vec<Entry> {
        fn walk(node: &Option<Box<Node>>, out: &mut Vec<Entry>) {
            if let Some(n) = node {
                walk(&n.left, out);
                out.push(n.entry);
                walk(&n.right, out);
            }
        }
        let mut out = Vec::with_capacity(self.len);
        walk(&self.root, &mut out);
        out
    }

    /// Entry with timecode nearest to `target`, or `None` when the best
    /// difference exceeds `threshold` (strictly).
    ///
    /// The root-to-leaf descent tracks the best node seen; the true
    /// nearest is always on that path because both neighbors of the
    /// target's insertion point are its ancestors. Equidistant neighbors
    /// resolve to the smaller timecode.
    pub fn find_closest(&self, target: i64, threshold: i64) -> Option<Entry> {
        let mut best: Option<Entry> = None;
        let mut best_diff = i64::MAX;
        let mut current = self.root.as_deref();
        while let Some(node) = current {
            let diff = node.entry.timecode.abs_diff(target) as i64;
            let better = diff < best_diff
                || (diff == best_diff
                    && best.is_some_and(|b| node.entry.timecode < b.timecode));
            if better {
                best_diff = diff;
                best = Some(node.entry);
            }
            if diff == 0 {
                break;
            }
            current = if target < node.entry.timecode {
                node.left.as_deref()
            } else {
                node.right.as_deref()
            };
        }
        match best {
            Some(_) if best_diff > threshold => None,
            other => other,
        }
    }

    /// Verifies strict ordering and AVL balance of every node.
    pub fn check_invariants(&self) -> bool {
        fn check(node: &Option<Box<Node>>, lo: i64, hi: i64) -> Option<u8> {
            let Some(n) = node else { return Some(0) };
            if n.entry.timecode <= lo || n.entry.timecode >= hi {
                return None;
            }
            let lh = check(&n.left, lo, n.entry.timecode)?;
            let rh = check(&n.right, n.entry.timecode, hi)?;
            let h = 1 + lh.max(rh);
            if n.height != h || (i32::from(lh) - i32::from(rh)).abs() > 1 {
                return None;
            }
            Some(h)
        }
        check(&self.root, i64::MIN, i64::MAX).is_some()
    }

    /// Writes the binary form: magic, version, node count, then preorder
    /// nodes as (timecode `i64` LE, frame index `u32` LE, height `u8`).
    pub fn save(&self, mut writer: impl Write) -> Result<(), SyncError> {
        writer.write_all(TREE_MAGIC)?;
        writer.write_all(&[TREE_VERSION])?;
        writer.write_all(&(self.len as u64).to_le_bytes())?;
        fn walk(node: &Option<Box<Node>>, writer: &mut impl Write) -> std::io::Result<()> {
            if let Some(n) = node {
                writer.write_all(&n.entry.timecode.to_le_bytes())?;
                writer.write_all(&n.entry.frame_index.to_le_bytes())?;
                writer.write_all(&[n.height])?;
                walk(&n.left, writer)?;
                walk(&n.right, writer)?;
            }
            Ok(())
        }
        walk(&self.root, &mut writer)?;
        Ok(())
    }

    /// Reads the binary form and validates structure, heights and balance.
    pub fn load(mut reader: impl Read) -> Result<Self, SyncError> {
        let mut header = [0u8; 13];
        reader
            .read_exact(&mut header)
            .map_err(|_| SyncError::FormatError("header shorter than 13 bytes".into()))?;
        if &header[0..4] != TREE_MAGIC {
            return Err(SyncError::FormatError("bad magic".into()));
        }
        if header[4] != TREE_VERSION {
            return Err(SyncError::FormatError(format!(
                "unsupported tree version {}",
                header[4]
            )));
        }
        let count = u64::from_le_bytes(header[5..13].try_into().unwrap()) as usize;
        let mut nodes = Vec::with_capacity(count);
        let mut buf = [0u8; 13];
        for i in 0..count {
            reader
                .read_exact(&mut buf)
                .map_err(|_| SyncError::FormatError(format!("truncated at node {i}")))?;
            nodes.push((
                Entry {
                    timecode: i64::from_le_bytes(buf[0..8].try_into().unwrap()),
                    frame_index: u32::from_le_bytes(buf[8..12].try_into().unwrap()),
                },
                buf[12],
            ));
        }
        if reader.read(&mut [0u8; 1])? != 0 {
            return Err(SyncError::FormatError("trailing bytes after nodes".into()));
        }

        // Rebuild the shape from the preorder walk and the search order.
        fn build(
            nodes: &[(Entry, u8)],
            pos: &mut usize,
            lo: i64,
            hi: i64,
        ) -> Option<Box<Node>> {
            let (entry, height) = *nodes.get(*pos)?;
            if entry.timecode <= lo || entry.timecode >= hi {
                return None;
            }
            *pos += 1;
            let left = build(nodes, pos, lo, entry.timecode);
            let right = build(nodes, pos, entry.timecode, hi);
            Some(Box::new(Node {
                entry,
                height,
                left,
                right,
            }))
        }
        let mut pos = 0;
        let root = build(&nodes, &mut pos, i64::MIN, i64::MAX);
        if pos != count {
            return Err(SyncError::FormatError(
                "preorder does not describe a search tree".into(),
            ));
        }
        let tree = Self { root, len: count };
        if !tree.check_invariants() {
            return Err(SyncError::FormatError(
                "stored heights or balance are inconsistent".into(),
            ));
        }
        Ok(tree)
    }
}

/// Parses a camera information file: one `timecode frame_index` pair per
/// line, whitespace separated. Blank lines are ignored.
pub fn parse_camera_info(text: &str) -> Result<Vec<(i64, u32)>, SyncError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |part: Option<&str>, what: &str| -> Result<String, SyncError> {
            part.map(str::to_owned).ok_or(SyncError::ParseError {
                line: i + 1,
                message: format!("missing {what}"),
            })
        };
        let timecode = parse(parts.next(), "timecode")?
            .parse::<i64>()
            .map_err(|e| SyncError::ParseError {
                line: i + 1,
                message: format!("bad timecode: {e}"),
            })?;
        let frame_index = parse(parts.next(), "frame index")?
            .parse::<u32>()
            .map_err(|e| SyncError::ParseError {
                line: i + 1,
                message: format!("bad frame index: {e}"),
            })?;
        if parts.next().is_some() {
            return Err(SyncError::ParseError {
                line: i + 1,
                message: "expected exactly two fields".into(),
            });
        }
        entries.push((timecode, frame_index));
    }
    Ok(entries)
}

/// One reference frame matched across cameras.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncRow {
    pub timecode: i64,
    pub reference_frame: u32,
    /// Matched frame index per camera, in [`SyncTable::camera_ids`] order.
    pub cells: Vec<Option<u32>>,
}

/// Rows are the reference camera's frames; columns are cameras sorted by
/// id, so the table is independent of input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncTable {
    pub reference: String,
    pub camera_ids: Vec<String>,
    pub rows: Vec<SyncRow>,
}

impl SyncTable {
    pub fn absent_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.cells.iter().filter(|c| c.is_none()).count())
            .sum()
    }

    /// CSV with a header row; absent cells are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timecode");
        for id in &self.camera_ids {
            out.push(',');
            out.push_str(&csv_field(id));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.timecode.to_string());
            for cell in &row.cells {
                out.push(',');
                if let Some(frame) = cell {
                    out.push_str(&frame.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Structured-text (JSON) form of the table.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sync table serializes")
    }
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Matches every reference frame against all cameras' trees.
pub fn synchronize(
    reference: &str,
    trees: &BTreeMap<String, TimecodeTree>,
    threshold: i64,
) -> Result<SyncTable, SyncError> {
    let ref_tree = trees
        .get(reference)
        .ok_or_else(|| SyncError::UnknownReference(reference.to_string()))?;
    let camera_ids: Vec<String> = trees.keys().cloned().collect();
    let rows = ref_tree
        .entries()
        .into_iter()
        .map(|entry| SyncRow {
            timecode: entry.timecode,
            reference_frame: entry.frame_index,
            cells: camera_ids
                .iter()
                .map(|id| {
                    trees[id]
                        .find_closest(entry.timecode, threshold)
                        .map(|e| e.frame_index)
                })
                .collect(),
        })
        .collect();
    Ok(SyncTable {
        reference: reference.to_string(),
        camera_ids,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ascending_insert_balances_perfectly() {
        let tree = TimecodeTree::build((1..=7).map(|t| (t, t as u32))).unwrap();
        assert_eq!(tree.len(), 7);
        assert_eq!(tree.height(), 3);
        assert!(tree.check_invariants());
    }

    #[test]
    fn empty_tree() {
        let tree = TimecodeTree::new();
        assert!(tree.is_empty());
        assert_eq!(tree.height(), 0);
        assert_eq!(tree.find_closest(5, 100), None);
    }

    #[test]
    fn duplicate_timecode_rejected() {
        let err = TimecodeTree::build([(5, 0), (5, 1)]).unwrap_err();
        assert!(matches!(err, SyncError::DuplicateTimecode(5)));
    }

    #[test]
    fn find_closest_examples() {
        let tree = TimecodeTree::build([(100, 0), (200, 1), (300, 2)]).unwrap();
        assert_eq!(
            tree.find_closest(210, 15),
            Some(Entry {
                timecode: 200,
                frame_index: 1
            })
        );
        assert_eq!(tree.find_closest(250, 15), None);
        assert_eq!(
            tree.find_closest(300, 0),
            Some(Entry {
                timecode: 300,
                frame_index: 2
            })
        );
    }

    fn oracle_closest(entries: &[(i64, u32)], target: i64, threshold: i64) -> Option<Entry> {
        entries
            .iter()
            .map(|&(timecode, frame_index)| Entry {
                timecode,
                frame_index,
            })
            .min_by_key(|e| (e.timecode.abs_diff(target), e.timecode))
            .filter(|e| e.timecode.abs_diff(target) as i64 <= threshold)
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(1..60);
            let mut timecodes: Vec<i64> = Vec::new();
            while timecodes.len() < n {
                let t = rng.gen_range(-1000..1000);
                if !timecodes.contains(&t) {
                    timecodes.push(t);
                }
            }
            let entries: Vec<(i64, u32)> = timecodes
                .iter()
                .enumerate()
                .map(|(i, &t)| (t, i as u32))
                .collect();
            let tree = TimecodeTree::build(entries.iter().copied()).unwrap();
            for _ in 0..20 {
                let target = rng.gen_range(-1200..1200);
                let threshold = rng.gen_range(0..200);
                assert_eq!(
                    tree.find_closest(target, threshold),
                    oracle_closest(&entries, target, threshold)
                );
            }
        }
    }

    #[test]
    fn balance_holds_during_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tree = TimecodeTree::new();
        let mut timecodes: Vec<i64> = (0..2000).collect();
        timecodes.shuffle(&mut rng);
        for (i, t) in timecodes.into_iter().enumerate() {
            tree.insert(Entry {
                timecode: t,
                frame_index: i as u32,
            })
            .unwrap();
            let n = (i + 1) as f64;
            let bound = 1.4405 * (n + 2.0).log2() - 0.3277;
            assert!(f64::from(tree.height()) <= bound);
        }
        assert!(tree.check_invariants());
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(0..100);
            let mut timecodes: Vec<i64> = Vec::new();
            while timecodes.len() < n {
                let t = rng.gen_range(-10_000..10_000);
                if !timecodes.contains(&t) {
                    timecodes.push(t);
                }
            }
            let tree = TimecodeTree::build(
                timecodes.iter().enumerate().map(|(i, &t)| (t, i as u32)),
            )
            .unwrap();
            let mut buf = Vec::new();
            tree.save(&mut buf).unwrap();
            let loaded = TimecodeTree::load(buf.as_slice()).unwrap();
            assert_eq!(loaded.len(), tree.len());
            assert_eq!(loaded.height(), tree.height());
            assert_eq!(loaded.entries(), tree.entries());
            // Identical shape: saving again yields identical bytes.
            let mut buf2 = Vec::new();
            loaded.save(&mut buf2).unwrap();
            assert_eq!(buf, buf2);
        }
    }

    #[test]
    fn empty_tree_saves_header_only() {
        let mut buf = Vec::new();
        TimecodeTree::new().save(&mut buf).unwrap();
        assert_eq!(buf.len(), 13);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut buf = Vec::new();
        TimecodeTree::build([(1, 0)]).unwrap().save(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            TimecodeTree::load(buf.as_slice()),
            Err(SyncError::FormatError(_))
        ));
    }

    #[test]
    fn corrupted_height_rejected() {
        let mut buf = Vec::new();
        TimecodeTree::build([(1, 0), (2, 1), (3, 2)])
            .unwrap()
            .save(&mut buf)
            .unwrap();
        let last = buf.len() - 1;
        buf[last] = 9;
        assert!(matches!(
            TimecodeTree::load(buf.as_slice()),
            Err(SyncError::FormatError(_))
        ));
    }

    #[test]
    fn camera_info_parsing() {
        let entries = parse_camera_info("100 0\n200 1\n\n  300 2\n").unwrap();
        assert_eq!(entries, vec![(100, 0), (200, 1), (300, 2)]);
        assert!(matches!(
            parse_camera_info("abc 0"),
            Err(SyncError::ParseError { line: 1, .. })
        ));
        assert!(matches!(
            parse_camera_info("100 0 extra"),
            Err(SyncError::ParseError { line: 1, .. })
        ));
    }

    fn tree_of(timecodes: &[i64]) -> TimecodeTree {
        TimecodeTree::build(timecodes.iter().enumerate().map(|(i, &t)| (t, i as u32))).unwrap()
    }

    #[test]
    fn identical_cameras_give_diagonal_table() {
        let mut trees = BTreeMap::new();
        trees.insert("a".to_string(), tree_of(&[10, 20, 30]));
        trees.insert("b".to_string(), tree_of(&[10, 20, 30]));
        let table = synchronize("a", &trees, 0).unwrap();
        assert_eq!(table.absent_count(), 0);
        for (i, row) in table.rows.iter().enumerate() {
            assert_eq!(row.cells, vec![Some(i as u32); 2]);
        }
    }

    #[test]
    fn small_offset_matches_nearest() {
        let mut trees = BTreeMap::new();
        trees.insert("ref".to_string(), tree_of(&[100, 200, 300]));
        trees.insert("off".to_string(), tree_of(&[103, 203, 303]));
        let table = synchronize("ref", &trees, 5).unwrap();
        assert_eq!(table.absent_count(), 0);
        let off_col = table.camera_ids.iter().position(|c| c == "off").unwrap();
        for (i, row) in table.rows.iter().enumerate() {
            assert_eq!(row.cells[off_col], Some(i as u32));
        }
    }

    #[test]
    fn large_offset_yields_absent_column() {
        let mut trees = BTreeMap::new();
        trees.insert("ref".to_string(), tree_of(&[100, 200, 300]));
        trees.insert("far".to_string(), tree_of(&[1000, 2000]));
        let table = synchronize("ref", &trees, 50).unwrap();
        let far_col = table.camera_ids.iter().position(|c| c == "far").unwrap();
        assert!(table.rows.iter().all(|r| r.cells[far_col].is_none()));
    }

    #[test]
    fn unknown_reference_is_error() {
        let trees = BTreeMap::new();
        assert!(matches!(
            synchronize("nope", &trees, 1),
            Err(SyncError::UnknownReference(_))
        ));
    }

    #[test]
    fn table_is_invariant_to_insertion_order() {
        let mut forward = BTreeMap::new();
        forward.insert("a".to_string(), tree_of(&[1, 2]));
        forward.insert("b".to_string(), tree_of(&[1, 2]));
        let mut reversed = BTreeMap::new();
        reversed.insert("b".to_string(), tree_of(&[1, 2]));
        reversed.insert("a".to_string(), tree_of(&[1, 2]));
        assert_eq!(
            synchronize("a", &forward, 1).unwrap(),
            synchronize("a", &reversed, 1).unwrap()
        );
    }

    #[test]
    fn csv_escapes_awkward_ids() {
        let mut trees = BTreeMap::new();
        trees.insert("cam,1".to_string(), tree_of(&[5]));
        let table = synchronize("cam,1", &trees, 0).unwrap();
        let csv = table.to_csv();
        assert!(csv.starts_with("timecode,\"cam,1\"\n"));
        assert!(csv.contains("5,0\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tree_nearest_equals_oracle(
            timecodes in proptest::collection::btree_set(-5000i64..5000, 1..80),
            target in -6000i64..6000,
            threshold in 0i64..500,
        ) {
            let entries: Vec<(i64, u32)> = timecodes
                .iter()
                .enumerate()
                .map(|(i, &t)| (t, i as u32))
                .collect();
            let tree = TimecodeTree::build(entries.iter().copied()).unwrap();
            prop_assert!(tree.check_invariants());
            prop_assert_eq!(
                tree.find_closest(target, threshold),
                oracle_closest(&entries, target, threshold)
            );
        }
    }
}
