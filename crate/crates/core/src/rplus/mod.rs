//! Per-shard R+-tree over point records.
//!
//! Sibling regions never share interior volume: a point lives in exactly one
//! leaf, and faces may touch. Regions are kept as tight bounding boxes of
//! their contents.
//!
//! Writes come in two flavours. [`RPlusTree::bulk_load`] packs a batch with a
//! top-down sort-tile-recursive partition, so every node except the root is at
//! least `min_fill` full. [`RPlusTree::insert`] descends into the child that
//! already contains the point, or failing that the child that can grow to
//! cover it with the least enlargement and without overlapping a sibling.
//! When no child qualifies the point starts a fresh single-entry subtree in
//! that node. Overflowing nodes are split by [`split_node`].

mod bulk;
mod search;
mod snapshot;
mod split;
mod validate;

use std::collections::HashSet;
use std::fmt;

use crate::geom::{GeomError, Point, Rect};
use crate::model::{CaseRecord, RecordId};

pub(crate) use bulk::balanced_sizes;
pub use bulk::str_tile;
pub use snapshot::SnapshotError;
pub use split::split_node;
pub use validate::Violation;

pub const DEFAULT_MAX_ENTRIES: usize = 64;

/// Estimated in-memory cost of one node: header plus its region.
pub fn node_cost(dim: usize) -> u64 {
    32 + 16 * dim as u64
}

/// Estimated in-memory cost of one leaf entry: id plus coordinates.
pub fn entry_cost(dim: usize) -> u64 {
    8 + 8 * dim as u64
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("invalid tree config: {0}")]
    Config(String),
    #[error("record {0} is already stored")]
    DuplicateId(RecordId),
    #[error("duplicate record ids: {}", format_ids(.0))]
    DuplicateIds(Vec<RecordId>),
    #[error("record {id}: {source}")]
    Dimension { id: RecordId, source: GeomError },
    #[error("query dimension {found} does not match tree dimension {expected}")]
    QueryDimension { expected: usize, found: usize },
    #[error("radius must be finite and non-negative, got {0}")]
    BadRadius(f64),
    #[error("a node needs at least one entry")]
    EmptyNode,
    #[error("cannot split a node holding {0} item(s)")]
    NotSplittable(usize),
    #[error("children of an internal node must share one height")]
    MixedHeights,
}

fn format_ids(ids: &[RecordId]) -> String {
    let shown: Vec<String> = ids.iter().take(20).map(|i| i.to_string()).collect();
    if ids.len() > 20 {
        format!("{} (+{} more)", shown.join(", "), ids.len() - 20)
    } else {
        shown.join(", ")
    }
}

/// Node capacity parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeConfig {
    pub max_entries: usize,
    pub min_fill: usize,
    pub dimension: usize,
}

impl TreeConfig {
    /// Default capacity (64) with 40% minimum fill.
    pub fn new(dimension: usize) -> Self {
        Self::with_max_entries(dimension, DEFAULT_MAX_ENTRIES)
    }

    pub fn with_max_entries(dimension: usize, max_entries: usize) -> Self {
        TreeConfig {
            max_entries,
            min_fill: (max_entries * 2 / 5).max(1),
            dimension,
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.dimension == 0 || self.dimension > u16::MAX as usize {
            return Err(TreeError::Config(format!("dimension {} out of range", self.dimension)));
        }
        if self.max_entries < 4 || self.max_entries > u32::MAX as usize {
            return Err(TreeError::Config(format!(
                "max_entries must be at least 4, got {}",
                self.max_entries
            )));
        }
        if self.min_fill < 1 || self.min_fill > self.max_entries / 2 {
            return Err(TreeError::Config(format!(
                "min_fill must be in [1, {}], got {}",
                self.max_entries / 2,
                self.min_fill
            )));
        }
        Ok(())
    }
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig::new(2)
    }
}

/// A leaf entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: RecordId,
    pub point: Point,
}

impl Entry {
    pub fn new(id: u64, point: Point) -> Self {
        Entry {
            id: RecordId(id),
            point,
        }
    }
}

impl From<&CaseRecord> for Entry {
    fn from(r: &CaseRecord) -> Self {
        Entry {
            id: r.id,
            point: r.position.clone(),
        }
    }
}

#[derive(Clone, PartialEq)]
pub(crate) enum NodeKind {
    Leaf(Vec<Entry>),
    Internal(Vec<Node>),
}

#[derive(Clone, PartialEq)]
pub struct Node {
    pub(crate) region: Rect,
    pub(crate) kind: NodeKind,
}

impl Node {
    /// A leaf whose region is the bounding box of `entries`.
    pub fn leaf(entries: Vec<Entry>) -> Result<Node, TreeError> {
        let region = Rect::bounding(entries.iter().map(|e| &e.point)).ok_or(TreeError::EmptyNode)?;
        Ok(Node {
            region,
            kind: NodeKind::Leaf(entries),
        })
    }

    /// An internal node whose region is the bounding box of its children.
    pub fn internal(children: Vec<Node>) -> Result<Node, TreeError> {
        let first = children.first().ok_or(TreeError::EmptyNode)?;
        let h = first.height();
        if children.iter().any(|c| c.height() != h) {
            return Err(TreeError::MixedHeights);
        }
        let mut region = first.region.clone();
        for c in &children[1..] {
            region.expand_rect(&c.region);
        }
        Ok(Node {
            region,
            kind: NodeKind::Internal(children),
        })
    }

    pub fn region(&self) -> &Rect {
        &self.region
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    pub fn entries(&self) -> &[Entry] {
        match &self.kind {
            NodeKind::Leaf(e) => e,
            NodeKind::Internal(_) => &[],
        }
    }

    pub fn children(&self) -> &[Node] {
        match &self.kind {
            NodeKind::Leaf(_) => &[],
            NodeKind::Internal(c) => c,
        }
    }

    /// Entries in a leaf, children in an internal node.
    pub fn len(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf(e) => e.len(),
            NodeKind::Internal(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Levels from this node down to its leaves; a leaf has height 1.
    pub fn height(&self) -> usize {
        let mut h = 1;
        let mut n = self;
        while let NodeKind::Internal(c) = &n.kind {
            h += 1;
            n = &c[0];
        }
        h
    }

    /// A single-entry path of `height` levels ending in a leaf.
    fn chain(entry: Entry, height: usize) -> Node {
        let region = Rect::from_point(&entry.point);
        let mut node = Node {
            region: region.clone(),
            kind: NodeKind::Leaf(vec![entry]),
        };
        for _ in 1..height {
            node = Node {
                region: region.clone(),
                kind: NodeKind::Internal(vec![node]),
            };
        }
        node
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NodeKind::Leaf(e) => f
                .debug_struct("Leaf")
                .field("region", &self.region)
                .field("entries", &e.len())
                .finish(),
            NodeKind::Internal(c) => f
                .debug_struct("Internal")
                .field("region", &self.region)
                .field("children", c)
                .finish(),
        }
    }
}

/// Structural counts for one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TreeStats {
    pub node_count: u64,
    pub leaf_count: u64,
    pub depth: u64,
    pub size: u64,
    /// `node_count * node_cost + size * entry_cost`.
    pub estimated_bytes: u64,
    pub node_cost: u64,
    pub entry_cost: u64,
}

#[derive(Clone, PartialEq)]
pub struct RPlusTree {
    config: TreeConfig,
    root: Option<Node>,
    size: usize,
    height: usize,
    /// True while the tree holds exactly what bulk_load packed.
    packed: bool,
    ids: HashSet<RecordId>,
}

impl fmt::Debug for RPlusTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RPlusTree")
            .field("config", &self.config)
            .field("size", &self.size)
            .field("height", &self.height)
            .field("root", &self.root)
            .finish()
    }
}

impl RPlusTree {
    pub fn new(config: TreeConfig) -> Result<Self, TreeError> {
        config.validate()?;
        Ok(RPlusTree {
            config,
            root: None,
            size: 0,
            height: 0,
            packed: true,
            ids: HashSet::new(),
        })
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn root(&self) -> Option<&Node> {
        self.root.as_ref()
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Number of levels; 0 for an empty tree.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains_id(&self, id: RecordId) -> bool {
        self.ids.contains(&id)
    }

    /// Bounding box of everything stored.
    pub fn mbr(&self) -> Option<&Rect> {
        self.root.as_ref().map(|r| &r.region)
    }

    /// All entries in depth-first leaf order.
    pub fn entries(&self) -> Vec<&Entry> {
        let mut out = Vec::with_capacity(self.size);
        if let Some(root) = &self.root {
            root.visit(&mut |n| out.extend(n.entries()));
        }
        out
    }

    fn check_dim(&self, id: RecordId, p: &Point) -> Result<(), TreeError> {
        if p.dim() != self.config.dimension {
            return Err(TreeError::Dimension {
                id,
                source: GeomError::DimensionMismatch {
                    expected: self.config.dimension,
                    found: p.dim(),
                },
            });
        }
        Ok(())
    }

    pub fn insert(&mut self, record: &CaseRecord) -> Result<(), TreeError> {
        self.insert_entry(Entry::from(record))
    }

    pub fn insert_entry(&mut self, entry: Entry) -> Result<(), TreeError> {
        self.check_dim(entry.id, &entry.point)?;
        if self.ids.contains(&entry.id) {
            return Err(TreeError::DuplicateId(entry.id));
        }
        self.ids.insert(entry.id);
        self.size += 1;
        self.packed = false;
        let Some(root) = self.root.as_mut() else {
            self.root = Some(Node::chain(entry, 1));
            self.height = 1;
            return Ok(());
        };
        if let Some(sibling) = insert_into(root, entry, &self.config) {
            let old = self.root.take().expect("root present");
            self.root = Some(Node::internal(vec![old, sibling]).expect("equal heights"));
            self.height += 1;
        }
        Ok(())
    }

    pub fn stats(&self) -> TreeStats {
        let dim = self.config.dimension;
        let mut s = TreeStats {
            node_cost: node_cost(dim),
            entry_cost: entry_cost(dim),
            ..TreeStats::default()
        };
        if let Some(root) = &self.root {
            root.visit(&mut |n| {
                s.node_count += 1;
                if n.is_leaf() {
                    s.leaf_count += 1;
                }
            });
        }
        s.depth = self.height as u64;
        s.size = self.size as u64;
        s.estimated_bytes = s.node_count * s.node_cost + s.size * s.entry_cost;
        s
    }

    #[cfg(test)]
    pub(crate) fn root_mut(&mut self) -> Option<&mut Node> {
        self.root.as_mut()
    }
}

/// Inserts below `node`, returning a new right sibling when `node` split.
fn insert_into(node: &mut Node, entry: Entry, config: &TreeConfig) -> Option<Node> {
    node.region.expand_point(&entry.point);
    match &mut node.kind {
        NodeKind::Leaf(entries) => entries.push(entry),
        NodeKind::Internal(children) => match choose_child(children, &entry.point) {
            Some(i) => {
                if let Some(sibling) = insert_into(&mut children[i], entry, config) {
                    children.insert(i + 1, sibling);
                }
            }
            None => {
                let h = children[0].height();
                children.push(Node::chain(entry, h));
            }
        },
    }
    if node.len() > config.max_entries {
        let full = std::mem::replace(
            node,
            Node {
                region: node.region.clone(),
                kind: NodeKind::Leaf(Vec::new()),
            },
        );
        let (left, right) = split::split(full, config);
        *node = left;
        Some(right)
    } else {
        None
    }
}

/// Child to descend into for `p`, or `None` when every candidate would
/// overlap a sibling once grown.
fn choose_child(children: &[Node], p: &Point) -> Option<usize> {
    if let Some(i) = children.iter().position(|c| c.region.contains_point(p)) {
        return Some(i);
    }
    let mut candidates: Vec<(f64, f64, usize, Rect)> = children
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let grown = c.region.with_point(p);
            let dv = grown.volume() - c.region.volume();
            let dm = grown.margin() - c.region.margin();
            (dv, dm, i, grown)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    candidates.into_iter().find_map(|(_, _, i, grown)| {
        let clear = children
            .iter()
            .enumerate()
            .all(|(j, s)| j == i || !grown.interiors_overlap(&s.region));
        clear.then_some(i)
    })
}
