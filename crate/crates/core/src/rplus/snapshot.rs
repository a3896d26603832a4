//! Versioned binary snapshot of one tree.
//!
//! ```text
//! magic        8 bytes  "CIDXTREE"
//! version      u8       1
//! flags        u8       bit 0: tree is exactly as bulk-loaded
//! dimension    u16
//! max_entries  u32
//! min_fill     u32
//! size         u64      number of records
//! height       u32      0 for an empty tree
//! nodes        preorder, root first (absent when height is 0)
//!
//! node:
//!   tag        u8       0 = leaf, 1 = internal
//!   region     dimension × f64 (min), then dimension × f64 (max)
//!   count      u32
//!   leaf:      count × (id u64, dimension × f64)
//!   internal:  count child nodes
//! ```
//!
//! All integers and floats are big-endian; floats are raw IEEE-754 bits.
//! Encoding is a pure function of the tree, so equal trees give equal bytes.

use std::collections::HashSet;

use super::{Entry, Node, NodeKind, RPlusTree, TreeConfig};
use crate::bytes::{PutBe, Reader, Truncated};
use crate::geom::{Point, Rect};
use crate::model::RecordId;

pub const TREE_MAGIC: &[u8; 8] = b"CIDXTREE";
pub const TREE_VERSION: u8 = 1;
const MAX_HEIGHT: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SnapshotError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u8),
    #[error("unexpected end of snapshot")]
    UnexpectedEnd,
    #[error("{0} trailing bytes after snapshot")]
    TrailingBytes(usize),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

impl From<Truncated> for SnapshotError {
    fn from(_: Truncated) -> Self {
        SnapshotError::UnexpectedEnd
    }
}

fn corrupt(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Corrupt(msg.into())
}

impl RPlusTree {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.size * (8 + 8 * self.config.dimension));
        self.write_to(&mut out);
        out
    }

    pub(crate) fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(TREE_MAGIC);
        out.put_u8(TREE_VERSION);
        out.put_u8(u8::from(self.packed));
        out.put_u16(self.config.dimension as u16);
        out.put_u32(self.config.max_entries as u32);
        out.put_u32(self.config.min_fill as u32);
        out.put_u64(self.size as u64);
        out.put_u32(self.height as u32);
        if let Some(root) = &self.root {
            write_node(root, out);
        }
    }

    /// Decodes a snapshot, rejecting trailing bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader::new(bytes);
        let tree = Self::read_from(&mut r)?;
        if r.remaining() != 0 {
            return Err(SnapshotError::TrailingBytes(r.remaining()));
        }
        Ok(tree)
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, SnapshotError> {
        if r.take(8)? != TREE_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u8()?;
        if version != TREE_VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let flags = r.u8()?;
        if flags > 1 {
            return Err(corrupt(format!("unknown flags {flags:#x}")));
        }
        let config = TreeConfig {
            dimension: r.u16()? as usize,
            max_entries: r.u32()? as usize,
            min_fill: r.u32()? as usize,
        };
        config.validate().map_err(|e| corrupt(e.to_string()))?;
        let size = usize::try_from(r.u64()?).map_err(|_| corrupt("size overflows"))?;
        let height = r.u32()? as usize;
        if height > MAX_HEIGHT {
            return Err(corrupt(format!("height {height} exceeds {MAX_HEIGHT}")));
        }
        let mut tree = RPlusTree::new(config).map_err(|e| corrupt(e.to_string()))?;
        tree.packed = flags & 1 == 1;
        if height == 0 {
            if size != 0 {
                return Err(corrupt("non-zero size without a root"));
            }
            return Ok(tree);
        }
        let mut ids = HashSet::with_capacity(size.min(1 << 20));
        let root = read_node(r, &config, height, &mut ids)?;
        if ids.len() != size {
            return Err(corrupt(format!("header size {size} but {} records", ids.len())));
        }
        tree.root = Some(root);
        tree.size = size;
        tree.height = height;
        tree.ids = ids;
        if let Some(v) = tree.validate().into_iter().next() {
            return Err(corrupt(v.to_string()));
        }
        Ok(tree)
    }
}

fn write_point(p: &Point, out: &mut Vec<u8>) {
    for &c in p.coords() {
        out.put_f64(c);
    }
}

fn write_node(node: &Node, out: &mut Vec<u8>) {
    let (tag, count) = match &node.kind {
        NodeKind::Leaf(e) => (0u8, e.len()),
        NodeKind::Internal(c) => (1u8, c.len()),
    };
    out.put_u8(tag);
    write_point(node.region.min(), out);
    write_point(node.region.max(), out);
    out.put_u32(count as u32);
    match &node.kind {
        NodeKind::Leaf(entries) => {
            for e in entries {
                out.put_u64(e.id.0);
                write_point(&e.point, out);
            }
        }
        NodeKind::Internal(children) => {
            for c in children {
                write_node(c, out);
            }
        }
    }
}

fn read_point(r: &mut Reader<'_>, dim: usize) -> Result<Point, SnapshotError> {
    let mut coords = Vec::with_capacity(dim);
    for _ in 0..dim {
        coords.push(r.f64()?);
    }
    Point::new(coords).map_err(|e| corrupt(e.to_string()))
}

fn read_node(
    r: &mut Reader<'_>,
    config: &TreeConfig,
    height: usize,
    ids: &mut HashSet<RecordId>,
) -> Result<Node, SnapshotError> {
    let dim = config.dimension;
    let tag = r.u8()?;
    let region = Rect::new(read_point(r, dim)?, read_point(r, dim)?).map_err(|e| corrupt(e.to_string()))?;
    let count = r.u32()? as usize;
    if count == 0 || count > config.max_entries {
        return Err(corrupt(format!("node holds {count} items")));
    }
    let kind = match (tag, height) {
        (0, 1) => {
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                let id = RecordId(r.u64()?);
                let point = read_point(r, dim)?;
                if !ids.insert(id) {
                    return Err(corrupt(format!("record {id} appears twice")));
                }
                entries.push(Entry { id, point });
            }
            NodeKind::Leaf(entries)
        }
        (1, h) if h > 1 => {
            let mut children = Vec::with_capacity(count);
            for _ in 0..count {
                children.push(read_node(r, config, height - 1, ids)?);
            }
            NodeKind::Internal(children)
        }
        (0 | 1, _) => return Err(corrupt("leaf depth does not match header height")),
        (t, _) => return Err(corrupt(format!("unknown node tag {t}"))),
    };
    Ok(Node { region, kind })
}
