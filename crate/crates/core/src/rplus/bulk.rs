//! Sort-tile-recursive packing.
//!
//! [`str_tile`] cuts a set into `groups` pieces of near-equal size: sort on
//! axis 0, cut into slabs, sort each slab on axis 1, and so on. Each cut is a
//! plane between sorted neighbours, so the pieces' bounding boxes never share
//! interior volume.
//!
//! Bulk loading applies the tiling top-down: the root's item set is tiled
//! into its children, each child's set into grandchildren, down to the leaves.
//! Every level therefore inherits the disjointness of the level above it.

use std::cmp::Ordering;

use super::{Entry, Node, NodeKind, RPlusTree, TreeConfig, TreeError};
use crate::geom::Rect;
use crate::model::{CaseRecord, RecordId};

/// `n` split into `parts` sizes that differ by at most one, larger first.
pub(crate) fn balanced_sizes(n: usize, parts: usize) -> Vec<usize> {
    let q = n / parts;
    let r = n % parts;
    (0..parts).map(|i| q + usize::from(i < r)).collect()
}

/// Smallest `s` with `s^exp >= n`.
fn int_root_ceil(n: usize, exp: u32) -> usize {
    let mut s = (n as f64).powf(1.0 / exp as f64).floor().max(1.0) as usize;
    while (s as u128).pow(exp) < n as u128 {
        s += 1;
    }
    while s > 1 && ((s - 1) as u128).pow(exp) >= n as u128 {
        s -= 1;
    }
    s
}

/// Tiles `items` into `groups` spatially coherent pieces with balanced sizes.
///
/// `coord(item, axis)` supplies the sort key per axis and `tie` orders items
/// with equal keys, which keeps the output deterministic. Pieces come back in
/// tile order; with fewer items than groups the trailing pieces are empty.
pub fn str_tile<T>(
    items: Vec<T>,
    groups: usize,
    dim: usize,
    coord: impl Fn(&T, usize) -> f64 + Copy,
    tie: impl Fn(&T, &T) -> Ordering + Copy,
) -> Vec<Vec<T>> {
    assert!(groups >= 1 && dim >= 1);
    let sizes = balanced_sizes(items.len(), groups);
    let mut out = Vec::with_capacity(groups);
    tile_rec(items, &sizes, 0, dim, coord, tie, &mut out);
    out
}

fn tile_rec<T>(
    mut items: Vec<T>,
    sizes: &[usize],
    axis: usize,
    dim: usize,
    coord: impl Fn(&T, usize) -> f64 + Copy,
    tie: impl Fn(&T, &T) -> Ordering + Copy,
    out: &mut Vec<Vec<T>>,
) {
    if sizes.len() == 1 {
        out.push(items);
        return;
    }
    items.sort_by(|a, b| coord(a, axis).total_cmp(&coord(b, axis)).then_with(|| tie(a, b)));
    let (slab_plan, last_axis) = if axis + 1 >= dim {
        (vec![1; sizes.len()], true)
    } else {
        let slabs = int_root_ceil(sizes.len(), (dim - axis) as u32);
        (balanced_sizes(sizes.len(), slabs), false)
    };
    // carve from the back so each split_off is cheap
    let mut pieces = Vec::with_capacity(slab_plan.len());
    let mut group_end = sizes.len();
    for &count in slab_plan.iter().rev() {
        let group_start = group_end - count;
        let n: usize = sizes[group_start..group_end].iter().sum();
        let tail = items.split_off(items.len() - n);
        pieces.push((tail, group_start, group_end));
        group_end = group_start;
    }
    for (slab, start, end) in pieces.into_iter().rev() {
        if last_axis {
            out.push(slab);
        } else {
            tile_rec(slab, &sizes[start..end], axis + 1, dim, coord, tie, out);
        }
    }
}

fn entry_tie(a: &Entry, b: &Entry) -> Ordering {
    a.point.lex_cmp(&b.point).then(a.id.cmp(&b.id))
}

impl RPlusTree {
    /// Packs `records` into a fresh tree.
    pub fn bulk_load(config: TreeConfig, records: &[CaseRecord]) -> Result<Self, TreeError> {
        Self::bulk_load_entries(config, records.iter().map(Entry::from).collect())
    }

    pub fn bulk_load_entries(config: TreeConfig, entries: Vec<Entry>) -> Result<Self, TreeError> {
        let mut tree = RPlusTree::new(config)?;
        for e in &entries {
            tree.check_dim(e.id, &e.point)?;
        }
        let mut ids: Vec<RecordId> = entries.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        let mut dups: Vec<RecordId> = ids.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0]).collect();
        if !dups.is_empty() {
            dups.dedup();
            return Err(TreeError::DuplicateIds(dups));
        }
        if entries.is_empty() {
            return Ok(tree);
        }

        let n = entries.len();
        let m = config.max_entries;
        let mut height = 1;
        let mut capacity = m;
        while capacity < n {
            capacity = capacity.saturating_mul(m);
            height += 1;
        }
        tree.ids = ids.into_iter().collect();
        tree.size = n;
        tree.height = height;
        tree.root = Some(pack(entries, height, &config));
        tree.packed = true;
        Ok(tree)
    }
}

fn pack(entries: Vec<Entry>, height: usize, config: &TreeConfig) -> Node {
    if height == 1 {
        return Node::leaf(entries).expect("packed leaves are non-empty");
    }
    let child_capacity = config.max_entries.saturating_pow(height as u32 - 1);
    let groups = entries.len().div_ceil(child_capacity);
    let dim = config.dimension;
    let children: Vec<Node> = str_tile(entries, groups, dim, |e, a| e.point.coord(a), entry_tie)
        .into_iter()
        .map(|g| pack(g, height - 1, config))
        .collect();
    let mut region: Option<Rect> = None;
    for c in &children {
        match &mut region {
            Some(r) => r.expand_rect(&c.region),
            None => region = Some(c.region.clone()),
        }
    }
    Node {
        region: region.expect("at least one child"),
        kind: NodeKind::Internal(children),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn balanced_sizes_arithmetic() {
        assert_eq!(balanced_sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(balanced_sizes(2, 4), vec![1, 1, 0, 0]);
        assert_eq!(balanced_sizes(0, 1), vec![0]);
    }

    #[test]
    fn int_roots() {
        assert_eq!(int_root_ceil(25, 2), 5);
        assert_eq!(int_root_ceil(26, 2), 6);
        assert_eq!(int_root_ceil(1, 2), 1);
        assert_eq!(int_root_ceil(64, 3), 4);
        assert_eq!(int_root_ceil(65, 3), 5);
    }

    #[test]
    fn tiles_are_disjoint_and_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(u64, Point)> = (0..1000)
            .map(|i| (i, Point::xy(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)).unwrap()))
            .collect();
        let tiles = str_tile(pts, 7, 2, |p, a| p.1.coord(a), |a, b| a.0.cmp(&b.0));
        assert_eq!(tiles.len(), 7);
        let sizes: Vec<usize> = tiles.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 1000);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let boxes: Vec<Rect> = tiles
            .iter()
            .map(|t| Rect::bounding(t.iter().map(|p| &p.1)).unwrap())
            .collect();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                assert_eq!(boxes[i].overlap_volume(&boxes[j]), 0.0, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn bulk_load_edge_sizes() {
        let cfg = TreeConfig::new(2);
        let empty = RPlusTree::bulk_load(cfg, &[]).unwrap();
        assert_eq!(empty.len(), 0);
        assert!(empty.root().is_none());

        let one = RPlusTree::bulk_load(cfg, &[CaseRecord::at(9, Point::xy(1.0, 1.0).unwrap())]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.root().unwrap().is_leaf());
    }

    #[test]
    fn bulk_load_reports_every_duplicate() {
        let p = Point::xy(0.0, 0.0).unwrap();
        let recs: Vec<CaseRecord> = [1, 2, 2, 3, 3, 3, 4]
            .iter()
            .map(|&i| CaseRecord::at(i, p.clone()))
            .collect();
        assert_eq!(
            RPlusTree::bulk_load(TreeConfig::new(2), &recs).unwrap_err(),
            TreeError::DuplicateIds(vec![RecordId(2), RecordId(3)])
        );
    }

    #[test]
    fn bulk_load_many_sizes_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for m in [4, 5, 9, 16] {
            let cfg = TreeConfig::with_max_entries(2, m);
            for n in [1, 2, 3, 4, 5, 15, 16, 17, 63, 64, 65, 100, 257, 1000] {
                let recs: Vec<CaseRecord> = (0..n)
                    .map(|i| {
                        CaseRecord::at(
                            i,
                            Point::xy(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).unwrap(),
                        )
                    })
                    .collect();
                let t = RPlusTree::bulk_load(cfg, &recs).unwrap();
                assert_eq!(t.len(), n as usize);
                let v = t.validate();
                assert!(v.is_empty(), "m={m} n={n}: {v:?}");
            }
        }
    }

    #[test]
    fn bulk_load_three_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = TreeConfig::with_max_entries(3, 8);
        let recs: Vec<CaseRecord> = (0..2000)
            .map(|i| CaseRecord::at(i, Point::new([rng.gen(), rng.gen(), rng.gen::<f64>()]).unwrap()))
            .collect();
        let t = RPlusTree::bulk_load(cfg, &recs).unwrap();
        assert!(t.validate().is_empty());
    }
}
