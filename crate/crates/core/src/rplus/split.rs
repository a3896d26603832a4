//! Overflow splitting.
//!
//! Both leaf and internal splits sweep every axis and pick the cut that
//! minimises the summed volume of the two halves, breaking ties by count
//! imbalance, then summed margin, then the earliest axis and position.
//!
//! Leaves cut their entries sorted along the axis, so the halves meet at most
//! in a shared face. Internal nodes first look for a clean cut that leaves
//! every child whole. When none exists (a pinwheel of children), they cut at a
//! child boundary and split each straddling child at the same plane, all the
//! way down to the leaves.

use std::cmp::Ordering;

use super::{Entry, Node, NodeKind, TreeConfig, TreeError};
use crate::geom::Rect;

/// Splits an overflowing node into two nodes with disjoint interiors.
///
/// The node must hold at least two entries or children.
pub fn split_node(node: Node, config: &TreeConfig) -> Result<(Node, Node), TreeError> {
    config.validate()?;
    if node.len() < 2 {
        return Err(TreeError::NotSplittable(node.len()));
    }
    Ok(split(node, config))
}

pub(crate) fn split(node: Node, config: &TreeConfig) -> (Node, Node) {
    match node.kind {
        NodeKind::Leaf(entries) => {
            let (a, b) = split_leaf(entries, config);
            (
                Node::leaf(a).expect("non-empty half"),
                Node::leaf(b).expect("non-empty half"),
            )
        }
        NodeKind::Internal(children) => {
            let (a, b) = split_internal(children, config);
            (
                Node::internal(a).expect("non-empty half"),
                Node::internal(b).expect("non-empty half"),
            )
        }
    }
}

/// Ordering key for candidate cuts; smaller wins.
#[derive(Debug, Clone, Copy)]
struct CutKey {
    straddles: usize,
    underfill: bool,
    volume: f64,
    imbalance: usize,
    margin: f64,
}

impl CutKey {
    fn cmp(&self, other: &CutKey) -> Ordering {
        self.straddles
            .cmp(&other.straddles)
            .then(self.underfill.cmp(&other.underfill))
            .then(self.volume.total_cmp(&other.volume))
            .then(self.imbalance.cmp(&other.imbalance))
            .then(self.margin.total_cmp(&other.margin))
    }
}

fn entry_order(axis: usize) -> impl Fn(&Entry, &Entry) -> Ordering {
    move |a, b| {
        a.point
            .coord(axis)
            .total_cmp(&b.point.coord(axis))
            .then_with(|| a.point.lex_cmp(&b.point))
            .then(a.id.cmp(&b.id))
    }
}

fn prefix_boxes<'a>(rects: impl Iterator<Item = &'a Rect>) -> Vec<Rect> {
    let mut out: Vec<Rect> = Vec::new();
    for r in rects {
        let next = match out.last() {
            Some(prev) => {
                let mut u = prev.clone();
                u.expand_rect(r);
                u
            }
            None => r.clone(),
        };
        out.push(next);
    }
    out
}

fn split_leaf(mut entries: Vec<Entry>, config: &TreeConfig) -> (Vec<Entry>, Vec<Entry>) {
    let n = entries.len();
    let dim = entries[0].point.dim();
    let min_side = config.min_fill.min(n / 2).max(1);
    let mut best: Option<(CutKey, usize, usize)> = None;

    for axis in 0..dim {
        entries.sort_by(entry_order(axis));
        let boxes: Vec<Rect> = entries.iter().map(|e| Rect::from_point(&e.point)).collect();
        let pre = prefix_boxes(boxes.iter());
        let mut suf = prefix_boxes(boxes.iter().rev());
        suf.reverse();
        for i in min_side..=(n - min_side) {
            let (l, r) = (&pre[i - 1], &suf[i]);
            let key = CutKey {
                straddles: 0,
                underfill: false,
                volume: l.volume() + r.volume(),
                imbalance: i.abs_diff(n - i),
                margin: l.margin() + r.margin(),
            };
            if best.as_ref().is_none_or(|(b, _, _)| key.cmp(b).is_lt()) {
                best = Some((key, axis, i));
            }
        }
    }

    let (_, axis, i) = best.expect("at least one cut position");
    entries.sort_by(entry_order(axis));
    let right = entries.split_off(i);
    (entries, right)
}

enum Plan {
    /// Children sorted by this permutation; the first `at` go left.
    Clean { order: Vec<usize>, at: usize },
    /// Cut at `value` on `axis`, splitting straddlers.
    Plane { axis: usize, value: f64 },
}

fn split_internal(children: Vec<Node>, config: &TreeConfig) -> (Vec<Node>, Vec<Node>) {
    let n = children.len();
    let dim = children[0].region.dim();
    let underfull = |l: usize, r: usize| l < config.min_fill || r < config.min_fill;
    let mut best: Option<(CutKey, Plan)> = None;
    let mut consider = |key: CutKey, plan: &dyn Fn() -> Plan| {
        if best.as_ref().is_none_or(|(b, _)| key.cmp(b).is_lt()) {
            best = Some((key, plan()));
        }
    };

    for axis in 0..dim {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&children[a].region, &children[b].region);
            ra.lo(axis)
                .total_cmp(&rb.lo(axis))
                .then(ra.hi(axis).total_cmp(&rb.hi(axis)))
                .then(a.cmp(&b))
        });
        let regions: Vec<&Rect> = order.iter().map(|&i| &children[i].region).collect();
        let pre = prefix_boxes(regions.iter().copied());
        let mut suf = prefix_boxes(regions.iter().rev().copied());
        suf.reverse();
        let mut max_hi = vec![f64::NEG_INFINITY; n];
        let mut min_lo = vec![f64::INFINITY; n];
        for i in 0..n {
            let prev = if i == 0 { f64::NEG_INFINITY } else { max_hi[i - 1] };
            max_hi[i] = prev.max(regions[i].hi(axis));
            let j = n - 1 - i;
            let next = if i == 0 { f64::INFINITY } else { min_lo[j + 1] };
            min_lo[j] = next.min(regions[j].lo(axis));
        }
        for at in 1..n {
            if max_hi[at - 1] > min_lo[at] {
                continue;
            }
            let (l, r) = (&pre[at - 1], &suf[at]);
            let key = CutKey {
                straddles: 0,
                underfill: underfull(at, n - at),
                volume: l.volume() + r.volume(),
                imbalance: at.abs_diff(n - at),
                margin: l.margin() + r.margin(),
            };
            consider(key, &|| Plan::Clean {
                order: order.clone(),
                at,
            });
        }

        let mut values: Vec<f64> = children
            .iter()
            .flat_map(|c| [c.region.lo(axis), c.region.hi(axis)])
            .collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &v in &values {
            let (mut nl, mut nr, mut s) = (0, 0, 0);
            let mut lbox: Option<Rect> = None;
            let mut rbox: Option<Rect> = None;
            let grow = |slot: &mut Option<Rect>, r: &Rect| match slot {
                Some(b) => b.expand_rect(r),
                None => *slot = Some(r.clone()),
            };
            for c in &children {
                let r = &c.region;
                if r.hi(axis) <= v {
                    nl += 1;
                    grow(&mut lbox, r);
                } else if r.lo(axis) >= v {
                    nr += 1;
                    grow(&mut rbox, r);
                } else {
                    s += 1;
                    let mut lpart = r.clone();
                    lpart.set_hi(axis, v);
                    let mut rpart = r.clone();
                    rpart.set_lo(axis, v);
                    grow(&mut lbox, &lpart);
                    grow(&mut rbox, &rpart);
                }
            }
            if s == 0 || nl == 0 || nr == 0 {
                continue;
            }
            let (l, r) = (lbox.expect("left side"), rbox.expect("right side"));
            let key = CutKey {
                straddles: s,
                underfill: underfull(nl + s, nr + s),
                volume: l.volume() + r.volume(),
                imbalance: (nl + s).abs_diff(nr + s),
                margin: l.margin() + r.margin(),
            };
            consider(key, &|| Plan::Plane { axis, value: v });
        }
    }

    match best.expect("disjoint children always admit a cut").1 {
        Plan::Clean { order, at } => {
            let mut side = vec![false; n];
            for &i in &order[at..] {
                side[i] = true;
            }
            let mut left = Vec::with_capacity(at);
            let mut right = Vec::with_capacity(n - at);
            for (c, goes_right) in children.into_iter().zip(side) {
                if goes_right {
                    right.push(c);
                } else {
                    left.push(c);
                }
            }
            (left, right)
        }
        Plan::Plane { axis, value } => partition_children(children, axis, value),
    }
}

fn partition_children(children: Vec<Node>, axis: usize, v: f64) -> (Vec<Node>, Vec<Node>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for c in children {
        if c.region.hi(axis) <= v {
            left.push(c);
        } else if c.region.lo(axis) >= v {
            right.push(c);
        } else {
            let (l, r) = split_at(c, axis, v);
            left.extend(l);
            right.extend(r);
        }
    }
    (left, right)
}

/// Cuts `node` by the plane `coord[axis] = v`. Leaf entries on the plane stay left.
fn split_at(node: Node, axis: usize, v: f64) -> (Option<Node>, Option<Node>) {
    match node.kind {
        NodeKind::Leaf(entries) => {
            let (l, r): (Vec<Entry>, Vec<Entry>) = entries.into_iter().partition(|e| e.point.coord(axis) <= v);
            (Node::leaf(l).ok(), Node::leaf(r).ok())
        }
        NodeKind::Internal(children) => {
            let (l, r) = partition_children(children, axis, v);
            (Node::internal(l).ok(), Node::internal(r).ok())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::model::RecordId;

    fn entry(id: u64, x: f64, y: f64) -> Entry {
        Entry::new(id, Point::xy(x, y).unwrap())
    }

    fn leaf(points: &[(u64, f64, f64)]) -> Node {
        Node::leaf(points.iter().map(|&(i, x, y)| entry(i, x, y)).collect()).unwrap()
    }

    fn ids(n: &Node) -> Vec<u64> {
        let mut v: Vec<u64> = n.entries().iter().map(|e| e.id.0).collect();
        v.sort();
        v
    }

    #[test]
    fn collinear_points_cut_at_median_on_x() {
        // M = 4, five points on the x-axis. Cuts by hand (x-axis, left size):
        //   1: area 0, imbalance 3, margin 0+3
        //   2: area 0, imbalance 1, margin 1+2
        //   3: area 0, imbalance 1, margin 2+1
        //   4: area 0, imbalance 3, margin 3+0
        // The y-axis sweep sees the same order (ties fall back to x), so the
        // earliest of the two balanced cuts on x wins.
        let cfg = TreeConfig::with_max_entries(2, 4);
        let node = leaf(&[
            (4, 4.0, 0.0),
            (0, 0.0, 0.0),
            (2, 2.0, 0.0),
            (1, 1.0, 0.0),
            (3, 3.0, 0.0),
        ]);
        let (a, b) = split_node(node, &cfg).unwrap();
        assert!(a.len().abs_diff(b.len()) <= 1);
        assert_eq!(ids(&a), vec![0, 1]);
        assert_eq!(ids(&b), vec![2, 3, 4]);
        assert_eq!(a.region().hi(0), 1.0);
        assert_eq!(b.region().lo(0), 2.0);
        assert_eq!(a.region().overlap_volume(b.region()), 0.0);
    }

    #[test]
    fn identical_points_bisect_with_degenerate_regions() {
        let cfg = TreeConfig::with_max_entries(2, 4);
        let node = leaf(&[
            (0, 1.0, 1.0),
            (1, 1.0, 1.0),
            (2, 1.0, 1.0),
            (3, 1.0, 1.0),
            (4, 1.0, 1.0),
        ]);
        let (a, b) = split_node(node, &cfg).unwrap();
        assert_eq!(a.len() + b.len(), 5);
        assert!(a.len().abs_diff(b.len()) <= 1);
        let point_box = Rect::from_point(&Point::xy(1.0, 1.0).unwrap());
        assert_eq!(a.region(), &point_box);
        assert_eq!(b.region(), &point_box);
    }

    #[test]
    fn unsplittable_input() {
        let cfg = TreeConfig::with_max_entries(2, 4);
        assert_eq!(
            split_node(leaf(&[(0, 0.0, 0.0)]), &cfg).unwrap_err(),
            TreeError::NotSplittable(1)
        );
    }

    /// Five leaves arranged as a pinwheel around a central square: no
    /// axis-parallel line separates them without cutting one, so the split
    /// must push a cut down through a straddling leaf.
    #[test]
    fn pinwheel_forces_downward_split() {
        let cfg = TreeConfig::with_max_entries(2, 4);
        let a = leaf(&[(0, 0.0, 0.0), (1, 2.0, 1.0)]);
        let b = leaf(&[(2, 2.0, 0.0), (3, 3.0, 2.0)]);
        let c = leaf(&[(4, 1.0, 2.0), (5, 3.0, 3.0)]);
        let d = leaf(&[(6, 0.0, 1.0), (7, 1.0, 3.0)]);
        let e = leaf(&[(8, 1.2, 1.2), (9, 1.8, 1.8)]);
        let node = Node::internal(vec![a, b, c, d, e]).unwrap();
        let (l, r) = split_node(node, &cfg).unwrap();

        let mut all = Vec::new();
        for side in [&l, &r] {
            assert!(side.len() <= 4);
            for child in side.children() {
                assert!(side.region().contains_rect(child.region()));
                for e in child.entries() {
                    assert!(child.region().contains_point(&e.point));
                    all.push(e.id);
                }
            }
            for (i, x) in side.children().iter().enumerate() {
                for y in &side.children()[i + 1..] {
                    assert_eq!(x.region().overlap_volume(y.region()), 0.0);
                }
            }
        }
        all.sort();
        assert_eq!(all, (0..10).map(RecordId).collect::<Vec<_>>());
        assert_eq!(l.region().overlap_volume(r.region()), 0.0);
        // 5 children plus at least one straddler piece
        assert!(l.len() + r.len() >= 6);
    }

    #[test]
    fn straddling_subtree_is_split_all_the_way_down() {
        let cfg = TreeConfig::with_max_entries(2, 4);
        // pinwheel of height-2 subtrees; the wide arm holds two leaves that
        // both cross any vertical plane through its middle.
        let arm = |pts: &[(u64, f64, f64)]| {
            let mid = pts.len() / 2;
            Node::internal(vec![leaf(&pts[..mid]), leaf(&pts[mid..])]).unwrap()
        };
        let a = arm(&[(0, 0.0, 0.0), (1, 2.0, 0.4), (2, 0.0, 0.6), (3, 2.0, 1.0)]);
        let b = arm(&[(4, 2.0, 0.0), (5, 2.4, 2.0), (6, 2.6, 0.0), (7, 3.0, 2.0)]);
        let c = arm(&[(8, 1.0, 2.0), (9, 3.0, 2.4), (10, 1.0, 2.6), (11, 3.0, 3.0)]);
        let d = arm(&[(12, 0.0, 1.0), (13, 0.4, 3.0), (14, 0.6, 1.0), (15, 1.0, 3.0)]);
        let e = arm(&[(16, 1.2, 1.2), (17, 1.4, 1.4), (18, 1.6, 1.6), (19, 1.8, 1.8)]);
        let node = Node::internal(vec![a, b, c, d, e]).unwrap();
        let (l, r) = split_node(node, &cfg).unwrap();

        fn check(n: &Node, out: &mut Vec<u64>) {
            for (i, x) in n.children().iter().enumerate() {
                assert!(
                    n.region().contains_rect(x.region()),
                    "{:?} in {:?}",
                    x.region(),
                    n.region()
                );
                for y in &n.children()[i + 1..] {
                    assert_eq!(x.region().overlap_volume(y.region()), 0.0);
                }
                check(x, out);
            }
            for e in n.entries() {
                assert!(n.region().contains_point(&e.point));
                out.push(e.id.0);
            }
        }
        let mut seen = Vec::new();
        check(&l, &mut seen);
        check(&r, &mut seen);
        seen.sort();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
        assert_eq!(l.height(), 3);
        assert_eq!(r.height(), 3);
        // every leaf lies entirely on one side
        assert_eq!(l.region().overlap_volume(r.region()), 0.0);
    }
}
