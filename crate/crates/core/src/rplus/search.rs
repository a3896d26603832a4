//! Radius range search and best-first KNN.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{Node, RPlusTree, TreeError};
use crate::geom::{distance_unchecked, mindist_unchecked, Point};
use crate::model::{Neighbor, RecordId};

/// Frontier item. At equal distance nodes pop before points, and points
/// pop by id, so results come out in exact (distance, id) order.
enum Item<'a> {
    Node(f64, &'a Node),
    Point(Neighbor),
}

impl Item<'_> {
    fn key(&self) -> (f64, u8, u64) {
        match self {
            Item::Node(d, _) => (*d, 0, 0),
            Item::Point(n) => (n.distance, 1, n.id.0),
        }
    }
}

impl PartialEq for Item<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Item<'_> {}

impl PartialOrd for Item<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

/// Max-heap adapter so the worst candidate sits on top.
struct Ranked(Neighbor);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.0.rank_cmp(&other.0) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

impl RPlusTree {
    fn check_query_dim(&self, center: &Point) -> Result<(), TreeError> {
        if center.dim() != self.config.dimension {
            return Err(TreeError::QueryDimension {
                expected: self.config.dimension,
                found: center.dim(),
            });
        }
        Ok(())
    }

    /// Ids of every record within `radius` of `center` (closed ball), ascending.
    pub fn range_query(&self, center: &Point, radius: f64) -> Result<Vec<RecordId>, TreeError> {
        self.check_query_dim(center)?;
        if !radius.is_finite() || radius < 0.0 {
            return Err(TreeError::BadRadius(radius));
        }
        let mut out = Vec::new();
        let Some(root) = &self.root else {
            return Ok(out);
        };
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            if mindist_unchecked(center, &node.region) > radius {
                continue;
            }
            stack.extend(node.children());
            out.extend(
                node.entries()
                    .iter()
                    .filter(|e| distance_unchecked(center, &e.point) <= radius)
                    .map(|e| e.id),
            );
        }
        out.sort_unstable();
        Ok(out)
    }

    /// The `k` records nearest `center`, sorted by (distance, id).
    pub fn knn_query(&self, center: &Point, k: usize) -> Result<Vec<Neighbor>, TreeError> {
        self.check_query_dim(center)?;
        let mut out = Vec::with_capacity(k.min(self.size));
        let Some(root) = &self.root else {
            return Ok(out);
        };
        if k == 0 {
            return Ok(out);
        }

        let mut frontier: BinaryHeap<Reverse<Item>> = BinaryHeap::new();
        // the k best points seen so far; its top bounds what can still qualify
        let mut best: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
        frontier.push(Reverse(Item::Node(mindist_unchecked(center, &root.region), root)));

        while let Some(Reverse(item)) = frontier.pop() {
            match item {
                Item::Point(n) => {
                    out.push(n);
                    if out.len() == k {
                        break;
                    }
                }
                Item::Node(_, node) => {
                    for child in node.children() {
                        let d = mindist_unchecked(center, &child.region);
                        let admissible = best.len() < k || d <= best.peek().expect("k > 0").0.distance;
                        if admissible {
                            frontier.push(Reverse(Item::Node(d, child)));
                        }
                    }
                    for e in node.entries() {
                        let n = Neighbor {
                            id: e.id,
                            distance: distance_unchecked(center, &e.point),
                        };
                        if best.len() < k {
                            best.push(Ranked(n));
                        } else if n.rank_cmp(&best.peek().expect("k > 0").0).is_lt() {
                            best.pop();
                            best.push(Ranked(n));
                        } else {
                            continue;
                        }
                        frontier.push(Reverse(Item::Point(n)));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CaseRecord;
    use crate::rplus::TreeConfig;

    fn tree(points: &[(u64, f64, f64)]) -> RPlusTree {
        let recs: Vec<CaseRecord> = points
            .iter()
            .map(|&(i, x, y)| CaseRecord::at(i, Point::xy(x, y).unwrap()))
            .collect();
        RPlusTree::bulk_load(TreeConfig::with_max_entries(2, 4), &recs).unwrap()
    }

    #[test]
    fn empty_tree_queries() {
        let t = RPlusTree::new(TreeConfig::new(2)).unwrap();
        let c = Point::xy(0.0, 0.0).unwrap();
        assert!(t.range_query(&c, 10.0).unwrap().is_empty());
        assert!(t.knn_query(&c, 5).unwrap().is_empty());
    }

    #[test]
    fn radius_zero_on_a_stored_point() {
        let t = tree(&[(1, 0.0, 0.0), (2, 1.0, 1.0), (3, 2.0, 2.0)]);
        assert_eq!(
            t.range_query(&Point::xy(1.0, 1.0).unwrap(), 0.0).unwrap(),
            vec![RecordId(2)]
        );
        assert!(t.range_query(&Point::xy(1.5, 1.0).unwrap(), 0.0).unwrap().is_empty());
    }

    #[test]
    fn range_is_a_closed_ball() {
        let t = tree(&[(1, 3.0, 4.0), (2, 3.0, 4.0000001)]);
        assert_eq!(
            t.range_query(&Point::xy(0.0, 0.0).unwrap(), 5.0).unwrap(),
            vec![RecordId(1)]
        );
    }

    #[test]
    fn bad_radius_and_dimension() {
        let t = tree(&[(1, 0.0, 0.0)]);
        let c = Point::xy(0.0, 0.0).unwrap();
        assert_eq!(t.range_query(&c, -1.0), Err(TreeError::BadRadius(-1.0)));
        assert!(t.range_query(&c, f64::NAN).is_err());
        assert!(matches!(
            t.knn_query(&Point::new([0.0]).unwrap(), 1),
            Err(TreeError::QueryDimension { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn knn_k_zero_and_k_beyond_size() {
        let t = tree(&[(1, 0.0, 0.0), (2, 1.0, 0.0), (3, 2.0, 0.0)]);
        let c = Point::xy(2.1, 0.0).unwrap();
        assert!(t.knn_query(&c, 0).unwrap().is_empty());
        let all = t.knn_query(&c, 10).unwrap();
        let ids: Vec<u64> = all.iter().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![3, 2, 1]);
    }

    #[test]
    fn knn_ties_break_on_smaller_id() {
        // four points at distance 1 from the origin, plus one farther
        let t = tree(&[
            (40, 1.0, 0.0),
            (10, 0.0, 1.0),
            (30, -1.0, 0.0),
            (20, 0.0, -1.0),
            (5, 2.0, 2.0),
        ]);
        let got = t.knn_query(&Point::xy(0.0, 0.0).unwrap(), 2).unwrap();
        assert_eq!(got.iter().map(|n| n.id.0).collect::<Vec<_>>(), vec![10, 20]);
        assert!(got.iter().all(|n| n.distance == 1.0));
    }
}
